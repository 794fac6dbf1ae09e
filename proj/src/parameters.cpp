#include "herln/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace herln {

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter " + name);
  init.check_finite("initializer of " + name);
  Tensor m(init.shape()), v(init.shape());
  index_.emplace(name, entries_.size());
  names_.push_back(name);
  entries_.push_back({Var::leaf(std::move(init), name), std::move(m), std::move(v)});
  return entries_.back().param;
}

bool ParameterStore::contains(std::string_view name) const {
  return index_.find(name) != index_.end();
}

ParameterStore::Entry& ParameterStore::entry(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return entries_[it->second];
}

const ParameterStore::Entry& ParameterStore::entry(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return entries_[it->second];
}

Var& ParameterStore::get(std::string_view name) { return entry(name).param; }
const Var& ParameterStore::get(std::string_view name) const { return entry(name).param; }

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.param.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.param.node().grad.fill(0.0);
}

void ParameterStore::adam_step(const AdamConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    auto& e = entries_[k];
    Node& node = e.param.node();
    node.ensure_grad();
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      const double g = node.grad[i];
      e.first_moment[i] = cfg.beta1 * e.first_moment[i] + (1.0 - cfg.beta1) * g;
      e.second_moment[i] = cfg.beta2 * e.second_moment[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = e.first_moment[i] / c1;
      const double vhat = e.second_moment[i] / c2;
      node.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    node.value.check_finite("adam update of " + names_[k]);
    node.grad.fill(0.0);
  }
}

void ParameterStore::assign_values(const ParameterStore& other) {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    if (!other.contains(names_[k])) continue;
    const Tensor& src = other.get(names_[k]).value();
    Tensor& dst = entries_[k].param.mutable_value();
    if (src.shape() != dst.shape()) {
      throw CheckpointError("parameter " + names_[k] + " has shape " + shape_string(src.shape()) +
                            ", expected " + shape_string(dst.shape()));
    }
    dst = src;
  }
}

ParameterStore ParameterStore::snapshot() const {
  ParameterStore copy;
  for (std::size_t k = 0; k < entries_.size(); ++k) copy.add(names_[k], entries_[k].param.value());
  return copy;
}

Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

namespace {

constexpr char kMagic[8] = {'H', 'E', 'R', 'L', 'N', 'C', 'K', 'P'};
constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const ParameterStore& store) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  std::uint64_t checksum = kFnvOffset;
  for (const auto& name : store.names()) {
    const Tensor& t = store.get(name).value();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
    for (double v : t.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (std::size_t i = 0; i < 4; ++i) {
        const auto byte = static_cast<std::uint8_t>(bits >> (8 * i));
        out.push_back(byte);
        checksum = (checksum ^ byte) * kFnvPrime;
      }
    }
  }
  put<std::uint64_t>(out, checksum);
  return out;
}

ParameterStore deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  auto magic = in.take(sizeof(kMagic));
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic)))
    throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto count = in.get<std::uint32_t>();
  ParameterStore store;
  std::uint64_t checksum = kFnvOffset;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = in.get<std::uint32_t>();
    auto raw = in.take(len);
    std::string name(raw.begin(), raw.end());
    const auto rank = in.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError("parameter " + name + " has implausible rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    const std::size_t n = shape_size(shape);
    if (n > in.remaining() / 4) throw CheckpointError("checkpoint truncated in parameter " + name);
    std::vector<double> values(n);
    for (auto& v : values) {
      auto b = in.take(4);
      std::uint32_t bits = 0;
      for (std::size_t i = 0; i < 4; ++i) {
        bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        checksum = (checksum ^ b[i]) * kFnvPrime;
      }
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    try {
      store.add(name, Tensor(std::move(shape), std::move(values)));
    } catch (const std::exception& e) {
      throw CheckpointError(std::string("invalid parameter in checkpoint: ") + e.what());
    }
  }
  const auto stored = in.get<std::uint64_t>();
  if (stored != checksum) throw CheckpointError("checkpoint checksum mismatch");
  if (in.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint checksum");
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store) {
  const auto bytes = serialize_checkpoint(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void restore_parameters(ParameterStore& target, const ParameterStore& loaded) {
  for (const auto& name : loaded.names())
    if (!target.contains(name)) throw CheckpointError("checkpoint has unexpected parameter " + name);
  for (const auto& name : target.names())
    if (!loaded.contains(name)) throw CheckpointError("checkpoint is missing parameter " + name);
  target.assign_values(loaded);
}

}  // namespace herln
