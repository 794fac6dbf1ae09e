#include "herln/graph_store.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <unordered_set>

namespace herln {

TemporalGraph::TemporalGraph(std::vector<Quadruple> facts, std::size_t num_entities,
                             std::size_t num_relations_raw, std::size_t num_timestamps,
                             bool inverse_augmented, std::shared_ptr<const IdMaps> ids,
                             TimeScale scale)
    : facts_(std::move(facts)),
      num_entities_(num_entities),
      num_relations_raw_(num_relations_raw),
      num_timestamps_(num_timestamps),
      inverse_augmented_(inverse_augmented),
      ids_(std::move(ids)),
      scale_(scale) {
  const std::size_t rel_limit = num_relations();
  for (const auto& q : facts_) {
    if (q.subject >= num_entities_ || q.object >= num_entities_ || q.relation >= rel_limit ||
        q.time >= num_timestamps_) {
      throw DatasetError("fact (" + std::to_string(q.subject) + ", " + std::to_string(q.relation) +
                         ", " + std::to_string(q.object) + ", " + std::to_string(q.time) +
                         ") outside declared ranges");
    }
  }
  std::stable_sort(facts_.begin(), facts_.end(),
                   [](const Quadruple& a, const Quadruple& b) { return a.time < b.time; });
  offsets_.assign(num_timestamps_ + 1, 0);
  for (const auto& q : facts_) ++offsets_[q.time + 1];
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
}

std::vector<Index> TemporalGraph::timestamps() const {
  std::vector<Index> out;
  for (std::size_t t = 0; t < num_timestamps_; ++t)
    if (offsets_[t + 1] > offsets_[t]) out.push_back(static_cast<Index>(t));
  return out;
}

std::span<const Quadruple> TemporalGraph::facts_at(Index t) const {
  if (t >= num_timestamps_) {
    throw std::out_of_range("timestamp " + std::to_string(t) + " outside [0, " +
                            std::to_string(num_timestamps_) + ")");
  }
  return std::span<const Quadruple>(facts_).subspan(offsets_[t], offsets_[t + 1] - offsets_[t]);
}

std::vector<Quadruple> snapshot(const TemporalGraph& g, Index t) {
  auto facts = g.facts_at(t);
  return {facts.begin(), facts.end()};
}

HistoryGraph history_graph(const TemporalGraph& g, Index t, std::size_t window) {
  if (window < 1) throw std::invalid_argument("history window must be at least 1");
  HistoryGraph h;
  h.reference_time = t;
  const std::size_t end = std::min<std::size_t>(t, g.num_timestamps());
  const std::size_t begin = t > window ? t - window : 0;
  for (std::size_t s = begin; s < end; ++s) {
    auto facts = g.facts_at(static_cast<Index>(s));
    h.edges.insert(h.edges.end(), facts.begin(), facts.end());
  }
  return h;
}

TemporalGraph add_inverse_quadruples(const TemporalGraph& g) {
  if (g.inverse_augmented()) throw std::logic_error("inverse quadruples already added");
  const auto raw = static_cast<Index>(g.num_relations_raw());
  std::vector<Quadruple> facts(g.quadruples().begin(), g.quadruples().end());
  facts.reserve(2 * facts.size());
  for (const auto& q : g.quadruples()) {
    if (q.relation >= raw) throw std::logic_error("relation id beyond raw range; already augmented?");
    facts.push_back({q.object, q.relation + raw, q.subject, q.time});
  }
  return TemporalGraph(std::move(facts), g.num_entities(), g.num_relations_raw(), g.num_timestamps(),
                       true, g.ids(), g.time_scale());
}

TemporalGraph concatenate(std::span<const TemporalGraph* const> parts) {
  if (parts.empty()) return {};
  const TemporalGraph& first = *parts.front();
  std::vector<Quadruple> facts;
  for (const TemporalGraph* p : parts) {
    if (p->num_entities() != first.num_entities() || p->num_relations() != first.num_relations() ||
        p->inverse_augmented() != first.inverse_augmented()) {
      throw std::invalid_argument("concatenate: graphs do not share an id space");
    }
    facts.insert(facts.end(), p->quadruples().begin(), p->quadruples().end());
  }
  return TemporalGraph(std::move(facts), first.num_entities(), first.num_relations_raw(),
                       first.num_timestamps(), first.inverse_augmented(), first.ids(),
                       first.time_scale());
}

void check_chronological(const DatasetBundle& b) {
  auto range = [](const TemporalGraph& g) -> std::optional<std::pair<Index, Index>> {
    if (g.empty()) return std::nullopt;
    return std::pair{g.quadruples().front().time, g.quadruples().back().time};
  };
  const auto tr = range(b.train), va = range(b.valid), te = range(b.test);
  auto before = [](const auto& a, const auto& c) { return !a || !c || a->second < c->first; };
  if (!before(tr, va) || !before(va, te) || !before(tr, te)) {
    throw DatasetError("malformed dataset: splits are not in chronological order");
  }
}

namespace {

struct RawFact {
  Index s, r, o;
  std::int64_t time;
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
std::optional<T> parse_int(std::string_view s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("missing file: " + path.string());
  return in;
}

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::vector<RawFact> read_facts(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<RawFact> facts;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() < 4) {
      throw DatasetError("malformed line " + where(path, n) + ": expected 4 columns, got " +
                         std::to_string(fields.size()));
    }
    auto s = parse_int<Index>(fields[0]), r = parse_int<Index>(fields[1]),
         o = parse_int<Index>(fields[2]);
    auto t = parse_int<std::int64_t>(fields[3]);
    if (!s || !r || !o || !t) throw DatasetError("malformed line " + where(path, n) + ": non-integer field");
    facts.push_back({*s, *r, *o, *t});
  }
  return facts;
}

/// Reads `name<TAB>id` lines. The id is the last tab-separated field so names
/// may contain spaces.
std::vector<std::string> read_id_map(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::string> names;
  std::vector<bool> seen;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw DatasetError("malformed line " + where(path, n) + ": expected name<TAB>id");
    auto id = parse_int<Index>(std::string_view(line).substr(tab + 1));
    if (!id) throw DatasetError("malformed line " + where(path, n) + ": non-integer id");
    if (*id >= names.size()) {
      names.resize(*id + 1);
      seen.resize(*id + 1, false);
    }
    if (seen[*id]) throw DatasetError("duplicate id " + std::to_string(*id) + " at " + where(path, n));
    seen[*id] = true;
    names[*id] = line.substr(0, tab);
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw DatasetError("id map " + path.string() + " is not contiguous");
  return names;
}

}  // namespace

DatasetBundle load_dataset(const std::filesystem::path& root, std::string_view name) {
  return load_dataset(root / std::string(name));
}

DatasetBundle load_dataset(const std::filesystem::path& dir) {
  const auto train_raw = read_facts(dir / "train.txt");
  const auto valid_raw = read_facts(dir / "valid.txt");
  const auto test_raw = read_facts(dir / "test.txt");
  if (train_raw.empty()) throw DatasetError("malformed dataset: no facts");

  auto ids = std::make_shared<IdMaps>();
  std::size_t num_entities = 0, num_relations = 0;
  const bool has_entity_map = std::filesystem::exists(dir / "entity2id.txt");
  const bool has_relation_map = std::filesystem::exists(dir / "relation2id.txt");
  if (std::filesystem::exists(dir / "stat.txt")) {
    auto in = open_or_throw(dir / "stat.txt");
    std::string line;
    std::getline(in, line);
    auto fields = split_fields(line);
    std::optional<std::size_t> e, r;
    if (fields.size() >= 2) {
      e = parse_int<std::size_t>(fields[0]);
      r = parse_int<std::size_t>(fields[1]);
    }
    if (!e || !r) throw DatasetError("malformed line " + where(dir / "stat.txt", 1));
    num_entities = *e;
    num_relations = *r;
  } else if (!has_entity_map || !has_relation_map) {
    throw DatasetError("missing file: " + (dir / (has_entity_map ? "relation2id.txt" : "entity2id.txt")).string());
  }
  if (has_entity_map) ids->entity_names = read_id_map(dir / "entity2id.txt");
  if (has_relation_map) ids->relation_names = read_id_map(dir / "relation2id.txt");
  if (num_entities == 0) num_entities = ids->entity_names.size();
  if (num_relations == 0) num_relations = ids->relation_names.size();
  if (has_entity_map && ids->entity_names.size() != num_entities)
    throw DatasetError("entity2id.txt lists " + std::to_string(ids->entity_names.size()) +
                       " entities but stat.txt declares " + std::to_string(num_entities));
  if (has_relation_map && ids->relation_names.size() != num_relations)
    throw DatasetError("relation2id.txt lists " + std::to_string(ids->relation_names.size()) +
                       " relations but stat.txt declares " + std::to_string(num_relations));

  TimeScale scale;
  scale.origin = std::numeric_limits<std::int64_t>::max();
  for (const auto* split : {&train_raw, &valid_raw, &test_raw})
    for (const auto& f : *split) scale.origin = std::min(scale.origin, f.time);
  std::int64_t interval = 0;
  for (const auto* split : {&train_raw, &valid_raw, &test_raw})
    for (const auto& f : *split) interval = std::gcd(interval, f.time - scale.origin);
  scale.interval = interval > 0 ? interval : 1;

  std::size_t num_timestamps = 0;
  auto convert = [&](const std::vector<RawFact>& raw, const char* file) {
    std::vector<Quadruple> out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const auto& f = raw[i];
      if (f.s >= num_entities || f.o >= num_entities || f.r >= num_relations) {
        throw DatasetError("id out of declared range in " + (dir / file).string() + " fact " +
                           std::to_string(i + 1));
      }
      const auto t = static_cast<Index>((f.time - scale.origin) / scale.interval);
      num_timestamps = std::max<std::size_t>(num_timestamps, t + 1);
      out.push_back({f.s, f.r, f.o, t});
    }
    return out;
  };
  auto train = convert(train_raw, "train.txt");
  auto valid = convert(valid_raw, "valid.txt");
  auto test = convert(test_raw, "test.txt");

  DatasetBundle bundle;
  bundle.name = dir.filename().string();
  if (bundle.name.empty()) bundle.name = dir.parent_path().filename().string();
  bundle.train = TemporalGraph(std::move(train), num_entities, num_relations, num_timestamps, false, ids, scale);
  bundle.valid = TemporalGraph(std::move(valid), num_entities, num_relations, num_timestamps, false, ids, scale);
  bundle.test = TemporalGraph(std::move(test), num_entities, num_relations, num_timestamps, false, ids, scale);
  check_chronological(bundle);
  return bundle;
}

void save_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle) {
  std::filesystem::create_directories(dir);
  const TemporalGraph& ref = bundle.train;
  if (ref.inverse_augmented()) throw std::invalid_argument("save_dataset: pass raw (non-augmented) splits");
  auto write_split = [&](const TemporalGraph& g, const char* file) {
    std::ofstream out(dir / file);
    if (!out) throw DatasetError("cannot write " + (dir / file).string());
    const auto scale = g.time_scale();
    for (const auto& q : g.quadruples()) {
      out << q.subject << '\t' << q.relation << '\t' << q.object << '\t'
          << scale.origin + static_cast<std::int64_t>(q.time) * scale.interval << '\n';
    }
  };
  write_split(bundle.train, "train.txt");
  write_split(bundle.valid, "valid.txt");
  write_split(bundle.test, "test.txt");
  auto write_map = [&](const char* file, std::size_t count, const std::vector<std::string>* names,
                       const char* prefix) {
    std::ofstream out(dir / file);
    for (std::size_t i = 0; i < count; ++i) {
      if (names && i < names->size()) out << (*names)[i];
      else out << prefix << i;
      out << '\t' << i << '\n';
    }
  };
  const IdMaps* ids = ref.ids().get();
  write_map("entity2id.txt", ref.num_entities(), ids ? &ids->entity_names : nullptr, "entity_");
  write_map("relation2id.txt", ref.num_relations_raw(), ids ? &ids->relation_names : nullptr, "relation_");
  std::ofstream stat(dir / "stat.txt");
  stat << ref.num_entities() << '\t' << ref.num_relations_raw() << '\n';
}

DatasetBundle slice_timeline(const DatasetBundle& bundle, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("slice fraction must lie in (0, 1]");
  const TemporalGraph* parts[] = {&bundle.train, &bundle.valid, &bundle.test};
  TemporalGraph all = concatenate(parts);
  const auto stamps = all.timestamps();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(stamps.size())));
  if (keep < 3) throw std::invalid_argument("slice keeps fewer than 3 timestamps");
  const std::size_t n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(0.1 * keep)));
  const std::size_t n_test = n_valid;
  const std::size_t n_train = keep - n_valid - n_test;
  const Index train_end = stamps[n_train - 1], valid_end = stamps[n_train + n_valid - 1],
              test_end = stamps[keep - 1];
  std::vector<Quadruple> train, valid, test;
  for (const auto& q : all.quadruples()) {
    if (q.time <= train_end) train.push_back(q);
    else if (q.time <= valid_end) valid.push_back(q);
    else if (q.time <= test_end) test.push_back(q);
  }
  DatasetBundle out;
  out.name = bundle.name + "-slice";
  const std::size_t ne = all.num_entities(), nr = all.num_relations_raw(), nt = test_end + 1;
  out.train = TemporalGraph(std::move(train), ne, nr, nt, false, all.ids(), all.time_scale());
  out.valid = TemporalGraph(std::move(valid), ne, nr, nt, false, all.ids(), all.time_scale());
  out.test = TemporalGraph(std::move(test), ne, nr, nt, false, all.ids(), all.time_scale());
  return out;
}

}  // namespace herln
