#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "herln/autograd.hpp"

namespace herln {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named learnable tensors with gradient slots and Adam moments. Insertion
/// order is the serialization order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;
  // Copies would alias the underlying tape leaves; use snapshot().
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  /// Registers a new parameter; names must be unique.
  Var add(const std::string& name, Tensor init);

  bool contains(std::string_view name) const;
  Var& get(std::string_view name);
  const Var& get(std::string_view name) const;
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t num_values() const;
  std::size_t steps() const noexcept { return steps_; }

  void zero_grad();
  /// Bias-corrected Adam update of every parameter, then zeroes gradients.
  void adam_step(const AdamConfig& cfg);

  /// Copies values from `other` for every shared name; shapes must agree.
  void assign_values(const ParameterStore& other);
  /// Deep copy of current values (no gradients, no optimizer state).
  ParameterStore snapshot() const;

 private:
  struct Entry {
    Var param;
    Tensor first_moment;
    Tensor second_moment;
  };
  Entry& entry(std::string_view name);
  const Entry& entry(std::string_view name) const;

  std::vector<std::string> names_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::size_t steps_ = 0;
};

/// Uniform Xavier initialization: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng);

// Checkpoint format (all integers little-endian):
//   magic "HERLNCKP" | u32 version | u32 count |
//   per parameter: u32 name_len, name bytes, u32 rank, u64 dims[rank],
//                  f32 payload[prod(dims)] |
//   u64 FNV-1a checksum over every payload byte in order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const ParameterStore& store);
ParameterStore deserialize_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
ParameterStore load_checkpoint(const std::filesystem::path& path);

/// Copies every value of `loaded` into `target`. Both must hold exactly the
/// same names and shapes; throws CheckpointError otherwise.
void restore_parameters(ParameterStore& target, const ParameterStore& loaded);

}  // namespace herln
