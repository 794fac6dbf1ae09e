#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace herln {

using Index = std::uint32_t;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One fact (subject, relation, object, timestamp index).
struct Quadruple {
  Index subject = 0;
  Index relation = 0;
  Index object = 0;
  Index time = 0;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

/// Bidirectional name <-> id tables shared by every split of a dataset.
struct IdMaps {
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
};

/// Maps raw integer timestamps to dense indices: index = (raw - origin) / interval.
struct TimeScale {
  std::int64_t origin = 0;
  std::int64_t interval = 1;
};

/// All facts strictly before `reference_time` inside a history window, each
/// edge keeping its own timestamp.
struct HistoryGraph {
  std::vector<Quadruple> edges;
  Index reference_time = 0;
};

/// Immutable, time-sorted fact store with O(1) snapshot access.
class TemporalGraph {
 public:
  TemporalGraph() = default;
  /// Facts are stably sorted by time; ids are validated against the counts.
  TemporalGraph(std::vector<Quadruple> facts, std::size_t num_entities,
                std::size_t num_relations_raw, std::size_t num_timestamps,
                bool inverse_augmented = false,
                std::shared_ptr<const IdMaps> ids = nullptr, TimeScale scale = {});

  std::span<const Quadruple> quadruples() const noexcept { return facts_; }
  std::size_t size() const noexcept { return facts_.size(); }
  bool empty() const noexcept { return facts_.empty(); }

  std::size_t num_entities() const noexcept { return num_entities_; }
  std::size_t num_relations_raw() const noexcept { return num_relations_raw_; }
  /// Relation id space in use: doubled once inverse facts were added.
  std::size_t num_relations() const noexcept {
    return inverse_augmented_ ? 2 * num_relations_raw_ : num_relations_raw_;
  }
  std::size_t num_timestamps() const noexcept { return num_timestamps_; }
  bool inverse_augmented() const noexcept { return inverse_augmented_; }
  const std::shared_ptr<const IdMaps>& ids() const noexcept { return ids_; }
  TimeScale time_scale() const noexcept { return scale_; }

  /// Distinct timestamps that carry at least one fact, ascending.
  std::vector<Index> timestamps() const;
  /// Facts whose time index equals t (contiguous, stable order).
  std::span<const Quadruple> facts_at(Index t) const;

 private:
  std::vector<Quadruple> facts_;
  std::vector<std::size_t> offsets_;  // offsets_[t] .. offsets_[t+1] hold time t
  std::size_t num_entities_ = 0;
  std::size_t num_relations_raw_ = 0;
  std::size_t num_timestamps_ = 0;
  bool inverse_augmented_ = false;
  std::shared_ptr<const IdMaps> ids_;
  TimeScale scale_;
};

/// Chronologically split dataset sharing one id space.
struct DatasetBundle {
  std::string name;
  TemporalGraph train;
  TemporalGraph valid;
  TemporalGraph test;

  std::size_t num_facts() const { return train.size() + valid.size() + test.size(); }
};

/// Loads `<dir>/{train,valid,test}.txt` plus the id maps (or stat.txt).
DatasetBundle load_dataset(const std::filesystem::path& dir);
DatasetBundle load_dataset(const std::filesystem::path& root, std::string_view name);

/// Writes a bundle in the same layout load_dataset reads, raw times restored.
void save_dataset(const std::filesystem::path& dir, const DatasetBundle& bundle);

/// Adds (o, r + R, s, t) for every (s, r, o, t). Throws if already augmented.
TemporalGraph add_inverse_quadruples(const TemporalGraph& g);

std::vector<Quadruple> snapshot(const TemporalGraph& g, Index t);

/// Facts with time in [max(0, t - window), t - 1]. Empty when t == 0.
HistoryGraph history_graph(const TemporalGraph& g, Index t, std::size_t window);

/// Concatenates chronologically ordered graphs over the same id space.
TemporalGraph concatenate(std::span<const TemporalGraph* const> parts);

/// Keeps the first `fraction` of the timeline and re-splits it 80/10/10 by
/// timestamp, preserving the id space.
DatasetBundle slice_timeline(const DatasetBundle& bundle, double fraction);

/// Throws DatasetError unless train < valid < test in time.
void check_chronological(const DatasetBundle& bundle);

}  // namespace herln
