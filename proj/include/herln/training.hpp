#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "herln/community.hpp"
#include "herln/graph_store.hpp"
#include "herln/model.hpp"

namespace herln {

struct TrainConfig {
  std::size_t window = 3;
  std::size_t epochs = 30;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 5;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double entity_weight = 1.0;
  double relation_weight = 1.0;
};

/// Inverse-augmented splits plus the merged graph used as evaluation history.
struct PreparedData {
  TemporalGraph train;
  TemporalGraph valid;
  TemporalGraph test;
  TemporalGraph all;
};
PreparedData prepare_data(const DatasetBundle& bundle);

/// Communities of the time-collapsed training graph.
CommunityAssignment train_communities(const DatasetBundle& bundle, std::uint64_t seed);

/// Sum over the batch of -log softmax(logits)[target] (entity = object id).
Var entity_loss(HerlnModel& model, const ModelState& state, std::span<const Quadruple> batch, bool training);
/// Same with relation ids as targets.
Var relation_loss(HerlnModel& model, const ModelState& state, std::span<const Quadruple> batch, bool training);

/// 1 + #(scores > truth) + #(scores == truth)/2 over candidates outside
/// `filtered` and other than `truth`. Throws if truth is filtered.
double rank_query(std::span<const double> scores, Index truth, std::span<const Index> filtered = {});

struct RankMetrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;
};
RankMetrics summarize_ranks(std::span<const double> ranks);

struct MetricsReport {
  std::string split;
  std::string variant;
  RankMetrics entity_raw;
  RankMetrics entity_filtered;
  std::optional<RankMetrics> relation_raw;
};

/// Ranks every (augmented) quadruple of `split`, using facts of `data.all`
/// strictly before each query time as history.
MetricsReport evaluate(HerlnModel& model, const PreparedData& data, const TemporalGraph& split,
                       std::size_t window, const std::string& split_name);

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;         // mean joint loss per query
  double entity_loss = 0.0;  // mean entity loss per query
  double relation_loss = 0.0;
  std::optional<double> valid_mrr;  // filtered entity MRR
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  std::optional<double> best_valid_mrr;
  std::size_t skipped_timestamps = 0;
};

/// Chronological training with Adam. Keeps the parameters of the best
/// validation epoch (or the last epoch when there is no validation split).
/// Throws NumericError on a non-finite loss.
TrainResult train(HerlnModel& model, const PreparedData& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

/// One line per task/mode: `split=... task=... mode=... mrr=... hits1=...`.
/// `entity_mode` "raw" or "filtered" keeps only that entity row; empty keeps both.
void write_metrics_kv(std::ostream& out, const MetricsReport& report, const std::string& entity_mode = {});
void write_metrics_table(std::ostream& out, const std::vector<MetricsReport>& reports,
                         const std::string& entity_mode = {});

/// Element-wise mean of reports over seeds (labels taken from the first).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);
std::string format_epoch(const EpochLog& e);

}  // namespace herln
