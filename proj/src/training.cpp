#include "herln/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace herln {

PreparedData prepare_data(const DatasetBundle& bundle) {
  PreparedData d{add_inverse_quadruples(bundle.train), add_inverse_quadruples(bundle.valid),
                 add_inverse_quadruples(bundle.test), {}};
  const TemporalGraph* parts[] = {&d.train, &d.valid, &d.test};
  d.all = concatenate(parts);
  return d;
}

CommunityAssignment train_communities(const DatasetBundle& bundle, std::uint64_t seed) {
  return detect_communities(build_layered_graph(bundle.train), seed);
}

namespace {

std::vector<Index> objects_of(std::span<const Quadruple> batch) {
  std::vector<Index> out;
  out.reserve(batch.size());
  for (const auto& q : batch) out.push_back(q.object);
  return out;
}

std::vector<Index> relations_of(std::span<const Quadruple> batch) {
  std::vector<Index> out;
  out.reserve(batch.size());
  for (const auto& q : batch) out.push_back(q.relation);
  return out;
}

// Query batches bound the size of the [B, candidates] score matrices.
constexpr std::size_t kEvalBatch = 512;

}  // namespace

Var entity_loss(HerlnModel& model, const ModelState& state, std::span<const Quadruple> batch, bool training) {
  return softmax_cross_entropy(model.entity_logits(state, batch, training), objects_of(batch));
}

Var relation_loss(HerlnModel& model, const ModelState& state, std::span<const Quadruple> batch, bool training) {
  return softmax_cross_entropy(model.relation_logits(state, batch, training), relations_of(batch));
}

double rank_query(std::span<const double> scores, Index truth, std::span<const Index> filtered) {
  if (truth >= scores.size()) throw std::out_of_range("rank_query: truth id outside the score vector");
  std::vector<char> masked(scores.size(), 0);
  for (Index f : filtered) {
    if (f == truth) throw std::invalid_argument("rank_query: truth is in the filter set");
    if (f < scores.size()) masked[f] = 1;
  }
  const double target = scores[truth];
  std::size_t greater = 0, equal = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == truth || masked[i]) continue;
    if (scores[i] > target) ++greater;
    else if (scores[i] == target) ++equal;
  }
  return 1.0 + static_cast<double>(greater) + static_cast<double>(equal) / 2.0;
}

RankMetrics summarize_ranks(std::span<const double> ranks) {
  RankMetrics m;
  m.count = ranks.size();
  if (ranks.empty()) return m;
  for (double r : ranks) {
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1.0 ? 1.0 : 0.0;
    m.hits3 += r <= 3.0 ? 1.0 : 0.0;
    m.hits10 += r <= 10.0 ? 1.0 : 0.0;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

MetricsReport evaluate(HerlnModel& model, const PreparedData& data, const TemporalGraph& split,
                       std::size_t window, const std::string& split_name) {
  MetricsReport report;
  report.split = split_name;
  report.variant = to_string(model.config().ablation);
  const bool relations = model.config().relation_task;
  std::vector<double> raw, filtered, rel;

  for (Index t : split.timestamps()) {
    // Other true objects of each (s, r) at this time, from every split.
    std::map<std::pair<Index, Index>, std::vector<Index>> answers;
    for (const auto& q : data.all.facts_at(t)) answers[{q.subject, q.relation}].push_back(q.object);

    const HistoryGraph hg = history_graph(data.all, t, window);
    const ModelState state = model.forward(hg, false);
    const auto queries = split.facts_at(t);
    for (std::size_t begin = 0; begin < queries.size(); begin += kEvalBatch) {
      const auto batch = queries.subspan(begin, std::min(kEvalBatch, queries.size() - begin));
      const Var logits = model.entity_logits(state, batch, false);
      const std::size_t k = logits.cols();
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Quadruple& q = batch[b];
        std::span<const double> scores(logits.value().data() + b * k, k);
        raw.push_back(rank_query(scores, q.object));
        std::vector<Index> mask;
        for (Index o : answers[{q.subject, q.relation}])
          if (o != q.object) mask.push_back(o);
        filtered.push_back(rank_query(scores, q.object, mask));
      }
      if (relations) {
        const Var rl = model.relation_logits(state, batch, false);
        const std::size_t kr = rl.cols();
        for (std::size_t b = 0; b < batch.size(); ++b)
          rel.push_back(rank_query(std::span<const double>(rl.value().data() + b * kr, kr), batch[b].relation));
      }
    }
  }
  report.entity_raw = summarize_ranks(raw);
  report.entity_filtered = summarize_ranks(filtered);
  if (relations) report.relation_raw = summarize_ranks(rel);
  return report;
}

TrainResult train(HerlnModel& model, const PreparedData& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (cfg.window == 0) throw std::invalid_argument("history window must be at least 1");
  TrainResult result;
  AdamConfig adam;
  adam.lr = cfg.lr;
  const bool relations = model.config().relation_task;
  const bool validate = !data.valid.empty();
  std::optional<ParameterStore> best;
  std::size_t stale = 0;
  const auto stamps = data.train.timestamps();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    double total = 0.0, ent = 0.0, rel = 0.0;
    std::size_t queries = 0, skipped = 0;
    for (Index t : stamps) {
      const HistoryGraph hg = history_graph(data.train, t, cfg.window);
      if (hg.edges.empty()) {
        ++skipped;
        continue;
      }
      const auto batch = data.train.facts_at(t);
      const ModelState state = model.forward(hg, true);
      const Var le = entity_loss(model, state, batch, true);
      Var loss = affine(le, cfg.entity_weight, 0.0);
      double lr_value = 0.0;
      if (relations) {
        const Var lr = relation_loss(model, state, batch, true);
        lr_value = lr.value()[0];
        loss = add(loss, affine(lr, cfg.relation_weight, 0.0));
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", time " +
                           std::to_string(t));
      backward(loss);
      model.params().adam_step(adam);
      total += value;
      ent += le.value()[0];
      rel += lr_value;
      queries += batch.size();
    }
    result.skipped_timestamps = skipped;
    if (queries > 0) {
      const double n = static_cast<double>(queries);
      log.loss = total / n;
      log.entity_loss = ent / n;
      log.relation_loss = rel / n;
    }
    if (validate) {
      const MetricsReport v = evaluate(model, data, data.valid, cfg.window, "valid");
      log.valid_mrr = v.entity_filtered.mrr;
      if (!result.best_valid_mrr || *log.valid_mrr > *result.best_valid_mrr) {
        result.best_valid_mrr = log.valid_mrr;
        result.best_epoch = epoch;
        best = model.params().snapshot();
        log.improved = true;
        stale = 0;
      } else {
        ++stale;
      }
    } else {
      result.best_epoch = epoch;
      log.improved = true;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (validate && cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (best) model.params().assign_values(*best);
  return result;
}

namespace {

void kv_line(std::ostream& out, const MetricsReport& r, const char* task, const char* mode,
             const RankMetrics& m) {
  out << "split=" << r.split << " variant=" << r.variant << " task=" << task << " mode=" << mode
      << std::setprecision(6) << std::fixed << " mrr=" << m.mrr << " hits1=" << m.hits1
      << " hits3=" << m.hits3 << " hits10=" << m.hits10 << " count=" << m.count << '\n';
  out.unsetf(std::ios::floatfield);
}

}  // namespace

void write_metrics_kv(std::ostream& out, const MetricsReport& report, const std::string& entity_mode) {
  if (entity_mode != "filtered") kv_line(out, report, "entity", "raw", report.entity_raw);
  if (entity_mode != "raw") kv_line(out, report, "entity", "filtered", report.entity_filtered);
  if (report.relation_raw) kv_line(out, report, "relation", "raw", *report.relation_raw);
}

void write_metrics_table(std::ostream& out, const std::vector<MetricsReport>& reports,
                         const std::string& entity_mode) {
  out << std::left << std::setw(8) << "split" << std::setw(14) << "variant" << std::setw(10) << "task"
      << std::setw(10) << "mode" << std::right << std::setw(9) << "MRR" << std::setw(9) << "H@1"
      << std::setw(9) << "H@3" << std::setw(9) << "H@10" << std::setw(8) << "n" << '\n';
  auto row = [&](const MetricsReport& r, const char* task, const char* mode, const RankMetrics& m) {
    out << std::left << std::setw(8) << r.split << std::setw(14) << r.variant << std::setw(10) << task
        << std::setw(10) << mode << std::right << std::fixed << std::setprecision(2) << std::setw(9)
        << 100 * m.mrr << std::setw(9) << 100 * m.hits1 << std::setw(9) << 100 * m.hits3 << std::setw(9)
        << 100 * m.hits10 << std::setw(8) << m.count << '\n';
    out.unsetf(std::ios::floatfield);
  };
  for (const auto& r : reports) {
    if (entity_mode != "filtered") row(r, "entity", "raw", r.entity_raw);
    if (entity_mode != "raw") row(r, "entity", "filtered", r.entity_filtered);
    if (r.relation_raw) row(r, "relation", "raw", *r.relation_raw);
  }
}

MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("average_reports: no reports");
  MetricsReport mean = reports.front();
  auto accumulate = [&](RankMetrics MetricsReport::*field) {
    RankMetrics m;
    for (const auto& r : reports) {
      const RankMetrics& x = r.*field;
      m.mrr += x.mrr;
      m.hits1 += x.hits1;
      m.hits3 += x.hits3;
      m.hits10 += x.hits10;
      m.count += x.count;
    }
    const double n = static_cast<double>(reports.size());
    m.mrr /= n;
    m.hits1 /= n;
    m.hits3 /= n;
    m.hits10 /= n;
    m.count /= reports.size();
    mean.*field = m;
  };
  accumulate(&MetricsReport::entity_raw);
  accumulate(&MetricsReport::entity_filtered);
  if (mean.relation_raw) {
    RankMetrics m;
    for (const auto& r : reports) {
      if (!r.relation_raw) throw std::invalid_argument("average_reports: mixed relation metrics");
      m.mrr += r.relation_raw->mrr / static_cast<double>(reports.size());
      m.hits1 += r.relation_raw->hits1 / static_cast<double>(reports.size());
      m.hits3 += r.relation_raw->hits3 / static_cast<double>(reports.size());
      m.hits10 += r.relation_raw->hits10 / static_cast<double>(reports.size());
      m.count = r.relation_raw->count;
    }
    mean.relation_raw = m;
  }
  return mean;
}

std::string format_epoch(const EpochLog& e) {
  std::ostringstream s;
  s << "epoch=" << e.epoch << std::setprecision(6) << std::fixed << " loss=" << e.loss
    << " entity_loss=" << e.entity_loss << " relation_loss=" << e.relation_loss;
  if (e.valid_mrr) s << " valid_mrr=" << *e.valid_mrr;
  if (e.improved) s << " best";
  return s.str();
}

}  // namespace herln
