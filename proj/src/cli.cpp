#include "herln/cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "herln/community.hpp"
#include "herln/model.hpp"
#include "herln/parameters.hpp"
#include "herln/training.hpp"

namespace herln {

namespace fs = std::filesystem;

fs::path make_run_dir(const fs::path& out) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << "run-" << std::put_time(&tm, "%Y%m%d-%H%M%S");
  fs::create_directories(out);
  fs::path dir = out / name.str();
  for (int n = 1; fs::exists(dir); ++n) dir = out / (name.str() + "-" + std::to_string(n));
  fs::create_directories(dir);
  return dir;
}

DatasetBundle load_configured_dataset(const RunConfig& cfg) {
  if (cfg.dataset_path.empty()) throw ConfigError("no dataset given (use --dataset or dataset.path)");
  DatasetBundle bundle = load_dataset(cfg.dataset_dir());
  if (cfg.dataset_fraction < 1.0) bundle = slice_timeline(bundle, cfg.dataset_fraction);
  return bundle;
}

void print_stats(std::ostream& out, const DatasetBundle& b) {
  const TemporalGraph& g = b.train;
  out << "dataset=" << b.name << '\n'
      << "entities=" << g.num_entities() << '\n'
      << "relations=" << g.num_relations_raw() << '\n'
      << "facts=" << b.num_facts() << '\n'
      << "timestamps=" << g.num_timestamps() << '\n'
      << "train=" << b.train.size() << '\n'
      << "valid=" << b.valid.size() << '\n'
      << "test=" << b.test.size() << '\n'
      << "time_interval=" << g.time_scale().interval << '\n'
      << "time_origin=" << g.time_scale().origin << '\n';
}

namespace {

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> dataset;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> seeds;
  std::optional<std::string> ablation;
  std::optional<std::size_t> window;
  std::optional<std::size_t> epochs;
  std::optional<std::string> mode;
  std::optional<std::string> split;
  std::optional<std::string> checkpoint;
  std::optional<std::string> partition;
  std::vector<std::string> sets;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "Config file (section/key = value)");
  cmd->add_option("--dataset", f.dataset, "Dataset directory");
  cmd->add_option("--out", f.out, "Output root directory");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--seeds", f.seeds, "Comma-separated seeds; train averages metrics over them");
  cmd->add_option("--ablation", f.ablation, "none|noConvTransE|noFiLM|noHRGCN|noCommunity");
  cmd->add_option("--window", f.window, "History window in timestamps");
  cmd->add_option("--epochs", f.epochs, "Maximum training epochs");
  cmd->add_option("--mode", f.mode, "raw|filtered");
  cmd->add_option("--split", f.split, "train|valid|test");
  cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file");
  cmd->add_option("--partition", f.partition, "Cached community partition file");
  cmd->add_option("--set", f.sets, "Override any config key: section.key=value")->take_all();
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg = f.config ? load_run_config(*f.config) : RunConfig{};
  if (f.dataset) set_config_value(cfg, "dataset.path", *f.dataset);
  if (f.out) set_config_value(cfg, "run.out", *f.out);
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.seeds) set_config_value(cfg, "run.seeds", *f.seeds);
  if (f.ablation) set_config_value(cfg, "model.ablation", *f.ablation);
  if (f.window) cfg.train.window = *f.window;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.mode) set_config_value(cfg, "run.mode", *f.mode);
  if (f.split) set_config_value(cfg, "run.split", *f.split);
  if (f.checkpoint) set_config_value(cfg, "run.checkpoint", *f.checkpoint);
  if (f.partition) set_config_value(cfg, "run.partition", *f.partition);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

CommunityAssignment communities_for(const RunConfig& cfg, const DatasetBundle& bundle, std::uint64_t seed,
                                    const fs::path& fallback_dir = {}) {
  if (!cfg.partition.empty()) return load_partition(cfg.partition);
  if (!fallback_dir.empty() && fs::exists(fallback_dir / "partition.tsv"))
    return load_partition(fallback_dir / "partition.tsv");
  return train_communities(bundle, seed);
}

const TemporalGraph& pick_split(const PreparedData& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "valid") return data.valid;
  return data.test;
}

int cmd_stats(const RunConfig& cfg, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const DatasetBundle bundle = load_configured_dataset(cfg);
  print_stats(out, bundle);
  out << "load_seconds=" << std::fixed << std::setprecision(3)
      << std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() << '\n';
  out.unsetf(std::ios::floatfield);
  return 0;
}

int cmd_communities(const RunConfig& cfg, std::ostream& out) {
  const DatasetBundle bundle = load_configured_dataset(cfg);
  const LayeredGraph lg = build_layered_graph(bundle.train);
  const CommunityAssignment asg = detect_communities(lg, cfg.train.seed);
  const fs::path dir = make_run_dir(cfg.out);
  save_partition(dir / "partition.tsv", asg, cfg.train.seed);
  write_text(dir / "config.ini", write_config(cfg));

  std::vector<std::size_t> sizes(asg.num_communities, 0);
  for (Index c : asg.community_of) ++sizes[c];
  std::map<std::size_t, std::size_t> histogram;  // bucket lower bound (power of two) -> count
  for (std::size_t s : sizes) {
    std::size_t bucket = 1;
    while (bucket * 2 <= s) bucket *= 2;
    ++histogram[bucket];
  }
  out << "communities=" << asg.num_communities << '\n'
      << "modularity=" << std::setprecision(10) << modularity(lg, asg) << '\n';
  for (const auto& [lo, count] : histogram)
    out << "size[" << lo << "," << 2 * lo - 1 << "]=" << count << '\n';
  out << "partition=" << (dir / "partition.tsv").string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  const DatasetBundle bundle = load_configured_dataset(cfg);
  const PreparedData data = prepare_data(bundle);
  const fs::path run = make_run_dir(cfg.out);
  write_text(run / "config.ini", write_config(cfg));
  out << "run_dir=" << run.string() << '\n';

  const std::vector<std::uint64_t> seeds = cfg.seeds.empty() ? std::vector{cfg.train.seed} : cfg.seeds;
  std::vector<MetricsReport> valid_reports, test_reports;
  for (std::uint64_t seed : seeds) {
    const fs::path dir = seeds.size() > 1 ? run / ("seed-" + std::to_string(seed)) : run;
    fs::create_directories(dir);
    const CommunityAssignment asg = communities_for(cfg, bundle, seed);
    save_partition(dir / "partition.tsv", asg, seed);

    TrainConfig tc = cfg.train;
    tc.seed = seed;
    HerlnModel model(cfg.model, data.train, asg, seed);
    std::ofstream log(dir / "train.log", std::ios::app);
    log << "# variant=" << to_string(cfg.model.ablation) << " seed=" << seed << '\n';
    const TrainResult result = train(model, data, tc, [&](const EpochLog& e) {
      log << format_epoch(e) << std::endl;
      out << "seed=" << seed << ' ' << format_epoch(e) << '\n';
    });
    log << "# best_epoch=" << result.best_epoch << " skipped_timestamps=" << result.skipped_timestamps << '\n';
    save_checkpoint(dir / "model.ckpt", model.params());

    MetricsReport v = evaluate(model, data, data.valid, tc.window, "valid");
    MetricsReport t = evaluate(model, data, data.test, tc.window, "test");
    std::ofstream metrics(dir / "metrics.txt");
    write_metrics_kv(metrics, v);
    write_metrics_kv(metrics, t);
    valid_reports.push_back(std::move(v));
    test_reports.push_back(std::move(t));
  }

  std::vector<MetricsReport> shown;
  if (seeds.size() > 1) {
    MetricsReport mv = average_reports(valid_reports), mt = average_reports(test_reports);
    mv.variant += "(mean)";
    mt.variant += "(mean)";
    std::ofstream metrics(run / "metrics_mean.txt");
    write_metrics_kv(metrics, mv);
    write_metrics_kv(metrics, mt);
    shown = {mv, mt};
  } else {
    shown = {valid_reports.front(), test_reports.front()};
  }
  write_metrics_table(out, shown, cfg.mode);
  return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
  // Load first so a corrupt file fails before any expensive work.
  const ParameterStore loaded = load_checkpoint(cfg.checkpoint);
  const DatasetBundle bundle = load_configured_dataset(cfg);
  const PreparedData data = prepare_data(bundle);
  const CommunityAssignment asg = communities_for(cfg, bundle, cfg.train.seed, cfg.checkpoint.parent_path());
  HerlnModel model(cfg.model, data.train, asg, cfg.train.seed);
  restore_parameters(model.params(), loaded);
  const MetricsReport report = evaluate(model, data, pick_split(data, cfg.split), cfg.train.window, cfg.split);
  write_metrics_kv(out, report, cfg.mode);
  write_metrics_table(out, {report}, cfg.mode);
  return 0;
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out) {
  if (cfg.checkpoint.empty()) throw ConfigError("inspect-checkpoint needs --checkpoint");
  const ParameterStore store = load_checkpoint(cfg.checkpoint);
  out << "version=" << kCheckpointVersion << '\n'
      << "parameters=" << store.size() << '\n'
      << "values=" << store.num_values() << '\n';
  for (const auto& name : store.names())
    out << name << ' ' << shape_string(store.get(name).shape()) << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal knowledge graph extrapolation: training, evaluation and inspection", "herln"};
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&, std::ostream&);
  };
  const Command commands[] = {
      {"stats", "Print dataset statistics", cmd_stats},
      {"communities", "Detect and cache communities of the training graph", cmd_communities},
      {"train", "Train a model and write checkpoint, logs and metrics", cmd_train},
      {"eval", "Evaluate a checkpoint", cmd_eval},
      {"inspect-checkpoint", "List the parameters stored in a checkpoint", cmd_inspect},
  };
  std::vector<CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    add_flags(sub, flags);
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    const RunConfig cfg = resolve(flags);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].run(cfg, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return 1;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace herln
