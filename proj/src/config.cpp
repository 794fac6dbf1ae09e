#include "herln/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace herln {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Shortest text that parses back to the same double.
std::string fmt_double(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*group, std::size_t T::*member) {
  return {key, [=](const RunConfig& c) { return std::to_string(c.*group.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) {
            c.*group.*member = static_cast<std::size_t>(to_u64(k, v));
          }};
}

template <typename T>
Field double_field(const char* key, T RunConfig::*group, double T::*member) {
  return {key, [=](const RunConfig& c) { return fmt_double(c.*group.*member); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { c.*group.*member = to_double(k, v); }};
}

Field bool_field(const char* key, bool ModelConfig::*member) {
  return {key, [=](const RunConfig& c) { return std::string(c.model.*member ? "true" : "false"); },
          [=](RunConfig& c, const std::string& k, const std::string& v) { c.model.*member = to_bool(k, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"dataset.path", [](const RunConfig& c) { return c.dataset_path.string(); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_path = v; }},
      {"dataset.name", [](const RunConfig& c) { return c.dataset_name; },
       [](RunConfig& c, const std::string&, const std::string& v) { c.dataset_name = v; }},
      {"dataset.fraction", [](const RunConfig& c) { return fmt_double(c.dataset_fraction); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const double f = to_double(k, v);
         if (!(f > 0.0 && f <= 1.0)) throw ConfigError(k + ": must be in (0, 1]");
         c.dataset_fraction = f;
       }},
      size_field("model.dim", &RunConfig::model, &ModelConfig::dim),
      size_field("model.layers", &RunConfig::model, &ModelConfig::layers),
      size_field("model.bases", &RunConfig::model, &ModelConfig::bases),
      size_field("model.channels", &RunConfig::model, &ModelConfig::channels),
      double_field("model.dropout", &RunConfig::model, &ModelConfig::dropout),
      {"model.ablation", [](const RunConfig& c) { return to_string(c.model.ablation); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.model.ablation = parse_ablation(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"model.gate", [](const RunConfig& c) { return std::string(c.model.gate == GateMode::Scalar ? "scalar" : "entity"); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "scalar") c.model.gate = GateMode::Scalar;
         else if (v == "entity") c.model.gate = GateMode::PerEntity;
         else throw ConfigError(k + ": expected scalar or entity, got '" + v + "'");
       }},
      bool_field("model.fan_in_normalizer", &ModelConfig::fan_in_normalizer),
      bool_field("model.intra_community_normalizer", &ModelConfig::intra_community_normalizer),
      bool_field("model.modulate_projection", &ModelConfig::modulate_projection),
      {"model.fixed_decay",
       [](const RunConfig& c) { return c.model.fixed_decay ? fmt_double(*c.model.fixed_decay) : std::string(); },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v.empty()) c.model.fixed_decay.reset();
         else c.model.fixed_decay = to_double(k, v);
       }},
      bool_field("model.relation_task", &ModelConfig::relation_task),
      size_field("train.window", &RunConfig::train, &TrainConfig::window),
      size_field("train.epochs", &RunConfig::train, &TrainConfig::epochs),
      size_field("train.patience", &RunConfig::train, &TrainConfig::patience),
      double_field("train.lr", &RunConfig::train, &TrainConfig::lr),
      {"train.seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
       [](RunConfig& c, const std::string& k, const std::string& v) { c.train.seed = to_u64(k, v); }},
      double_field("train.entity_weight", &RunConfig::train, &TrainConfig::entity_weight),
      double_field("train.relation_weight", &RunConfig::train, &TrainConfig::relation_weight),
      {"run.out", [](const RunConfig& c) { return c.out.string(); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; }},
      {"run.seeds",
       [](const RunConfig& c) {
         std::string s;
         for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
         return s;
       },
       [](RunConfig& c, const std::string&, const std::string& v) { c.seeds = parse_seed_list(v); }},
      {"run.mode", [](const RunConfig& c) { return c.mode; },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "raw" && v != "filtered") throw ConfigError(k + ": expected raw or filtered, got '" + v + "'");
         c.mode = v;
       }},
      {"run.split", [](const RunConfig& c) { return c.split; },
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "train" && v != "valid" && v != "test")
           throw ConfigError(k + ": expected train, valid or test, got '" + v + "'");
         c.split = v;
       }},
      {"run.checkpoint", [](const RunConfig& c) { return c.checkpoint.string(); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.checkpoint = v; }},
      {"run.partition", [](const RunConfig& c) { return c.partition.string(); },
       [](RunConfig& c, const std::string&, const std::string& v) { c.partition = v; }},
  };
  return table;
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  std::vector<std::uint64_t> out;
  std::string item;
  std::istringstream in{std::string(text)};
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(to_u64("seeds", item));
  }
  return out;
}

ConfigEntries parse_config_text(std::string_view text, const std::string& source) {
  ConfigEntries out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    out.emplace_back(section.empty() ? key : section + "." + key, trim(std::string_view(line).substr(eq + 1)));
  }
  return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(cfg, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_config(RunConfig& cfg, const ConfigEntries& entries) {
  for (const auto& [key, value] : entries) set_config_value(cfg, key, value);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg;
  apply_config(cfg, parse_config_text(text.str(), path.string()));
  return cfg;
}

std::string write_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << key.substr(dot + 1) << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace herln
