#include "topogdn/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "topogdn/errors.hpp"

namespace topogdn {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_number(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(v, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (v.empty() || used != v.size() || !std::isfinite(x))
    throw ConfigError(fmt::format("'{}' expects a number, got '{}'", key, v));
  return x;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(fmt::format("'{}' expects a non-negative integer, got '{}'", key, v));
  try {
    return std::stoull(v);
  } catch (const std::out_of_range&) {
    throw ConfigError(fmt::format("'{}' value '{}' is out of range", key, v));
  }
}

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError(fmt::format("'{}' expects true or false, got '{}'", key, v));
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell = trim(cell);
    if (!cell.empty()) out.push_back(cell);
  }
  return out;
}

struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool hashed = true;
};

template <class T>
std::string str(const T& v) {
  return fmt::format("{}", v);
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"train_csv", [](RunConfig& c, const std::string& v) { c.train_csv = v; },
       [](const RunConfig& c) { return c.train_csv; }, false},
      {"test_csv", [](RunConfig& c, const std::string& v) { c.test_csv = v; },
       [](const RunConfig& c) { return c.test_csv; }, false},
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
       [](const RunConfig& c) { return c.output_dir; }, false},
      {"seed",
       [](RunConfig& c, const std::string& v) { c.model.seed = c.train.seed = parse_count("seed", v); },
       [](const RunConfig& c) { return str(c.train.seed); }},
      {"window", [](RunConfig& c, const std::string& v) { c.model.window = parse_count("window", v); },
       [](const RunConfig& c) { return str(c.model.window); }},
      {"stride", [](RunConfig& c, const std::string& v) { c.train.stride = parse_count("stride", v); },
       [](const RunConfig& c) { return str(c.train.stride); }},
      {"detect_stride",
       [](RunConfig& c, const std::string& v) { c.detect_stride = parse_count("detect_stride", v); },
       [](const RunConfig& c) { return str(c.detect_stride); }},
      {"batch_size",
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_count("batch_size", v); },
       [](const RunConfig& c) { return str(c.train.batch_size); }},
      {"epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = parse_count("epochs", v); },
       [](const RunConfig& c) { return str(c.train.epochs); }},
      {"learning_rate",
       [](RunConfig& c, const std::string& v) {
         c.train.learning_rate = parse_number("learning_rate", v);
       },
       [](const RunConfig& c) { return str(c.train.learning_rate); }},
      {"early_stop_patience",
       [](RunConfig& c, const std::string& v) {
         c.train.early_stop_patience = parse_count("early_stop_patience", v);
       },
       [](const RunConfig& c) { return str(c.train.early_stop_patience); }},
      {"validation_ratio",
       [](RunConfig& c, const std::string& v) {
         c.train.validation_ratio = parse_number("validation_ratio", v);
       },
       [](const RunConfig& c) { return str(c.train.validation_ratio); }},
      {"top_k", [](RunConfig& c, const std::string& v) { c.model.top_k = parse_count("top_k", v); },
       [](const RunConfig& c) { return str(c.model.top_k); }},
      {"embed_dim",
       [](RunConfig& c, const std::string& v) { c.model.embed_dim = parse_count("embed_dim", v); },
       [](const RunConfig& c) { return str(c.model.embed_dim); }},
      {"heads", [](RunConfig& c, const std::string& v) { c.model.heads = parse_count("heads", v); },
       [](const RunConfig& c) { return str(c.model.heads); }},
      {"output_layers",
       [](RunConfig& c, const std::string& v) {
         c.model.output_layers = parse_count("output_layers", v);
       },
       [](const RunConfig& c) { return str(c.model.output_layers); }},
      {"output_hidden",
       [](RunConfig& c, const std::string& v) {
         c.model.output_hidden = parse_count("output_hidden", v);
       },
       [](const RunConfig& c) { return str(c.model.output_hidden); }},
      {"attention_hidden",
       [](RunConfig& c, const std::string& v) {
         c.model.attention_hidden = parse_count("attention_hidden", v);
       },
       [](const RunConfig& c) { return str(c.model.attention_hidden); }},
      {"kernel_sizes",
       [](RunConfig& c, const std::string& v) {
         std::vector<std::size_t> sizes;
         for (const auto& s : split_list(v)) sizes.push_back(parse_count("kernel_sizes", s));
         if (sizes.empty()) throw ConfigError("'kernel_sizes' needs at least one width");
         c.model.temporal.kernel_sizes = sizes;
       },
       [](const RunConfig& c) { return fmt::format("{}", fmt::join(c.model.temporal.kernel_sizes, ",")); }},
      {"dilation",
       [](RunConfig& c, const std::string& v) {
         c.model.temporal.dilation = parse_count("dilation", v);
       },
       [](const RunConfig& c) { return str(c.model.temporal.dilation); }},
      {"filtrations",
       [](RunConfig& c, const std::string& v) {
         c.model.topo.filtrations = parse_count("filtrations", v);
       },
       [](const RunConfig& c) { return str(c.model.topo.filtrations); }},
      {"transform_families",
       [](RunConfig& c, const std::string& v) {
         std::vector<TransformFamily> f;
         for (const auto& s : split_list(v)) f.push_back(parse_family(s));
         if (f.empty()) throw ConfigError("'transform_families' needs at least one family");
         c.model.topo.families = f;
       },
       [](const RunConfig& c) {
         std::vector<std::string> names;
         for (auto f : c.model.topo.families) names.push_back(family_name(f));
         return fmt::format("{}", fmt::join(names, ","));
       }},
      {"instances_per_family",
       [](RunConfig& c, const std::string& v) {
         c.model.topo.instances_per_family = parse_count("instances_per_family", v);
       },
       [](const RunConfig& c) { return str(c.model.topo.instances_per_family); }},
      {"views",
       [](RunConfig& c, const std::string& v) {
         auto k = parse_count("views", v);
         auto f = c.model.topo.families.size();
         if (k == 0 || k % f != 0)
           throw ConfigError(
               fmt::format("'views' = {} is not a positive multiple of {} transform families", k, f));
         c.model.topo.instances_per_family = k / f;
       },
       [](const RunConfig& c) { return str(c.model.topo.views()); }, false},
      {"samples_q",
       [](RunConfig& c, const std::string& v) { c.model.topo.samples_q = parse_count("samples_q", v); },
       [](const RunConfig& c) { return str(c.model.topo.samples_q); }},
      {"gaussian_sigma",
       [](RunConfig& c, const std::string& v) {
         c.model.topo.gaussian_sigma = parse_number("gaussian_sigma", v);
       },
       [](const RunConfig& c) { return str(c.model.topo.gaussian_sigma); }},
      {"rational_hat_r",
       [](RunConfig& c, const std::string& v) {
         c.model.topo.rational_hat_r = parse_number("rational_hat_r", v);
       },
       [](const RunConfig& c) { return str(c.model.topo.rational_hat_r); }},
      {"complex_mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "graph") c.model.topo.mode = ComplexMode::Graph;
         else if (v == "clique") c.model.topo.mode = ComplexMode::Clique;
         else throw ConfigError(fmt::format("'complex_mode' expects graph or clique, got '{}'", v));
       },
       [](const RunConfig& c) {
         return std::string(c.model.topo.mode == ComplexMode::Graph ? "graph" : "clique");
       }},
      {"mstcn_enabled",
       [](RunConfig& c, const std::string& v) {
         c.model.mstcn_enabled = parse_flag("mstcn_enabled", v);
       },
       [](const RunConfig& c) { return str(c.model.mstcn_enabled); }},
      {"tcn_single_scale",
       [](RunConfig& c, const std::string& v) {
         c.model.tcn_single_scale = parse_flag("tcn_single_scale", v);
       },
       [](const RunConfig& c) { return str(c.model.tcn_single_scale); }},
      {"ta_enabled",
       [](RunConfig& c, const std::string& v) { c.model.ta_enabled = parse_flag("ta_enabled", v); },
       [](const RunConfig& c) { return str(c.model.ta_enabled); }},
      {"output_softmax",
       [](RunConfig& c, const std::string& v) {
         c.model.output_softmax = parse_flag("output_softmax", v);
       },
       [](const RunConfig& c) { return str(c.model.output_softmax); }},
  };
  return table;
}

}  // namespace

RunConfig::RunConfig() {
  model.window = 100;
  model.embed_dim = 128;
  model.top_k = 20;
  model.output_layers = 2;
  model.topo.filtrations = 8;
  model.topo.instances_per_family = 3;
  train.batch_size = 32;
  train.stride = 10;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& k : keys()) out += fmt::format("{}={}\n", k.name, k.get(*this));
  return out;
}

std::string RunConfig::hash() const {
  // FNV-1a over the hashed keys.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& k : keys()) {
    if (!k.hashed) continue;
    for (char ch : fmt::format("{}={}\n", k.name, k.get(*this))) {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

std::filesystem::path RunConfig::run_dir() const {
  return std::filesystem::path(output_dir) / ("run-" + hash());
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : keys())
    if (key == k.name) {
      k.set(config, value);
      return;
    }
  throw ConfigError(fmt::format("unknown configuration key '{}'", key));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("{}:{}: expected key=value, got '{}'", source, lineno, line));
    try {
      set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("{}:{}: {}", source, lineno, e.what()));
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

bool apply_seed_override(RunConfig& config) {
  const char* env = std::getenv("TOPOGDN_SEED");
  if (env == nullptr || *env == '\0') return false;
  try {
    set_config_value(config, "seed", env);
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("TOPOGDN_SEED: {}", e.what()));
  }
  return true;
}

}  // namespace topogdn
