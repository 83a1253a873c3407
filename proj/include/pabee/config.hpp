#pragma once

// Flat key-value experiment configuration.
//
//   # comment
//   dataset.kind = two_spirals
//   model.num_layers = 12
//   policy[0].kind = patience
//   policy[0].t = 6
//
// `policy.<field>` is shorthand for `policy[0].<field>`. Any policy key
// replaces the built-in policy list. Unknown keys are errors.

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "pabee/dataset.hpp"
#include "pabee/errors.hpp"
#include "pabee/model.hpp"
#include "pabee/parallel.hpp"
#include "pabee/policy.hpp"

namespace pabee {

struct SweepConfig {
  std::size_t t_min = 1;
  std::size_t t_max = 0;  // 0: n - 1
  std::vector<double> entropy_grid{0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65};
  std::vector<double> maxprob_grid{0.6, 0.7, 0.8, 0.85, 0.9, 0.925, 0.95, 0.97, 0.98, 0.99, 0.995, 0.998, 0.999};

  std::size_t upper(std::size_t num_layers) const { return t_max == 0 ? num_layers - 1 : t_max; }

  std::vector<std::size_t> patience_values(std::size_t num_layers) const {
    std::vector<std::size_t> v;
    for (std::size_t t = t_min; t <= upper(num_layers); ++t) v.push_back(t);
    return v;
  }
};

struct ExperimentConfig {
  DatasetSpec dataset{};
  StackConfig model{};
  OptimizerConfig optimizer{};
  std::vector<PolicyConfig> policies{PolicyConfig::never(), PolicyConfig::patience(6)};
  SweepConfig sweep{};
  std::vector<std::uint64_t> seeds{0};
  std::size_t workers = default_workers();
  std::string output_dir;  // empty: runs/<timestamp>-seed<first seed>
  std::string checkpoint;  // optional; "{seed}" is replaced by the seed

  /// Model config as trained for one seed: dimensions follow the dataset.
  StackConfig model_for(std::uint64_t seed) const {
    StackConfig c = model;
    c.input_dim = dataset.input_dim;
    c.task = dataset.task();
    c.num_classes = dataset.classes();
    c.seed = seed;
    return c;
  }

  void validate() const {
    if (policies.empty()) throw ValidationError("policy", "at least one policy is required");
    if (seeds.empty()) throw ValidationError("run.seeds", "at least one seed is required");
    if (workers < 1) throw ValidationError("run.workers", "must be >= 1");
    try {
      dataset.validate();
    } catch (const ArgumentError& e) {
      throw ValidationError(e.what());
    }
    const auto mc = model_for(seeds.front());
    mc.validate();
    optimizer.validate();
    for (const auto& p : policies) p.validate(mc.task, mc.num_layers);
    const std::size_t hi = sweep.upper(mc.num_layers);
    if (sweep.t_min < 1 || hi < sweep.t_min || hi > mc.num_layers - 1) {
      throw ValidationError("sweep.patience", "range must lie within [1, " +
                                                  std::to_string(mc.num_layers - 1) + "]");
    }
    if (sweep.entropy_grid.empty()) throw ValidationError("sweep.entropy_grid", "must not be empty");
    if (sweep.maxprob_grid.empty()) throw ValidationError("sweep.maxprob_grid", "must not be empty");
    if (seeds.size() > 1 && !checkpoint.empty() && checkpoint.find("{seed}") == std::string::npos) {
      throw ValidationError("model.checkpoint", "needs a {seed} placeholder when several seeds are given");
    }
  }
};

struct ConfigKey {
  std::string_view key;
  std::string_view help;
};

/// Every accepted key. `policy[i].*` keys take any index i >= 0.
inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"dataset.kind", "gaussian_blobs | two_spirals | regression_wave"},
      {"dataset.num_classes", "number of blobs (gaussian_blobs only)"},
      {"dataset.separation", "blob polygon diameter (> 0)"},
      {"dataset.noise", "Gaussian noise standard deviation (>= 0)"},
      {"dataset.turns", "spiral revolutions (two_spirals only)"},
      {"dataset.num_train", "training examples"},
      {"dataset.num_eval", "evaluation examples"},
      {"dataset.input_dim", "input features"},
      {"dataset.seed", "dataset seed"},
      {"model.hidden_dim", "hidden width"},
      {"model.num_layers", "number of layers n (>= 2)"},
      {"model.nonlinearity", "tanh | relu"},
      {"model.checkpoint", "load this checkpoint instead of training ({seed} expands)"},
      {"optimizer.learning_rate", "SGD learning rate"},
      {"optimizer.momentum", "SGD momentum"},
      {"optimizer.batch_size", "mini-batch size"},
      {"optimizer.epochs", "training epochs"},
      {"policy.kind", "patience | entropy | maxprob | fixed_depth | never (alias of policy[0].kind)"},
      {"policy.t", "patience t (alias of policy[0].t)"},
      {"policy.tau", "regression agreement threshold (alias of policy[0].tau)"},
      {"policy.threshold", "entropy/maxprob threshold (alias of policy[0].threshold)"},
      {"policy.depth", "fixed_depth layer count (alias of policy[0].depth)"},
      {"sweep.patience", "patience range lo:hi; hi = 0 means n-1"},
      {"sweep.entropy_grid", "comma-separated entropy thresholds"},
      {"sweep.maxprob_grid", "comma-separated max-probability thresholds"},
      {"run.seeds", "comma-separated model seeds; results are reported per seed and as medians"},
      {"run.workers", "worker threads"},
      {"output.dir", "output directory"},
  };
  return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_value(const std::string& key, const std::string& s) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end) throw ValidationError(key, "cannot parse '" + s + "'");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ValidationError(key, "must be finite");
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_value<T>(key, item));
  return out;
}

inline void apply_policy_field(PolicyConfig& p, const std::string& key, const std::string& field,
                               const std::string& value) {
  if (field == "kind") {
    try {
      p.kind = parse_policy_kind(value);
    } catch (const ValidationError&) {
      throw ValidationError(key, "unknown policy '" + value + "'");
    }
  } else if (field == "t") {
    p.t = parse_value<std::size_t>(key, value);
  } else if (field == "tau") {
    p.tau = parse_value<double>(key, value);
  } else if (field == "threshold") {
    p.threshold = parse_value<double>(key, value);
  } else if (field == "depth") {
    p.depth = parse_value<std::size_t>(key, value);
  } else {
    throw ValidationError(key, "unknown key");
  }
}

}  // namespace detail

/// Applies key=value settings in order. Later settings win.
class ConfigBuilder {
 public:
  explicit ConfigBuilder(ExperimentConfig base = {}) : cfg_(std::move(base)) {}

  void set(const std::string& raw_key, const std::string& raw_value) {
    const std::string key = detail::trim(raw_key);
    const std::string value = detail::trim(raw_value);
    static const std::regex policy_re(R"(policy(?:\[(\d+)\])?\.(\w+))");
    std::smatch m;
    if (std::regex_match(key, m, policy_re)) {
      const std::size_t index = m[1].matched ? detail::parse_value<std::size_t>(key, m[1].str()) : 0;
      if (index > 1000) throw ValidationError(key, "policy index too large");
      if (index >= policies_.size()) policies_.resize(index + 1);
      if (!policies_[index]) policies_[index] = PolicyConfig{};
      detail::apply_policy_field(*policies_[index], key, m[2].str(), value);
      return;
    }
    apply_scalar(key, value);
  }

  /// Parses "key=value" text; `origin` names the source in error messages.
  void parse(std::istream& is, const std::string& origin = "config") {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      if (detail::trim(line).empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected key=value");
      }
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  void parse_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    parse(is, path.string());
  }

  ExperimentConfig build() const {
    ExperimentConfig out = cfg_;
    if (!policies_.empty()) {
      out.policies.clear();
      for (std::size_t i = 0; i < policies_.size(); ++i) {
        if (!policies_[i]) throw ValidationError("policy[" + std::to_string(i) + "]", "missing policy index");
        out.policies.push_back(*policies_[i]);
      }
    }
    return out;
  }

 private:
  void apply_scalar(const std::string& key, const std::string& v) {
    using detail::parse_value;
    auto& d = cfg_.dataset;
    auto& m = cfg_.model;
    auto& o = cfg_.optimizer;
    if (key == "dataset.kind") {
      try {
        d.kind = parse_dataset_kind(v);
      } catch (const ValidationError&) {
        throw ValidationError(key, "unknown dataset '" + v + "'");
      }
    } else if (key == "dataset.num_classes") {
      d.num_classes = parse_value<std::size_t>(key, v);
    } else if (key == "dataset.separation") {
      d.separation = parse_value<double>(key, v);
    } else if (key == "dataset.noise") {
      d.noise = parse_value<double>(key, v);
    } else if (key == "dataset.turns") {
      d.turns = parse_value<double>(key, v);
    } else if (key == "dataset.num_train") {
      d.num_train = parse_value<std::size_t>(key, v);
    } else if (key == "dataset.num_eval") {
      d.num_eval = parse_value<std::size_t>(key, v);
    } else if (key == "dataset.input_dim") {
      d.input_dim = parse_value<std::size_t>(key, v);
    } else if (key == "dataset.seed") {
      d.seed = parse_value<std::uint64_t>(key, v);
    } else if (key == "model.hidden_dim") {
      m.hidden_dim = parse_value<std::size_t>(key, v);
    } else if (key == "model.num_layers") {
      m.num_layers = parse_value<std::size_t>(key, v);
    } else if (key == "model.nonlinearity") {
      if (v == "tanh") {
        m.nonlinearity = Nonlinearity::tanh;
      } else if (v == "relu") {
        m.nonlinearity = Nonlinearity::relu;
      } else {
        throw ValidationError(key, "expected tanh or relu, got '" + v + "'");
      }
    } else if (key == "model.checkpoint") {
      cfg_.checkpoint = v;
    } else if (key == "optimizer.learning_rate") {
      o.learning_rate = parse_value<double>(key, v);
    } else if (key == "optimizer.momentum") {
      o.momentum = parse_value<double>(key, v);
    } else if (key == "optimizer.batch_size") {
      o.batch_size = parse_value<std::size_t>(key, v);
    } else if (key == "optimizer.epochs") {
      o.epochs = parse_value<std::size_t>(key, v);
    } else if (key == "sweep.patience") {
      const auto parts = detail::split(v, ':');
      if (parts.size() != 2) throw ValidationError(key, "expected lo:hi");
      cfg_.sweep.t_min = parse_value<std::size_t>(key, parts[0]);
      cfg_.sweep.t_max = parse_value<std::size_t>(key, parts[1]);
    } else if (key == "sweep.entropy_grid") {
      cfg_.sweep.entropy_grid = detail::parse_list<double>(key, v);
    } else if (key == "sweep.maxprob_grid") {
      cfg_.sweep.maxprob_grid = detail::parse_list<double>(key, v);
    } else if (key == "run.seeds") {
      cfg_.seeds = detail::parse_list<std::uint64_t>(key, v);
    } else if (key == "run.workers") {
      cfg_.workers = parse_value<std::size_t>(key, v);
    } else if (key == "output.dir") {
      cfg_.output_dir = v;
    } else {
      throw ValidationError(key, "unknown key");
    }
  }

  ExperimentConfig cfg_;
  std::vector<std::optional<PolicyConfig>> policies_;
};

/// Canonical key=value text for a config; parsing it back reproduces the
/// config.
inline std::string to_config_text(const ExperimentConfig& c) {
  auto join = [](const auto& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt::format("{}", v[i]);
    return out;
  };
  std::string out;
  auto kv = [&](std::string_view k, const std::string& v) { out += fmt::format("{}={}\n", k, v); };
  kv("dataset.kind", std::string(to_string(c.dataset.kind)));
  kv("dataset.num_classes", fmt::format("{}", c.dataset.num_classes));
  kv("dataset.separation", fmt::format("{}", c.dataset.separation));
  kv("dataset.noise", fmt::format("{}", c.dataset.noise));
  kv("dataset.turns", fmt::format("{}", c.dataset.turns));
  kv("dataset.num_train", fmt::format("{}", c.dataset.num_train));
  kv("dataset.num_eval", fmt::format("{}", c.dataset.num_eval));
  kv("dataset.input_dim", fmt::format("{}", c.dataset.input_dim));
  kv("dataset.seed", fmt::format("{}", c.dataset.seed));
  kv("model.hidden_dim", fmt::format("{}", c.model.hidden_dim));
  kv("model.num_layers", fmt::format("{}", c.model.num_layers));
  kv("model.nonlinearity", std::string(to_string(c.model.nonlinearity)));
  if (!c.checkpoint.empty()) kv("model.checkpoint", c.checkpoint);
  kv("optimizer.learning_rate", fmt::format("{}", c.optimizer.learning_rate));
  kv("optimizer.momentum", fmt::format("{}", c.optimizer.momentum));
  kv("optimizer.batch_size", fmt::format("{}", c.optimizer.batch_size));
  kv("optimizer.epochs", fmt::format("{}", c.optimizer.epochs));
  for (std::size_t i = 0; i < c.policies.size(); ++i) {
    const auto& p = c.policies[i];
    const auto prefix = fmt::format("policy[{}].", i);
    kv(prefix + "kind", std::string(to_string(p.kind)));
    kv(prefix + "t", fmt::format("{}", p.t));
    kv(prefix + "tau", fmt::format("{}", p.tau));
    kv(prefix + "threshold", fmt::format("{}", p.threshold));
    kv(prefix + "depth", fmt::format("{}", p.depth));
  }
  kv("sweep.patience", fmt::format("{}:{}", c.sweep.t_min, c.sweep.t_max));
  kv("sweep.entropy_grid", join(c.sweep.entropy_grid));
  kv("sweep.maxprob_grid", join(c.sweep.maxprob_grid));
  kv("run.seeds", join(c.seeds));
  return out;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  ConfigBuilder b;
  b.parse_file(path);
  return b.build();
}

}  // namespace pabee
