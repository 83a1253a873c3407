// pabee: command-line front end for training multi-exit models, evaluating
// early-exit policies and running the theory lab.
//
// Exit codes: 0 success, 1 validation, 2 computation failure, 3 I/O.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pabee/bench.hpp"
#include "pabee/config.hpp"
#include "pabee/theory.hpp"

namespace {

using namespace pabee;

enum ExitCode : int { kOk = 0, kValidation = 1, kComputation = 2, kIo = 3 };

struct ExperimentFlags {
  std::string config_path;
  std::map<std::string, std::string> key_values;  // from --<config key>
  std::vector<std::string> sets;                  // from --set key=value
};

// Adds --<key> for every config key plus the short aliases.
void add_experiment_flags(CLI::App& sub, ExperimentFlags& f) {
  sub.add_option("-c,--config", f.config_path, "Config file (key=value lines); flags override it");
  for (const auto& k : config_keys()) {
    const std::string key(k.key);
    sub.add_option_function<std::string>(
           "--" + key, [&f, key](const std::string& v) { f.key_values[key] = v; },
           fmt::format("{} (config: {})", k.help, key))
        ->type_name("VALUE");
  }
  sub.add_option_function<std::string>("--seeds", [&f](const std::string& v) { f.key_values["run.seeds"] = v; },
                                       "Alias of --run.seeds (config: run.seeds)");
  sub.add_option_function<std::string>("--workers", [&f](const std::string& v) { f.key_values["run.workers"] = v; },
                                       "Alias of --run.workers (config: run.workers)");
  sub.add_option_function<std::string>("-o,--out", [&f](const std::string& v) { f.key_values["output.dir"] = v; },
                                       "Alias of --output.dir (config: output.dir)");
  sub.add_option_function<std::string>("--checkpoint",
                                       [&f](const std::string& v) { f.key_values["model.checkpoint"] = v; },
                                       "Alias of --model.checkpoint (config: model.checkpoint)");
  sub.add_option("--set", f.sets,
                 "Any config key as KEY=VALUE, e.g. policy[1].kind=entropy (config: KEY)")
      ->type_name("KEY=VALUE");
}

ExperimentConfig build_config(const ExperimentFlags& f) {
  ConfigBuilder b;
  if (!f.config_path.empty()) b.parse_file(f.config_path);
  for (const auto& [k, v] : f.key_values) b.set(k, v);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set", "expected KEY=VALUE, got '" + s + "'");
    b.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return b.build();
}

int run_experiment_cmd(const ExperimentFlags& f, const ExperimentModes& modes) {
  const auto cfg = build_config(f);
  const auto result = run_experiment(cfg, modes);
  std::cout << "output: " << result.output_dir.string() << '\n';
  for (const auto& file : result.files) std::cout << "  " << file << '\n';
  if (modes.eval) {
    for (const auto& s : result.seeds) {
      for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
        std::cout << "seed " << s.seed << ": " << to_csv_row(cfg.policies[i], s.evals[i]) << '\n';
      }
    }
  }
  return kOk;
}

// "lo:hi" or a single value.
std::vector<std::size_t> parse_t_range(const std::string& s) {
  const auto colon = s.find(':');
  try {
    if (colon == std::string::npos) return {static_cast<std::size_t>(std::stoul(s))};
    const auto lo = std::stoul(s.substr(0, colon));
    const auto hi = std::stoul(s.substr(colon + 1));
    if (hi < lo) throw ArgumentError("--t: empty range " + s);
    std::vector<std::size_t> out;
    for (auto t = lo; t <= hi; ++t) out.push_back(t);
    return out;
  } catch (const std::logic_error&) {
    throw ArgumentError("--t: cannot parse '" + s + "'");
  }
}

// "first:last:step"
std::vector<double> parse_grid(const std::string& flag, const std::string& s) {
  const auto parts = detail::split(s, ':');
  if (parts.size() != 3) throw ArgumentError(flag + ": expected first:last:step");
  try {
    return accuracy_grid(std::stod(parts[0]), std::stod(parts[1]), std::stod(parts[2]));
  } catch (const std::logic_error&) {
    throw ArgumentError(flag + ": cannot parse '" + s + "'");
  }
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  const std::filesystem::path p(out_path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + out_path + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + out_path);
}

struct SimulateFlags {
  std::size_t n = 12;
  std::string t = "1:11";
  std::optional<double> q;
  std::optional<double> p;
  std::string acc_grid;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  std::string out;
};

void check_probability(const char* name, double v) {
  if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError(fmt::format("--{} must lie in [0, 1]", name));
}

int simulate_cmd(const SimulateFlags& f) {
  if (f.trials < 1) throw ArgumentError("--trials must be >= 1");
  const auto ts = parse_t_range(f.t);
  std::vector<std::pair<double, double>> qp;  // (q, p)
  if (!f.acc_grid.empty()) {
    if (f.q || f.p) throw ArgumentError("--acc-grid cannot be combined with --q/--p");
    for (double a : parse_grid("--acc-grid", f.acc_grid)) {
      check_probability("acc-grid", a);
      qp.emplace_back(1.0 - a, 1.0 - a);
    }
  } else {
    const double q = f.q.value_or(0.2);
    const double p = f.p.value_or(q);
    check_probability("q", q);
    check_probability("p", p);
    qp.emplace_back(q, p);
  }
  std::string csv = "n,t,q,p,trials,seed,acc_pabee,acc_conventional,stop_fraction\n";
  for (const auto& [q, p] : qp) {
    for (auto t : ts) {
      const auto o = simulate_pabee({f.n, q, p, t, f.trials, f.seed}, f.workers);
      csv += fmt::format("{},{},{:.6f},{:.6f},{},{},{:.6f},{:.6f},{:.6f}\n", f.n, t, q, p, f.trials, f.seed,
                         o.acc_pabee, o.acc_conventional, o.stop_fraction);
    }
  }
  emit(f.out, csv);
  return kOk;
}

struct BoundFlags {
  std::size_t n = 12;
  std::size_t t = 4;
  double p = 0.1;
  double q = 0.2;
};

int bound_cmd(const BoundFlags& f) {
  const BoundParams bp{f.n, f.t, f.p, f.q};
  bp.validate();
  std::cout << fmt::format("n={} t={} p={} q={}\n", bp.n, bp.t, bp.p, bp.q);
  for (const auto& c : bound_report(bp)) {
    std::cout << fmt::format("{:<13} {:<44} lhs={:.6g} rhs={:.6g} holds={}\n", c.form, c.expression, c.lhs,
                             c.rhs, c.holds ? "true" : "false");
  }
  const bool theorem = theorem1_holds(bp);
  const bool proof = proof_form_holds(bp);
  if (bp.p == bp.q) {
    std::cout << "note: p == q, the theorem and proof forms coincide\n";
  } else if (theorem != proof) {
    std::cout << "note: theorem and proof forms disagree at this point\n";
  }
  return kOk;
}

struct LowerBoundFlags {
  std::size_t n = 12;
  std::string t = "1:11";
  std::string targets = "0.50:1.00:0.01";
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  std::size_t workers = default_workers();
  std::string out;
};

int lowerbound_cmd(const LowerBoundFlags& f) {
  if (f.trials < 1) throw ArgumentError("--trials must be >= 1");
  const auto rows = lower_bound_grid(f.n, parse_t_range(f.t), parse_grid("--targets", f.targets), f.trials,
                                     f.seed, f.workers);
  std::string csv = "target_accuracy,t,lower_bound\n";
  for (const auto& r : rows) csv += fmt::format("{:.2f},{},{:.6f}\n", r.target_accuracy, r.t, r.lower_bound);
  emit(f.out, csv);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patience-based early exit: multi-exit training, exit policies and theory lab"};
  app.require_subcommand(1);

  ExperimentFlags train_f, eval_f, sweep_f, compare_f;
  auto* train = app.add_subcommand("train", "Train one model per seed; writes checkpoints and loss histories");
  add_experiment_flags(*train, train_f);
  auto* eval = app.add_subcommand("eval", "Evaluate the configured policies");
  add_experiment_flags(*eval, eval_f);
  auto* sweep = app.add_subcommand("sweep", "Patience sweep: accuracy and speed-up per t");
  add_experiment_flags(*sweep, sweep_f);
  auto* compare = app.add_subcommand("compare", "Speed-accuracy curves for patience, entropy and max-probability exits");
  add_experiment_flags(*compare, compare_f);

  SimulateFlags sim_f;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo simulation of the idealized classifier chain");
  simulate->add_option("--n", sim_f.n, "Number of classifiers")->capture_default_str();
  simulate->add_option("--t", sim_f.t, "Patience, single value or lo:hi")->capture_default_str();
  simulate->add_option("--q", sim_f.q, "Internal classifier error rate (default 0.2)");
  simulate->add_option("--p", sim_f.p, "Final classifier error rate (default: q)");
  simulate->add_option("--acc-grid", sim_f.acc_grid, "first:last:step grid of shared accuracy a; q = p = 1 - a");
  simulate->add_option("--trials", sim_f.trials, "Trials per configuration")->capture_default_str();
  simulate->add_option("--seed", sim_f.seed, "Master seed")->capture_default_str();
  simulate->add_option("--workers", sim_f.workers, "Worker threads");
  simulate->add_option("-o,--out", sim_f.out, "Output CSV (default: stdout)");

  BoundFlags bound_f;
  auto* bound = app.add_subcommand("bound", "Evaluate every form of the accuracy-improvement condition");
  bound->add_option("--n", bound_f.n, "Number of classifiers")->capture_default_str();
  bound->add_option("--t", bound_f.t, "Patience")->capture_default_str();
  bound->add_option("--p", bound_f.p, "Final classifier error rate")->capture_default_str();
  bound->add_option("--q", bound_f.q, "Internal classifier error rate")->capture_default_str();

  LowerBoundFlags lb_f;
  auto* lowerbound = app.add_subcommand("lowerbound", "Per-classifier accuracy needed to reach each target accuracy");
  lowerbound->add_option("--n", lb_f.n, "Number of classifiers")->capture_default_str();
  lowerbound->add_option("--t", lb_f.t, "Patience, single value or lo:hi")->capture_default_str();
  lowerbound->add_option("--targets", lb_f.targets, "first:last:step target accuracies")->capture_default_str();
  lowerbound->add_option("--trials", lb_f.trials, "Trials per simulation")->capture_default_str();
  lowerbound->add_option("--seed", lb_f.seed, "Master seed")->capture_default_str();
  lowerbound->add_option("--workers", lb_f.workers, "Worker threads");
  lowerbound->add_option("-o,--out", lb_f.out, "Output CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (train->parsed()) return run_experiment_cmd(train_f, {});
    if (eval->parsed()) return run_experiment_cmd(eval_f, {.eval = true});
    if (sweep->parsed()) return run_experiment_cmd(sweep_f, {.sweep = true});
    if (compare->parsed()) return run_experiment_cmd(compare_f, {.compare = true});
    if (simulate->parsed()) return simulate_cmd(sim_f);
    if (bound->parsed()) return bound_cmd(bound_f);
    if (lowerbound->parsed()) return lowerbound_cmd(lb_f);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const ArgumentError& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kValidation;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kComputation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kComputation;
  }
  return kValidation;
}
