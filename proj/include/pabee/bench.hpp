#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "pabee/checkpoint.hpp"
#include "pabee/config.hpp"
#include "pabee/dataset.hpp"
#include "pabee/inference.hpp"
#include "pabee/model.hpp"
#include "pabee/parallel.hpp"
#include "pabee/policy.hpp"

namespace pabee {

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  std::size_t t = 0;
  EvalReport report;
};

/// One report per patience value, ascending t.
inline std::vector<SweepRow> sweep_patience(const ModelParams& params, const LabeledDataset& data,
                                            std::vector<std::size_t> ts, double tau = 0.1,
                                            std::size_t workers = 1) {
  const std::size_t n = params.num_layers();
  std::sort(ts.begin(), ts.end());
  for (auto t : ts) {
    if (t < 1 || t > n - 1) throw ArgumentError("sweep: patience " + std::to_string(t) + " outside [1, n-1]");
  }
  std::vector<SweepRow> rows(ts.size());
  parallel_for(ts.size(), workers, [&](std::size_t i) {
    rows[i] = {ts[i], evaluate(params, PolicyConfig::patience(ts[i], tau), data)};
  });
  return rows;
}

struct CurveRow {
  std::string policy;          // patience | entropy | maxprob | never
  std::string hyperparameter;  // t or threshold; empty for never
  double accuracy_or_mse = 0.0;
  double speedup = 1.0;
};

/// Speed-accuracy table over all three criteria plus the full-depth
/// reference row. Regression models only get patience rows: the
/// probability-based criteria need class distributions.
inline std::vector<CurveRow> compare_criteria(const ModelParams& params, const LabeledDataset& data,
                                              const std::vector<std::size_t>& patience,
                                              const std::vector<double>& entropy_grid,
                                              const std::vector<double>& maxprob_grid,
                                              std::size_t workers = 1) {
  if (patience.empty() || entropy_grid.empty() || maxprob_grid.empty()) {
    throw ArgumentError("compare: grids must not be empty");
  }
  std::vector<std::pair<PolicyConfig, std::string>> jobs;
  jobs.emplace_back(PolicyConfig::never(), "");
  for (auto t : patience) jobs.emplace_back(PolicyConfig::patience(t), fmt::format("{}", t));
  if (params.config.task == Task::classification) {
    for (double th : entropy_grid) jobs.emplace_back(PolicyConfig::entropy(th), fmt::format("{}", th));
    for (double th : maxprob_grid) jobs.emplace_back(PolicyConfig::maxprob(th), fmt::format("{}", th));
  }
  std::vector<CurveRow> rows(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const auto& [policy, hp] = jobs[i];
    const auto r = evaluate(params, policy, data);
    rows[i] = {std::string(to_string(policy.kind)), hp, r.accuracy_or_mse, r.speedup};
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Table formatting. Numbers go through fmt, which ignores the C++ locale.

inline constexpr const char* kSweepCsvHeader = "t,accuracy_or_mse,speedup,exit_histogram";
inline constexpr const char* kSweepMedianCsvHeader = "t,accuracy_or_mse,speedup";
inline constexpr const char* kCriteriaCsvHeader = "policy,hyperparameter,accuracy_or_mse,speedup";
inline constexpr const char* kHistoryCsvHeader = "epoch,loss";
inline constexpr const char* kManifestCsvHeader = "file,bytes,sha256";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{}\n", r.t, r.report.accuracy_or_mse, r.report.speedup,
                       format_histogram(r.report.exit_histogram));
  }
  return out;
}

inline std::string criteria_csv(const std::vector<CurveRow>& rows) {
  std::string out = std::string(kCriteriaCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6f},{:.6f}\n", r.policy, r.hyperparameter, r.accuracy_or_mse, r.speedup);
  }
  return out;
}

inline std::string history_csv(const std::vector<double>& losses) {
  std::string out = std::string(kHistoryCsvHeader) + "\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out += fmt::format("{},{:.9f}\n", e + 1, losses[e]);
  return out;
}

inline std::string eval_csv(const std::vector<PolicyConfig>& policies, const std::vector<EvalReport>& reports) {
  std::string out = std::string(kEvalCsvHeader) + "\n";
  for (std::size_t i = 0; i < policies.size(); ++i) out += to_csv_row(policies[i], reports[i]) + "\n";
  return out;
}

/// Median; the mean of the two middle values for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw ArgumentError("median of empty list");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Per-t medians over seeds. All inputs must share the same t values.
inline std::vector<CurveRow> median_sweep(const std::vector<std::vector<SweepRow>>& per_seed) {
  std::vector<CurveRow> out;
  for (std::size_t i = 0; i < per_seed.front().size(); ++i) {
    std::vector<double> acc, sp;
    for (const auto& s : per_seed) {
      acc.push_back(s[i].report.accuracy_or_mse);
      sp.push_back(s[i].report.speedup);
    }
    out.push_back({"patience", std::to_string(per_seed.front()[i].t), median(acc), median(sp)});
  }
  return out;
}

/// Row-wise medians of criteria tables produced with identical grids.
inline std::vector<CurveRow> median_curves(const std::vector<std::vector<CurveRow>>& per_seed) {
  std::vector<CurveRow> out = per_seed.front();
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> acc, sp;
    for (const auto& s : per_seed) {
      acc.push_back(s[i].accuracy_or_mse);
      sp.push_back(s[i].speedup);
    }
    out[i].accuracy_or_mse = median(acc);
    out[i].speedup = median(sp);
  }
  return out;
}

inline std::string median_sweep_csv(const std::vector<CurveRow>& rows) {
  std::string out = std::string(kSweepMedianCsvHeader) + "\n";
  for (const auto& r : rows) out += fmt::format("{},{:.6f},{:.6f}\n", r.hyperparameter, r.accuracy_or_mse, r.speedup);
  return out;
}

// ---------------------------------------------------------------------------
// Files

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Writes files under one directory and remembers them for the manifest.
class OutputWriter {
 public:
  explicit OutputWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
      throw IoError("cannot create output directory " + dir_.string());
    }
  }

  const std::filesystem::path& dir() const noexcept { return dir_; }

  std::filesystem::path write(const std::string& name, std::string_view content) {
    const auto path = dir_ / name;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.close();
    if (!os) throw IoError("failed writing " + path.string());
    files_.push_back(name);
    return path;
  }

  const std::vector<std::string>& files() const noexcept { return files_; }

  /// manifest.csv listing every file written so far with its SHA-256.
  std::filesystem::path write_manifest() {
    std::string out = std::string(kManifestCsvHeader) + "\n";
    for (const auto& name : files_) {
      const auto bytes = read_file(dir_ / name);
      out += fmt::format("{},{},{}\n", name, bytes.size(), sha256_hex(bytes));
    }
    return write("manifest.csv", out);
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

inline std::filesystem::path default_run_dir(std::uint64_t seed) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  return std::filesystem::path("runs") / fmt::format("{}-seed{}", stamp, seed);
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentModes {
  bool eval = false;
  bool sweep = false;
  bool compare = false;
};

struct SeedResult {
  std::uint64_t seed = 0;
  ModelParams params;
  std::vector<double> loss_history;  // empty when loaded from a checkpoint
  std::vector<EvalReport> evals;
  std::vector<SweepRow> sweep;
  std::vector<CurveRow> curves;
};

struct ExperimentResult {
  std::filesystem::path output_dir;
  std::vector<SeedResult> seeds;
  std::vector<CurveRow> median_sweep;
  std::vector<CurveRow> median_curves;
  std::vector<std::string> files;  // manifest order, manifest.csv last
};

inline std::string checkpoint_path_for(const std::string& pattern, std::uint64_t seed) {
  std::string p = pattern;
  const auto pos = p.find("{seed}");
  if (pos != std::string::npos) p.replace(pos, 6, std::to_string(seed));
  return p;
}

/// Trains (or loads) one model per seed, runs the requested evaluations and
/// writes every table. Seeds run in parallel; files are written afterwards in
/// seed order by this thread only.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentModes& modes) {
  cfg.validate();
  const auto split = gen_synthetic(cfg.dataset);

  std::vector<SeedResult> results(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    auto& r = results[i];
    r.seed = cfg.seeds[i];
    const auto mc = cfg.model_for(r.seed);
    if (!cfg.checkpoint.empty()) {
      r.params = load_checkpoint(checkpoint_path_for(cfg.checkpoint, r.seed));
      if (r.params.config.input_dim != mc.input_dim || r.params.config.task != mc.task ||
          r.params.config.output_dim() != mc.output_dim()) {
        throw ValidationError("model.checkpoint", "checkpoint does not match the dataset");
      }
    } else {
      TrainResult trained;
      try {
        trained = train(init_params(mc), split.train, cfg.optimizer);
      } catch (const TrainingError& e) {
        std::string echo = to_config_text(cfg);
        std::replace(echo.begin(), echo.end(), '\n', ' ');
        throw TrainingError(e.epoch(), fmt::format("{} (seed {}; config: {})", e.detail(), r.seed, echo));
      }
      r.params = std::move(trained.params);
      r.loss_history = std::move(trained.loss_history);
    }
    const auto& p = r.params;
    if (modes.eval) {
      for (const auto& pol : cfg.policies) r.evals.push_back(evaluate(p, pol, split.eval));
    }
    if (modes.sweep) {
      const double tau = cfg.policies.front().kind == PolicyKind::patience ? cfg.policies.front().tau : 0.1;
      r.sweep = sweep_patience(p, split.eval, cfg.sweep.patience_values(p.num_layers()), tau);
    }
    if (modes.compare) {
      r.curves = compare_criteria(p, split.eval, cfg.sweep.patience_values(p.num_layers()), cfg.sweep.entropy_grid,
                                  cfg.sweep.maxprob_grid);
    }
  });

  ExperimentResult out;
  out.output_dir = cfg.output_dir.empty() ? default_run_dir(cfg.seeds.front()) : std::filesystem::path(cfg.output_dir);
  OutputWriter writer(out.output_dir);
  for (const auto& r : results) {
    if (cfg.checkpoint.empty()) {
      std::ostringstream ck;
      write_checkpoint(ck, r.params);
      writer.write(fmt::format("model_seed{}.ckpt", r.seed), ck.str());
      writer.write(fmt::format("history_seed{}.csv", r.seed), history_csv(r.loss_history));
    }
    if (modes.eval) writer.write(fmt::format("eval_seed{}.csv", r.seed), eval_csv(cfg.policies, r.evals));
    if (modes.sweep) writer.write(fmt::format("sweep_seed{}.csv", r.seed), sweep_csv(r.sweep));
    if (modes.compare) writer.write(fmt::format("criteria_seed{}.csv", r.seed), criteria_csv(r.curves));
  }
  if (modes.sweep) {
    std::vector<std::vector<SweepRow>> all;
    for (const auto& r : results) all.push_back(r.sweep);
    out.median_sweep = median_sweep(all);
    writer.write("sweep_median.csv", median_sweep_csv(out.median_sweep));
  }
  if (modes.compare) {
    std::vector<std::vector<CurveRow>> all;
    for (const auto& r : results) all.push_back(r.curves);
    out.median_curves = median_curves(all);
    writer.write("criteria_median.csv", criteria_csv(out.median_curves));
  }
  writer.write_manifest();
  out.files = writer.files();
  out.seeds = std::move(results);
  return out;
}

}  // namespace pabee
