#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "pabee/errors.hpp"
#include "pabee/model.hpp"
#include "pabee/parallel.hpp"
#include "pabee/policy.hpp"

namespace pabee {

/// Class index (classification) or value (regression).
using Prediction = std::variant<std::size_t, double>;

struct InferenceTrace {
  std::size_t exit_layer = 0;  // 1-based
  Prediction prediction;
  std::vector<PredictionOutput> per_layer_outputs;  // only layers actually computed
  bool exited_early = false;                        // the policy fired (possibly at layer n)
};

inline Prediction to_prediction(const PredictionOutput& out) {
  if (const auto* pv = std::get_if<ProbVector>(&out)) return argmax(*pv);
  return std::get<double>(out);
}

/// Batch-of-one adaptive inference: layers run in order, the policy sees
/// each head output, and the final head answers if no exit fires.
inline InferenceTrace run_instance(const ModelParams& params, const PolicyConfig& policy,
                                   std::span<const double> x) {
  LayerStepper stepper(params, x);
  ExitDecider decider(policy);
  InferenceTrace trace;
  trace.per_layer_outputs.reserve(params.num_layers());
  while (!stepper.finished()) {
    trace.per_layer_outputs.push_back(stepper.step());
    if (decider.observe(trace.per_layer_outputs.back())) {
      trace.exited_early = true;
      break;
    }
  }
  trace.exit_layer = stepper.layers_done();
  trace.prediction = to_prediction(trace.per_layer_outputs.back());
  return trace;
}

struct EvalReport {
  Task task = Task::classification;
  double accuracy_or_mse = 0.0;  // accuracy for classification, MSE for regression
  double speedup = 1.0;          // n * instances / total layers executed
  std::vector<std::size_t> exit_histogram;  // index l-1 counts exits at layer l
  std::size_t num_instances = 0;

  std::size_t layers_executed() const {
    std::size_t total = 0;
    for (std::size_t l = 0; l < exit_histogram.size(); ++l) total += (l + 1) * exit_histogram[l];
    return total;
  }

  double mean_exit_layer() const {
    return static_cast<double>(layers_executed()) / static_cast<double>(num_instances);
  }
};

inline double speedup_from_histogram(std::span<const std::size_t> hist) {
  std::size_t instances = 0;
  std::size_t layers = 0;
  for (std::size_t l = 0; l < hist.size(); ++l) {
    instances += hist[l];
    layers += (l + 1) * hist[l];
  }
  return static_cast<double>(hist.size() * instances) / static_cast<double>(layers);
}

/// Runs every instance through run_instance. Instances are independent, so
/// they are split across workers; per-instance results are reduced in index
/// order, making the report independent of the schedule.
inline EvalReport evaluate(const ModelParams& params, const PolicyConfig& policy,
                           const LabeledDataset& data, std::size_t workers = 1) {
  const auto& cfg = params.config;
  if (data.size() == 0) throw ArgumentError("evaluate: empty dataset");
  if (data.task != cfg.task) throw ArgumentError("evaluate: dataset task does not match model task");
  data.validate(cfg.num_classes);
  policy.validate(cfg.task, cfg.num_layers);

  std::vector<std::size_t> exits(data.size());
  std::vector<double> scores(data.size());
  parallel_for(data.size(), workers, [&](std::size_t i) {
    const auto trace = run_instance(params, policy, data.inputs.row(i));
    exits[i] = trace.exit_layer;
    if (cfg.task == Task::classification) {
      scores[i] = std::get<std::size_t>(trace.prediction) == data.labels[i] ? 1.0 : 0.0;
    } else {
      scores[i] = loss_regression(std::get<double>(trace.prediction), data.values[i]);
    }
  });

  EvalReport r;
  r.task = cfg.task;
  r.num_instances = data.size();
  r.exit_histogram.assign(cfg.num_layers, 0);
  for (auto e : exits) ++r.exit_histogram[e - 1];
  r.accuracy_or_mse = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(data.size());
  r.speedup = speedup_from_histogram(r.exit_histogram);
  return r;
}

/// "1:0:3:..." exit counts per layer.
inline std::string format_histogram(std::span<const std::size_t> hist) {
  return fmt::format("{}", fmt::join(hist, ":"));
}

/// Row: policy descriptor, accuracy-or-mse, speedup, histogram.
inline std::string to_csv_row(const PolicyConfig& policy, const EvalReport& r) {
  return fmt::format("{},{:.6f},{:.6f},{}", policy.describe(), r.accuracy_or_mse, r.speedup,
                     format_histogram(r.exit_histogram));
}

inline constexpr const char* kEvalCsvHeader = "policy,accuracy_or_mse,speedup,exit_histogram";

/// Median wall-clock seconds per instance over `repeats` full passes.
inline double wallclock_probe(const ModelParams& params, const PolicyConfig& policy,
                              const LabeledDataset& data, std::size_t repeats) {
  if (repeats < 3) throw ArgumentError("wallclock_probe: repeats must be >= 3");
  if (data.size() == 0) throw ArgumentError("wallclock_probe: empty dataset");
  policy.validate(params.config.task, params.config.num_layers);
  std::vector<double> per_instance;
  std::size_t sink = 0;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < data.size(); ++i) {
      sink += run_instance(params, policy, data.inputs.row(i)).exit_layer;
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    per_instance.push_back(elapsed.count() / static_cast<double>(data.size()));
  }
  if (sink == 0) throw NumericError("wallclock_probe: no layers executed");
  std::nth_element(per_instance.begin(), per_instance.begin() + per_instance.size() / 2, per_instance.end());
  return per_instance[per_instance.size() / 2];
}

}  // namespace pabee
