#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>

#include "pabee/errors.hpp"
#include "pabee/model.hpp"
#include "pabee/rng.hpp"

namespace pabee {

enum class DatasetKind { gaussian_blobs, two_spirals, regression_wave };

inline std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gaussian_blobs: return "gaussian_blobs";
    case DatasetKind::two_spirals: return "two_spirals";
    case DatasetKind::regression_wave: return "regression_wave";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(std::string_view s) {
  for (auto k : {DatasetKind::gaussian_blobs, DatasetKind::two_spirals, DatasetKind::regression_wave}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("dataset.kind", "unknown dataset '" + std::string(s) + "'");
}

/// Synthetic task description.
///
/// gaussian_blobs: class centers on a regular polygon of diameter
///   `separation` in the first two input dimensions, isotropic noise of
///   standard deviation `noise` in every dimension.
/// two_spirals: two interleaved arms of `turns` revolutions with radius
///   growing to 1, coordinates in dimensions 0 and 1 plus Gaussian noise;
///   any further dimensions are pure noise.
/// regression_wave: inputs uniform in [-1, 1]^d, target
///   sin(3 x0) + 0.5 cos(2 x1) + noise, standardized with train statistics.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  std::size_t num_classes = 2;
  double separation = 4.0;
  double noise = 0.5;
  double turns = 1.5;
  std::size_t num_train = 1000;
  std::size_t num_eval = 1000;
  std::size_t input_dim = 2;
  std::uint64_t seed = 0;

  Task task() const noexcept {
    return kind == DatasetKind::regression_wave ? Task::regression : Task::classification;
  }
  std::size_t classes() const noexcept { return kind == DatasetKind::gaussian_blobs ? num_classes : 2; }

  void validate() const {
    if (num_train < 1) throw ArgumentError("dataset.num_train must be >= 1");
    if (num_eval < 1) throw ArgumentError("dataset.num_eval must be >= 1");
    if (input_dim < 1) throw ArgumentError("dataset.input_dim must be >= 1");
    if (!(noise >= 0.0)) throw ArgumentError("dataset.noise must be >= 0");
    if (!(separation > 0.0)) throw ArgumentError("dataset.separation must be > 0");
    if (!(turns > 0.0)) throw ArgumentError("dataset.turns must be > 0");
    if (kind == DatasetKind::gaussian_blobs && num_classes < 2) {
      throw ArgumentError("dataset.num_classes must be >= 2");
    }
    if ((kind == DatasetKind::gaussian_blobs || kind == DatasetKind::two_spirals) && input_dim < 2) {
      throw ArgumentError("dataset.input_dim must be >= 2 for " + std::string(to_string(kind)));
    }
  }
};

struct DatasetSplit {
  LabeledDataset train;
  LabeledDataset eval;
};

namespace detail {

inline void fill_example(const DatasetSpec& s, std::size_t label, std::span<double> x, double& y,
                         Rng& rng) {
  switch (s.kind) {
    case DatasetKind::gaussian_blobs: {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(label) /
                           static_cast<double>(s.num_classes);
      for (auto& v : x) v = s.noise * standard_normal(rng);
      x[0] += 0.5 * s.separation * std::cos(angle);
      x[1] += 0.5 * s.separation * std::sin(angle);
      break;
    }
    case DatasetKind::two_spirals: {
      const double u = uniform01(rng);
      const double angle = u * s.turns * 2.0 * std::numbers::pi + std::numbers::pi * static_cast<double>(label);
      for (auto& v : x) v = s.noise * standard_normal(rng);
      x[0] += u * std::cos(angle);
      x[1] += u * std::sin(angle);
      break;
    }
    case DatasetKind::regression_wave: {
      for (auto& v : x) v = uniform(rng, -1.0, 1.0);
      y = std::sin(3.0 * x[0]) + (x.size() > 1 ? 0.5 * std::cos(2.0 * x[1]) : 0.0) +
          s.noise * standard_normal(rng);
      break;
    }
  }
}

inline LabeledDataset make_split(const DatasetSpec& s, std::size_t count, Rng& rng) {
  LabeledDataset d;
  d.task = s.task();
  d.inputs = Matrix(count, s.input_dim);
  const std::size_t k = s.classes();
  for (std::size_t i = 0; i < count; ++i) {
    double y = 0.0;
    const std::size_t label = i % k;
    fill_example(s, label, d.inputs.row(i), y, rng);
    if (d.task == Task::classification) {
      d.labels.push_back(label);
    } else {
      d.values.push_back(y);
    }
  }
  return d;
}

}  // namespace detail

/// Train and eval splits drawn from disjoint segments of one seeded stream.
/// Class labels cycle 0..K-1, so each split is balanced within one example.
inline DatasetSplit gen_synthetic(const DatasetSpec& spec) {
  spec.validate();
  Rng train_rng(derive_seed(spec.seed, 100));
  Rng eval_rng(derive_seed(spec.seed, 200));
  DatasetSplit out{detail::make_split(spec, spec.num_train, train_rng),
                   detail::make_split(spec, spec.num_eval, eval_rng)};
  if (spec.task() == Task::regression) {
    auto& tr = out.train.values;
    double mean = 0.0;
    for (double v : tr) mean += v;
    mean /= static_cast<double>(tr.size());
    double var = 0.0;
    for (double v : tr) var += (v - mean) * (v - mean);
    var /= static_cast<double>(tr.size());
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : out.train.values) v = (v - mean) / sd;
    for (double& v : out.eval.values) v = (v - mean) / sd;
  }
  return out;
}

}  // namespace pabee
