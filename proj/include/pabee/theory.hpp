#pragma once

// Idealized binary-classification model of patience-based exiting: every
// internal classifier is independently wrong with probability q, the final
// classifier with probability p. Provides the closed-form accuracy
// conditions and a Monte Carlo simulator for the same model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pabee/errors.hpp"
#include "pabee/parallel.hpp"
#include "pabee/rng.hpp"

namespace pabee {

struct BoundParams {
  std::size_t n = 12;  // number of classifiers, final one included
  std::size_t t = 6;   // patience
  double p = 0.1;      // final classifier error rate
  double q = 0.2;      // internal classifier error rate

  void validate() const {
    if (q == 0.0) throw ArgumentError("q must be non-zero (the conditions divide by q)");
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("p must lie in (0, 1)");
    if (!(q > 0.0 && q < 1.0)) throw ArgumentError("q must lie in (0, 1)");
    if (t < 1) throw ArgumentError("patience t must be >= 1");
    if (t >= n) throw ArgumentError("patience t must be < n");
  }
};

/// One inequality "lhs < rhs" evaluated at a parameter point.
struct BoundCheck {
  std::string form;
  std::string expression;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

namespace detail {

inline BoundCheck make_check(std::string form, std::string expr, double lhs, double rhs) {
  return {std::move(form), std::move(expr), lhs, rhs, lhs < rhs};
}

}  // namespace detail

/// n - t < (1/(2q))^t (p/q) - p, the condition as stated in the theorem.
inline BoundCheck theorem_form(const BoundParams& bp) {
  bp.validate();
  const double rhs = std::pow(1.0 / (2.0 * bp.q), static_cast<double>(bp.t)) * (bp.p / bp.q) - bp.p;
  return detail::make_check("theorem", "n-t < (1/(2q))^t*(p/q) - p",
                            static_cast<double>(bp.n - bp.t), rhs);
}

/// n - t < (1/(2q))^t (p/q) - q, the condition the proof actually derives.
inline BoundCheck proof_form(const BoundParams& bp) {
  bp.validate();
  const double rhs = std::pow(1.0 / (2.0 * bp.q), static_cast<double>(bp.t)) * (bp.p / bp.q) - bp.q;
  return detail::make_check("proof", "n-t < (1/(2q))^t*(p/q) - q",
                            static_cast<double>(bp.n - bp.t), rhs);
}

/// n - t < (1/(2q))^(t+1) p - q, the goal announced at the start of the proof.
inline BoundCheck proof_goal_form(const BoundParams& bp) {
  bp.validate();
  const double rhs = std::pow(1.0 / (2.0 * bp.q), static_cast<double>(bp.t + 1)) * bp.p - bp.q;
  return detail::make_check("proof_goal", "n-t < (1/(2q))^(t+1)*p - q",
                            static_cast<double>(bp.n - bp.t), rhs);
}

/// (n-t) q^(t+1) - (n-t-1) q^(t+2) < (1/2)^t p: the misclassified-on-stop
/// upper bound against the stop-probability lower bound times p.
inline BoundCheck intermediate_form(const BoundParams& bp) {
  bp.validate();
  const double t = static_cast<double>(bp.t);
  const double lhs = static_cast<double>(bp.n - bp.t) * std::pow(bp.q, t + 1.0) -
                     static_cast<double>(bp.n - bp.t - 1) * std::pow(bp.q, t + 2.0);
  const double rhs = std::pow(0.5, t) * bp.p;
  return detail::make_check("intermediate", "(n-t)q^(t+1) - (n-t-1)q^(t+2) < (1/2)^t*p", lhs, rhs);
}

inline bool theorem1_holds(const BoundParams& bp) { return theorem_form(bp).holds; }
inline bool proof_form_holds(const BoundParams& bp) { return proof_form(bp).holds; }
inline bool intermediate_bound_holds(const BoundParams& bp) { return intermediate_form(bp).holds; }

/// All forms side by side, theorem statement first.
inline std::vector<BoundCheck> bound_report(const BoundParams& bp) {
  return {theorem_form(bp), proof_form(bp), proof_goal_form(bp), intermediate_form(bp)};
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct SimConfig {
  std::size_t n = 12;
  double q = 0.2;  // internal classifier error rate
  double p = 0.2;  // final classifier error rate
  std::size_t t = 3;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 2) throw ArgumentError("simulate: n must be >= 2");
    if (t < 1) throw ArgumentError("simulate: t must be >= 1");
    if (trials < 1) throw ArgumentError("simulate: trials must be >= 1");
    if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("simulate: q must lie in [0, 1]");
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("simulate: p must lie in [0, 1]");
  }
};

struct SimOutcome {
  double acc_pabee = 0.0;
  double acc_conventional = 0.0;
  double stop_fraction = 0.0;  // fraction exiting before layer n
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  std::size_t correct_pabee = 0;
  std::size_t correct_conventional = 0;
  std::size_t stopped = 0;
};

namespace detail {

struct SimCounts {
  std::size_t correct_pabee = 0;
  std::size_t correct_conventional = 0;
  std::size_t stopped = 0;
};

// One trial. Label 1 is the ground truth; a wrong binary prediction is the
// other label, so agreement between heads is agreement of correctness.
inline void simulate_trial(const SimConfig& c, std::uint64_t trial, SimCounts& counts) {
  SplitMix64 rng(derive_seed(c.seed, trial));
  std::size_t cnt = 0;
  int prev = -1;
  int answer = -1;
  bool stopped_early = false;
  int final_label = 0;
  for (std::size_t i = 0; i < c.n; ++i) {
    const bool last = i + 1 == c.n;
    const double err = last ? c.p : c.q;
    const int label = uniform01(rng) < 1.0 - err ? 1 : 0;
    if (last) final_label = label;
    if (answer >= 0) continue;  // keep drawing so the stream layout is t-independent
    cnt = (prev == label) ? cnt + 1 : 0;
    prev = label;
    if (cnt == c.t) {
      answer = label;
      stopped_early = !last;
    }
  }
  if (answer < 0) answer = final_label;
  counts.correct_pabee += static_cast<std::size_t>(answer);
  counts.correct_conventional += static_cast<std::size_t>(final_label);
  counts.stopped += stopped_early ? 1 : 0;
}

}  // namespace detail

/// Each trial draws from its own stream derived from (seed, trial index), and
/// aggregation uses integer counts, so results are identical for any worker
/// count. Different (q, p, t) settings with the same seed share the uniforms.
inline SimOutcome simulate_pabee(const SimConfig& c, std::size_t workers = 1) {
  c.validate();
  constexpr std::size_t kBlocks = 64;
  const std::size_t blocks = std::min(kBlocks, c.trials);
  std::vector<detail::SimCounts> partial(blocks);
  parallel_for(blocks, workers, [&](std::size_t b) {
    const std::size_t begin = c.trials * b / blocks;
    const std::size_t end = c.trials * (b + 1) / blocks;
    for (std::size_t i = begin; i < end; ++i) detail::simulate_trial(c, i, partial[b]);
  });
  SimOutcome out;
  out.trials = c.trials;
  out.seed = c.seed;
  for (const auto& pc : partial) {
    out.correct_pabee += pc.correct_pabee;
    out.correct_conventional += pc.correct_conventional;
    out.stopped += pc.stopped;
  }
  const double trials = static_cast<double>(c.trials);
  out.acc_pabee = static_cast<double>(out.correct_pabee) / trials;
  out.acc_conventional = static_cast<double>(out.correct_conventional) / trials;
  out.stop_fraction = static_cast<double>(out.stopped) / trials;
  return out;
}

/// Binomial standard error sqrt(pr (1 - pr) / trials).
inline double binomial_sigma(double pr, std::size_t trials) {
  return std::sqrt(pr * (1.0 - pr) / static_cast<double>(trials));
}

struct LowerBoundConfig {
  std::size_t n = 12;
  std::size_t t = 3;
  double target_accuracy = 0.8;
  std::size_t trials = 10000;
  std::uint64_t seed = 0;
  double tolerance = 0.005;
};

/// Smallest per-classifier accuracy a in [0.5, 1] (every classifier, final
/// included, wrong with probability 1 - a) whose patience-exit accuracy
/// reaches the target.
///
/// Accuracy at a is estimated as a + (PABEE correct - conventional correct) /
/// trials: the conventional accuracy is exactly a, and the two predictions
/// differ only on early exits, so the difference has far lower variance than
/// either count. Bisection narrows the bracket to `tolerance` in a, then the
/// crossing is placed by linear interpolation inside the final bracket.
///
/// Targets of exactly 0.5 return 0.5: at a = 0.5 every label sequence is
/// equally likely, so the exact accuracy is 0.5.
inline double accuracy_lower_bound(const LowerBoundConfig& c, std::size_t workers = 1) {
  if (c.t < 1 || c.t >= c.n) throw ArgumentError("lower bound: t must lie in [1, n-1]");
  if (!(c.target_accuracy >= 0.5 && c.target_accuracy <= 1.0)) {
    throw ArgumentError("lower bound: target accuracy must lie in [0.5, 1]");
  }
  if (c.trials < 1) throw ArgumentError("lower bound: trials must be >= 1");
  if (!(c.tolerance > 0.0)) throw ArgumentError("lower bound: tolerance must be positive");
  if (c.target_accuracy <= 0.5) return 0.5;

  auto acc = [&](double a) {
    const auto r = simulate_pabee({c.n, 1.0 - a, 1.0 - a, c.t, c.trials, c.seed}, workers);
    const double diff = static_cast<double>(r.correct_pabee) - static_cast<double>(r.correct_conventional);
    return a + diff / static_cast<double>(c.trials);
  };

  double lo = 0.5;
  double hi = 1.0;
  double acc_lo = acc(lo);
  double acc_hi = acc(hi);
  const double acc_mid = acc(0.75);
  if (acc_hi < c.target_accuracy) throw SearchError("lower bound: target unreachable at accuracy 1.0");
  // Spot check of the monotonicity the bisection relies on.
  const double slack = 4.0 * binomial_sigma(0.5, c.trials);
  if (acc_mid + slack < acc_lo || acc_hi + slack < acc_mid) {
    throw SearchError("lower bound: simulated accuracy is not monotone in classifier accuracy");
  }
  if (acc_lo >= c.target_accuracy) return 0.5;

  while (hi - lo > c.tolerance) {
    const double mid = 0.5 * (lo + hi);
    const double v = acc(mid);
    if (v >= c.target_accuracy) {
      hi = mid;
      acc_hi = v;
    } else {
      lo = mid;
      acc_lo = v;
    }
  }
  if (!(acc_hi > acc_lo)) return hi;
  const double frac = (c.target_accuracy - acc_lo) / (acc_hi - acc_lo);
  return lo + std::clamp(frac, 0.0, 1.0) * (hi - lo);
}

struct LowerBoundRow {
  double target_accuracy = 0.0;
  std::size_t t = 0;
  double lower_bound = 0.0;
};

/// Targets from `first` to `last` inclusive in steps of `step`, built from
/// integer indices so that grid points do not drift.
inline std::vector<double> accuracy_grid(double first, double last, double step) {
  if (!(step > 0.0) || last < first) throw ArgumentError("grid: need step > 0 and last >= first");
  const auto count = static_cast<std::size_t>(std::floor((last - first) / step + 1e-9)) + 1;
  std::vector<double> g(count);
  for (std::size_t i = 0; i < count; ++i) {
    g[i] = std::round((first + step * static_cast<double>(i)) * 1e9) / 1e9;
  }
  return g;
}

/// Lower bound for every (target, t) pair; rows ordered by target, then t.
inline std::vector<LowerBoundRow> lower_bound_grid(std::size_t n, const std::vector<std::size_t>& ts,
                                                   const std::vector<double>& targets,
                                                   std::size_t trials, std::uint64_t seed,
                                                   std::size_t workers = 1) {
  std::vector<LowerBoundRow> rows(targets.size() * ts.size());
  parallel_for(rows.size(), workers, [&](std::size_t k) {
    const double target = targets[k / ts.size()];
    const std::size_t t = ts[k % ts.size()];
    rows[k] = {target, t, accuracy_lower_bound({n, t, target, trials, seed, 0.005})};
  });
  return rows;
}

}  // namespace pabee
