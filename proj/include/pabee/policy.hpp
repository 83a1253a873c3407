#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include <fmt/format.h>

#include "pabee/errors.hpp"
#include "pabee/model.hpp"
#include "pabee/numerics.hpp"

namespace pabee {

/// Patience counter plus the previous head prediction. Pred is a class
/// index for classification and a real value for regression.
template <class Pred>
struct PatienceState {
  std::size_t cnt = 0;
  bool has_prev = false;
  Pred prev{};

  friend bool operator==(const PatienceState&, const PatienceState&) = default;
};

using ClassPatience = PatienceState<std::size_t>;
using RegressionPatience = PatienceState<double>;

/// Counter grows while consecutive argmax predictions agree, resets to 0 on
/// disagreement. prev always tracks the latest prediction.
inline ClassPatience patience_update_classification(const ClassPatience& s, const ProbVector& y) {
  const std::size_t a = argmax(y);
  return {s.has_prev && s.prev == a ? s.cnt + 1 : 0, true, a};
}

/// Agreement means |y - prev| < tau; |y - prev| == tau resets.
inline RegressionPatience patience_update_regression(const RegressionPatience& s, double y, double tau) {
  const bool agree = s.has_prev && std::abs(y - s.prev) < tau;
  return {agree ? s.cnt + 1 : 0, true, y};
}

template <class Pred>
bool should_exit_patience(const PatienceState<Pred>& s, std::size_t t) {
  return s.cnt == t;
}

inline bool should_exit_entropy(const ProbVector& y, double threshold) {
  return entropy(y) < threshold;
}

inline bool should_exit_maxprob(const ProbVector& y, double threshold) {
  const auto v = y.values();
  return *std::max_element(v.begin(), v.end()) > threshold;
}

enum class PolicyKind { patience, entropy, maxprob, fixed_depth, never };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::patience: return "patience";
    case PolicyKind::entropy: return "entropy";
    case PolicyKind::maxprob: return "maxprob";
    case PolicyKind::fixed_depth: return "fixed_depth";
    case PolicyKind::never: return "never";
  }
  return "?";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::patience, PolicyKind::entropy, PolicyKind::maxprob,
                 PolicyKind::fixed_depth, PolicyKind::never}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("policy.kind", "unknown policy '" + std::string(s) + "'");
}

struct PolicyConfig {
  PolicyKind kind = PolicyKind::never;
  std::size_t t = 6;
  double tau = 0.1;
  double threshold = 0.0;
  std::size_t depth = 0;

  static PolicyConfig never() { return {}; }
  static PolicyConfig patience(std::size_t t, double tau = 0.1) {
    return {PolicyKind::patience, t, tau, 0.0, 0};
  }
  static PolicyConfig entropy(double threshold) { return {PolicyKind::entropy, 6, 0.1, threshold, 0}; }
  static PolicyConfig maxprob(double threshold) { return {PolicyKind::maxprob, 6, 0.1, threshold, 0}; }
  static PolicyConfig fixed_depth(std::size_t depth) { return {PolicyKind::fixed_depth, 6, 0.1, 0.0, depth}; }

  /// Checks the fields the active kind needs against a model.
  void validate(Task task, std::size_t num_layers) const {
    switch (kind) {
      case PolicyKind::patience:
        if (t < 1) throw ValidationError("policy.t", "patience must be >= 1");
        if (task == Task::regression && !(tau > 0.0)) throw ValidationError("policy.tau", "must be > 0");
        break;
      case PolicyKind::entropy:
      case PolicyKind::maxprob:
        if (task == Task::regression) {
          throw ValidationError("policy.kind", std::string(to_string(kind)) + " does not support regression");
        }
        if (!std::isfinite(threshold)) throw ValidationError("policy.threshold", "must be finite");
        break;
      case PolicyKind::fixed_depth:
        if (depth < 1 || depth > num_layers) {
          throw ValidationError("policy.depth", "must be in [1, " + std::to_string(num_layers) + "]");
        }
        break;
      case PolicyKind::never:
        break;
    }
  }

  /// Short label such as "patience(t=6)", used in result tables.
  std::string describe() const {
    switch (kind) {
      case PolicyKind::patience: return fmt::format("patience(t={})", t);
      case PolicyKind::entropy: return fmt::format("entropy(threshold={})", threshold);
      case PolicyKind::maxprob: return fmt::format("maxprob(threshold={})", threshold);
      case PolicyKind::fixed_depth: return fmt::format("fixed_depth(depth={})", depth);
      case PolicyKind::never: return "never";
    }
    return "?";
  }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// Per-instance exit decision: feed head outputs in layer order.
class ExitDecider {
 public:
  explicit ExitDecider(const PolicyConfig& policy) : policy_(policy) {}

  bool observe(const PredictionOutput& out) {
    ++layer_;
    switch (policy_.kind) {
      case PolicyKind::patience:
        if (const auto* pv = std::get_if<ProbVector>(&out)) {
          class_state_ = patience_update_classification(class_state_, *pv);
          return should_exit_patience(class_state_, policy_.t);
        }
        reg_state_ = patience_update_regression(reg_state_, std::get<double>(out), policy_.tau);
        return should_exit_patience(reg_state_, policy_.t);
      case PolicyKind::entropy:
        return should_exit_entropy(std::get<ProbVector>(out), policy_.threshold);
      case PolicyKind::maxprob:
        return should_exit_maxprob(std::get<ProbVector>(out), policy_.threshold);
      case PolicyKind::fixed_depth:
        return layer_ >= policy_.depth;
      case PolicyKind::never:
        return false;
    }
    return false;
  }

  std::size_t counter() const noexcept { return std::max(class_state_.cnt, reg_state_.cnt); }

 private:
  PolicyConfig policy_;
  std::size_t layer_ = 0;
  ClassPatience class_state_;
  RegressionPatience reg_state_;
};

}  // namespace pabee
