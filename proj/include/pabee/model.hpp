#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "pabee/errors.hpp"
#include "pabee/numerics.hpp"
#include "pabee/rng.hpp"

namespace pabee {

enum class Task { classification, regression };
enum class Nonlinearity { tanh, relu };

inline std::string_view to_string(Task t) {
  return t == Task::classification ? "classification" : "regression";
}
inline std::string_view to_string(Nonlinearity nl) {
  return nl == Nonlinearity::tanh ? "tanh" : "relu";
}

struct StackConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 12;
  Task task = Task::classification;
  std::size_t num_classes = 2;  // ignored for regression
  Nonlinearity nonlinearity = Nonlinearity::tanh;
  std::uint64_t seed = 0;

  std::size_t output_dim() const noexcept {
    return task == Task::classification ? num_classes : 1;
  }

  void validate() const {
    if (input_dim < 1) throw ValidationError("model.input_dim", "must be >= 1");
    if (hidden_dim < 1) throw ValidationError("model.hidden_dim", "must be >= 1");
    if (num_layers < 2) throw ValidationError("model.num_layers", "must be >= 2");
    if (task == Task::classification && num_classes < 2) {
      throw ValidationError("model.num_classes", "must be >= 2");
    }
  }

  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

/// y = weight * x + bias, weight stored out x in.
struct Affine {
  Matrix weight;
  std::vector<double> bias;

  Affine() = default;
  Affine(std::size_t in, std::size_t out) : weight(out, in), bias(out, 0.0) {}

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }

  friend bool operator==(const Affine&, const Affine&) = default;
};

/// Embedding, n hidden layers and one prediction head per layer. Head n is
/// the final classifier.
struct ModelParams {
  StackConfig config;
  Affine embedding;
  std::vector<Affine> layers;
  std::vector<Affine> heads;

  static ModelParams zeros(const StackConfig& cfg) {
    cfg.validate();
    ModelParams p;
    p.config = cfg;
    p.embedding = Affine(cfg.input_dim, cfg.hidden_dim);
    p.layers.assign(cfg.num_layers, Affine(cfg.hidden_dim, cfg.hidden_dim));
    p.heads.assign(cfg.num_layers, Affine(cfg.hidden_dim, cfg.output_dim()));
    return p;
  }

  std::size_t num_layers() const noexcept { return layers.size(); }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Visits every parameter array in canonical order:
/// embedding.weight, embedding.bias, layer[i].weight, layer[i].bias for
/// i = 0..n-1, then head[i].weight, head[i].bias for i = 0..n-1.
/// Checkpoints and flatten() share this order.
template <class Params, class F>
void for_each_array(Params& p, F&& f) {
  auto visit = [&](auto& aff, const std::string& name) {
    f(name + ".weight", aff.weight.data());
    f(name + ".bias", std::span(aff.bias));
  };
  visit(p.embedding, "embedding");
  for (std::size_t i = 0; i < p.layers.size(); ++i) visit(p.layers[i], "layer." + std::to_string(i));
  for (std::size_t i = 0; i < p.heads.size(); ++i) visit(p.heads[i], "head." + std::to_string(i));
}

inline std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_array(p, [&](const std::string&, auto span) { n += span.size(); });
  return n;
}

inline std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  out.reserve(parameter_count(p));
  for_each_array(p, [&](const std::string&, auto span) { out.insert(out.end(), span.begin(), span.end()); });
  return out;
}

inline void assign(ModelParams& p, std::span<const double> flat) {
  if (flat.size() != parameter_count(p)) throw ShapeError("assign: parameter vector length mismatch");
  std::size_t off = 0;
  for_each_array(p, [&](const std::string&, std::span<double> dst) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), dst.size(), dst.begin());
    off += dst.size();
  });
}

/// Glorot-uniform weights, zero biases, seeded from config.seed.
inline ModelParams init_params(const StackConfig& cfg) {
  ModelParams p = ModelParams::zeros(cfg);
  Rng rng(derive_seed(cfg.seed, 0));
  auto glorot = [&](Affine& aff) {
    const double a = std::sqrt(6.0 / static_cast<double>(aff.in_dim() + aff.out_dim()));
    for (double& w : aff.weight.data()) w = uniform(rng, -a, a);
  };
  glorot(p.embedding);
  for (auto& l : p.layers) glorot(l);
  for (auto& h : p.heads) glorot(h);
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Head output: class distribution for classification, scalar for regression.
using PredictionOutput = std::variant<ProbVector, double>;
/// Class index for classification, real target for regression.
using Target = std::variant<std::size_t, double>;

namespace detail {

inline double activate(Nonlinearity nl, double v) noexcept {
  return nl == Nonlinearity::tanh ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}

// Derivative expressed through pre-activation and activation values.
inline double activate_grad(Nonlinearity nl, double pre, double post) noexcept {
  return nl == Nonlinearity::tanh ? 1.0 - post * post : (pre > 0.0 ? 1.0 : 0.0);
}

inline PredictionOutput make_output(Task task, std::span<const double> raw) {
  if (task == Task::classification) return softmax(raw);
  if (!std::isfinite(raw[0])) throw NumericError("regression head produced a non-finite value");
  return raw[0];
}

}  // namespace detail

/// Evaluates the stack one layer at a time so inference can stop early.
class LayerStepper {
 public:
  LayerStepper(const ModelParams& params, std::span<const double> x)
      : params_(&params),
        hidden_(params.config.hidden_dim),
        scratch_(params.config.hidden_dim),
        raw_(params.config.output_dim()) {
    if (x.size() != params.config.input_dim) {
      throw ShapeError("input has " + std::to_string(x.size()) + " features, model expects " +
                       std::to_string(params.config.input_dim));
    }
    check_finite(x, "forward");
    affine_apply(params.embedding.weight, params.embedding.bias, x, hidden_);
  }

  std::size_t layers_done() const noexcept { return done_; }
  bool finished() const noexcept { return done_ == params_->num_layers(); }

  /// Runs the next layer and its head; returns the head output.
  PredictionOutput step() {
    if (finished()) throw ArgumentError("LayerStepper: all layers already evaluated");
    const auto& layer = params_->layers[done_];
    affine_apply(layer.weight, layer.bias, hidden_, scratch_);
    const auto nl = params_->config.nonlinearity;
    for (std::size_t k = 0; k < scratch_.size(); ++k) hidden_[k] = detail::activate(nl, scratch_[k]);
    const auto& head = params_->heads[done_];
    affine_apply(head.weight, head.bias, hidden_, raw_);
    ++done_;
    for (double v : hidden_) {
      if (!std::isfinite(v)) {
        throw NumericError("layer " + std::to_string(done_) + ": non-finite hidden state");
      }
    }
    return detail::make_output(params_->config.task, raw_);
  }

  std::span<const double> hidden() const noexcept { return hidden_; }

 private:
  const ModelParams* params_;
  std::vector<double> hidden_;
  std::vector<double> scratch_;
  std::vector<double> raw_;
  std::size_t done_ = 0;
};

struct ForwardResult {
  std::vector<PredictionOutput> outputs;     // one per layer, in order
  std::vector<std::vector<double>> hidden;   // h_1 .. h_n
};

inline ForwardResult forward_all(const ModelParams& params, std::span<const double> x) {
  ForwardResult r;
  LayerStepper stepper(params, x);
  while (!stepper.finished()) {
    r.outputs.push_back(stepper.step());
    r.hidden.emplace_back(stepper.hidden().begin(), stepper.hidden().end());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Losses

/// Cross entropy -ln y[z]. A zero probability is clamped to the smallest
/// normal double, so the loss never exceeds about 708.4.
inline double loss_classification(const ProbVector& y, std::size_t z) {
  if (z >= y.size()) throw ArgumentError("class index out of range");
  return -std::log(std::max(y[z], std::numeric_limits<double>::min()));
}

/// Cross entropy straight from logits (log-sum-exp form).
inline double loss_classification_logits(std::span<const double> logits, std::size_t z) {
  if (z >= logits.size()) throw ArgumentError("class index out of range");
  return log_sum_exp(logits) - logits[z];
}

inline double loss_regression(double y_pred, double y_true) {
  const double d = y_pred - y_true;
  return d * d;
}

/// Head j (1-based) weighted by j / sum(1..n).
inline std::vector<double> exit_loss_weights(std::size_t n) {
  std::vector<double> w(n);
  const double denom = static_cast<double>(n) * static_cast<double>(n + 1) / 2.0;
  for (std::size_t j = 0; j < n; ++j) w[j] = static_cast<double>(j + 1) / denom;
  return w;
}

inline double total_loss(std::span<const double> per_layer) {
  if (per_layer.empty()) throw ArgumentError("total_loss: empty loss list");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < per_layer.size(); ++j) {
    const double weight = static_cast<double>(j + 1);
    num += weight * per_layer[j];
    den += weight;
  }
  return num / den;
}

// ---------------------------------------------------------------------------
// Backward pass

namespace detail {

struct Workspace {
  std::vector<std::vector<double>> hidden;  // h_0 .. h_n
  std::vector<std::vector<double>> pre;     // pre-activation of layers 1..n (index 0 unused)
  std::vector<std::vector<double>> raw;     // head outputs before softmax
  std::vector<double> grad_hidden;
  std::vector<double> carry;
  std::vector<double> head_grad;

  explicit Workspace(const StackConfig& cfg)
      : hidden(cfg.num_layers + 1, std::vector<double>(cfg.hidden_dim)),
        pre(cfg.num_layers + 1, std::vector<double>(cfg.hidden_dim)),
        raw(cfg.num_layers, std::vector<double>(cfg.output_dim())),
        grad_hidden(cfg.hidden_dim),
        carry(cfg.hidden_dim),
        head_grad(cfg.output_dim()) {}
};

inline void check_target(const StackConfig& cfg, const Target& target) {
  if (cfg.task == Task::classification) {
    const auto* z = std::get_if<std::size_t>(&target);
    if (z == nullptr) throw ArgumentError("classification model needs a class-index target");
    if (*z >= cfg.num_classes) throw ArgumentError("class index out of range");
  } else if (!std::holds_alternative<double>(target)) {
    throw ArgumentError("regression model needs a real-valued target");
  }
}

// Accumulates weighted gradients into grads; returns the weighted loss.
inline double accumulate_backward(const ModelParams& params, std::span<const double> x,
                                  const Target& target, std::span<const double> head_weights,
                                  ModelParams& grads, Workspace& ws) {
  const auto& cfg = params.config;
  const std::size_t n = cfg.num_layers;
  const auto nl = cfg.nonlinearity;

  affine_apply(params.embedding.weight, params.embedding.bias, x, ws.hidden[0]);
  for (std::size_t j = 1; j <= n; ++j) {
    const auto& layer = params.layers[j - 1];
    affine_apply(layer.weight, layer.bias, ws.hidden[j - 1], ws.pre[j]);
    for (std::size_t k = 0; k < cfg.hidden_dim; ++k) ws.hidden[j][k] = activate(nl, ws.pre[j][k]);
    for (double v : ws.hidden[j]) {
      if (!std::isfinite(v)) {
        throw NumericError("layer " + std::to_string(j) + ": non-finite hidden state");
      }
    }
    const auto& head = params.heads[j - 1];
    affine_apply(head.weight, head.bias, ws.hidden[j], ws.raw[j - 1]);
  }

  double loss = 0.0;
  std::fill(ws.carry.begin(), ws.carry.end(), 0.0);
  for (std::size_t j = n; j >= 1; --j) {
    const double w = head_weights[j - 1];
    auto& raw = ws.raw[j - 1];
    auto& g = ws.head_grad;
    if (cfg.task == Task::classification) {
      const std::size_t z = std::get<std::size_t>(target);
      const double lse = log_sum_exp(raw);
      loss += w * (lse - raw[z]);
      for (std::size_t c = 0; c < raw.size(); ++c) g[c] = std::exp(raw[c] - lse);
      g[z] -= 1.0;
    } else {
      const double d = raw[0] - std::get<double>(target);
      loss += w * d * d;
      g[0] = 2.0 * d;
    }

    // Head parameters and the head's contribution to dL/dh_j.
    auto& gh = grads.heads[j - 1];
    const auto& head = params.heads[j - 1];
    std::copy(ws.carry.begin(), ws.carry.end(), ws.grad_hidden.begin());
    if (w != 0.0) {
      for (std::size_t c = 0; c < g.size(); ++c) {
        const double wg = w * g[c];
        gh.bias[c] += wg;
        auto grow = gh.weight.row(c);
        const auto prow = head.weight.row(c);
        for (std::size_t k = 0; k < cfg.hidden_dim; ++k) {
          grow[k] += wg * ws.hidden[j][k];
          ws.grad_hidden[k] += wg * prow[k];
        }
      }
    }

    // Through the layer nonlinearity and affine map.
    auto& gl = grads.layers[j - 1];
    const auto& layer = params.layers[j - 1];
    std::fill(ws.carry.begin(), ws.carry.end(), 0.0);
    for (std::size_t r = 0; r < cfg.hidden_dim; ++r) {
      const double delta = ws.grad_hidden[r] * activate_grad(nl, ws.pre[j][r], ws.hidden[j][r]);
      if (!std::isfinite(delta)) {
        throw NumericError("layer " + std::to_string(j) + ": non-finite gradient");
      }
      if (delta == 0.0) continue;
      gl.bias[r] += delta;
      auto grow = gl.weight.row(r);
      const auto prow = layer.weight.row(r);
      for (std::size_t k = 0; k < cfg.hidden_dim; ++k) {
        grow[k] += delta * ws.hidden[j - 1][k];
        ws.carry[k] += delta * prow[k];
      }
    }
  }

  auto& ge = grads.embedding;
  for (std::size_t r = 0; r < cfg.hidden_dim; ++r) {
    const double delta = ws.carry[r];
    ge.bias[r] += delta;
    auto grow = ge.weight.row(r);
    for (std::size_t k = 0; k < x.size(); ++k) grow[k] += delta * x[k];
  }
  return loss;
}

}  // namespace detail

/// Weighted total loss of one sample over all heads.
inline double sample_loss(const ModelParams& params, std::span<const double> x, const Target& target) {
  detail::check_target(params.config, target);
  const auto fwd = forward_all(params, x);
  std::vector<double> losses;
  losses.reserve(fwd.outputs.size());
  for (const auto& out : fwd.outputs) {
    if (const auto* pv = std::get_if<ProbVector>(&out)) {
      losses.push_back(loss_classification(*pv, std::get<std::size_t>(target)));
    } else {
      losses.push_back(loss_regression(std::get<double>(out), std::get<double>(target)));
    }
  }
  return total_loss(losses);
}

/// Analytic gradient of the weighted multi-head loss for one sample.
/// head_weights defaults to exit_loss_weights(n); pass other weights to
/// train a subset of heads.
inline ModelParams backward(const ModelParams& params, std::span<const double> x,
                            const Target& target, std::span<const double> head_weights = {}) {
  const auto& cfg = params.config;
  if (x.size() != cfg.input_dim) throw ShapeError("backward: input dimension mismatch");
  check_finite(x, "backward");
  detail::check_target(cfg, target);
  std::vector<double> default_weights;
  if (head_weights.empty()) {
    default_weights = exit_loss_weights(cfg.num_layers);
    head_weights = default_weights;
  }
  if (head_weights.size() != cfg.num_layers) throw ShapeError("backward: one weight per head required");
  ModelParams grads = ModelParams::zeros(cfg);
  detail::Workspace ws(cfg);
  detail::accumulate_backward(params, x, target, head_weights, grads, ws);
  return grads;
}

// ---------------------------------------------------------------------------
// Training

struct LabeledDataset {
  Task task = Task::classification;
  Matrix inputs;                    // examples x input_dim
  std::vector<std::size_t> labels;  // classification
  std::vector<double> values;       // regression

  std::size_t size() const noexcept { return inputs.rows(); }

  Target target(std::size_t i) const {
    if (task == Task::classification) return labels[i];
    return values[i];
  }

  void validate(std::size_t num_classes) const {
    const std::size_t n = task == Task::classification ? labels.size() : values.size();
    if (n != inputs.rows()) throw ShapeError("dataset: target count does not match input rows");
    if (task == Task::classification) {
      for (auto z : labels) {
        if (z >= num_classes) throw ShapeError("dataset: class index out of range");
      }
    }
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ValidationError("optimizer.learning_rate", "must be finite and >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ValidationError("optimizer.momentum", "must be in [0, 1)");
    }
    if (batch_size < 1) throw ValidationError("optimizer.batch_size", "must be >= 1");
    if (epochs < 1) throw ValidationError("optimizer.epochs", "must be >= 1");
  }
};

struct TrainResult {
  ModelParams params;
  std::vector<double> loss_history;  // mean weighted loss per epoch
};

/// Mini-batch SGD with momentum on the weighted multi-head loss. Shuffling
/// is seeded from params.config.seed.
inline TrainResult train(ModelParams params, const LabeledDataset& data, const OptimizerConfig& opt) {
  opt.validate();
  const auto& cfg = params.config;
  if (data.size() == 0) throw ArgumentError("train: empty dataset");
  if (data.task != cfg.task) throw ArgumentError("train: dataset task does not match model task");
  if (data.inputs.cols() != cfg.input_dim) throw ShapeError("train: input dimension mismatch");
  data.validate(cfg.num_classes);

  const auto weights = exit_loss_weights(cfg.num_layers);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, 1));

  std::vector<double> theta = flatten(params);
  std::vector<double> velocity(theta.size(), 0.0);
  ModelParams grads = ModelParams::zeros(cfg);
  detail::Workspace ws(cfg);
  TrainResult result;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    shuffle(rng, std::span(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(order.size(), start + opt.batch_size);
      grads = ModelParams::zeros(cfg);
      double batch_loss = 0.0;
      try {
        for (std::size_t b = start; b < stop; ++b) {
          const std::size_t i = order[b];
          batch_loss += detail::accumulate_backward(params, data.inputs.row(i), data.target(i),
                                                    weights, grads, ws);
        }
      } catch (const NumericError& e) {
        throw TrainingError(epoch, std::string("diverged: ") + e.what());
      }
      if (!std::isfinite(batch_loss)) throw TrainingError(epoch, "diverged: non-finite loss");
      epoch_loss += batch_loss;

      const double scale = 1.0 / static_cast<double>(stop - start);
      std::size_t off = 0;
      for_each_array(grads, [&](const std::string&, std::span<double> g) {
        for (double gv : g) {
          double& v = velocity[off];
          v = opt.momentum * v - opt.learning_rate * (gv * scale);
          theta[off] += v;
          ++off;
        }
      });
      assign(params, theta);
    }
    epoch_loss /= static_cast<double>(data.size());
    if (!std::isfinite(epoch_loss)) throw TrainingError(epoch, "diverged: non-finite loss");
    result.loss_history.push_back(epoch_loss);
  }
  result.params = std::move(params);
  return result;
}

}  // namespace pabee
