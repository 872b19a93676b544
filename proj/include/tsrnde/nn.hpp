#ifndef TSRNDE_NN_HPP
#define TSRNDE_NN_HPP

// Dense feed-forward classifier trained with categorical cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "features.hpp"
#include "ingest.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "textio.hpp"
#include "tsr.hpp"

namespace tsrnde {

enum class Activation { relu, tanh, softmax };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "softmax") return Activation::softmax;
  fail(Errc::parse_error, "unknown activation '" + std::string(s) + "'");
}

/// Fully connected layer; `weights` is out x in, row-major.
struct DenseLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  Activation activation = Activation::tanh;
  std::vector<double> weights;
  std::vector<double> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpModel {
  static constexpr int current_version = 1;

  int version = current_version;
  std::vector<DenseLayer> layers;
  ScalingStats scaling;

  /// Widths [inputs, hidden..., outputs] with one activation per dense
  /// layer. Weights ~ U[-sqrt(6/(in+out)), +sqrt(6/(in+out))], biases 0.
  static MlpModel create(std::span<const std::size_t> layer_sizes, std::span<const Activation> activations,
                         std::uint64_t seed) {
    if (layer_sizes.size() < 2 || activations.size() != layer_sizes.size() - 1)
      fail(Errc::invalid_argument, "need n+1 layer sizes for n activations");
    MlpModel m;
    Rng rng(derive_seed(seed, {0x1417u}));
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
      DenseLayer layer{layer_sizes[l], layer_sizes[l + 1], activations[l], {}, {}};
      const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs + layer.outputs));
      layer.weights.resize(layer.inputs * layer.outputs);
      for (auto& w : layer.weights) w = uniform(rng, -limit, limit);
      layer.bias.assign(layer.outputs, 0.0);
      m.layers.push_back(std::move(layer));
    }
    m.validate();
    return m;
  }

  std::size_t input_size() const { return layers.empty() ? 0 : layers.front().inputs; }
  std::size_t output_size() const { return layers.empty() ? 0 : layers.back().outputs; }

  std::vector<std::size_t> layer_sizes() const {
    std::vector<std::size_t> s;
    if (layers.empty()) return s;
    s.push_back(layers.front().inputs);
    for (const auto& l : layers) s.push_back(l.outputs);
    return s;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.inputs * l.outputs + l.outputs;
    return n;
  }

  std::size_t widest() const {
    std::size_t w = input_size();
    for (const auto& l : layers) w = std::max(w, l.outputs);
    return w;
  }

  void validate() const {
    if (layers.empty()) fail(Errc::invalid_argument, "model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& layer = layers[l];
      if (layer.inputs == 0 || layer.outputs == 0) fail(Errc::invalid_argument, "empty layer");
      if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs)
        fail(Errc::dimension_mismatch, "layer " + std::to_string(l) + " storage does not match its shape");
      if (l > 0 && layer.inputs != layers[l - 1].outputs)
        fail(Errc::dimension_mismatch, "layer " + std::to_string(l) + " does not chain with its predecessor");
      const bool last = l + 1 == layers.size();
      if ((layer.activation == Activation::softmax) != last)
        fail(Errc::invalid_argument, "softmax must be the output activation and only there");
    }
    if (scaling.size() != 0 && scaling.size() != input_size())
      fail(Errc::dimension_mismatch, "embedded scaling stats do not match the input width");
  }

  void check_finite() const {
    for (const auto& l : layers) {
      for (double w : l.weights)
        if (!std::isfinite(w)) fail(Errc::non_finite, "model contains non-finite weights");
      for (double b : l.bias)
        if (!std::isfinite(b)) fail(Errc::non_finite, "model contains non-finite biases");
    }
  }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;
};

namespace detail {

inline void activate(Activation a, std::span<double> z) {
  switch (a) {
    case Activation::relu:
      for (auto& v : z) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::tanh:
      for (auto& v : z) v = std::tanh(v);
      break;
    case Activation::softmax: {
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (auto& v : z) {
        v = std::exp(v - mx);
        sum += v;
      }
      for (auto& v : z) v /= sum;
      break;
    }
  }
}

inline void dense(const DenseLayer& layer, const double* in, double* out) {
  for (std::size_t j = 0; j < layer.outputs; ++j) {
    const double* w = &layer.weights[j * layer.inputs];
    double acc = layer.bias[j];
    for (std::size_t i = 0; i < layer.inputs; ++i) acc += w[i] * in[i];
    out[j] = acc;
  }
}

/// Unchecked forward pass; `buf` must hold 2 * widest doubles.
inline std::span<const double> forward_into(const MlpModel& m, std::span<const double> x, std::vector<double>& buf) {
  const std::size_t wide = m.widest();
  buf.resize(2 * wide);
  double* a = buf.data();
  double* b = buf.data() + wide;
  std::copy(x.begin(), x.end(), a);
  for (const auto& layer : m.layers) {
    dense(layer, a, b);
    activate(layer.activation, std::span<double>(b, layer.outputs));
    std::swap(a, b);
  }
  return std::span<const double>(a, m.output_size());
}

inline std::size_t argmax(std::span<const double> p) {
  // First maximum wins, so exact ties resolve to the lowest class id.
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace detail

/// Class probabilities for one feature vector (already scaled).
inline std::vector<double> forward(const MlpModel& m, std::span<const double> x) {
  m.validate();
  if (x.size() != m.input_size())
    fail(Errc::dimension_mismatch, "input has " + std::to_string(x.size()) + " features, model expects " +
                                       std::to_string(m.input_size()));
  m.check_finite();
  std::vector<double> buf;
  const auto p = detail::forward_into(m, x, buf);
  return {p.begin(), p.end()};
}

inline constexpr double probability_floor = 1e-15;

/// Categorical cross-entropy -ln p_true, with p floored at 1e-15.
inline double loss(std::span<const double> probs, std::size_t true_class) {
  if (true_class >= probs.size()) fail(Errc::invalid_argument, "label outside the probability vector");
  return -std::log(std::max(probs[true_class], probability_floor));
}

/// Gradients shaped like the model's layers.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;

  static Gradients zeros_like(const MlpModel& m) {
    Gradients g;
    for (const auto& l : m.layers) {
      g.weights.emplace_back(l.weights.size(), 0.0);
      g.bias.emplace_back(l.bias.size(), 0.0);
    }
    return g;
  }
  void add(const Gradients& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += o.weights[l][i];
      for (std::size_t i = 0; i < bias[l].size(); ++i) bias[l][i] += o.bias[l][i];
    }
  }
  void scale(double s) {
    for (auto& w : weights)
      for (auto& v : w) v *= s;
    for (auto& b : bias)
      for (auto& v : b) v *= s;
  }
};

struct BatchResult {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

namespace detail {

// Accumulates summed (not averaged) gradients of rows [lo, hi) of `rows`.
class Backprop {
 public:
  explicit Backprop(const MlpModel& m) : model_(m) {
    const auto sizes = m.layer_sizes();
    act_.resize(sizes.size());
    for (std::size_t l = 0; l < sizes.size(); ++l) act_[l].resize(sizes[l]);
    delta_.resize(m.widest());
    next_delta_.resize(m.widest());
  }

  BatchResult accumulate(const Dataset& data, std::span<const std::size_t> rows, Gradients& g) {
    BatchResult r;
    const std::size_t depth = model_.layers.size();
    for (auto idx : rows) {
      const auto x = data.row(idx);
      std::copy(x.begin(), x.end(), act_[0].begin());
      for (std::size_t l = 0; l < depth; ++l) {
        dense(model_.layers[l], act_[l].data(), act_[l + 1].data());
        activate(model_.layers[l].activation, act_[l + 1]);
      }
      const auto& probs = act_[depth];
      const std::size_t label = data.labels[idx];
      r.loss_sum += -std::log(std::max(probs[label], probability_floor));
      if (argmax(probs) == label) ++r.correct;

      // Softmax + cross-entropy: dL/dz = p - onehot.
      for (std::size_t j = 0; j < model_.output_size(); ++j) delta_[j] = probs[j] - (j == label ? 1.0 : 0.0);
      for (std::size_t l = depth; l-- > 0;) {
        const auto& layer = model_.layers[l];
        const auto& in = act_[l];
        auto& gw = g.weights[l];
        auto& gb = g.bias[l];
        for (std::size_t j = 0; j < layer.outputs; ++j) {
          const double d = delta_[j];
          gb[j] += d;
          double* row = &gw[j * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) row[i] += d * in[i];
        }
        if (l == 0) break;
        // Propagate to the previous layer's pre-activation.
        const auto prev_act = model_.layers[l - 1].activation;
        for (std::size_t i = 0; i < layer.inputs; ++i) next_delta_[i] = 0.0;
        for (std::size_t j = 0; j < layer.outputs; ++j) {
          const double d = delta_[j];
          const double* w = &layer.weights[j * layer.inputs];
          for (std::size_t i = 0; i < layer.inputs; ++i) next_delta_[i] += w[i] * d;
        }
        for (std::size_t i = 0; i < layer.inputs; ++i) {
          const double a = in[i];
          const double dact = prev_act == Activation::tanh ? 1.0 - a * a : (a > 0.0 ? 1.0 : 0.0);
          delta_[i] = next_delta_[i] * dact;
        }
      }
    }
    return r;
  }

 private:
  const MlpModel& model_;
  std::vector<std::vector<double>> act_;
  std::vector<double> delta_;
  std::vector<double> next_delta_;
};

inline constexpr std::size_t gradient_chunk = 256;

}  // namespace detail

/// Gradients of the mean batch loss. Rows are processed in fixed chunks whose
/// partial sums are reduced in chunk order, so the result does not depend on
/// the worker count.
inline Gradients backward(const MlpModel& m, const Dataset& data, std::span<const std::size_t> rows,
                          BatchResult* stats = nullptr) {
  if (rows.empty()) fail(Errc::invalid_argument, "empty batch");
  if (data.feature_count != m.input_size()) fail(Errc::dimension_mismatch, "batch width does not match the model");
  const std::size_t chunks = (rows.size() + detail::gradient_chunk - 1) / detail::gradient_chunk;
  std::vector<Gradients> partial(chunks, Gradients::zeros_like(m));
  std::vector<BatchResult> results(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    detail::Backprop bp(m);
    const std::size_t lo = c * detail::gradient_chunk;
    const std::size_t hi = std::min(rows.size(), lo + detail::gradient_chunk);
    results[c] = bp.accumulate(data, rows.subspan(lo, hi - lo), partial[c]);
  }, 1);
  Gradients g = std::move(partial[0]);
  BatchResult total = results[0];
  for (std::size_t c = 1; c < chunks; ++c) {
    g.add(partial[c]);
    total.loss_sum += results[c].loss_sum;
    total.correct += results[c].correct;
  }
  g.scale(1.0 / static_cast<double>(rows.size()));
  if (!std::isfinite(total.loss_sum)) fail(Errc::non_finite, "non-finite loss in backward pass");
  if (stats) *stats = total;
  return g;
}

inline Gradients backward(const MlpModel& m, const Dataset& batch) {
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return backward(m, batch, rows);
}

// ---------------------------------------------------------------------------
// Training

enum class OptimizerKind { sgd_decay, adam };

inline const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd-decay"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd-decay" || s == "sgd") return OptimizerKind::sgd_decay;
  fail(Errc::parse_error, "unknown optimizer '" + std::string(s) + "'");
}

struct EarlyStopping {
  bool enabled = false;
  std::size_t checks_apart = 100;
  std::size_t consecutive_increases = 3;
};

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-5;
  std::size_t decay_step = 1000;
  double decay_rate = 0.9;
  std::size_t batch_size = 2048;
  std::size_t max_steps = 0;  // 0: train for `epochs`
  std::size_t epochs = 1;
  std::size_t check_interval = 0;  // steps between checks; 0 means once per epoch
  EarlyStopping early_stopping;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) fail(Errc::invalid_argument, "learning rate must be > 0");
    if (batch_size == 0) fail(Errc::invalid_argument, "batch size must be >= 1");
    if (max_steps == 0 && epochs == 0) fail(Errc::invalid_argument, "need max_steps or epochs");
    if (optimizer == OptimizerKind::sgd_decay && (decay_step == 0 || !(decay_rate > 0.0)))
      fail(Errc::invalid_argument, "decay step must be >= 1 and decay rate > 0");
    if (early_stopping.enabled && (early_stopping.checks_apart == 0 || early_stopping.consecutive_increases == 0))
      fail(Errc::invalid_argument, "early stopping needs positive spacing and patience");
  }
};

/// Staircase decay for SGD, constant for Adam.
inline double lr_at(const TrainConfig& c, std::size_t step) {
  if (c.optimizer == OptimizerKind::adam) return c.learning_rate;
  return c.learning_rate * std::pow(c.decay_rate, static_cast<double>(step / c.decay_step));
}

struct TraceEntry {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

struct TrainTrace {
  std::vector<TraceEntry> entries;
  std::string stop_reason;
  std::size_t restored_check = 0;  // index into entries of the returned model
};

/// Watches validation losses at successive checks. Stops once the loss has
/// risen `patience` times in a row; the model to keep is the one from the
/// check where that run of increases began.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  /// Returns true when training should halt.
  bool observe(double val_loss) {
    const std::size_t index = seen_++;
    if (index == 0 || !(val_loss > last_)) {
      anchor_ = index;
      increases_ = 0;
    } else {
      ++increases_;
    }
    last_ = val_loss;
    return increases_ >= patience_;
  }

  /// True when the latest observation became the new anchor.
  bool latest_is_anchor() const { return seen_ > 0 && anchor_ == seen_ - 1; }
  std::size_t anchor() const { return anchor_; }

 private:
  std::size_t patience_;
  std::size_t seen_ = 0;
  std::size_t anchor_ = 0;
  std::size_t increases_ = 0;
  double last_ = 0.0;
};

/// Mean loss and accuracy over a whole dataset.
inline std::pair<double, double> evaluate(const MlpModel& m, const Dataset& data) {
  if (data.empty()) return {0.0, 0.0};
  std::vector<double> buf;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto p = detail::forward_into(m, data.row(i), buf);
    loss_sum += -std::log(std::max(p[data.labels[i]], probability_floor));
    if (detail::argmax(p) == data.labels[i]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

namespace detail {

class Optimizer {
 public:
  Optimizer(const TrainConfig& c, const MlpModel& m) : config_(c) {
    if (c.optimizer == OptimizerKind::adam) {
      m_ = Gradients::zeros_like(m);
      v_ = Gradients::zeros_like(m);
    }
  }

  void apply(MlpModel& model, const Gradients& g, std::size_t step) {
    const double lr = lr_at(config_, step);
    if (config_.optimizer == OptimizerKind::sgd_decay) {
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        sgd(model.layers[l].weights, g.weights[l], lr);
        sgd(model.layers[l].bias, g.bias[l], lr);
      }
      return;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.adam_beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.adam_beta2, static_cast<double>(t_));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
      adam(model.layers[l].weights, g.weights[l], m_.weights[l], v_.weights[l], lr, c1, c2);
      adam(model.layers[l].bias, g.bias[l], m_.bias[l], v_.bias[l], lr, c1, c2);
    }
  }

 private:
  static void sgd(std::vector<double>& p, const std::vector<double>& g, double lr) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
  }

  void adam(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
            double lr, double c1, double c2) const {
    const double b1 = config_.adam_beta1;
    const double b2 = config_.adam_beta2;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config_.adam_epsilon);
    }
  }

  const TrainConfig& config_;
  Gradients m_;
  Gradients v_;
  std::uint64_t t_ = 0;
};

}  // namespace detail

/// Applies one optimizer update per call; exposed for tests of the update
/// rules. `step` is the zero-based global step.
class Trainer {
 public:
  Trainer(const TrainConfig& c, const MlpModel& m) : config_(c), opt_(config_, m) {}
  void step(MlpModel& model, const Gradients& g, std::size_t step_index) { opt_.apply(model, g, step_index); }

 private:
  TrainConfig config_;
  detail::Optimizer opt_;
};

/// Mini-batch training with per-epoch shuffling. A check (trace entry) is
/// taken before the first update and every `check_interval` steps after it
/// (or at each epoch end); the train columns average the mini-batches since
/// the previous check. With early stopping, checks are `checks_apart` steps
/// apart and the returned model is the snapshot from the start of the
/// losing streak.
inline std::pair<MlpModel, TrainTrace> train(MlpModel model, const Dataset& train_set, const Dataset& val_set,
                                             const TrainConfig& config, std::ostream* log = nullptr) {
  config.validate();
  model.validate();
  if (train_set.empty()) fail(Errc::invalid_argument, "empty training set");
  if (train_set.feature_count != model.input_size() || (!val_set.empty() && val_set.feature_count != model.input_size()))
    fail(Errc::dimension_mismatch, "dataset width does not match the model input");
  if (train_set.class_count > model.output_size())
    fail(Errc::dimension_mismatch, "more classes than model outputs");

  const std::size_t n = train_set.size();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = config.max_steps > 0 ? config.max_steps : config.epochs * steps_per_epoch;
  std::size_t interval = config.early_stopping.enabled ? config.early_stopping.checks_apart : config.check_interval;
  if (interval == 0) interval = steps_per_epoch;

  detail::Optimizer optimizer(config, model);
  EarlyStopper stopper(config.early_stopping.consecutive_increases);
  MlpModel anchor_model = model;
  TrainTrace trace;

  double window_loss = 0.0;
  std::size_t window_correct = 0;
  std::size_t window_rows = 0;

  auto check = [&](std::size_t step) -> bool {
    TraceEntry e;
    e.step = step;
    e.epoch = step / steps_per_epoch;
    if (window_rows > 0) {
      e.train_loss = window_loss / static_cast<double>(window_rows);
      e.train_accuracy = static_cast<double>(window_correct) / static_cast<double>(window_rows);
    } else {
      std::tie(e.train_loss, e.train_accuracy) = evaluate(model, train_set);
    }
    std::tie(e.val_loss, e.val_accuracy) = evaluate(model, val_set.empty() ? train_set : val_set);
    if (!std::isfinite(e.train_loss) || !std::isfinite(e.val_loss))
      fail(Errc::divergence, "loss became non-finite at step " + std::to_string(step));
    trace.entries.push_back(e);
    window_loss = 0.0;
    window_correct = 0;
    window_rows = 0;
    if (log)
      *log << "step " << e.step << " epoch " << e.epoch << " train_loss " << e.train_loss << " val_loss " << e.val_loss
           << " train_acc " << e.train_accuracy << " val_acc " << e.val_accuracy << "\n";
    if (!config.early_stopping.enabled) return false;
    const bool stop = stopper.observe(e.val_loss);
    if (stopper.latest_is_anchor()) anchor_model = model;
    return stop;
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  check(0);
  std::size_t step = 0;
  bool stopped = false;
  for (std::size_t epoch = 0; step < total_steps && !stopped; ++epoch) {
    Rng rng(derive_seed(config.seed, {0xe90c4u, epoch}));
    shuffle(order.begin(), order.end(), rng);
    for (std::size_t b = 0; b < steps_per_epoch && step < total_steps; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      BatchResult br;
      const auto g = backward(model, train_set, std::span<const std::size_t>(order).subspan(lo, hi - lo), &br);
      if (!std::isfinite(br.loss_sum))
        fail(Errc::divergence, "non-finite training loss at step " + std::to_string(step));
      window_loss += br.loss_sum;
      window_correct += br.correct;
      window_rows += hi - lo;
      optimizer.apply(model, g, step);
      ++step;
      if (step % interval == 0 || step == total_steps) {
        if (check(step)) {
          stopped = true;
          break;
        }
      }
    }
  }
  if (stopped) {
    trace.stop_reason = "early-stopping";
    trace.restored_check = stopper.anchor();
    model = std::move(anchor_model);
  } else {
    trace.stop_reason = config.max_steps > 0 ? "max-steps" : "epochs";
    trace.restored_check = trace.entries.size() - 1;
  }
  return {std::move(model), std::move(trace)};
}

inline std::string encode_trace(const TrainTrace& trace) {
  std::string out = "step,epoch,train_loss,val_loss,train_acc,val_acc\n";
  for (const auto& e : trace.entries)
    out += std::to_string(e.step) + "," + std::to_string(e.epoch) + "," + text::fmt_double(e.train_loss) + "," +
           text::fmt_double(e.val_loss) + "," + text::fmt_double(e.train_accuracy) + "," +
           text::fmt_double(e.val_accuracy) + "\n";
  out += "# stop_reason=" + trace.stop_reason + " restored_check=" + std::to_string(trace.restored_check) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Inference over images

/// Argmax class per pixel; invalid feature pixels stay invalid. Unscaled
/// images are scaled with `stats` or, when null, the model's embedded stats.
inline LabelMask predict_map(const MlpModel& m, const FeatureImage& features, const ScalingStats* stats = nullptr) {
  m.validate();
  m.check_finite();
  if (features.feature_count != m.input_size())
    fail(Errc::dimension_mismatch, "feature image has " + std::to_string(features.feature_count) +
                                       " features, model expects " + std::to_string(m.input_size()));
  const ScalingStats* s = stats ? stats : &m.scaling;
  const bool scale = features.scaling_pending && s->size() != 0;
  if (scale && s->size() != features.feature_count) fail(Errc::dimension_mismatch, "scaling stats width mismatch");
  LabelMask out(features.width, features.height, m.output_size());
  parallel_for(features.height, [&](std::size_t row) {
    std::vector<double> buf;
    std::vector<double> x(features.feature_count);
    for (std::size_t col = 0; col < features.width; ++col) {
      const std::size_t p = row * features.width + col;
      if (!features.valid[p]) {
        out.valid[p] = 0;
        out.labels[p] = 0;
        continue;
      }
      const auto f = features.features(p);
      std::copy(f.begin(), f.end(), x.begin());
      if (scale) scale_in_place(x, *s);
      out.labels[p] = static_cast<std::uint8_t>(detail::argmax(detail::forward_into(m, x, buf)));
    }
  }, 1);
  return out;
}

// ---------------------------------------------------------------------------
// Model files
//
//   tsrnde-model <version>
//   layers <n0> <n1> ...
//   activations <a1> ...
//   scaling <count>
//   mean ...            (only when count > 0)
//   std ...
//   layer <l>           then one `w` line per output row and a `b` line
//   end

inline std::string encode_model(const MlpModel& m) {
  m.validate();
  std::string out = "tsrnde-model " + std::to_string(m.version) + "\nlayers";
  for (auto s : m.layer_sizes()) out += " " + std::to_string(s);
  out += "\nactivations";
  for (const auto& l : m.layers) out += std::string(" ") + activation_name(l.activation);
  out += "\nscaling " + std::to_string(m.scaling.size()) + "\n";
  if (m.scaling.size() != 0) {
    out += "mean";
    for (double v : m.scaling.mean) out += " " + text::fmt_double(v);
    out += "\nstd";
    for (double v : m.scaling.std) out += " " + text::fmt_double(v);
    out += "\n";
  }
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    out += "layer " + std::to_string(l) + "\n";
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      out += "w";
      for (std::size_t i = 0; i < layer.inputs; ++i) out += " " + text::fmt_double(layer.weights[j * layer.inputs + i]);
      out += "\n";
    }
    out += "b";
    for (double v : layer.bias) out += " " + text::fmt_double(v);
    out += "\n";
  }
  out += "end\n";
  return out;
}

inline MlpModel decode_model(std::string_view content, std::string_view source = "model") {
  const auto rows = text::lines(content);
  std::size_t at = 0;
  auto next = [&](std::string_view tag) -> std::vector<std::string_view> {
    while (at < rows.size() && text::trim(rows[at]).empty()) ++at;
    if (at >= rows.size()) fail(Errc::corrupt_file, std::string(source) + ": truncated before '" + std::string(tag) + "'");
    auto w = text::words(rows[at++]);
    if (w.empty() || w[0] != tag)
      fail(Errc::corrupt_file, std::string(source) + ": expected '" + std::string(tag) + "' at line " + std::to_string(at));
    w.erase(w.begin());
    return w;
  };
  auto nums = [&](const std::vector<std::string_view>& w, std::size_t expect) {
    if (w.size() != expect) fail(Errc::corrupt_file, std::string(source) + ": wrong value count at line " + std::to_string(at));
    std::vector<double> v;
    v.reserve(w.size());
    try {
      for (auto s : w) v.push_back(text::parse_double(s, source));
    } catch (const Error&) {
      fail(Errc::corrupt_file, std::string(source) + ": bad number at line " + std::to_string(at));
    }
    return v;
  };

  const auto header = next("tsrnde-model");
  if (header.size() != 1) fail(Errc::corrupt_file, std::string(source) + ": bad header");
  long long version = 0;
  try {
    version = text::parse_int(header[0]);
  } catch (const Error&) {
    fail(Errc::corrupt_file, std::string(source) + ": bad version tag");
  }
  if (version != MlpModel::current_version)
    fail(Errc::version_mismatch, std::string(source) + ": model version " + std::to_string(version) +
                                     " is not supported (expected " + std::to_string(MlpModel::current_version) + ")");
  MlpModel m;
  m.version = static_cast<int>(version);
  std::vector<std::size_t> sizes;
  for (auto s : next("layers")) sizes.push_back(static_cast<std::size_t>(text::parse_int(s, source)));
  const auto acts = next("activations");
  if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
    fail(Errc::corrupt_file, std::string(source) + ": layer sizes and activations disagree");
  const auto scaling = next("scaling");
  if (scaling.size() != 1) fail(Errc::corrupt_file, std::string(source) + ": bad scaling line");
  const auto scount = static_cast<std::size_t>(text::parse_int(scaling[0], source));
  if (scount > 0) {
    m.scaling.mean = nums(next("mean"), scount);
    m.scaling.std = nums(next("std"), scount);
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto tag = next("layer");
    if (tag.size() != 1 || text::parse_int(tag[0], source) != static_cast<long long>(l))
      fail(Errc::corrupt_file, std::string(source) + ": layers out of order");
    DenseLayer layer{sizes[l], sizes[l + 1], parse_activation(acts[l]), {}, {}};
    layer.weights.reserve(layer.inputs * layer.outputs);
    for (std::size_t j = 0; j < layer.outputs; ++j) {
      const auto row = nums(next("w"), layer.inputs);
      layer.weights.insert(layer.weights.end(), row.begin(), row.end());
    }
    layer.bias = nums(next("b"), layer.outputs);
    m.layers.push_back(std::move(layer));
  }
  next("end");
  m.validate();
  return m;
}

inline void save_model(const std::filesystem::path& path, const MlpModel& m) { text::write_file(path, encode_model(m)); }

inline MlpModel load_model(const std::filesystem::path& path) { return decode_model(text::read_file(path), path.string()); }

}  // namespace tsrnde

#endif
