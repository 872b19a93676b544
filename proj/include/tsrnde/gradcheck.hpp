#ifndef TSRNDE_GRADCHECK_HPP
#define TSRNDE_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "features.hpp"
#include "nn.hpp"

namespace tsrnde {

/// Mean cross-entropy over a batch via the plain forward pass.
inline double batch_loss(const MlpModel& m, const Dataset& batch) {
  std::vector<double> buf;
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i)
    sum += loss(detail::forward_into(m, batch.row(i), buf), batch.labels[i]);
  return sum / static_cast<double>(batch.size());
}

/// Smallest |pre-activation| feeding a ReLU over the batch. Central
/// differences are unreliable when this is below the step size.
inline double relu_margin(const MlpModel& m, const Dataset& batch) {
  double margin = std::numeric_limits<double>::infinity();
  std::vector<double> a, z;
  for (std::size_t r = 0; r < batch.size(); ++r) {
    const auto x = batch.row(r);
    a.assign(x.begin(), x.end());
    for (const auto& layer : m.layers) {
      z.assign(layer.outputs, 0.0);
      for (std::size_t o = 0; o < layer.outputs; ++o) {
        double s = layer.bias[o];
        for (std::size_t i = 0; i < layer.inputs; ++i) s += layer.weights[o * layer.inputs + i] * a[i];
        z[o] = s;
        if (layer.activation == Activation::relu) margin = std::min(margin, std::abs(s));
      }
      detail::activate(layer.activation, z);
      a = z;
    }
  }
  return margin;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t parameters = 0;
};

/// Compares `backward` against central differences of `batch_loss`.
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline GradientCheck check_gradients(const MlpModel& model, const Dataset& batch, double h = 1e-5,
                                     double floor = 1e-6) {
  const auto analytic = backward(model, batch);
  MlpModel probe = model;
  GradientCheck result;
  auto visit = [&](double& param, double grad) {
    const double saved = param;
    param = saved + h;
    const double up = batch_loss(probe, batch);
    param = saved - h;
    const double down = batch_loss(probe, batch);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(grad), std::abs(numeric), floor});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(grad - numeric) / denom);
    ++result.parameters;
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    for (std::size_t i = 0; i < probe.layers[l].weights.size(); ++i) visit(probe.layers[l].weights[i], analytic.weights[l][i]);
    for (std::size_t i = 0; i < probe.layers[l].bias.size(); ++i) visit(probe.layers[l].bias[i], analytic.bias[l][i]);
  }
  return result;
}

}  // namespace tsrnde

#endif
