#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "shopmatch/errors.hpp"
#include "shopmatch/ndcore/sequential.hpp"

namespace shopmatch {

template <class T>
struct ParamSlot {
  std::string name;
  std::span<T> value;
  std::span<T> grad;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

template <class T>
std::vector<ParamSlot<T>> collect_params(Sequential<T>& net, const std::string& prefix = "") {
  std::vector<ParamSlot<T>> out;
  net.for_each_param(
      [&](const std::string& name, std::span<T> v, std::span<T> g) {
        out.push_back({name, v, g});
      },
      prefix);
  return out;
}

// Central-difference check of every entry of `params`. `objective(true)` must
// zero the gradients, run forward and backward, and return the loss;
// `objective(false)` only evaluates the loss. Relative error per entry is
// |ga - gn| / max(|ga|, |gn|, floor). Raise `floor` when some entries have a
// true gradient of zero (e.g. biases feeding a batchnorm in training mode).
template <class Objective>
GradCheckResult check_gradients(const std::vector<ParamSlot<double>>& params,
                                Objective&& objective, double h, double floor = 1e-8) {
  if (!(h >= 1e-4 && h <= 1e-2)) {
    throw ParameterError("gradient check step must lie in [1e-4, 1e-2], got " +
                         std::to_string(h));
  }
  const double base = objective(true);
  if (!std::isfinite(base)) throw DivergenceError("gradient check: non-finite loss at base point");

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  GradCheckResult result;
  for (std::size_t s = 0; s < params.size(); ++s) {
    const auto& p = params[s];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double saved = p.value[k];
      p.value[k] = saved + h;
      const double up = objective(false);
      p.value[k] = saved - h;
      const double down = objective(false);
      p.value[k] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw DivergenceError("gradient check: non-finite loss perturbing " + p.name + "[" +
                              std::to_string(k) + "]");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[s][k];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (result.checked == 0 || rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = p.name;
        result.worst_index = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
      ++result.checked;
    }
  }
  return result;
}

enum class CheckLoss { quadratic, sigmoid_xent };

// Loss used by the layer-stack convenience check: 0.5 * sum (y - t)^2, or the
// binary cross-entropy of sigmoid(y) against t computed from the logits.
template <class T>
T check_loss(const Matrix<T>& y, const Matrix<T>& t, CheckLoss kind, Matrix<T>* grad) {
  if (y.rows() != t.rows() || y.cols() != t.cols()) throw ShapeError("check loss: label shape");
  if (grad) *grad = Matrix<T>(y.rows(), y.cols());
  T loss = T(0);
  for (std::size_t k = 0; k < y.size(); ++k) {
    const T z = y.data()[k], target = t.data()[k];
    if (kind == CheckLoss::quadratic) {
      loss += T(0.5) * (z - target) * (z - target);
      if (grad) grad->data()[k] = z - target;
    } else {
      const T softplus = std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z)));
      loss += softplus - target * z;
      if (grad) grad->data()[k] = sigmoid(z) - target;
    }
  }
  return loss;
}

// Gradient check of a layer stack in 64-bit arithmetic. Dropout must be
// inactive: a train-mode stack with a non-zero dropout rate is rejected.
template <class T>
GradCheckResult gradient_check(const Sequential<T>& model, const Matrix<T>& input,
                               const Matrix<T>& labels, CheckLoss kind, double h,
                               Mode mode = Mode::train) {
  if (mode == Mode::train && model.has_active_dropout()) {
    throw ContractError("gradient check requires deterministic mode: dropout is active");
  }
  Sequential<double> net = model.template cast<double>();
  const Matrix<double> x = input.template cast<double>();
  const Matrix<double> t = labels.template cast<double>();
  auto params = collect_params(net);
  auto objective = [&](bool with_grad) {
    if (with_grad) net.zero_grad();
    const Matrix<double> y = net.forward(x, mode);
    Matrix<double> g;
    const double loss = check_loss(y, t, kind, with_grad ? &g : nullptr);
    if (with_grad) net.backward(g);
    return loss;
  };
  return check_gradients(params, objective, h);
}

}  // namespace shopmatch
