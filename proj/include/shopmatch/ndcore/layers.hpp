#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "shopmatch/errors.hpp"
#include "shopmatch/ndcore/matrix.hpp"
#include "shopmatch/ndcore/rng.hpp"

namespace shopmatch {

// In infer mode dropout is the identity and batchnorm uses running statistics.
enum class Mode { train, infer };

// Every layer caches what its backward pass needs during forward. Gradients
// accumulate until zero_grad().

template <class T>
struct Dense {
  Matrix<T> weight;  // out x in
  std::vector<T> bias;
  Matrix<T> grad_weight;
  std::vector<T> grad_bias;

  Dense() = default;
  Dense(std::size_t in, std::size_t out)
      : weight(out, in), bias(out), grad_weight(out, in), grad_bias(out) {}

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }

  // Uniform(-s, s) with s = sqrt(2 / fan_in).
  void init(Rng& rng) {
    const double s = std::sqrt(2.0 / static_cast<double>(in_dim()));
    for (auto& w : weight.values()) w = static_cast<T>(rng.uniform(-s, s));
    std::fill(bias.begin(), bias.end(), T{});
  }

  Matrix<T> predict(const Matrix<T>& x) const {
    if (x.cols() != in_dim()) {
      throw ShapeError("dense: input width " + std::to_string(x.cols()) + ", expected " +
                       std::to_string(in_dim()));
    }
    Matrix<T> y = matmul(x, transpose(weight));
    for (std::size_t i = 0; i < y.rows(); ++i) {
      auto r = y.row(i);
      for (std::size_t o = 0; o < r.size(); ++o) r[o] += bias[o];
    }
    return y;
  }

  Matrix<T> forward(const Matrix<T>& x, Mode /*mode*/) {
    Matrix<T> y = predict(x);
    input_ = x;
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    if (dy.rows() != input_.rows() || dy.cols() != out_dim()) {
      throw ContractError("dense: backward without matching forward");
    }
    Matrix<T> gw = matmul(transpose(dy), input_);
    auto gwv = gw.values();
    auto acc = grad_weight.values();
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += gwv[k];
    for (std::size_t i = 0; i < dy.rows(); ++i) {
      auto r = dy.row(i);
      for (std::size_t o = 0; o < r.size(); ++o) grad_bias[o] += r[o];
    }
    return matmul(dy, weight);
  }

  void zero_grad() {
    grad_weight.fill(T{});
    std::fill(grad_bias.begin(), grad_bias.end(), T{});
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "weight", weight.values(), grad_weight.values());
    f(prefix + "bias", std::span<T>(bias), std::span<T>(grad_bias));
  }

  template <class U>
  Dense<U> cast() const {
    Dense<U> d(in_dim(), out_dim());
    d.weight = weight.template cast<U>();
    for (std::size_t o = 0; o < bias.size(); ++o) d.bias[o] = static_cast<U>(bias[o]);
    return d;
  }

 private:
  Matrix<T> input_;
};

template <class T>
struct BatchNorm {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.9);
  T epsilon = T(1e-5);
  std::vector<T> grad_gamma, grad_beta;

  BatchNorm() = default;
  explicit BatchNorm(std::size_t width)
      : gamma(width, T(1)),
        beta(width, T(0)),
        running_mean(width, T(0)),
        running_var(width, T(1)),
        grad_gamma(width, T(0)),
        grad_beta(width, T(0)) {}

  std::size_t width() const { return gamma.size(); }

  Matrix<T> predict(const Matrix<T>& x) const {
    if (x.cols() != width()) {
      throw ShapeError("batchnorm: input width " + std::to_string(x.cols()) + ", expected " +
                       std::to_string(width()));
    }
    Matrix<T> y(x.rows(), x.cols());
    for (std::size_t j = 0; j < width(); ++j) {
      const T inv = T(1) / std::sqrt(running_var[j] + epsilon);
      for (std::size_t i = 0; i < x.rows(); ++i) {
        y(i, j) = gamma[j] * ((x(i, j) - running_mean[j]) * inv) + beta[j];
      }
    }
    return y;
  }

  Matrix<T> forward(const Matrix<T>& x, Mode mode) {
    const std::size_t n = x.rows(), w = x.cols();
    if (w != width()) {
      throw ShapeError("batchnorm: input width " + std::to_string(w) + ", expected " +
                       std::to_string(width()));
    }
    if (!(epsilon > T(0))) throw ContractError("batchnorm: epsilon must be > 0");
    infer_ = mode == Mode::infer;
    if (infer_) {
      rows_ = n;
      return predict(x);
    }
    Matrix<T> y(n, w);
    if (n < 2) throw ContractError("batchnorm: train mode needs a batch of at least 2 rows");
    std::vector<T> mean(w, T(0)), var(w, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) mean[j] += x(i, j);
    }
    for (auto& m : mean) m /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const T d = x(i, j) - mean[j];
        var[j] += d * d;
      }
    }
    for (auto& v : var) v /= static_cast<T>(n);
    inv_std_.assign(w, T(0));
    for (std::size_t j = 0; j < w; ++j) inv_std_[j] = T(1) / std::sqrt(var[j] + epsilon);
    xhat_ = Matrix<T>(n, w);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const T h = (x(i, j) - mean[j]) * inv_std_[j];
        xhat_(i, j) = h;
        y(i, j) = gamma[j] * h + beta[j];
      }
    }
    for (std::size_t j = 0; j < w; ++j) {
      running_mean[j] = momentum * running_mean[j] + (T(1) - momentum) * mean[j];
      running_var[j] = momentum * running_var[j] + (T(1) - momentum) * var[j];
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    const std::size_t n = dy.rows(), w = dy.cols();
    if (infer_) {
      // Running statistics are constants: the layer is a per-column affine map.
      if (n != rows_ || w != width()) throw ContractError("batchnorm: backward shape mismatch");
      Matrix<T> dx(n, w);
      for (std::size_t j = 0; j < w; ++j) {
        const T inv = T(1) / std::sqrt(running_var[j] + epsilon);
        for (std::size_t i = 0; i < n; ++i) dx(i, j) = dy(i, j) * gamma[j] * inv;
      }
      return dx;
    }
    if (n != xhat_.rows() || w != width()) {
      throw ContractError("batchnorm: backward without matching train-mode forward");
    }
    std::vector<T> sum_dh(w, T(0)), sum_dh_h(w, T(0));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        grad_gamma[j] += dy(i, j) * xhat_(i, j);
        grad_beta[j] += dy(i, j);
        const T dh = dy(i, j) * gamma[j];
        sum_dh[j] += dh;
        sum_dh_h[j] += dh * xhat_(i, j);
      }
    }
    Matrix<T> dx(n, w);
    const T nn = static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const T dh = dy(i, j) * gamma[j];
        dx(i, j) = inv_std_[j] / nn * (nn * dh - sum_dh[j] - xhat_(i, j) * sum_dh_h[j]);
      }
    }
    return dx;
  }

  void zero_grad() {
    std::fill(grad_gamma.begin(), grad_gamma.end(), T{});
    std::fill(grad_beta.begin(), grad_beta.end(), T{});
  }

  template <class F>
  void for_each_param(const std::string& prefix, F&& f) {
    f(prefix + "gamma", std::span<T>(gamma), std::span<T>(grad_gamma));
    f(prefix + "beta", std::span<T>(beta), std::span<T>(grad_beta));
  }

  template <class U>
  BatchNorm<U> cast() const {
    BatchNorm<U> b(width());
    for (std::size_t j = 0; j < width(); ++j) {
      b.gamma[j] = static_cast<U>(gamma[j]);
      b.beta[j] = static_cast<U>(beta[j]);
      b.running_mean[j] = static_cast<U>(running_mean[j]);
      b.running_var[j] = static_cast<U>(running_var[j]);
    }
    b.momentum = static_cast<U>(momentum);
    b.epsilon = static_cast<U>(epsilon);
    return b;
  }

 private:
  Matrix<T> xhat_;
  std::vector<T> inv_std_;
  bool infer_ = false;
  std::size_t rows_ = 0;
};

// Inverted dropout: kept units are scaled by 1/(1-rate) at train time.
template <class T>
struct Dropout {
  double rate = 0.0;

  Dropout() = default;
  explicit Dropout(double r) : rate(r) {
    if (!(r >= 0.0 && r < 1.0)) {
      throw ParameterError("dropout rate must lie in [0,1), got " + std::to_string(r));
    }
  }

  Matrix<T> predict(const Matrix<T>& x) const { return x; }

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Rng* rng) {
    if (mode == Mode::infer || rate == 0.0) {
      mask_ = Matrix<T>(x.rows(), x.cols(), T(1));
      return x;
    }
    if (rng == nullptr) throw ContractError("dropout: train mode requires an rng stream");
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    mask_ = Matrix<T>(x.rows(), x.cols());
    Matrix<T> y(x.rows(), x.cols());
    auto m = mask_.values();
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t k = 0; k < m.size(); ++k) {
      m[k] = rng->uniform() < rate ? T(0) : scale;
      yv[k] = xv[k] * m[k];
    }
    return y;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    if (dy.size() != mask_.size()) throw ContractError("dropout: backward shape mismatch");
    Matrix<T> dx(dy.rows(), dy.cols());
    for (std::size_t k = 0; k < dx.size(); ++k) dx.data()[k] = dy.data()[k] * mask_.data()[k];
    return dx;
  }

  template <class U>
  Dropout<U> cast() const {
    return Dropout<U>(rate);
  }

 private:
  Matrix<T> mask_;
};

template <class T>
struct Relu {
  Matrix<T> predict(const Matrix<T>& x) const {
    Matrix<T> y(x.rows(), x.cols());
    // written so NaN passes through instead of being clamped to zero
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = x.data()[k] < T(0) ? T(0) : x.data()[k];
    return y;
  }

  Matrix<T> forward(const Matrix<T>& x, Mode /*mode*/) {
    output_ = predict(x);
    return output_;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    if (dy.size() != output_.size()) throw ContractError("relu: backward shape mismatch");
    Matrix<T> dx(dy.rows(), dy.cols());
    for (std::size_t k = 0; k < dx.size(); ++k) {
      dx.data()[k] = output_.data()[k] > T(0) ? dy.data()[k] : T(0);
    }
    return dx;
  }

  template <class U>
  Relu<U> cast() const {
    return {};
  }

 private:
  Matrix<T> output_;
};

// Logistic function clamped to the open interval representable in T.
template <class T>
T sigmoid(T z) {
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  const T p = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
  return std::clamp(p, lo, hi);
}

template <class T>
struct Sigmoid {
  Matrix<T> predict(const Matrix<T>& x) const {
    Matrix<T> y(x.rows(), x.cols());
    for (std::size_t k = 0; k < y.size(); ++k) y.data()[k] = sigmoid(x.data()[k]);
    return y;
  }

  Matrix<T> forward(const Matrix<T>& x, Mode /*mode*/) {
    output_ = predict(x);
    return output_;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    if (dy.size() != output_.size()) throw ContractError("sigmoid: backward shape mismatch");
    Matrix<T> dx(dy.rows(), dy.cols());
    for (std::size_t k = 0; k < dx.size(); ++k) {
      const T p = output_.data()[k];
      dx.data()[k] = dy.data()[k] * p * (T(1) - p);
    }
    return dx;
  }

  template <class U>
  Sigmoid<U> cast() const {
    return {};
  }

 private:
  Matrix<T> output_;
};

}  // namespace shopmatch
