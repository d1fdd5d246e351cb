#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "shopmatch/ndcore/layers.hpp"

namespace shopmatch {

template <class T>
using Layer = std::variant<Dense<T>, BatchNorm<T>, Dropout<T>, Relu<T>, Sigmoid<T>>;

enum class LayerKind : std::uint8_t { dense = 0, batchnorm = 1, dropout = 2, relu = 3, sigmoid = 4 };

template <class T>
LayerKind kind_of(const Layer<T>& layer) {
  return static_cast<LayerKind>(layer.index());
}

// A plain layer stack.
template <class T>
class Sequential {
 public:
  Sequential() = default;

  Sequential& add(Layer<T> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  std::vector<Layer<T>>& layers() { return layers_; }
  const std::vector<Layer<T>>& layers() const { return layers_; }
  bool empty() const { return layers_.empty(); }

  void init(Rng& rng) {
    for (auto& l : layers_) {
      if (auto* d = std::get_if<Dense<T>>(&l)) d->init(rng);
    }
  }

  Matrix<T> forward(const Matrix<T>& x, Mode mode, Rng* rng = nullptr) {
    Matrix<T> h = x;
    for (auto& l : layers_) {
      h = std::visit(
          [&](auto& layer) {
            using L = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<L, Dropout<T>>) {
              return layer.forward(h, mode, rng);
            } else {
              return layer.forward(h, mode);
            }
          },
          l);
    }
    return h;
  }

  // Infer-mode forward without touching any cache; safe to call concurrently.
  Matrix<T> predict(const Matrix<T>& x) const {
    Matrix<T> h = x;
    for (const auto& l : layers_) {
      h = std::visit([&](const auto& layer) { return layer.predict(h); }, l);
    }
    return h;
  }

  Matrix<T> backward(const Matrix<T>& dy) {
    Matrix<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      g = std::visit([&](auto& layer) { return layer.backward(g); }, *it);
    }
    return g;
  }

  void zero_grad() {
    for (auto& l : layers_) {
      std::visit(
          [](auto& layer) {
            if constexpr (requires { layer.zero_grad(); }) layer.zero_grad();
          },
          l);
    }
  }

  // f(name, values, grads) for every trainable tensor, in layer order.
  template <class F>
  void for_each_param(F&& f, const std::string& prefix = "") {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](auto& layer) {
            if constexpr (requires { layer.zero_grad(); }) {
              layer.for_each_param(prefix + std::to_string(i) + ".", f);
            }
          },
          layers_[i]);
    }
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for_each_param([&](const std::string&, std::span<T> v, std::span<T>) { n += v.size(); });
    return n;
  }

  bool has_active_dropout() const {
    for (const auto& l : layers_) {
      if (const auto* d = std::get_if<Dropout<T>>(&l); d && d->rate > 0.0) return true;
    }
    return false;
  }

  void set_dropout(double rate) {
    for (auto& l : layers_) {
      if (auto* d = std::get_if<Dropout<T>>(&l)) d->rate = rate;
    }
  }

  std::size_t input_dim() const {
    for (const auto& l : layers_) {
      if (const auto* d = std::get_if<Dense<T>>(&l)) return d->in_dim();
      if (const auto* b = std::get_if<BatchNorm<T>>(&l)) return b->width();
    }
    return 0;
  }

  std::size_t output_dim() const {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
      if (const auto* d = std::get_if<Dense<T>>(&*it)) return d->out_dim();
      if (const auto* b = std::get_if<BatchNorm<T>>(&*it)) return b->width();
    }
    return 0;
  }

  template <class U>
  Sequential<U> cast() const {
    Sequential<U> out;
    for (const auto& l : layers_) {
      out.add(std::visit([](const auto& layer) -> Layer<U> { return layer.template cast<U>(); }, l));
    }
    return out;
  }

 private:
  std::vector<Layer<T>> layers_;
};

}  // namespace shopmatch
