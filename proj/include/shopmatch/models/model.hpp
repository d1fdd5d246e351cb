#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "shopmatch/errors.hpp"
#include "shopmatch/features/store.hpp"
#include "shopmatch/models/variant.hpp"
#include "shopmatch/ndcore/sequential.hpp"

namespace shopmatch {

// Layer widths. Defaults are the desk-scale configuration; the production
// network uses hidden {2048, 2048} and feature_dim 128 on convolutional input.
struct ModelConfig {
  std::size_t input_dim = 64;                    // query (and title) input width
  std::vector<std::size_t> hidden_widths = {256, 256};
  std::size_t feature_dim = 32;                  // d, equal to the article feature width
  double dropout_rate = 0.5;
  std::vector<std::size_t> head_widths = {256, 256};
  std::vector<AttributeSpec> attributes;         // attribute heads (siamese only)

  bool operator==(const ModelConfig&) const = default;
};

// All trainable state of one variant. Stacks a variant does not use stay empty.
template <class T>
struct Model {
  VariantSpec variant{};
  ModelConfig config;
  Sequential<T> encoder;    // query leg, f(.|theta)
  Sequential<T> right_leg;  // article leg from title images, f(.|gamma)
  Sequential<T> head;       // batchnorm -> dense/relu stack -> dense(1); emits the logit
  T linear_bias = T(0);
  T grad_linear_bias = T(0);
  std::vector<Sequential<T>> left_attribute_heads;
  std::vector<Sequential<T>> right_attribute_heads;

  template <class F>
  void for_each_param(F&& f) {
    encoder.for_each_param(f, "encoder.");
    right_leg.for_each_param(f, "right_leg.");
    head.for_each_param(f, "head.");
    if (variant.has_linear_bias()) {
      f(std::string("linear_bias"), std::span<T>(&linear_bias, 1),
        std::span<T>(&grad_linear_bias, 1));
    }
    for (std::size_t a = 0; a < left_attribute_heads.size(); ++a) {
      left_attribute_heads[a].for_each_param(f, "left_attr" + std::to_string(a) + ".");
    }
    for (std::size_t a = 0; a < right_attribute_heads.size(); ++a) {
      right_attribute_heads[a].for_each_param(f, "right_attr" + std::to_string(a) + ".");
    }
  }

  void zero_grad() {
    encoder.zero_grad();
    right_leg.zero_grad();
    head.zero_grad();
    grad_linear_bias = T(0);
    for (auto& h : left_attribute_heads) h.zero_grad();
    for (auto& h : right_attribute_heads) h.zero_grad();
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for_each_param([&](const std::string&, std::span<T> v, std::span<T>) { n += v.size(); });
    return n;
  }

  void set_dropout(double rate) {
    encoder.set_dropout(rate);
    right_leg.set_dropout(rate);
  }

  template <class U>
  Model<U> cast() const {
    Model<U> m;
    m.variant = variant;
    m.config = config;
    m.encoder = encoder.template cast<U>();
    m.right_leg = right_leg.template cast<U>();
    m.head = head.template cast<U>();
    m.linear_bias = static_cast<U>(linear_bias);
    for (const auto& h : left_attribute_heads) m.left_attribute_heads.push_back(h.template cast<U>());
    for (const auto& h : right_attribute_heads) {
      m.right_attribute_heads.push_back(h.template cast<U>());
    }
    return m;
  }
};

template <class T>
Sequential<T> build_encoder(const ModelConfig& cfg) {
  if (cfg.hidden_widths.empty()) throw ConfigError("encoder needs at least one hidden layer");
  Sequential<T> net;
  std::size_t prev = cfg.input_dim;
  for (std::size_t w : cfg.hidden_widths) {
    net.add(Dense<T>(prev, w)).add(Relu<T>{}).add(Dropout<T>(cfg.dropout_rate));
    prev = w;
  }
  net.add(Dense<T>(prev, cfg.feature_dim));
  return net;
}

// Matching head on concat(query feature, article feature).
template <class T>
Sequential<T> build_head(std::size_t feature_dim, const std::vector<std::size_t>& widths) {
  Sequential<T> net;
  net.add(BatchNorm<T>(2 * feature_dim));
  std::size_t prev = 2 * feature_dim;
  for (std::size_t w : widths) {
    net.add(Dense<T>(prev, w)).add(Relu<T>{});
    prev = w;
  }
  net.add(Dense<T>(prev, 1));
  return net;
}

// Builds and initializes the parameters of a registry variant.
template <class T = float>
Model<T> make_model(const VariantSpec& variant, const ModelConfig& cfg, Rng& init) {
  validate_variant(variant);
  Model<T> m;
  m.variant = variant;
  m.config = cfg;
  if (variant.has_encoder()) {
    m.encoder = build_encoder<T>(cfg);
    m.encoder.init(init);
  }
  if (variant.has_right_leg()) {
    m.right_leg = build_encoder<T>(cfg);
    m.right_leg.init(init);
    if (cfg.attributes.empty()) throw ConfigError("siamese variant needs attribute definitions");
    for (int leg = 0; leg < 2; ++leg) {
      auto& heads = leg == 0 ? m.left_attribute_heads : m.right_attribute_heads;
      for (const auto& attr : cfg.attributes) {
        Sequential<T> h;
        h.add(Dense<T>(cfg.feature_dim, attr.cardinality));
        h.init(init);
        heads.push_back(std::move(h));
      }
    }
  } else {
    m.config.attributes.clear();
  }
  if (variant.has_head()) {
    m.head = build_head<T>(cfg.feature_dim, cfg.head_widths);
    m.head.init(init);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scoring primitives.

// f(q|theta) for a batch of query inputs (one per row).
template <class T>
Matrix<T> encode_query(Model<T>& model, const Matrix<T>& queries, Mode mode, Rng* rng = nullptr) {
  if (model.encoder.empty()) {
    throw ConfigError("variant '" + std::string(to_string(model.variant.name)) +
                      "' has no query encoder");
  }
  if (queries.cols() != model.config.input_dim) {
    throw ShapeError("encode_query: input width " + std::to_string(queries.cols()) +
                     ", expected " + std::to_string(model.config.input_dim));
  }
  return model.encoder.forward(queries, mode, rng);
}

template <class T>
std::vector<T> encode_query(const Model<T>& model, std::span<const T> query) {
  if (model.encoder.empty()) throw ConfigError("variant has no query encoder");
  if (query.size() != model.config.input_dim) {
    throw ShapeError("encode_query: input length " + std::to_string(query.size()) +
                     ", expected " + std::to_string(model.config.input_dim));
  }
  Matrix<T> q(1, query.size(), std::vector<T>(query.begin(), query.end()));
  const auto f = model.encoder.predict(q);
  return {f.values().begin(), f.values().end()};
}

// Row i of the result is [qf.row(i), af.row(i)].
template <class T>
Matrix<T> concat_pairs(const Matrix<T>& qf, const Matrix<T>& af) {
  if (qf.rows() != af.rows() || qf.cols() != af.cols()) {
    throw ShapeError("pair features: " + std::to_string(qf.rows()) + "x" +
                     std::to_string(qf.cols()) + " vs " + std::to_string(af.rows()) + "x" +
                     std::to_string(af.cols()));
  }
  const std::size_t d = qf.cols();
  Matrix<T> x(qf.rows(), 2 * d);
  for (std::size_t i = 0; i < qf.rows(); ++i) {
    std::copy(qf.row(i).begin(), qf.row(i).end(), x.row(i).begin());
    std::copy(af.row(i).begin(), af.row(i).end(), x.row(i).begin() + static_cast<std::ptrdiff_t>(d));
  }
  return x;
}

// Head logits for row-paired query and article features.
template <class T>
Matrix<T> head_logits(Model<T>& model, const Matrix<T>& qf, const Matrix<T>& af, Mode mode) {
  if (model.head.empty()) throw ConfigError("variant has no matching head");
  return model.head.forward(concat_pairs(qf, af), mode);
}

// p_ij in (0,1) from the non-linear matching head.
template <class T>
std::vector<T> match_nonlinear(const Model<T>& model, const Matrix<T>& qf, const Matrix<T>& af) {
  if (model.head.empty()) throw ConfigError("variant has no matching head");
  if (qf.cols() != model.config.feature_dim) {
    throw ShapeError("match_nonlinear: feature width " + std::to_string(qf.cols()) +
                     ", expected " + std::to_string(model.config.feature_dim));
  }
  const auto z = model.head.predict(concat_pairs(qf, af));
  std::vector<T> p(z.rows());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(z(i, 0));
  return p;
}

template <class T>
T match_nonlinear(const Model<T>& model, std::span<const T> qf, std::span<const T> af) {
  if (qf.size() != af.size()) throw ShapeError("match_nonlinear: feature lengths differ");
  Matrix<T> q(1, qf.size(), std::vector<T>(qf.begin(), qf.end()));
  Matrix<T> a(1, af.size(), std::vector<T>(af.begin(), af.end()));
  return match_nonlinear(model, q, a)[0];
}

template <class T>
T match_linear(std::span<const T> qf, std::span<const T> af, T bias) {
  return sigmoid(dot(qf, af) + bias);
}

template <class T>
T score_static(std::span<const T> qf_static, std::span<const T> af) {
  return dot(qf_static, af);
}

// Row-wise softmax.
template <class T>
Matrix<T> softmax_rows(const Matrix<T>& logits) {
  Matrix<T> p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const T mx = *std::max_element(z.begin(), z.end());
    T sum = T(0);
    for (std::size_t c = 0; c < z.size(); ++c) {
      p(i, c) = std::exp(z[c] - mx);
      sum += p(i, c);
    }
    for (std::size_t c = 0; c < z.size(); ++c) p(i, c) /= sum;
  }
  return p;
}

template <class T>
struct SiameseOutput {
  Matrix<T> query_features;
  Matrix<T> article_features;
  std::vector<Matrix<T>> left_attribute_logits;   // one matrix per attribute
  std::vector<Matrix<T>> right_attribute_logits;
};

// Both legs of the siamese model. The legs share no parameters.
template <class T>
SiameseOutput<T> siamese_forward(Model<T>& model, const Matrix<T>& queries,
                                 const Matrix<T>& title_images, Mode mode, Rng* rng = nullptr) {
  if (model.right_leg.empty()) {
    throw ConfigError("variant '" + std::string(to_string(model.variant.name)) +
                      "' has no article leg");
  }
  if (title_images.cols() != model.config.input_dim) {
    throw ShapeError("siamese_forward: title input width " + std::to_string(title_images.cols()));
  }
  SiameseOutput<T> out;
  out.query_features = encode_query(model, queries, mode, rng);
  out.article_features = model.right_leg.forward(title_images, mode, rng);
  for (auto& h : model.left_attribute_heads) {
    out.left_attribute_logits.push_back(h.forward(out.query_features, mode));
  }
  for (auto& h : model.right_attribute_heads) {
    out.right_attribute_logits.push_back(h.forward(out.article_features, mode));
  }
  return out;
}

}  // namespace shopmatch
