#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "shopmatch/models/model.hpp"
#include "shopmatch/training/losses.hpp"

namespace shopmatch {

// Batch tensors for the pair (cross-entropy) objective. `queries` holds one
// row per query: encoder inputs, or static query features for variants
// without an encoder. `articles` holds per_query article feature rows per query.
template <class T>
struct PairInputs {
  Matrix<T> queries;
  Matrix<T> articles;
  std::vector<T> labels;
  std::size_t per_query = 0;
};

// Triplet objective inputs. For the siamese variant positives/negatives are
// title-image inputs of the article leg and the label vectors are filled
// (rows x attributes, 1-based, 0 = missing); otherwise they are static features.
template <class T>
struct TripletInputs {
  Matrix<T> queries;
  Matrix<T> positives;
  Matrix<T> negatives;
  std::size_t per_query = 0;
  std::vector<std::uint16_t> query_labels;
  std::vector<std::uint16_t> article_labels;  // positives then negatives
};

template <class T>
Matrix<T> gather_rows(const Tensor2& src, std::span<const std::size_t> rows) {
  Matrix<T> out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = src.row(rows[i]);
    std::transform(r.begin(), r.end(), out.row(i).begin(), [](float v) { return static_cast<T>(v); });
  }
  return out;
}

namespace detail {

template <class T>
Matrix<T> row_block(const Matrix<T>& m, std::size_t begin, std::size_t count) {
  Matrix<T> out(count, m.cols());
  std::copy_n(m.data() + begin * m.cols(), count * m.cols(), out.data());
  return out;
}

template <class T>
void scale_in_place(Matrix<T>& m, double s) {
  if (s == 1.0) return;
  for (auto& v : m.values()) v = static_cast<T>(v * s);
}

template <class T>
void add_in_place(Matrix<T>& acc, const Matrix<T>& m) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc.data()[k] += m.data()[k];
}

template <class T>
std::vector<std::uint16_t> label_column(const std::vector<std::uint16_t>& labels, std::size_t attrs,
                                        std::size_t a) {
  std::vector<std::uint16_t> col(labels.size() / attrs);
  for (std::size_t i = 0; i < col.size(); ++i) col[i] = labels[i * attrs + a];
  return col;
}

}  // namespace detail

// Sum of binary cross-entropies over every (query, article) slot, times
// `scale`. With `with_grad` the gradients are accumulated into the model.
template <class T>
double pair_objective(Model<T>& m, const PairInputs<T>& in, Mode mode, Rng* rng, bool with_grad,
                      double scale = 1.0) {
  const std::size_t b = in.queries.rows(), k = in.per_query;
  if (in.articles.rows() != b * k || in.labels.size() != b * k) {
    throw ShapeError("pair batch: " + std::to_string(in.articles.rows()) + " article rows for " +
                     std::to_string(b) + " queries x " + std::to_string(k));
  }
  Matrix<T> qf = m.variant.has_encoder() ? m.encoder.forward(in.queries, mode, rng) : in.queries;
  const std::size_t d = qf.cols();
  if (in.articles.cols() != d) throw ShapeError("pair batch: query and article features differ in width");
  Matrix<T> rep(b * k, d);
  for (std::size_t r = 0; r < b * k; ++r) {
    std::copy(qf.row(r / k).begin(), qf.row(r / k).end(), rep.row(r).begin());
  }
  std::vector<T> z(b * k);
  if (m.variant.has_head()) {
    const auto out = m.head.forward(concat_pairs(rep, in.articles), mode);
    std::copy(out.values().begin(), out.values().end(), z.begin());
  } else {
    for (std::size_t r = 0; r < b * k; ++r) z[r] = dot<T>(rep.row(r), in.articles.row(r)) + m.linear_bias;
  }
  std::vector<T> dz(with_grad ? z.size() : 0);
  const double loss = scale * xent_logit_loss<T>(z, in.labels, dz);
  if (!with_grad) return loss;
  for (auto& g : dz) g = static_cast<T>(g * scale);

  Matrix<T> drep(b * k, d);
  if (m.variant.has_head()) {
    const auto dx = m.head.backward(Matrix<T>(b * k, 1, dz));
    for (std::size_t r = 0; r < b * k; ++r) std::copy_n(dx.row(r).begin(), d, drep.row(r).begin());
  } else {
    for (std::size_t r = 0; r < b * k; ++r) {
      for (std::size_t c = 0; c < d; ++c) drep(r, c) = dz[r] * in.articles(r, c);
      m.grad_linear_bias += dz[r];
    }
  }
  if (m.variant.has_encoder()) {
    Matrix<T> dqf(b, d);
    for (std::size_t r = 0; r < b * k; ++r) {
      for (std::size_t c = 0; c < d; ++c) dqf(r / k, c) += drep(r, c);
    }
    m.encoder.backward(dqf);
  }
  return loss;
}

// Triplet ranking loss summed over queries and negatives; for the siamese
// variant the attribute cross-entropies of both legs are added with unit weight.
template <class T>
double triplet_objective(Model<T>& m, const TripletInputs<T>& in, Mode mode, Rng* rng, bool with_grad,
                         double scale = 1.0) {
  const std::size_t b = in.queries.rows(), k = in.per_query;
  if (k == 0) throw ParameterError("triplet batch needs at least one negative");
  if (in.positives.rows() != b || in.negatives.rows() != b * k) {
    throw ShapeError("triplet batch: positive/negative rows do not match " + std::to_string(b) + " queries");
  }
  const bool siamese = m.variant.has_right_leg();
  const Matrix<T> qf = m.encoder.forward(in.queries, mode, rng);
  const std::size_t d = qf.cols();

  Matrix<T> af_all;
  if (siamese) {
    Matrix<T> stacked(b + b * k, in.positives.cols());
    std::copy_n(in.positives.data(), in.positives.size(), stacked.data());
    std::copy_n(in.negatives.data(), in.negatives.size(), stacked.data() + in.positives.size());
    af_all = m.right_leg.forward(stacked, mode, rng);
  }
  const Matrix<T> ap = siamese ? detail::row_block(af_all, 0, b) : in.positives;
  const Matrix<T> an = siamese ? detail::row_block(af_all, b, b * k) : in.negatives;
  if (ap.cols() != d) throw ShapeError("triplet batch: article feature width differs from query features");

  double loss = 0;
  Matrix<T> dqf(b, d), daf(b + b * k, d);
  for (std::size_t i = 0; i < b; ++i) {
    TripletGrad<T> g;
    loss += triplet_loss<T>(qf.row(i), ap.row(i), detail::row_block(an, i * k, k), with_grad ? &g : nullptr);
    if (!with_grad) continue;
    std::copy(g.query.begin(), g.query.end(), dqf.row(i).begin());
    std::copy(g.positive.begin(), g.positive.end(), daf.row(i).begin());
    std::copy_n(g.negatives.data(), k * d, daf.row(b + i * k).begin());
  }

  detail::scale_in_place(dqf, scale);
  detail::scale_in_place(daf, scale);
  if (siamese) {
    const std::size_t attrs = m.left_attribute_heads.size();
    if (in.query_labels.size() != b * attrs || in.article_labels.size() != (b + b * k) * attrs) {
      throw ShapeError("siamese batch: attribute label counts do not match");
    }
    for (std::size_t a = 0; a < attrs; ++a) {
      Matrix<T> g;
      const auto left = m.left_attribute_heads[a].forward(qf, mode);
      loss += attribute_xent(left, detail::label_column<T>(in.query_labels, attrs, a), with_grad ? &g : nullptr);
      if (with_grad) {
        detail::scale_in_place(g, scale);
        detail::add_in_place(dqf, m.left_attribute_heads[a].backward(g));
      }
      const auto right = m.right_attribute_heads[a].forward(af_all, mode);
      loss += attribute_xent(right, detail::label_column<T>(in.article_labels, attrs, a), with_grad ? &g : nullptr);
      if (with_grad) {
        detail::scale_in_place(g, scale);
        detail::add_in_place(daf, m.right_attribute_heads[a].backward(g));
      }
    }
  }
  if (with_grad) {
    if (siamese) m.right_leg.backward(daf);
    m.encoder.backward(dqf);
  }
  return scale * loss;
}

}  // namespace shopmatch
