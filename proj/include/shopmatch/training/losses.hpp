#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "shopmatch/errors.hpp"
#include "shopmatch/ndcore/layers.hpp"
#include "shopmatch/ndcore/matrix.hpp"

namespace shopmatch {

// -sum[y log p + (1 - y) log(1 - p)] over probabilities strictly inside (0, 1).
template <class T>
double xent_pair_loss(std::span<const T> p, std::span<const T> y) {
  if (p.size() != y.size()) throw ShapeError("xent: " + std::to_string(p.size()) + " probabilities, " +
                                             std::to_string(y.size()) + " labels");
  double loss = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = p[k];
    if (!(pk > 0.0 && pk < 1.0)) {
      throw DomainError("xent: probability " + std::to_string(pk) + " outside (0,1) at " + std::to_string(k));
    }
    loss -= y[k] * std::log(pk) + (1.0 - y[k]) * std::log1p(-pk);
  }
  return loss;
}

// The same loss evaluated from logits p = sigmoid(z), which stays finite for
// saturated scores. Writes dL/dz into `grad` when it is non-empty.
template <class T>
double xent_logit_loss(std::span<const T> z, std::span<const T> y, std::span<T> grad = {}) {
  if (z.size() != y.size()) throw ShapeError("xent: logits and labels differ in length");
  double loss = 0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double zk = z[k];
    loss += std::max(zk, 0.0) + std::log1p(std::exp(-std::abs(zk))) - y[k] * zk;
    if (!grad.empty()) grad[k] = static_cast<T>(1.0 / (1.0 + std::exp(-zk)) - y[k]);
  }
  return loss;
}

template <class T>
struct TripletGrad {
  std::vector<T> query;
  std::vector<T> positive;
  Matrix<T> negatives;
};

// sum_k sigmoid(qf . (af_neg_k - af_pos)) with one negative per row of af_negs.
template <class T>
double triplet_loss(std::span<const T> qf, std::span<const T> af_pos, const Matrix<T>& af_negs,
                    TripletGrad<T>* grad = nullptr) {
  if (af_negs.rows() == 0) throw ParameterError("triplet loss needs at least one negative");
  if (af_pos.size() != qf.size() || af_negs.cols() != qf.size()) {
    throw ShapeError("triplet loss: feature lengths differ");
  }
  const double pos = dot(qf, af_pos);
  if (grad) {
    grad->query.assign(qf.size(), T(0));
    grad->positive.assign(qf.size(), T(0));
    grad->negatives = Matrix<T>(af_negs.rows(), qf.size());
  }
  double loss = 0;
  for (std::size_t k = 0; k < af_negs.rows(); ++k) {
    const double u = static_cast<double>(dot(qf, af_negs.row(k))) - pos;
    const double s = 1.0 / (1.0 + std::exp(-u));
    loss += s;
    if (grad) {
      const T ds = static_cast<T>(s * (1.0 - s));
      const auto an = af_negs.row(k);
      auto gn = grad->negatives.row(k);
      for (std::size_t c = 0; c < qf.size(); ++c) {
        grad->query[c] += ds * (an[c] - af_pos[c]);
        grad->positive[c] -= ds * qf[c];
        gn[c] = ds * qf[c];
      }
    }
  }
  return loss;
}

// Categorical cross-entropy per row of `logits`; labels are 1-based and 0
// marks a missing label, which contributes nothing.
template <class T>
double attribute_xent(const Matrix<T>& logits, std::span<const std::uint16_t> labels,
                      Matrix<T>* grad = nullptr) {
  if (labels.size() != logits.rows()) throw ShapeError("attribute xent: one label per row expected");
  if (grad) *grad = Matrix<T>(logits.rows(), logits.cols());
  double loss = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto label = labels[i];
    if (label == 0) continue;
    if (label > logits.cols()) {
      throw DataError("attribute label " + std::to_string(label) + " exceeds cardinality " +
                      std::to_string(logits.cols()));
    }
    const auto z = logits.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0;
    for (auto v : z) sum += std::exp(v - mx);
    const double log_norm = mx + std::log(sum);
    loss += log_norm - z[label - 1];
    if (grad) {
      auto g = grad->row(i);
      for (std::size_t c = 0; c < z.size(); ++c) g[c] = static_cast<T>(std::exp(z[c] - log_norm));
      g[label - 1] -= T(1);
    }
  }
  return loss;
}

}  // namespace shopmatch
