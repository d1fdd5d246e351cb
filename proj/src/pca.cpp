#include "shopmatch/features/pca.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>

#include "shopmatch/errors.hpp"

namespace shopmatch {

PcaModel PcaModel::identity(std::size_t dim) {
  PcaModel m;
  m.mean.assign(dim, 0.0f);
  m.components = Tensor2(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) m.components(i, i) = 1.0f;
  m.explained_variance.assign(dim, 1.0f);
  return m;
}

PcaModel pca_fit(const Tensor2& samples, std::size_t d_out) {
  const std::size_t n = samples.rows(), d_in = samples.cols();
  if (d_out == 0 || d_out > std::min(n, d_in)) {
    throw ParameterError("pca: d_out = " + std::to_string(d_out) + " must lie in [1, min(" +
                         std::to_string(n) + ", " + std::to_string(d_in) + ")]");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d_in));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_in; ++j) mean[j] += samples(i, j);
  }
  mean /= static_cast<double>(n);

  Eigen::MatrixXd centered(n, d_in);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_in; ++j) centered(i, j) = samples(i, j) - mean[j];
  }
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / denom;

  // Eigenvalues come back ascending.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw ParameterError("pca: eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();

  PcaModel model;
  model.mean.resize(d_in);
  for (std::size_t j = 0; j < d_in; ++j) model.mean[j] = static_cast<float>(mean[j]);
  model.components = Tensor2(d_out, d_in);
  model.explained_variance.resize(d_out);
  for (std::size_t c = 0; c < d_out; ++c) {
    const auto col = static_cast<Eigen::Index>(d_in - 1 - c);
    Eigen::VectorXd v = vectors.col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    for (std::size_t j = 0; j < d_in; ++j) model.components(c, j) = static_cast<float>(v[j]);
    model.explained_variance[c] = static_cast<float>(std::max(0.0, values[col]));
  }
  return model;
}

std::vector<float> pca_transform(const PcaModel& model, std::span<const float> x) {
  if (x.size() != model.input_dim()) {
    throw ShapeError("pca_transform: input length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(model.input_dim()));
  }
  std::vector<float> out(model.output_dim());
  for (std::size_t c = 0; c < out.size(); ++c) {
    double acc = 0.0;
    const auto comp = model.components.row(c);
    for (std::size_t j = 0; j < x.size(); ++j) {
      acc += static_cast<double>(comp[j]) * (static_cast<double>(x[j]) - model.mean[j]);
    }
    out[c] = static_cast<float>(acc);
  }
  return out;
}

Tensor2 pca_transform(const PcaModel& model, const Tensor2& rows) {
  Tensor2 out(rows.rows(), model.output_dim());
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    const auto y = pca_transform(model, rows.row(i));
    std::copy(y.begin(), y.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace shopmatch
