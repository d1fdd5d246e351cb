#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shopmatch/ndcore/matrix.hpp"

namespace shopmatch {

// Production widths: 1536 raw article activations reduced to 128 features.
inline constexpr std::size_t kFullScaleRawDim = 1536;
inline constexpr std::size_t kFullScaleFeatureDim = 128;

// Principal directions of a sample matrix. Components are unit rows sorted by
// descending sample variance; each row's largest-magnitude entry is positive.
struct PcaModel {
  std::vector<float> mean;        // d_in
  Tensor2 components;             // d_out x d_in
  std::vector<float> explained_variance;  // d_out, sample variance (n - 1)

  std::size_t input_dim() const { return components.cols(); }
  std::size_t output_dim() const { return components.rows(); }

  static PcaModel identity(std::size_t dim);
};

// Throws ParameterError when d_out is 0 or exceeds min(rows, cols).
PcaModel pca_fit(const Tensor2& samples, std::size_t d_out);

std::vector<float> pca_transform(const PcaModel& model, std::span<const float> x);
Tensor2 pca_transform(const PcaModel& model, const Tensor2& rows);

}  // namespace shopmatch
