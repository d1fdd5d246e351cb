#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace shopmatch {

enum class VariantName : std::uint8_t {
  static_linear = 0,
  static_nonlinear = 1,
  nonlinear = 2,
  linear = 3,
  ranking = 4,
  siamese = 5,
  studio2shop = 6,
};

enum class LossKind : std::uint8_t { none = 0, cross_entropy = 1, triplet = 2, triplet_attributes = 3 };
enum class QueryFeatures : std::uint8_t { static_features = 0, learned = 1 };
enum class Matching : std::uint8_t { linear = 0, nonlinear = 1 };

// Which article-side representation a variant matches against: the
// fashion-specific static features, the generic static features, or a
// representation learned by a second encoder from the article's title image.
enum class ArticleFeatures : std::uint8_t { fdna = 0, generic = 1, learned = 2 };

struct VariantSpec {
  VariantName name;
  LossKind loss;
  QueryFeatures query_features;
  Matching matching;
  ArticleFeatures article_features;

  bool trainable() const { return loss != LossKind::none; }
  bool has_encoder() const { return query_features == QueryFeatures::learned; }
  bool has_head() const { return matching == Matching::nonlinear; }
  bool has_right_leg() const { return article_features == ArticleFeatures::learned; }
  // Linear matching trained with cross-entropy carries a scalar bias.
  bool has_linear_bias() const {
    return matching == Matching::linear && loss == LossKind::cross_entropy;
  }

  bool operator==(const VariantSpec&) const = default;
};

// The seven architectures under comparison, one row each.
const std::array<VariantSpec, 7>& variant_registry();

// Throws ConfigError for an unknown name.
VariantSpec variant_by_name(std::string_view name);

// Throws ConfigError unless the combination is a registry row.
void validate_variant(const VariantSpec& spec);

std::string_view to_string(VariantName name);
std::string_view to_string(LossKind loss);
std::string_view to_string(ArticleFeatures features);

}  // namespace shopmatch
