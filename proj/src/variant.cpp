#include "shopmatch/models/variant.hpp"

#include <algorithm>

#include "shopmatch/errors.hpp"

namespace shopmatch {

const std::array<VariantSpec, 7>& variant_registry() {
  using enum LossKind;
  static const std::array<VariantSpec, 7> rows = {{
      {VariantName::static_linear, none, QueryFeatures::static_features, Matching::linear,
       ArticleFeatures::generic},
      {VariantName::static_nonlinear, cross_entropy, QueryFeatures::static_features,
       Matching::nonlinear, ArticleFeatures::generic},
      {VariantName::nonlinear, cross_entropy, QueryFeatures::learned, Matching::nonlinear,
       ArticleFeatures::generic},
      {VariantName::linear, cross_entropy, QueryFeatures::learned, Matching::linear,
       ArticleFeatures::fdna},
      {VariantName::ranking, triplet, QueryFeatures::learned, Matching::linear,
       ArticleFeatures::fdna},
      {VariantName::siamese, triplet_attributes, QueryFeatures::learned, Matching::linear,
       ArticleFeatures::learned},
      {VariantName::studio2shop, cross_entropy, QueryFeatures::learned, Matching::nonlinear,
       ArticleFeatures::fdna},
  }};
  return rows;
}

std::string_view to_string(VariantName name) {
  switch (name) {
    case VariantName::static_linear: return "static-linear";
    case VariantName::static_nonlinear: return "static-nonlinear";
    case VariantName::nonlinear: return "nonlinear";
    case VariantName::linear: return "linear";
    case VariantName::ranking: return "ranking";
    case VariantName::siamese: return "siamese";
    case VariantName::studio2shop: return "studio2shop";
  }
  return "?";
}

std::string_view to_string(LossKind loss) {
  switch (loss) {
    case LossKind::none: return "none";
    case LossKind::cross_entropy: return "cross-entropy";
    case LossKind::triplet: return "triplet";
    case LossKind::triplet_attributes: return "triplet+attributes";
  }
  return "?";
}

std::string_view to_string(ArticleFeatures features) {
  switch (features) {
    case ArticleFeatures::fdna: return "fdna";
    case ArticleFeatures::generic: return "generic";
    case ArticleFeatures::learned: return "learned";
  }
  return "?";
}

VariantSpec variant_by_name(std::string_view name) {
  for (const auto& row : variant_registry()) {
    if (to_string(row.name) == name) return row;
  }
  std::string known;
  for (const auto& row : variant_registry()) {
    known += (known.empty() ? "" : ", ") + std::string(to_string(row.name));
  }
  throw ConfigError("unknown variant '" + std::string(name) + "' (known: " + known + ")");
}

void validate_variant(const VariantSpec& spec) {
  const auto& rows = variant_registry();
  if (std::find(rows.begin(), rows.end(), spec) == rows.end()) {
    throw ConfigError("variant '" + std::string(to_string(spec.name)) +
                      "' with loss " + std::string(to_string(spec.loss)) +
                      " does not match any known architecture");
  }
}

}  // namespace shopmatch
