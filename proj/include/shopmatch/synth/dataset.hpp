#pragma once

#include <filesystem>
#include <vector>

#include "shopmatch/features/store.hpp"
#include "shopmatch/kv.hpp"
#include "shopmatch/models/variant.hpp"

namespace shopmatch {

// One article set with its three representations, all in the same row order:
// fashion-specific static features (carrying the attributes), generic static
// features, and raw title-image vectors for the learned article leg.
struct Catalogue {
  ArticleStore fdna;
  ArticleStore generic;
  ArticleStore titles;

  std::size_t size() const { return fdna.size(); }
  const std::vector<std::uint64_t>& ids() const { return fdna.ids; }
  const Tensor2& features(ArticleFeatures which) const;
};

// Queries with raw inputs, static features, and the catalogue rows annotated
// as matches (at least one per query).
struct QuerySet {
  QueryStore inputs;
  QueryStore statics;
  std::vector<std::vector<std::size_t>> positives;

  std::size_t size() const { return inputs.size(); }
  const Tensor2& features(QueryFeatures which) const;
  QuerySet subset(const std::vector<std::size_t>& rows) const;
};

struct Split {
  Catalogue catalogue;
  QuerySet queries;
};

struct Dataset {
  Split train;
  Split test;
  KeyValues manifest;

  double oracle_median_rank() const;
};

// Annotation lines are `query_id<TAB>article_id`.
std::string format_annotations(const QuerySet& queries, const Catalogue& catalogue);
std::vector<std::vector<std::size_t>> parse_annotations(const std::string& text,
                                                        const QueryStore& queries,
                                                        const Catalogue& catalogue);

// Reads the manifest in `dir` and every file it lists.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace shopmatch
