#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "shopmatch/ndcore/rng.hpp"

namespace shopmatch {

using PositiveLists = std::vector<std::vector<std::size_t>>;

// B queries, each with K article slots: the query's annotated positives first
// (label 1), then negatives (label 0). Slot (i, j) is at i * per_query + j.
struct PairBatch {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> articles;
  std::vector<float> labels;
  std::size_t per_query = 0;

  std::size_t size() const { return queries.size(); }
};

// One positive and K negatives per query; negatives at i * per_query + k.
struct TripletBatch {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  std::size_t per_query = 0;

  std::size_t size() const { return queries.size(); }
};

// `count` distinct rows of [0, catalogue_size) that are not in `exclude`,
// by Floyd's sampling over the complement.
std::vector<std::size_t> sample_negatives(std::span<const std::size_t> exclude,
                                          std::size_t catalogue_size, std::size_t count, Rng& rng);

// Throws ConfigError when a query has more than K positives or the catalogue
// is smaller than K, DataError when a query has no positive.
PairBatch build_pair_batch(std::span<const std::size_t> queries, const PositiveLists& positives,
                           std::size_t catalogue_size, std::size_t per_query, Rng& rng);

TripletBatch build_triplet_batch(std::span<const std::size_t> queries, const PositiveLists& positives,
                                 std::size_t catalogue_size, std::size_t negatives, Rng& rng);

// In-place Fisher-Yates shuffle.
void shuffle(std::vector<std::size_t>& v, Rng& rng);

}  // namespace shopmatch
