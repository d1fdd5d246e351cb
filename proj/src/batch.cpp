#include "shopmatch/training/batch.hpp"

#include <algorithm>

#include "shopmatch/errors.hpp"

namespace shopmatch {

std::vector<std::size_t> sample_negatives(std::span<const std::size_t> exclude,
                                          std::size_t catalogue_size, std::size_t count, Rng& rng) {
  std::vector<std::size_t> skip(exclude.begin(), exclude.end());
  std::sort(skip.begin(), skip.end());
  skip.erase(std::unique(skip.begin(), skip.end()), skip.end());
  const std::size_t pool = catalogue_size - skip.size();
  if (count > pool) {
    throw ConfigError("cannot draw " + std::to_string(count) + " negatives from " +
                      std::to_string(pool) + " candidates");
  }
  // Floyd: for j in [pool - count, pool) draw t in [0, j]; take t unless taken, else j.
  std::vector<std::size_t> picked;
  picked.reserve(count);
  for (std::size_t j = pool - count; j < pool; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    const bool taken = std::find(picked.begin(), picked.end(), t) != picked.end();
    picked.push_back(taken ? j : t);
  }
  // Map complement indices to catalogue rows by stepping over excluded rows.
  for (auto& v : picked) {
    for (auto s : skip) {
      if (v >= s) ++v;
      else break;
    }
  }
  return picked;
}

PairBatch build_pair_batch(std::span<const std::size_t> queries, const PositiveLists& positives,
                           std::size_t catalogue_size, std::size_t per_query, Rng& rng) {
  if (catalogue_size < per_query) {
    throw ConfigError("catalogue has " + std::to_string(catalogue_size) + " articles, fewer than K = " +
                      std::to_string(per_query));
  }
  PairBatch b;
  b.per_query = per_query;
  b.queries.assign(queries.begin(), queries.end());
  b.articles.reserve(queries.size() * per_query);
  b.labels.reserve(queries.size() * per_query);
  for (auto q : queries) {
    const auto& pos = positives.at(q);
    if (pos.empty()) throw DataError("query row " + std::to_string(q) + " has no positive");
    if (pos.size() > per_query) {
      throw ConfigError("query row " + std::to_string(q) + " has " + std::to_string(pos.size()) +
                        " positives, more than K = " + std::to_string(per_query));
    }
    for (auto p : pos) b.articles.push_back(p), b.labels.push_back(1.0f);
    for (auto n : sample_negatives(pos, catalogue_size, per_query - pos.size(), rng)) {
      b.articles.push_back(n), b.labels.push_back(0.0f);
    }
  }
  return b;
}

TripletBatch build_triplet_batch(std::span<const std::size_t> queries, const PositiveLists& positives,
                                 std::size_t catalogue_size, std::size_t negatives, Rng& rng) {
  if (negatives < 1) throw ParameterError("triplet batch needs at least one negative");
  TripletBatch b;
  b.per_query = negatives;
  b.queries.assign(queries.begin(), queries.end());
  for (auto q : queries) {
    const auto& pos = positives.at(q);
    if (pos.empty()) throw DataError("query row " + std::to_string(q) + " has no positive");
    b.positives.push_back(pos[rng.below(pos.size())]);
    for (auto n : sample_negatives(pos, catalogue_size, negatives, rng)) b.negatives.push_back(n);
  }
  return b;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace shopmatch
