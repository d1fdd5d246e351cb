#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "shopmatch/models/model.hpp"
#include "shopmatch/synth/dataset.hpp"

namespace shopmatch {

inline constexpr std::size_t kScoringChunk = 50;

// Ranking scores for one model. Non-linear variants score with the head's
// logit and the others with the raw dot product; both are monotone in the
// matching probability, so rankings equal those of the probabilities.
class Scorer {
 public:
  explicit Scorer(const Model<float>& model) : model_(&model) {}

  const Model<float>& model() const { return *model_; }

  // Encoder output, or the static query features for variants without encoder.
  Tensor2 query_features(const QuerySet& queries) const;
  // Static article features, or the article leg's output on title images.
  Tensor2 article_features(const Catalogue& catalogue) const;

  // Scores of one query feature row against every row of `af`, evaluated
  // `chunk` articles at a time. Chunking never changes a score.
  std::vector<float> score(std::span<const float> qf, const Tensor2& af,
                           std::size_t chunk = kScoringChunk) const;

 private:
  const Model<float>* model_;
};

// Query and article features prepared once for repeated scoring.
struct ScoringView {
  const Scorer* scorer = nullptr;
  Tensor2 queries;
  Tensor2 articles;

  std::vector<float> scores(std::size_t query, std::size_t chunk = kScoringChunk) const {
    return scorer->score(queries.row(query), articles, chunk);
  }
};

ScoringView prepare_view(const Scorer& scorer, const QuerySet& queries, const Catalogue& catalogue);

// Plain dot products of query and article features (the first stage of the
// two-stage pipeline).
std::vector<float> dot_scores(std::span<const float> qf, const Tensor2& af);

struct RankEntry {
  std::uint64_t query_id = 0;
  std::uint64_t article_id = 0;
  std::size_t rank = 0;

  bool operator==(const RankEntry&) const = default;
};

struct RankReport {
  std::vector<RankEntry> entries;

  std::vector<std::size_t> ranks() const;
  // `query_id<TAB>article_id<TAB>rank` lines.
  std::string tsv() const;
};

// 1 + #{score > s_pos} + #{score == s_pos and id < id_pos}.
std::size_t rank_of(std::span<const float> scores, std::span<const std::uint64_t> ids, std::size_t positive);

// Rank of every (query, positive) pair against all articles of the view.
// Positives index rows of the view's article features. Queries are split
// across `threads` workers (0 picks the hardware concurrency).
RankReport rank_view(const ScoringView& view, const std::vector<std::vector<std::size_t>>& positives,
                     std::span<const std::uint64_t> query_ids, std::span<const std::uint64_t> article_ids,
                     std::size_t chunk = kScoringChunk, std::size_t threads = 0);

// Throws DataError when a positive is not in the catalogue.
RankReport rank_all(const Scorer& scorer, const QuerySet& queries, const Catalogue& catalogue,
                    std::size_t chunk = kScoringChunk, std::size_t threads = 0);

struct Metrics {
  double top1 = 0, top5 = 0, top10 = 0, top20 = 0, top50 = 0;
  double top1pct = 0;
  std::size_t top1pct_k = 0;  // ceil(M / 100)
  double average_rank = 0;
  std::size_t median_rank = 0;  // lower middle element for even counts
};

// Throws ContractError on an empty rank list.
Metrics compute_metrics(std::span<const std::size_t> ranks, std::size_t articles);

std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& variant, const Metrics& m);

// Top-S articles by the first view's dot products, reranked by the second
// view's scores (ties by ascending id in both stages). Throws ParameterError
// unless 1 <= S <= M.
std::vector<std::size_t> two_stage_rank(const ScoringView& first, const ScoringView& second, std::size_t query,
                                        std::span<const std::uint64_t> article_ids, std::size_t shortlist);

struct TwoStageReport {
  RankReport ranks;       // rank in the full two-stage ordering
  double recall = 0;      // fraction of pairs whose positive made the shortlist
};

// Every (query, positive) pair ranked by the two-stage ordering: the reranked
// shortlist followed by the remaining articles in first-stage order.
TwoStageReport two_stage_rank_all(const ScoringView& first, const ScoringView& second,
                                  const std::vector<std::vector<std::size_t>>& positives,
                                  std::span<const std::uint64_t> query_ids,
                                  std::span<const std::uint64_t> article_ids, std::size_t shortlist);

struct TimingReport {
  std::size_t n_queries = 0;
  std::size_t articles = 0;
  std::size_t chunk = 0;
  std::size_t repetitions = 0;
  double wall_seconds = 0;  // mean over repetitions
  double per_query_ms = 0;
};

// Mean wall time to encode n queries and score each against every article,
// after one warm-up pass. Query rows are reused cyclically when n exceeds
// the query set.
std::vector<TimingReport> timing_benchmark(const Scorer& scorer, const QuerySet& queries,
                                           const Catalogue& catalogue, std::span<const std::size_t> n_queries,
                                           std::size_t chunk = kScoringChunk, std::size_t repetitions = 10);

std::string timing_csv(const std::vector<TimingReport>& reports);

}  // namespace shopmatch
