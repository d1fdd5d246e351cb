#include "shopmatch/eval/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "shopmatch/errors.hpp"
#include "shopmatch/kv.hpp"

namespace shopmatch {

Tensor2 Scorer::query_features(const QuerySet& queries) const {
  const auto& m = *model_;
  if (!m.variant.has_encoder()) return queries.statics.features;
  if (queries.inputs.dim() != m.config.input_dim) {
    throw ConfigError("query inputs have width " + std::to_string(queries.inputs.dim()) +
                      " but the model expects " + std::to_string(m.config.input_dim));
  }
  return m.encoder.predict(queries.inputs.features);
}

Tensor2 Scorer::article_features(const Catalogue& catalogue) const {
  const auto& m = *model_;
  if (m.variant.has_right_leg()) {
    if (catalogue.titles.dim() != m.config.input_dim) {
      throw ConfigError("title vectors have width " + std::to_string(catalogue.titles.dim()) +
                        " but the article leg expects " + std::to_string(m.config.input_dim));
    }
    return m.right_leg.predict(catalogue.titles.features);
  }
  return catalogue.features(m.variant.article_features);
}

std::vector<float> dot_scores(std::span<const float> qf, const Tensor2& af) {
  if (qf.size() != af.cols()) {
    throw ShapeError("scoring: query feature length " + std::to_string(qf.size()) + ", article features " +
                     std::to_string(af.cols()));
  }
  std::vector<float> out(af.rows());
  for (std::size_t j = 0; j < af.rows(); ++j) out[j] = dot(qf, af.row(j));
  return out;
}

std::vector<float> Scorer::score(std::span<const float> qf, const Tensor2& af, std::size_t chunk) const {
  const auto& m = *model_;
  if (!m.variant.has_head()) return dot_scores(qf, af);
  if (chunk == 0) throw ParameterError("scoring chunk must be >= 1");
  const std::size_t d = qf.size();
  if (af.cols() != d || d != m.config.feature_dim) {
    throw ShapeError("scoring: feature widths " + std::to_string(d) + "/" + std::to_string(af.cols()) +
                     ", head expects " + std::to_string(m.config.feature_dim));
  }
  std::vector<float> out(af.rows());
  Tensor2 x;
  for (std::size_t begin = 0; begin < af.rows(); begin += chunk) {
    const std::size_t n = std::min(chunk, af.rows() - begin);
    if (x.rows() != n) x = Tensor2(n, 2 * d);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = x.row(i);
      std::copy(qf.begin(), qf.end(), row.begin());
      std::copy(af.row(begin + i).begin(), af.row(begin + i).end(), row.begin() + static_cast<std::ptrdiff_t>(d));
    }
    const auto z = m.head.predict(x);
    std::copy_n(z.data(), n, out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

ScoringView prepare_view(const Scorer& scorer, const QuerySet& queries, const Catalogue& catalogue) {
  ScoringView v;
  v.scorer = &scorer;
  v.queries = scorer.query_features(queries);
  v.articles = scorer.article_features(catalogue);
  if (v.queries.cols() != v.articles.cols()) {
    throw ConfigError("query features (" + std::to_string(v.queries.cols()) + ") and article features (" +
                      std::to_string(v.articles.cols()) + ") differ in width");
  }
  return v;
}

std::vector<std::size_t> RankReport::ranks() const {
  std::vector<std::size_t> r;
  r.reserve(entries.size());
  for (const auto& e : entries) r.push_back(e.rank);
  return r;
}

std::string RankReport::tsv() const {
  std::string out;
  for (const auto& e : entries) {
    out += std::to_string(e.query_id) + '\t' + std::to_string(e.article_id) + '\t' + std::to_string(e.rank) + '\n';
  }
  return out;
}

std::size_t rank_of(std::span<const float> scores, std::span<const std::uint64_t> ids, std::size_t positive) {
  if (ids.size() != scores.size()) throw ShapeError("rank: scores and ids differ in length");
  if (positive >= scores.size()) throw DataError("rank: positive row out of range");
  const float s = scores[positive];
  const auto id = ids[positive];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && ids[j] < id)) ++rank;
  }
  return rank;
}

namespace {

template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& f) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) f(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<std::size_t> pair_offsets(const std::vector<std::vector<std::size_t>>& positives) {
  std::vector<std::size_t> offsets(positives.size() + 1, 0);
  for (std::size_t i = 0; i < positives.size(); ++i) offsets[i + 1] = offsets[i] + positives[i].size();
  return offsets;
}

// Article rows sorted by descending score, ties by ascending id.
std::vector<std::size_t> order_by_score(std::span<const float> scores, std::span<const std::uint64_t> ids,
                                        std::vector<std::size_t> rows) {
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  return rows;
}

}  // namespace

RankReport rank_view(const ScoringView& view, const std::vector<std::vector<std::size_t>>& positives,
                     std::span<const std::uint64_t> query_ids, std::span<const std::uint64_t> article_ids,
                     std::size_t chunk, std::size_t threads) {
  if (view.articles.rows() == 0) throw ContractError("rank: empty article store");
  if (positives.size() != view.queries.rows() || query_ids.size() != view.queries.rows()) {
    throw ShapeError("rank: query count mismatch");
  }
  const auto offsets = pair_offsets(positives);
  RankReport report;
  report.entries.resize(offsets.back());
  parallel_for(positives.size(), threads, [&](std::size_t q) {
    const auto scores = view.scores(q, chunk);
    for (std::size_t p = 0; p < positives[q].size(); ++p) {
      const auto row = positives[q][p];
      report.entries[offsets[q] + p] = {query_ids[q], article_ids[row], rank_of(scores, article_ids, row)};
    }
  });
  return report;
}

RankReport rank_all(const Scorer& scorer, const QuerySet& queries, const Catalogue& catalogue,
                    std::size_t chunk, std::size_t threads) {
  for (const auto& pos : queries.positives) {
    for (auto row : pos) {
      if (row >= catalogue.size()) throw DataError("positive article row " + std::to_string(row) + " not in store");
    }
  }
  const auto view = prepare_view(scorer, queries, catalogue);
  return rank_view(view, queries.positives, queries.inputs.ids, catalogue.ids(), chunk, threads);
}

Metrics compute_metrics(std::span<const std::size_t> ranks, std::size_t articles) {
  if (ranks.empty()) throw ContractError("metrics: empty rank list");
  Metrics m;
  m.top1pct_k = (articles + 99) / 100;
  const double n = static_cast<double>(ranks.size());
  auto share = [&](std::size_t k) {
    return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; })) / n;
  };
  m.top1 = share(1);
  m.top5 = share(5);
  m.top10 = share(10);
  m.top20 = share(20);
  m.top50 = share(50);
  m.top1pct = share(m.top1pct_k);
  m.average_rank = static_cast<double>(std::accumulate(ranks.begin(), ranks.end(), std::size_t{0})) / n;
  std::vector<std::size_t> sorted(ranks.begin(), ranks.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  m.median_rank = *mid;
  return m;
}

std::string metrics_csv_header() { return "variant,top1,top5,top10,top20,top50,top1pct,avg,median\n"; }

std::string metrics_csv_row(const std::string& variant, const Metrics& m) {
  std::string row = variant;
  for (double v : {m.top1, m.top5, m.top10, m.top20, m.top50, m.top1pct, m.average_rank}) {
    row += ',' + format_double(v);
  }
  return row + ',' + std::to_string(m.median_rank) + '\n';
}

std::vector<std::size_t> two_stage_rank(const ScoringView& first, const ScoringView& second, std::size_t query,
                                        std::span<const std::uint64_t> article_ids, std::size_t shortlist) {
  const std::size_t m = first.articles.rows();
  if (shortlist < 1 || shortlist > m) {
    throw ParameterError("shortlist size must lie in [1, " + std::to_string(m) + "], got " +
                         std::to_string(shortlist));
  }
  if (second.articles.rows() != m || article_ids.size() != m) throw ShapeError("two-stage: article counts differ");
  const auto coarse = dot_scores(first.queries.row(query), first.articles);
  std::vector<std::size_t> rows(m);
  std::iota(rows.begin(), rows.end(), 0);
  auto order = order_by_score(coarse, article_ids, std::move(rows));
  order.resize(shortlist);
  if (shortlist == 1) return order;
  // Only the shortlisted articles go through the second model.
  Tensor2 subset(shortlist, second.articles.cols());
  std::vector<std::uint64_t> subset_ids(shortlist);
  for (std::size_t i = 0; i < shortlist; ++i) {
    std::copy(second.articles.row(order[i]).begin(), second.articles.row(order[i]).end(), subset.row(i).begin());
    subset_ids[i] = article_ids[order[i]];
  }
  const auto fine = second.scorer->score(second.queries.row(query), subset);
  std::vector<std::size_t> local(shortlist);
  std::iota(local.begin(), local.end(), 0);
  local = order_by_score(fine, subset_ids, std::move(local));
  std::vector<std::size_t> out(shortlist);
  for (std::size_t i = 0; i < shortlist; ++i) out[i] = order[local[i]];
  return out;
}

TwoStageReport two_stage_rank_all(const ScoringView& first, const ScoringView& second,
                                  const std::vector<std::vector<std::size_t>>& positives,
                                  std::span<const std::uint64_t> query_ids,
                                  std::span<const std::uint64_t> article_ids, std::size_t shortlist) {
  const std::size_t m = first.articles.rows();
  const auto offsets = pair_offsets(positives);
  TwoStageReport out;
  out.ranks.entries.resize(offsets.back());
  std::vector<char> hit(offsets.back(), 0);
  parallel_for(positives.size(), 0, [&](std::size_t q) {
    const auto top = two_stage_rank(first, second, q, article_ids, shortlist);
    std::vector<std::size_t> position(m, 0);
    for (std::size_t i = 0; i < top.size(); ++i) position[top[i]] = i + 1;
    for (std::size_t p = 0; p < positives[q].size(); ++p) {
      const auto row = positives[q][p];
      std::size_t rank = position[row];
      if (rank == 0) {
        // Outside the shortlist: placed after it in first-stage order.
        const auto coarse = dot_scores(first.queries.row(q), first.articles);
        rank = rank_of(coarse, article_ids, row);
      } else {
        hit[offsets[q] + p] = 1;
      }
      out.ranks.entries[offsets[q] + p] = {query_ids[q], article_ids[row], rank};
    }
  });
  if (!hit.empty()) {
    out.recall = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(hit.size());
  }
  return out;
}

std::vector<TimingReport> timing_benchmark(const Scorer& scorer, const QuerySet& queries,
                                           const Catalogue& catalogue, std::span<const std::size_t> n_queries,
                                           std::size_t chunk, std::size_t repetitions) {
  if (repetitions == 0) throw ParameterError("benchmark needs at least one repetition");
  const auto& model = scorer.model();
  const Tensor2 af = scorer.article_features(catalogue);
  const Tensor2 statics = queries.statics.features;
  const std::size_t available = queries.size();
  volatile float sink = 0;
  auto run = [&](std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = i % available;
      std::vector<float> qf;
      if (model.variant.has_encoder()) {
        qf = encode_query(model, queries.inputs.features.row(row));
      } else {
        qf.assign(statics.row(row).begin(), statics.row(row).end());
      }
      const auto s = scorer.score(qf, af, chunk);
      sink = sink + *std::max_element(s.begin(), s.end());
    }
  };
  if (available == 0 && std::any_of(n_queries.begin(), n_queries.end(), [](auto n) { return n > 0; })) {
    throw DataError("benchmark: empty query set");
  }
  if (available > 0) run(1);  // warm-up

  std::vector<TimingReport> out;
  for (auto n : n_queries) {
    double total = 0;
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      run(n);
      total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    TimingReport t;
    t.n_queries = n;
    t.articles = af.rows();
    t.chunk = chunk;
    t.repetitions = repetitions;
    t.wall_seconds = total / static_cast<double>(repetitions);
    t.per_query_ms = n ? 1000.0 * t.wall_seconds / static_cast<double>(n) : 0.0;
    out.push_back(t);
  }
  return out;
}

std::string timing_csv(const std::vector<TimingReport>& reports) {
  std::string out = "n_queries,articles,chunk,repetitions,mean_seconds,per_query_ms\n";
  for (const auto& t : reports) {
    out += std::to_string(t.n_queries) + ',' + std::to_string(t.articles) + ',' + std::to_string(t.chunk) + ',' +
           std::to_string(t.repetitions) + ',' + format_double(t.wall_seconds) + ',' +
           format_double(t.per_query_ms) + '\n';
  }
  return out;
}

}  // namespace shopmatch
