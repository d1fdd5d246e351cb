#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "shopmatch/eval/eval.hpp"
#include "shopmatch/training/batch.hpp"
#include "shopmatch/training/trainer.hpp"
#include "test_util.hpp"

using namespace shopmatch;

namespace {

ModelConfig eval_model() {
  ModelConfig c;
  c.hidden_widths = {32, 32};
  c.head_widths = {32, 32};
  return c;
}

Model<float> untrained(const char* name, const Split& split, std::uint64_t seed = 3) {
  const auto v = variant_by_name(name);
  Rng init(seed);
  return make_model<float>(v, adapt_config(eval_model(), v, split), init);
}

// Brute-force metrics straight from the definitions.
Metrics oracle_metrics(std::vector<std::size_t> ranks, std::size_t m) {
  Metrics out;
  const double n = static_cast<double>(ranks.size());
  auto frac = [&](std::size_t k) {
    double c = 0;
    for (auto r : ranks) c += r <= k ? 1 : 0;
    return c / n;
  };
  out.top1 = frac(1), out.top5 = frac(5), out.top10 = frac(10), out.top20 = frac(20), out.top50 = frac(50);
  out.top1pct_k = (m + 99) / 100;
  out.top1pct = frac(out.top1pct_k);
  double sum = 0;
  for (auto r : ranks) sum += static_cast<double>(r);
  out.average_rank = sum / n;
  std::sort(ranks.begin(), ranks.end());
  out.median_rank = ranks[(ranks.size() - 1) / 2];
  return out;
}

ArticleStore permute_store(const ArticleStore& s, const std::vector<std::size_t>& order) {
  ArticleStore out = s;
  const std::size_t a = s.attributes.size();
  for (std::size_t r = 0; r < order.size(); ++r) {
    out.ids[r] = s.ids[order[r]];
    const auto src = s.features.row(order[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    for (std::size_t k = 0; k < a; ++k) out.attribute_values[r * a + k] = s.attribute_values[order[r] * a + k];
  }
  return out;
}

// Full ordering by descending score, ties by ascending id.
std::vector<std::size_t> full_order(const std::vector<float>& scores, const std::vector<std::uint64_t>& ids) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return scores[x] != scores[y] ? scores[x] > scores[y] : ids[x] < ids[y];
  });
  return order;
}

}  // namespace

TEST_CASE("rank_of examples") {
  const std::vector<std::uint64_t> ids{10, 11, 12};
  const std::vector<float> s{0.9f, 0.5f, 0.7f};
  CHECK(rank_of(s, ids, 2) == 2);
  CHECK(rank_of(s, ids, 0) == 1);
  CHECK(rank_of(s, ids, 1) == 3);
  const std::vector<float> flat(3, 0.25f);
  CHECK(rank_of(flat, ids, 0) == 1);
  CHECK(rank_of(flat, ids, 2) == 3);
  const std::vector<std::uint64_t> reversed{12, 11, 10};
  CHECK(rank_of(flat, reversed, 2) == 1);
}

TEST_CASE("compute_metrics examples") {
  const std::vector<std::size_t> r{1, 3, 7};
  const auto m = compute_metrics(r, 1000);
  CHECK(m.top1 == doctest::Approx(1.0 / 3));
  CHECK(m.top5 == doctest::Approx(2.0 / 3));
  CHECK(m.top10 == 1.0);
  CHECK(m.average_rank == doctest::Approx(11.0 / 3));
  CHECK(m.median_rank == 3);
  CHECK(m.top1pct_k == 10);

  CHECK(compute_metrics(r, 50000).top1pct_k == 500);
  CHECK(compute_metrics(r, 101).top1pct_k == 2);

  const std::vector<std::size_t> ones(40, 1);
  const auto o = compute_metrics(ones, 500);
  for (double v : {o.top1, o.top5, o.top10, o.top20, o.top50, o.top1pct}) CHECK(v == 1.0);
  CHECK(o.average_rank == 1.0);
  CHECK(o.median_rank == 1);

  const std::vector<std::size_t> even{4, 1, 9, 2};
  CHECK(compute_metrics(even, 100).median_rank == 2);
  CHECK_THROWS_AS(compute_metrics(std::vector<std::size_t>{}, 10), ContractError);
}

TEST_CASE("compute_metrics agrees with a brute-force count on random rank lists") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(3000);
    std::vector<std::size_t> ranks(1 + rng.below(200));
    for (auto& r : ranks) r = 1 + rng.below(m);
    const auto got = compute_metrics(ranks, m);
    const auto want = oracle_metrics(ranks, m);
    CHECK(got.top1 == want.top1);
    CHECK(got.top5 == want.top5);
    CHECK(got.top10 == want.top10);
    CHECK(got.top20 == want.top20);
    CHECK(got.top50 == want.top50);
    CHECK(got.top1pct == want.top1pct);
    CHECK(got.top1pct_k == want.top1pct_k);
    CHECK(got.average_rank == want.average_rank);
    CHECK(got.median_rank == want.median_rank);
    CHECK(got.top1 <= got.top5);
    CHECK(got.top5 <= got.top10);
    CHECK(got.top10 <= got.top20);
    CHECK(got.top20 <= got.top50);
  }
}

TEST_CASE("rank_all matches a per-pair brute force") {
  const auto d = testutil::small_dataset();
  for (const char* name : {"studio2shop", "linear", "static-linear", "siamese"}) {
    CAPTURE(name);
    const auto model = untrained(name, d.train);
    const Scorer scorer(model);
    const auto report = rank_all(scorer, d.test.queries, d.test.catalogue);
    const auto view = prepare_view(scorer, d.test.queries, d.test.catalogue);
    const auto& ids = d.test.catalogue.ids();
    std::size_t e = 0;
    for (std::size_t q = 0; q < d.test.queries.size(); ++q) {
      const auto order = full_order(view.scores(q), ids);
      for (auto p : d.test.queries.positives[q]) {
        REQUIRE(e < report.entries.size());
        const auto& entry = report.entries[e++];
        CHECK(entry.query_id == d.test.queries.inputs.ids[q]);
        CHECK(entry.article_id == ids[p]);
        const auto pos = std::find(order.begin(), order.end(), p) - order.begin();
        CHECK(entry.rank == static_cast<std::size_t>(pos) + 1);
      }
    }
    CHECK(e == report.entries.size());
    // threading never changes the report
    CHECK(rank_all(scorer, d.test.queries, d.test.catalogue, kScoringChunk, 1).entries == report.entries);
    CHECK(rank_all(scorer, d.test.queries, d.test.catalogue, kScoringChunk, 5).entries == report.entries);
  }
}

TEST_CASE("rank_all is invariant to article presentation order") {
  const auto d = testutil::small_dataset();
  const auto model = untrained("studio2shop", d.train);
  const Scorer scorer(model);
  const auto base = rank_all(scorer, d.test.queries, d.test.catalogue);

  const std::size_t m = d.test.catalogue.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(99);
  shuffle(order, rng);
  std::vector<std::size_t> where(m);
  for (std::size_t r = 0; r < m; ++r) where[order[r]] = r;

  Catalogue permuted{permute_store(d.test.catalogue.fdna, order), permute_store(d.test.catalogue.generic, order),
                     permute_store(d.test.catalogue.titles, order)};
  QuerySet queries = d.test.queries;
  for (auto& pos : queries.positives) {
    for (auto& p : pos) p = where[p];
  }
  CHECK(rank_all(scorer, queries, permuted).entries == base.entries);
}

TEST_CASE("linear variants rank exactly as the matching probabilities do") {
  const auto d = testutil::small_dataset();
  auto model = untrained("linear", d.train);
  model.linear_bias = 0.4f;
  const Scorer scorer(model);
  const auto report = rank_all(scorer, d.test.queries, d.test.catalogue);
  const auto qf = scorer.query_features(d.test.queries);
  const auto af = scorer.article_features(d.test.catalogue);
  const auto& ids = d.test.catalogue.ids();
  std::size_t e = 0;
  for (std::size_t q = 0; q < d.test.queries.size(); ++q) {
    const auto dots = dot_scores(qf.row(q), af);
    std::vector<double> prob(dots.size());
    for (std::size_t j = 0; j < dots.size(); ++j) prob[j] = 1.0 / (1.0 + std::exp(-(double(dots[j]) + 0.4)));
    for (auto p : d.test.queries.positives[q]) {
      std::size_t rank = 1;
      for (std::size_t j = 0; j < prob.size(); ++j) {
        rank += prob[j] > prob[p] || (prob[j] == prob[p] && ids[j] < ids[p]);
      }
      CHECK(report.entries[e++].rank == rank);
    }
  }
}

TEST_CASE("chunked scoring equals single-pass scoring bitwise") {
  const auto d = testutil::small_dataset();
  for (const char* name : {"studio2shop", "static-nonlinear", "ranking"}) {
    CAPTURE(name);
    const auto model = untrained(name, d.train);
    const Scorer scorer(model);
    const auto view = prepare_view(scorer, d.test.queries, d.test.catalogue);
    const std::size_t m = d.test.catalogue.size();
    for (std::size_t q = 0; q < 10; ++q) {
      const auto whole = view.scores(q, m);
      CHECK(view.scores(q, 50) == whole);
      CHECK(view.scores(q, 1) == whole);
      CHECK(view.scores(q, 7) == whole);
    }
  }
}

TEST_CASE("missing positive is a data error") {
  const auto d = testutil::small_dataset();
  const auto model = untrained("linear", d.train);
  QuerySet queries = d.test.queries;
  queries.positives[0] = {d.test.catalogue.size() + 3};
  CHECK_THROWS_AS(rank_all(Scorer(model), queries, d.test.catalogue), DataError);
}

TEST_CASE("two-stage reranking") {
  const auto d = testutil::small_dataset();
  const auto lin = untrained("linear", d.train, 4);
  const auto head = untrained("studio2shop", d.train, 5);
  const Scorer first_scorer(lin), second_scorer(head);
  const auto first = prepare_view(first_scorer, d.test.queries, d.test.catalogue);
  const auto second = prepare_view(second_scorer, d.test.queries, d.test.catalogue);
  const auto& ids = d.test.catalogue.ids();
  const std::size_t m = ids.size();
  const auto& pos = d.test.queries.positives;
  const auto& qids = d.test.queries.inputs.ids;

  // S = M is the head's own full ranking
  const auto full = two_stage_rank_all(first, second, pos, qids, ids, m);
  CHECK(full.ranks.entries == rank_all(second_scorer, d.test.queries, d.test.catalogue).entries);
  CHECK(full.recall == 1.0);

  for (std::size_t q = 0; q < 5; ++q) {
    const auto shortlist = two_stage_rank(first, second, q, ids, 1);
    REQUIRE(shortlist.size() == 1);
    CHECK(shortlist[0] == full_order(dot_scores(first.queries.row(q), first.articles), ids)[0]);

    const auto s20 = two_stage_rank(first, second, q, ids, 20);
    REQUIRE(s20.size() == 20);
    auto top20 = full_order(dot_scores(first.queries.row(q), first.articles), ids);
    top20.resize(20);
    CHECK(std::is_permutation(s20.begin(), s20.end(), top20.begin()));
    const auto head_scores = second.scores(q);
    for (std::size_t k = 1; k < s20.size(); ++k) CHECK(head_scores[s20[k - 1]] >= head_scores[s20[k]]);
  }

  double prev = 0;
  for (std::size_t s : {1, 2, 5, 10, 20, 50, 100, 120}) {
    const auto r = two_stage_rank_all(first, second, pos, qids, ids, s);
    CHECK(r.recall >= prev);
    prev = r.recall;
    for (const auto& e : r.ranks.entries) CHECK((e.rank >= 1 && e.rank <= m));
  }
  CHECK_THROWS_AS(two_stage_rank(first, second, 0, ids, 0), ParameterError);
  CHECK_THROWS_AS(two_stage_rank(first, second, 0, ids, m + 1), ParameterError);
}

TEST_CASE("timing benchmark") {
  const auto d = testutil::small_dataset();
  const auto model = untrained("linear", d.train);
  const Scorer scorer(model);
  const std::vector<std::size_t> n{0, 10, 300};
  const auto reports = timing_benchmark(scorer, d.test.queries, d.test.catalogue, n, 50, 3);
  REQUIRE(reports.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(reports[k].n_queries == n[k]);
    CHECK(reports[k].articles == d.test.catalogue.size());
    CHECK(reports[k].chunk == 50);
    CHECK(reports[k].repetitions == 3);
    CHECK(reports[k].wall_seconds >= 0.0);
  }
  CHECK(reports[0].wall_seconds < 1e-3);
  CHECK(reports[0].per_query_ms == 0.0);
  CHECK(reports[2].wall_seconds > 0.0);

  const auto csv = timing_csv(reports);
  CHECK(csv.rfind("n_queries,articles,chunk,repetitions,mean_seconds,per_query_ms\n0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("report formats") {
  RankReport r;
  r.entries = {{5000001, 1000002, 3}, {5000001, 1000007, 1}};
  CHECK(r.tsv() == "5000001\t1000002\t3\n5000001\t1000007\t1\n");
  CHECK(r.ranks() == std::vector<std::size_t>{3, 1});
  CHECK(metrics_csv_header() == "variant,top1,top5,top10,top20,top50,top1pct,avg,median\n");
  const auto row = metrics_csv_row("linear", compute_metrics(r.ranks(), 100));
  CHECK(row.rfind("linear,0.5,", 0) == 0);
  CHECK(std::count(row.begin(), row.end(), ',') == 8);
  CHECK(row.back() == '\n');
}
