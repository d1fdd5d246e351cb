// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Criteria 5 and 9 drive the shopmatch binary with the shipped desk configs;
// the others call the library directly.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <array>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>

#include "checks.hpp"
#include "shopmatch/binary_io.hpp"
#include "shopmatch/eval/eval.hpp"
#include "shopmatch/models/checkpoint.hpp"
#include "shopmatch/synth/generator.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace shopmatch;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int n, const char* title, bool ok, const std::string& detail) {
  std::printf("criterion %d (%s): %s  %s\n", n, title, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Runs the CLI, sending its output to `log`. Throws on a nonzero exit.
void cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(SHOPMATCH_CLI) + " " + args + " >" + log.string() + " 2>&1";
  if (std::system(cmd.c_str()) != 0) {
    throw std::runtime_error("command failed: " + cmd + "\n" + [&] {
      const auto b = read_file(log);
      return std::string(b.begin(), b.end());
    }());
  }
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

std::string cfg(const std::string& name) { return (fs::path(SHOPMATCH_CONFIGS) / (name + ".cfg")).string(); }

// Row of a one-variant metrics.csv keyed by column name.
std::map<std::string, double> read_metrics(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  std::istringstream hs(header), rs(row);
  std::map<std::string, double> out;
  std::string h, v;
  while (std::getline(hs, h, ',') && std::getline(rs, v, ',')) {
    if (h != "variant") out[h] = std::stod(v);
  }
  return out;
}

void gradient_fidelity() {
  const auto t0 = Clock::now();
  const auto d = testutil::small_dataset();
  ModelConfig widths;
  widths.hidden_widths = {10, 9};
  widths.feature_dim = 6;
  widths.head_widths = {8, 7};
  double worst = 0;
  std::string where;
  std::size_t variants = 0;
  bool all_checked = true;
  for (const auto& v : variant_registry()) {
    if (!v.trainable()) continue;
    const auto g = checks::variant_gradients(v, d.train, widths);
    all_checked = all_checked && g.result.checked == g.params;
    if (g.result.max_rel_error >= worst) {
      worst = g.result.max_rel_error;
      where = std::string(to_string(v.name)) + "/" + g.result.worst_param;
    }
    ++variants;
  }
  const double secs = seconds_since(t0);
  report(1, "gradient fidelity", worst < 1e-3 && all_checked && secs < 120,
         fmt("max rel error %.2e (%s) over %zu variants, %.1f s", worst, where.c_str(), variants, secs));
}

void loss_identities() {
  const auto d = testutil::small_dataset();
  ModelConfig widths;
  widths.hidden_widths = {32, 32};
  widths.head_widths = {32, 32};
  double worst = 0;
  for (const char* name : {"studio2shop", "linear", "nonlinear", "static-nonlinear"}) {
    const auto r = checks::pair_loss_identity(variant_by_name(name), d.train, widths);
    worst = std::max(worst, std::abs(r.batch - r.pairs) / std::abs(r.pairs));
  }
  Rng rng(2);
  std::vector<double> qf(32), ap(32);
  for (auto& x : qf) x = rng.normal();
  for (auto& x : ap) x = rng.normal();
  Matrix<double> negs(50, 32);
  for (std::size_t k = 0; k < 50; ++k) std::copy(ap.begin(), ap.end(), negs.row(k).begin());
  const double triplet = triplet_loss<double>(qf, ap, negs);
  report(2, "loss identities", worst <= 1e-5 && triplet == 25.0,
         fmt("batch vs per-pair rel diff %.2e; zero-difference triplet loss %.17g", worst, triplet));
}

void batch_protocol() {
  const std::size_t m = 500, k = 50, n_queries = 640, per_batch = 64, epochs = 1000;
  Rng pos_rng(7);
  PositiveLists pos(n_queries);
  for (auto& p : pos) {
    const std::size_t count = 1 + pos_rng.below(3);
    while (p.size() < count) {
      const std::size_t a = pos_rng.below(m);
      if (std::find(p.begin(), p.end(), a) == p.end()) p.push_back(a);
    }
  }
  std::vector<std::size_t> order(n_queries);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<std::size_t>> last(n_queries);
  std::size_t batches = 0, bad = 0, repeats = 0, differ = 0;
  const Rng root = Rng::stream(1, "batching");
  for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng = root.fork(epoch);
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < n_queries; begin += per_batch) {
      const std::span<const std::size_t> qs(order.data() + begin, per_batch);
      const auto b = build_pair_batch(qs, pos, m, k, rng);
      ++batches;
      for (std::size_t i = 0; i < per_batch; ++i) {
        const auto& p = pos[qs[i]];
        std::set<std::size_t> seen;
        std::vector<std::size_t> negatives;
        bool ok = true;
        for (std::size_t j = 0; j < k; ++j) {
          const auto a = b.articles[i * k + j];
          const bool is_pos = std::find(p.begin(), p.end(), a) != p.end();
          ok = ok && a < m && b.labels[i * k + j] == (is_pos ? 1.0f : 0.0f);
          seen.insert(a);
          if (!is_pos) negatives.push_back(a);
        }
        ok = ok && seen.size() == k && negatives.size() == k - p.size();
        bad += ok ? 0 : 1;
        std::sort(negatives.begin(), negatives.end());
        auto& prev = last[qs[i]];
        if (!prev.empty()) {
          ++repeats;
          differ += prev != negatives;
        }
        prev = std::move(negatives);
      }
    }
  }
  const double frac = static_cast<double>(differ) / static_cast<double>(repeats);
  report(3, "batch protocol", batches >= 10000 && bad == 0 && frac > 0.99,
         fmt("%zu batches, %zu malformed query slots, negatives differ across epochs for %.4f of %zu repeats",
             batches, bad, frac, repeats));
}

void metric_oracle() {
  Rng rng(17);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.below(60000);
    std::vector<std::size_t> ranks(1 + rng.below(300));
    for (auto& r : ranks) r = 1 + rng.below(m);
    const auto got = compute_metrics(ranks, m);
    // independent count
    const double n = static_cast<double>(ranks.size());
    auto frac = [&](std::size_t k) {
      return static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](auto r) { return r <= k; })) / n;
    };
    const std::size_t k1 = static_cast<std::size_t>(std::ceil(static_cast<double>(m) / 100.0));
    double sum = 0;
    for (auto r : ranks) sum += static_cast<double>(r);
    auto sorted = ranks;
    std::sort(sorted.begin(), sorted.end());
    const bool same = got.top1 == frac(1) && got.top5 == frac(5) && got.top10 == frac(10) &&
                      got.top20 == frac(20) && got.top50 == frac(50) && got.top1pct_k == k1 &&
                      got.top1pct == frac(k1) && got.average_rank == sum / n &&
                      got.median_rank == sorted[(sorted.size() - 1) / 2];
    mismatches += same ? 0 : 1;
  }
  const std::vector<std::size_t> one{1};
  const auto k = compute_metrics(one, 50000).top1pct_k;
  report(4, "metric oracle", mismatches == 0 && k == 500,
         fmt("%zu mismatches over 1000 random lists; top-1pct threshold at M = 50000 is %zu", mismatches, k));
}

struct DeskRuns {
  fs::path data, runs;
  std::map<std::string, std::map<std::string, double>> metrics;
};

DeskRuns ordering(const fs::path& work) {
  const auto t0 = Clock::now();
  DeskRuns r;
  r.data = work / "desk";
  r.runs = work / "runs";
  cli("gen --config " + cfg("desk_gen") + " --out " + r.data.string(), work / "gen.log");
  const auto ds = load_dataset(r.data);
  const double m = static_cast<double>(ds.test.catalogue.size());
  const double oracle = ds.oracle_median_rank();

  for (const char* v : {"studio2shop", "linear", "ranking", "static-nonlinear"}) {
    const std::string name(v);
    const auto t1 = Clock::now();
    cli("train --config " + cfg(name) + " --data " + r.data.string() + " --out " + r.runs.string(),
        r.runs.parent_path() / (name + "_train.log"));
    cli("eval --data " + r.data.string() + " --checkpoint " + (r.runs / (name + ".m2sh")).string() + " --out " +
            (r.runs / ("eval_" + name)).string(),
        work / (name + "_eval.log"));
    r.metrics[name] = read_metrics(r.runs / ("eval_" + name) / "metrics.csv");
    std::printf("  %-17s top20 %.4f top1pct %.4f median %g  (%.0f s)\n", v, r.metrics[name]["top20"],
                r.metrics[name]["top1pct"], r.metrics[name]["median"], seconds_since(t1));
  }
  // static-linear needs no training
  cli("eval --config " + cfg("static-linear") + " --data " + r.data.string() + " --variant static-linear --out " +
          (r.runs / "eval_static-linear").string(),
      work / "static-linear_eval.log");
  r.metrics["static-linear"] = read_metrics(r.runs / "eval_static-linear" / "metrics.csv");
  cli("eval --config " + cfg("studio2shop") + " --data " + r.data.string() + " --variant studio2shop --out " +
          (r.runs / "eval_untrained").string(),
      work / "untrained_eval.log");
  const auto untrained = read_metrics(r.runs / "eval_untrained" / "metrics.csv");

  auto& mt = r.metrics;
  const double s2s = mt["studio2shop"]["top20"], lin = mt["linear"]["top20"];
  const double sn = mt["static-nonlinear"]["top20"], sl = mt["static-linear"]["top20"];
  const bool order_ok = s2s >= lin && lin >= sn && sn >= sl;
  const double med = mt["studio2shop"]["median"], um = untrained.at("median");
  const bool median_ok = med <= 0.1 * m && med <= 5.0 * oracle;
  const bool untrained_ok = um >= 0.4 * m && um <= 0.6 * m;
  const double secs = seconds_since(t0);
  report(5, "ordering at desk scale", order_ok && median_ok && untrained_ok && secs < 1800,
         fmt("top20 studio2shop %.4f >= linear %.4f >= static-nonlinear %.4f >= static-linear %.4f; "
             "median %g (oracle %g, M %g); untrained median %g; %.0f s",
             s2s, lin, sn, sl, med, oracle, m, um, secs));
  return r;
}

void ranking_parity(const DeskRuns& r) {
  const double rank = r.metrics.at("ranking").at("top1pct"), lin = r.metrics.at("linear").at("top1pct");
  report(6, "ranking-loss parity", std::abs(rank - lin) <= 0.05,
         fmt("top-1pct ranking %.4f vs linear %.4f (diff %.4f)", rank, lin, std::abs(rank - lin)));
}

void two_stage(const DeskRuns& r) {
  const auto ds = load_dataset(r.data);
  const auto lin = load_checkpoint(r.runs / "linear.m2sh");
  const auto head = load_checkpoint(r.runs / "studio2shop.m2sh");
  const Scorer first_scorer(lin), second_scorer(head);
  const auto first = prepare_view(first_scorer, ds.test.queries, ds.test.catalogue);
  const auto second = prepare_view(second_scorer, ds.test.queries, ds.test.catalogue);
  const auto& ids = ds.test.catalogue.ids();
  const std::size_t m = ids.size();
  const auto full = rank_all(second_scorer, ds.test.queries, ds.test.catalogue);
  bool monotone = true, equal = false;
  double prev = 0;
  std::string recalls;
  for (std::size_t s : {std::size_t{10}, std::size_t{50}, std::size_t{100}, m}) {
    const auto t = two_stage_rank_all(first, second, ds.test.queries.positives, ds.test.queries.inputs.ids, ids, s);
    monotone = monotone && t.recall >= prev;
    prev = t.recall;
    recalls += fmt(" S=%zu:%.4f", s, t.recall);
    if (s == m) equal = t.ranks.entries == full.entries;
  }
  report(7, "two-stage consistency", equal && monotone,
         fmt("S = M equals rank_all: %s; recall%s", equal ? "yes" : "no", recalls.c_str()));
}

void timing_shape() {
  GenConfig g;
  g.test_articles = 5000;
  g.train_queries = 400;
  g.test_queries = 800;
  const auto catalog = generate_catalog(g);
  const auto ds = assemble_dataset(catalog, generate_queries(g, catalog));
  ModelConfig mc;
  mc.head_widths = {32, 32};
  const auto v = variant_by_name("studio2shop");
  Rng init = Rng::stream(1, "init");
  const auto model = make_model<float>(v, adapt_config(mc, v, ds.train), init);
  const Scorer scorer(model);
  const std::vector<std::size_t> n{100, 200, 400, 800};
  const auto reps = timing_benchmark(scorer, ds.test.queries, ds.test.catalogue, n, kScoringChunk, 10);

  // least-squares line through (n, wall time)
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (const auto& t : reps) {
    const double x = static_cast<double>(t.n_queries), y = t.wall_seconds;
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
  }
  const double k = static_cast<double>(reps.size());
  const double cov = sxy - sx * sy / k, vx = sxx - sx * sx / k, vy = syy - sy * sy / k;
  const double r2 = cov * cov / (vx * vy);
  double lo = 1e300, hi = 0;
  std::string rows;
  for (const auto& t : reps) {
    lo = std::min(lo, t.per_query_ms), hi = std::max(hi, t.per_query_ms);
    rows += fmt(" n=%zu:%.3fs", t.n_queries, t.wall_seconds);
  }
  const double spread = (hi - lo) / lo;
  report(8, "timing shape", r2 > 0.98 && spread < 0.25,
         fmt("M = %zu; R^2 %.5f; per-query %.3f..%.3f ms (spread %.1f%%);%s", ds.test.catalogue.size(), r2, lo, hi,
             100 * spread, rows.c_str()));
}

void determinism(const fs::path& work) {
  bool same_data = true, same_ckpt, same_metrics, same_ranks;
  std::array<fs::path, 2> data, runs;
  for (int i = 0; i < 2; ++i) {
    data[i] = work / ("det_data" + std::to_string(i));
    runs[i] = work / ("det_runs" + std::to_string(i));
    cli("gen --config " + cfg("desk_gen") + " --out " + data[i].string(), work / "det.log");
    cli("train --config " + cfg("linear") + " --epochs 3 --data " + data[i].string() + " --out " + runs[i].string(),
        work / "det.log");
    cli("eval --data " + data[i].string() + " --checkpoint " + (runs[i] / "linear.m2sh").string() + " --out " +
            runs[i].string(),
        work / "det.log");
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(data[0])) {
    same_data = same_data && slurp(e.path()) == slurp(data[1] / e.path().filename());
    ++files;
  }
  same_ckpt = slurp(runs[0] / "linear.m2sh") == slurp(runs[1] / "linear.m2sh");
  same_metrics = slurp(runs[0] / "metrics.csv") == slurp(runs[1] / "metrics.csv");
  same_ranks = slurp(runs[0] / "ranks.tsv") == slurp(runs[1] / "ranks.tsv");
  report(9, "determinism", same_data && same_ckpt && same_metrics && same_ranks,
         fmt("%zu dataset files %s; checkpoint %s; metrics.csv %s; ranks.tsv %s", files,
             same_data ? "identical" : "DIFFER", same_ckpt ? "identical" : "DIFFERS",
             same_metrics ? "identical" : "DIFFERS", same_ranks ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  const auto work = fs::temp_directory_path() / "shopmatch_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  std::printf("artifacts in %s\n", work.string().c_str());
  try {
    gradient_fidelity();
    loss_identities();
    batch_protocol();
    metric_oracle();
    determinism(work);
    const auto desk = ordering(work);
    ranking_parity(desk);
    two_stage(desk);
    timing_shape();
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
