// shopmatch: generate synthetic data, train a variant, evaluate, benchmark.
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "shopmatch/binary_io.hpp"
#include "shopmatch/errors.hpp"
#include "shopmatch/eval/eval.hpp"
#include "shopmatch/models/checkpoint.hpp"
#include "shopmatch/synth/generator.hpp"
#include "shopmatch/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace shopmatch;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string data;
  std::string variant;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::string checkpoint;
  std::string first_stage;
  bool two_stage = false;
  std::optional<std::size_t> shortlist;
  std::vector<std::size_t> sweep = {100, 200, 400};
  std::size_t repetitions = 10;
  std::size_t chunk = kScoringChunk;
};

KeyValues load_config(const Options& o) {
  if (o.config.empty()) return {};
  if (!fs::exists(o.config)) throw IoError("config file " + o.config + " does not exist");
  return KeyValues::load(o.config);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::vector<std::size_t> sizes_of(const KeyValues& kv, const std::string& key, std::vector<std::size_t> fallback) {
  if (!kv.has(key)) return fallback;
  std::vector<std::size_t> out;
  for (double v : kv.get_doubles(key, {})) {
    if (!(v >= 1) || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ValidationError(key + ": widths must be positive integers");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

ModelConfig model_config(const KeyValues& kv) {
  ModelConfig c;
  c.hidden_widths = sizes_of(kv, "hidden_widths", c.hidden_widths);
  c.head_widths = sizes_of(kv, "head_widths", c.head_widths);
  c.feature_dim = kv.get_u64("feature_dim", c.feature_dim);
  c.dropout_rate = kv.get_double("dropout", c.dropout_rate);
  if (!(c.dropout_rate >= 0 && c.dropout_rate < 1)) throw ValidationError("dropout must lie in [0,1)");
  return c;
}

Dataset require_data(const Options& o) {
  if (o.data.empty()) throw ConfigError("--data DIR is required");
  if (!fs::exists(fs::path(o.data) / "manifest.txt")) throw IoError("no manifest.txt in " + o.data);
  return load_dataset(o.data);
}

int cmd_gen(const Options& o) {
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", *o.seed);
  const auto cfg = GenConfig::from_kv(kv);
  cfg.validate();
  OracleSummary s;
  const auto d = generate_dataset(cfg, o.out, &s);
  std::printf("wrote %s: M = %zu test articles, N = %zu queries\n", o.out.c_str(), d.test.catalogue.size(),
              d.train.queries.size() + d.test.queries.size());
  std::printf("oracle floor over %zu pairs: median rank %g, mean rank %.3f, top1 %.3f, top20 %.3f\n", s.pairs,
              s.median_rank, s.mean_rank, s.top1, s.top20);
  return 0;
}

int cmd_train(const Options& o) {
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", *o.seed);
  if (o.epochs) kv.set("epochs", std::uint64_t{*o.epochs});
  if (o.lr) kv.set("lr", *o.lr);
  const std::string name = o.variant.empty() ? kv.get("variant", "studio2shop") : o.variant;
  const auto variant = variant_by_name(name);
  if (!variant.trainable()) throw ConfigError("variant '" + name + "' has no trainable loss");
  const auto opt = OptimizerConfig::from_kv(kv);
  opt.validate();
  const auto mc = model_config(kv);
  const auto data = require_data(o);
  ensure_dir(o.out);
  const auto result = train(variant, mc, data.train, opt, [](const EpochRecord& e) {
    std::printf("epoch %zu: train_loss %.6f val_loss %.6f val_median_rank %zu\n", e.epoch, e.train_loss,
                e.val_loss, e.val_median_rank);
    std::fflush(stdout);
  });
  const fs::path ckpt = o.checkpoint.empty() ? fs::path(o.out) / (name + ".m2sh") : fs::path(o.checkpoint);
  save_checkpoint(result.model, ckpt);
  write_file(fs::path(o.out) / (name + "_train.csv"), result.report.csv());
  std::printf("best epoch %zu; checkpoint %s\n", result.report.best_epoch, ckpt.string().c_str());
  return 0;
}

// Checkpoint if given, else a freshly initialised model of --variant.
Model<float> resolve_model(const Options& o, const KeyValues& kv, const Dataset& data) {
  if (!o.checkpoint.empty()) {
    auto model = load_checkpoint(o.checkpoint);
    if (!o.variant.empty() && variant_by_name(o.variant) != model.variant) {
      throw ConfigError("checkpoint holds variant '" + std::string(to_string(model.variant.name)) +
                        "', not '" + o.variant + "'");
    }
    return model;
  }
  if (o.variant.empty()) throw ConfigError("give --checkpoint or --variant");
  const auto variant = variant_by_name(o.variant);
  Rng init = Rng::stream(kv.get_u64("seed", 1), "init");
  return make_model<float>(variant, adapt_config(model_config(kv), variant, data.train), init);
}

int cmd_eval(const Options& o) {
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", *o.seed);
  const auto data = require_data(o);
  const auto model = resolve_model(o, kv, data);
  const auto& test = data.test;
  const Scorer scorer(model);
  const std::size_t m = test.catalogue.size();
  RankReport report;
  if (o.two_stage) {
    std::optional<Model<float>> first_model;
    if (!o.first_stage.empty()) first_model = load_checkpoint(o.first_stage);
    const Scorer first_scorer(first_model ? *first_model : model);
    const auto first = prepare_view(first_scorer, test.queries, test.catalogue);
    const auto second = prepare_view(scorer, test.queries, test.catalogue);
    const std::size_t s = o.shortlist.value_or(std::min<std::size_t>(100, m));
    auto r = two_stage_rank_all(first, second, test.queries.positives, test.queries.inputs.ids,
                                test.catalogue.ids(), s);
    std::printf("two-stage shortlist %zu: recall %.4f\n", s, r.recall);
    report = std::move(r.ranks);
  } else {
    report = rank_all(scorer, test.queries, test.catalogue, o.chunk);
  }
  const auto metrics = compute_metrics(report.ranks(), m);
  ensure_dir(o.out);
  const std::string name(to_string(model.variant.name));
  write_file(fs::path(o.out) / "metrics.csv", metrics_csv_header() + metrics_csv_row(name, metrics));
  write_file(fs::path(o.out) / "ranks.tsv", report.tsv());
  std::printf("%s: top1 %.4f top20 %.4f top1pct %.4f avg %.2f median %zu over %zu pairs, M = %zu\n",
              name.c_str(), metrics.top1, metrics.top20, metrics.top1pct, metrics.average_rank,
              metrics.median_rank, report.entries.size(), m);
  return 0;
}

int cmd_bench(const Options& o) {
  auto kv = load_config(o);
  if (o.seed) kv.set("seed", *o.seed);
  const auto data = require_data(o);
  const auto model = resolve_model(o, kv, data);
  const Scorer scorer(model);
  const auto reports = timing_benchmark(scorer, data.test.queries, data.test.catalogue, o.sweep, o.chunk,
                                        o.repetitions);
  ensure_dir(o.out);
  const auto csv = timing_csv(reports);
  write_file(fs::path(o.out) / "timing.csv", csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asymmetric query/article matching on synthetic data"};
  app.require_subcommand(1);
  Options o;
  auto shared = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file");
    sub->add_option("--seed", o.seed, "run seed (overrides the config)");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  shared(gen);
  auto* tr = app.add_subcommand("train", "train one variant");
  shared(tr);
  tr->add_option("--data", o.data, "dataset directory");
  tr->add_option("--variant", o.variant, "variant name");
  tr->add_option("--epochs", o.epochs);
  tr->add_option("--lr", o.lr);
  tr->add_option("--checkpoint", o.checkpoint, "checkpoint path (default OUT/VARIANT.m2sh)");
  auto* ev = app.add_subcommand("eval", "rank the test queries against the test articles");
  shared(ev);
  ev->add_option("--data", o.data, "dataset directory");
  ev->add_option("--variant", o.variant, "variant name (untrained unless --checkpoint)");
  ev->add_option("--checkpoint", o.checkpoint);
  ev->add_flag("--two-stage", o.two_stage, "dot-product shortlist, then rerank");
  ev->add_option("--shortlist", o.shortlist, "shortlist size S");
  ev->add_option("--first-stage", o.first_stage, "checkpoint for the shortlist model (default: same model)");
  ev->add_option("--chunk", o.chunk, "articles scored per call");
  auto* be = app.add_subcommand("bench", "time retrieval against the test articles");
  shared(be);
  be->add_option("--data", o.data, "dataset directory");
  be->add_option("--variant", o.variant);
  be->add_option("--checkpoint", o.checkpoint);
  be->add_option("--sweep", o.sweep, "query counts")->delimiter(',');
  be->add_option("--repetitions", o.repetitions);
  be->add_option("--chunk", o.chunk);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: usage: %s\n", e.what());
    return 2;
  }
  try {
    if (*gen) return cmd_gen(o);
    if (*tr) return cmd_train(o);
    if (*ev) return cmd_eval(o);
    return cmd_bench(o);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::fprintf(stderr, "error: %s: %s\n", e.category().c_str(), msg.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return 1;
  }
}
