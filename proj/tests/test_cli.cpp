// Drives the shopmatch binary end to end on a tiny dataset.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "shopmatch/binary_io.hpp"
#include "shopmatch/eval/eval.hpp"
#include "shopmatch/models/checkpoint.hpp"
#include "shopmatch/synth/dataset.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace shopmatch;

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  static int counter = 0;
  const auto dir = fs::temp_directory_path() / "shopmatch_test_cli_io";
  fs::create_directories(dir);
  const auto out = dir / ("out" + std::to_string(counter));
  const auto err = dir / ("err" + std::to_string(counter++));
  const std::string cmd = std::string(SHOPMATCH_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int raw = std::system(cmd.c_str());
  Run r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p);
  return {b.begin(), b.end()};
}

// Generator config matching testutil::small_config, plus a tiny model.
fs::path write_config(const fs::path& dir) {
  std::string text = testutil::small_config(4).to_kv().serialize();
  text += "hidden_widths = 16,16\nhead_widths = 16,16\ndropout = 0.1\nlr = 0.001\n";
  text += "batch_queries = 32\nper_query = 20\nprobe_articles = 100\n";
  const auto path = dir / "run.cfg";
  write_file(path, text);
  return path;
}

}  // namespace

TEST_CASE("gen, train, eval and bench end to end") {
  const auto dir = testutil::scratch_dir("cli");
  const auto cfg = write_config(dir);
  const std::string c = " --config " + cfg.string();
  const auto data = dir / "data", data2 = dir / "data2";

  auto r = cli("gen" + c + " --out " + data.string());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("oracle floor") != std::string::npos);
  REQUIRE(cli("gen" + c + " --out " + data2.string()).status == 0);
  for (const auto& entry : fs::directory_iterator(data)) {
    CHECK(slurp(entry.path()) == slurp(data2 / entry.path().filename()));
  }

  const auto runs = dir / "runs";
  const std::string d = " --data " + data.string() + " --out " + runs.string();
  r = cli("train" + c + d + " --variant studio2shop --epochs 2");
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("epoch 2:") != std::string::npos);
  const auto ckpt = runs / "studio2shop.m2sh";
  REQUIRE(fs::exists(ckpt));
  const auto model = load_checkpoint(ckpt);
  CHECK(model.variant == variant_by_name("studio2shop"));
  const auto csv = slurp(runs / "studio2shop_train.csv");
  CHECK(csv.rfind("epoch,train_loss,val_loss,val_median_rank\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  // same seed, same bytes
  r = cli("train" + c + d + " --variant studio2shop --epochs 2 --checkpoint " + (dir / "again.m2sh").string());
  REQUIRE(r.status == 0);
  CHECK(slurp(ckpt) == slurp(dir / "again.m2sh"));

  const auto e1 = dir / "eval1", e2 = dir / "eval2", e3 = dir / "eval3";
  const std::string ev = "eval --data " + data.string() + " --checkpoint " + ckpt.string();
  REQUIRE(cli(ev + " --out " + e1.string()).status == 0);
  REQUIRE(cli(ev + " --out " + e2.string()).status == 0);
  CHECK(slurp(e1 / "metrics.csv") == slurp(e2 / "metrics.csv"));
  CHECK(slurp(e1 / "ranks.tsv") == slurp(e2 / "ranks.tsv"));
  CHECK(slurp(e1 / "metrics.csv").find("\nstudio2shop,") != std::string::npos);

  // the CLI's ranks agree with the library on the same checkpoint
  const auto loaded = load_dataset(data);
  const Scorer scorer(model);
  CHECK(slurp(e1 / "ranks.tsv") == rank_all(scorer, loaded.test.queries, loaded.test.catalogue).tsv());

  const std::string m = std::to_string(loaded.test.catalogue.size());
  r = cli(ev + " --two-stage --shortlist " + m + " --out " + e3.string());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(slurp(e3 / "ranks.tsv") == slurp(e1 / "ranks.tsv"));
  CHECK(r.out.find("recall 1.0000") != std::string::npos);

  const auto b = dir / "bench";
  r = cli("bench --data " + data.string() + " --checkpoint " + ckpt.string() +
          " --sweep 5,10 --repetitions 2 --out " + b.string());
  REQUIRE_MESSAGE(r.status == 0, r.err);
  const auto timing = slurp(b / "timing.csv");
  CHECK(std::count(timing.begin(), timing.end(), '\n') == 3);
  CHECK(timing.find("\n10," + m + ",50,2,") != std::string::npos);

  // checkpoint and --variant must agree
  r = cli(ev + " --variant linear --out " + e3.string());
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: config:", 0) == 0);
}

TEST_CASE("cli errors") {
  const auto dir = testutil::scratch_dir("cli_errors");
  write_file(dir / "bad.cfg", "multi_label_fraction = 1.5\n");
  auto r = cli("gen --config " + (dir / "bad.cfg").string() + " --out " + (dir / "x").string());
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: validation:", 0) == 0);
  CHECK(r.err.find("multi_label_fraction") != std::string::npos);

  r = cli("train --data " + dir.string() + " --variant static-linear");
  CHECK(r.status == 1);
  CHECK(r.err.find("no trainable loss") != std::string::npos);

  r = cli("eval --data " + (dir / "nowhere").string() + " --variant linear");
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: io:", 0) == 0);

  r = cli("train --variant bogus --data " + dir.string());
  CHECK(r.status == 1);

  r = cli("frobnicate");
  CHECK(r.status == 2);
  CHECK(r.err.rfind("error: usage:", 0) == 0);
}
