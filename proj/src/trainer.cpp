#include "shopmatch/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shopmatch/errors.hpp"
#include "shopmatch/eval/eval.hpp"
#include "shopmatch/training/batch.hpp"
#include "shopmatch/training/objectives.hpp"

namespace shopmatch {

void OptimizerConfig::validate() const {
  std::vector<std::string> bad;
  if (!std::isfinite(learning_rate) || learning_rate < 0) bad.push_back("lr must be finite and >= 0");
  if (!(momentum >= 0 && momentum < 1)) bad.push_back("momentum must lie in [0,1)");
  if (!(beta1 >= 0 && beta1 < 1)) bad.push_back("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) bad.push_back("beta2 must lie in [0,1)");
  if (!(epsilon > 0)) bad.push_back("adam_epsilon must be > 0");
  if (epochs < 1) bad.push_back("epochs must be >= 1");
  if (batch_queries < 1) bad.push_back("batch_queries must be >= 1");
  if (per_query < 1) bad.push_back("per_query must be >= 1");
  if (!(validation_fraction >= 0 && validation_fraction < 1)) bad.push_back("validation_fraction must lie in [0,1)");
  if (probe_articles < 1) bad.push_back("probe_articles must be >= 1");
  if (!bad.empty()) {
    std::string msg = "invalid optimizer config: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw ValidationError(msg);
  }
}

OptimizerConfig OptimizerConfig::from_kv(const KeyValues& kv) {
  OptimizerConfig c;
  const auto algo = kv.get("optimizer", "adam");
  if (algo == "adam") {
    c.algorithm = Algorithm::adam;
  } else if (algo == "sgd-momentum") {
    c.algorithm = Algorithm::sgd_momentum;
  } else {
    throw ValidationError("optimizer: unknown algorithm '" + algo + "' (adam, sgd-momentum)");
  }
  c.learning_rate = kv.get_double("lr", c.learning_rate);
  c.momentum = kv.get_double("momentum", c.momentum);
  c.beta1 = kv.get_double("beta1", c.beta1);
  c.beta2 = kv.get_double("beta2", c.beta2);
  c.epsilon = kv.get_double("adam_epsilon", c.epsilon);
  c.epochs = kv.get_u64("epochs", c.epochs);
  c.seed = kv.get_u64("seed", c.seed);
  c.batch_queries = kv.get_u64("batch_queries", c.batch_queries);
  c.per_query = kv.get_u64("per_query", c.per_query);
  const auto reduction = kv.get("reduction", "sum");
  if (reduction != "sum" && reduction != "mean") throw ValidationError("reduction must be sum or mean");
  c.mean_reduction = reduction == "mean";
  c.validation_fraction = kv.get_double("validation_fraction", c.validation_fraction);
  c.probe_articles = kv.get_u64("probe_articles", c.probe_articles);
  return c;
}

KeyValues OptimizerConfig::to_kv() const {
  KeyValues kv;
  kv.set("optimizer", algorithm == Algorithm::adam ? "adam" : "sgd-momentum");
  kv.set("lr", learning_rate);
  kv.set("momentum", momentum);
  kv.set("beta1", beta1);
  kv.set("beta2", beta2);
  kv.set("adam_epsilon", epsilon);
  kv.set("epochs", std::uint64_t{epochs});
  kv.set("seed", seed);
  kv.set("batch_queries", std::uint64_t{batch_queries});
  kv.set("per_query", std::uint64_t{per_query});
  kv.set("reduction", mean_reduction ? "mean" : "sum");
  kv.set("validation_fraction", validation_fraction);
  kv.set("probe_articles", std::uint64_t{probe_articles});
  return kv;
}

void Optimizer::step(Model<float>& model) {
  ++steps_;
  const double lr = cfg_.learning_rate;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  std::size_t slot = 0;
  model.for_each_param([&](const std::string&, std::span<float> value, std::span<float> grad) {
    if (slot == first_.size()) {
      first_.emplace_back(value.size(), 0.0);
      second_.emplace_back(cfg_.algorithm == Algorithm::adam ? value.size() : 0, 0.0);
    }
    auto& m = first_[slot];
    auto& v = second_[slot];
    if (m.size() != value.size()) throw ContractError("optimizer: parameter layout changed between steps");
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      double update;
      if (cfg_.algorithm == Algorithm::adam) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
        update = (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
      } else {
        m[k] = cfg_.momentum * m[k] + g;
        update = m[k];
      }
      value[k] = static_cast<float>(value[k] - lr * update);
    }
    ++slot;
  });
}

std::string TrainReport::csv() const {
  std::string out = "epoch,train_loss,val_loss,val_median_rank\n";
  for (const auto& e : epochs) {
    out += std::to_string(e.epoch) + ',' + format_double(e.train_loss) + ',' + format_double(e.val_loss) + ',' +
           std::to_string(e.val_median_rank) + '\n';
  }
  return out;
}

ModelConfig adapt_config(ModelConfig cfg, const VariantSpec& variant, const Split& split) {
  cfg.input_dim = split.queries.inputs.dim();
  if (variant.has_right_leg()) {
    cfg.attributes = split.catalogue.titles.attributes;
  } else {
    cfg.feature_dim = split.catalogue.features(variant.article_features).cols();
    cfg.attributes.clear();
  }
  if (!variant.has_encoder() && split.queries.statics.dim() != cfg.feature_dim) {
    throw ConfigError("static query features have width " + std::to_string(split.queries.statics.dim()) +
                      ", article features " + std::to_string(cfg.feature_dim));
  }
  return cfg;
}

namespace {

// Everything one optimisation or validation step needs from the split.
struct BatchSource {
  const VariantSpec& variant;
  const Split& split;
  const Tensor2& query_rows;    // encoder inputs or static query features
  const Tensor2& article_rows;  // static features or title vectors
  std::size_t per_query;

  double run(Model<float>& model, std::span<const std::size_t> queries, Rng& sampling, Mode mode, Rng* dropout,
             bool with_grad, double scale) const {
    const auto& positives = split.queries.positives;
    const std::size_t m = split.catalogue.size();
    if (variant.loss == LossKind::cross_entropy) {
      const auto b = build_pair_batch(queries, positives, m, per_query, sampling);
      PairInputs<float> in{gather_rows<float>(query_rows, b.queries), gather_rows<float>(article_rows, b.articles),
                           b.labels, b.per_query};
      return pair_objective(model, in, mode, dropout, with_grad, scale);
    }
    const auto b = build_triplet_batch(queries, positives, m, per_query, sampling);
    TripletInputs<float> in{gather_rows<float>(query_rows, b.queries), gather_rows<float>(article_rows, b.positives),
                            gather_rows<float>(article_rows, b.negatives), b.per_query, {}, {}};
    if (variant.has_right_leg()) {
      const auto& store = split.catalogue.titles;
      const std::size_t attrs = store.attributes.size();
      auto labels_of = [&](std::size_t row, std::vector<std::uint16_t>& out) {
        for (std::size_t a = 0; a < attrs; ++a) out.push_back(store.attribute(row, a));
      };
      for (auto p : b.positives) labels_of(p, in.query_labels);
      for (auto p : b.positives) labels_of(p, in.article_labels);
      for (auto n : b.negatives) labels_of(n, in.article_labels);
    }
    return triplet_objective(model, in, mode, dropout, with_grad, scale);
  }
};

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TrainResult train(const VariantSpec& variant, const ModelConfig& cfg_in, const Split& split,
                  const OptimizerConfig& opt, const std::function<void(const EpochRecord&)>& on_epoch) {
  validate_variant(variant);
  if (!variant.trainable()) {
    throw ConfigError("variant '" + std::string(to_string(variant.name)) + "' has no trainable loss");
  }
  opt.validate();
  const std::size_t nq = split.queries.size();
  if (nq < 2) throw DataError("training needs at least two queries");

  const ModelConfig cfg = adapt_config(cfg_in, variant, split);
  Rng init = Rng::stream(opt.seed, "init");
  Model<float> model = make_model<float>(variant, cfg, init);

  // Validation queries and the probe of training articles they are ranked against.
  Rng val_rng = Rng::stream(opt.seed, "validation");
  auto rows = iota_rows(nq);
  shuffle(rows, val_rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(opt.validation_fraction * static_cast<double>(nq)));
  n_val = std::min(n_val, nq - 1);
  std::vector<std::size_t> val_rows(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_rows(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());
  std::sort(val_rows.begin(), val_rows.end());
  std::sort(train_rows.begin(), train_rows.end());

  const std::size_t m = split.catalogue.size();
  std::vector<char> in_probe(m, 0);
  for (auto q : val_rows) {
    for (auto p : split.queries.positives[q]) in_probe[p] = 1;
  }
  auto others = iota_rows(m);
  shuffle(others, val_rng);
  std::size_t probe_size = static_cast<std::size_t>(std::count(in_probe.begin(), in_probe.end(), 1));
  for (auto r : others) {
    if (probe_size >= std::min(opt.probe_articles, m)) break;
    if (!in_probe[r]) in_probe[r] = 1, ++probe_size;
  }
  std::vector<std::size_t> probe, probe_index(m, 0);
  for (std::size_t r = 0; r < m; ++r) {
    if (in_probe[r]) probe_index[r] = probe.size(), probe.push_back(r);
  }
  std::vector<std::uint64_t> probe_ids;
  for (auto r : probe) probe_ids.push_back(split.catalogue.ids()[r]);
  const QuerySet val_set = split.queries.subset(val_rows);
  std::vector<std::vector<std::size_t>> val_positives = val_set.positives;
  for (auto& pos : val_positives) {
    for (auto& p : pos) p = probe_index[p];
  }

  const Tensor2& query_rows = split.queries.features(variant.query_features);
  const Tensor2& article_rows = split.catalogue.features(variant.article_features);
  const BatchSource source{variant, split, query_rows, article_rows, opt.per_query};
  Optimizer optimizer(opt);
  const Rng batching_root = Rng::stream(opt.seed, "batching");
  const Rng dropout_root = Rng::stream(opt.seed, "dropout");
  const Rng val_negatives = val_rng.fork("negatives");

  TrainResult result;
  std::size_t best_rank = 0;
  double best_loss = 0;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    Rng batching = batching_root.fork(epoch);
    Rng dropout = dropout_root.fork(epoch);
    auto order = train_rows;
    shuffle(order, batching);
    double total = 0;
    for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += opt.batch_queries, ++batch) {
      const std::size_t n = std::min(opt.batch_queries, order.size() - begin);
      const std::span<const std::size_t> queries(order.data() + begin, n);
      const double scale = opt.mean_reduction ? 1.0 / static_cast<double>(n) : 1.0;
      model.zero_grad();
      const double loss = source.run(model, queries, batching, Mode::train, &dropout, true, scale);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch + 1));
      }
      optimizer.step(model);
      total += loss / scale;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(train_rows.size());
    if (!val_rows.empty()) {
      Rng fixed = val_negatives;  // same negatives every epoch
      double val_loss = 0;
      for (std::size_t begin = 0; begin < val_rows.size(); begin += opt.batch_queries) {
        const std::size_t n = std::min(opt.batch_queries, val_rows.size() - begin);
        val_loss += source.run(model, std::span<const std::size_t>(val_rows.data() + begin, n), fixed,
                               Mode::infer, nullptr, false, 1.0);
      }
      rec.val_loss = val_loss / static_cast<double>(val_rows.size());
      const Scorer scorer(model);
      ScoringView view;
      view.scorer = &scorer;
      view.queries = scorer.query_features(val_set);
      view.articles = gather_rows<float>(scorer.article_features(split.catalogue), probe);
      const auto ranks = rank_view(view, val_positives, val_set.inputs.ids, probe_ids).ranks();
      rec.val_median_rank = compute_metrics(ranks, probe.size()).median_rank;
    }
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool better = val_rows.empty() || epoch == 1 || rec.val_median_rank < best_rank ||
                        (rec.val_median_rank == best_rank && rec.val_loss < best_loss);
    if (better) {
      best_rank = rec.val_median_rank;
      best_loss = rec.val_loss;
      result.report.best_epoch = epoch;
      result.model = model;
    }
  }
  return result;
}

}  // namespace shopmatch
