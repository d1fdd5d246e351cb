#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "shopmatch/kv.hpp"
#include "shopmatch/models/model.hpp"
#include "shopmatch/synth/dataset.hpp"

namespace shopmatch {

enum class Algorithm : std::uint8_t { sgd_momentum, adam };

struct OptimizerConfig {
  Algorithm algorithm = Algorithm::adam;
  double learning_rate = 1e-4;  // 0 is accepted and leaves parameters untouched
  double momentum = 0.9;        // sgd-momentum
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  std::size_t batch_queries = 64;   // B
  std::size_t per_query = 50;       // K
  bool mean_reduction = false;      // divide each batch loss by B
  double validation_fraction = 0.1;
  std::size_t probe_articles = 500;

  // Throws ValidationError listing every offending field.
  void validate() const;

  // Keys: optimizer, lr, momentum, beta1, beta2, adam_epsilon, epochs, seed,
  // batch_queries, per_query, reduction, validation_fraction, probe_articles.
  static OptimizerConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

// Adam or SGD with momentum over every parameter a model exposes.
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& cfg) : cfg_(cfg) {}
  void step(Model<float>& model);

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> first_, second_;
  std::size_t steps_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;  // summed batch losses per training query
  double val_loss = 0;    // per validation query, fixed negatives, inference mode
  std::size_t val_median_rank = 0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  // Header `epoch,train_loss,val_loss,val_median_rank`.
  std::string csv() const;
};

struct TrainResult {
  Model<float> model;  // parameters of the best validation epoch
  TrainReport report;
};

// Fills the data-dependent widths (query input width, feature width,
// attribute definitions) of `cfg` from the training split.
ModelConfig adapt_config(ModelConfig cfg, const VariantSpec& variant, const Split& split);

// Trains on `split` with a held-out validation share of its queries. Throws
// ConfigError for variants without a loss and DivergenceError on a
// non-finite batch loss.
TrainResult train(const VariantSpec& variant, const ModelConfig& cfg, const Split& split,
                  const OptimizerConfig& opt, const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace shopmatch
