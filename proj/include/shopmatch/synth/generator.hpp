#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "shopmatch/features/pca.hpp"
#include "shopmatch/kv.hpp"
#include "shopmatch/synth/dataset.hpp"

namespace shopmatch {

// Synthetic catalogue/query generator. Articles have latent vectors clustered
// by category and colour; static features are noisy linear projections of the
// latents; queries are a fixed non-linear map of their positives' latents.
struct GenConfig {
  std::size_t train_articles = 2000;
  std::size_t test_articles = 500;   // M, the retrieval set size
  std::size_t train_queries = 3200;
  std::size_t test_queries = 800;
  std::size_t latent_dim = 12;
  std::size_t raw_feature_dim = 96;  // static features before PCA
  std::size_t feature_dim = 32;      // d
  std::size_t query_dim = 64;
  std::size_t map_hidden = 64;       // hidden width of the query/title maps
  double noise_sigma = 0.1;          // query noise
  double fdna_noise = 0.05;
  double generic_noise = 3.0;
  double title_noise = 0.1;
  double category_spread = 1.0;      // std of category centres in latent space
  double color_spread = 0.5;         // std of colour offsets
  double within_spread = 0.6;        // std of article latents around their cluster
  double map_gain = 2.0;             // pre-activation scale of the tanh maps
  double missing_color_fraction = 0.05;
  double multi_label_fraction = 250.0 / 1150.0;
  std::vector<double> category_proportions = {0.35, 0.20, 0.14, 0.14, 0.12, 0.03, 0.02};
  std::size_t colors = 12;
  std::uint64_t seed = 1;

  // Throws ValidationError listing every offending field.
  void validate() const;

  static GenConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
};

// Two-layer tanh map: out = scale * W2 tanh(W1 x + b1).
struct TanhMap {
  Matrix<double> w1;
  std::vector<double> b1;
  Matrix<double> w2;
  double scale = 1.0;

  std::vector<double> apply(std::span<const double> x) const;
};

struct GroundTruth {
  Matrix<double> latents;             // one row per article
  std::vector<std::uint16_t> categories;
  TanhMap query_map;                  // g: latent -> query input space
  TanhMap title_map;                  // latent -> title image space
  Matrix<double> images;              // g(latent) per article
};

// All articles of both splits; rows [0, train_articles) are the training split.
struct SyntheticCatalog {
  Catalogue articles;
  GroundTruth truth;
  std::size_t train_count = 0;
  PcaModel fdna_pca;
  PcaModel generic_pca;
};

struct SyntheticQueries {
  QuerySet queries;                   // positives index SyntheticCatalog rows
  std::vector<bool> is_test;
  PcaModel static_pca;
};

SyntheticCatalog generate_catalog(const GenConfig& cfg);
SyntheticQueries generate_queries(const GenConfig& cfg, const SyntheticCatalog& catalog);

// Rank of `positive` among `candidates` (catalogue rows) when ordering by
// distance between the query input and g(latent); ties broken by article id.
std::size_t oracle_rank(std::span<const float> query_input, std::size_t positive,
                        std::span<const std::size_t> candidates, const SyntheticCatalog& catalog);

struct OracleSummary {
  std::size_t pairs = 0;
  double median_rank = 0;
  double mean_rank = 0;
  double top1 = 0;
  double top20 = 0;
};

// Oracle ranks of every test (query, positive) pair against the test articles.
OracleSummary oracle_floor(const SyntheticCatalog& catalog, const SyntheticQueries& queries);

// Splits into train/test with split-local article rows.
Dataset assemble_dataset(const SyntheticCatalog& catalog, const SyntheticQueries& queries);

// Full generation: writes stores, annotations and the manifest into `dir`.
Dataset generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir,
                         OracleSummary* summary = nullptr);

}  // namespace shopmatch
