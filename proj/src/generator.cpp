#include "shopmatch/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "shopmatch/binary_io.hpp"
#include "shopmatch/errors.hpp"
#include "shopmatch/ndcore/rng.hpp"

namespace shopmatch {

namespace {

constexpr std::uint64_t kArticleIdBase = 1000000;
constexpr std::uint64_t kQueryIdBase = 5000000;

const char* const kSizeFields[] = {"train_articles", "test_articles", "train_queries",
                                   "test_queries",   "latent_dim",    "raw_feature_dim",
                                   "feature_dim",    "query_dim",     "map_hidden",
                                   "colors"};

std::size_t GenConfig::* const kSizeMembers[] = {
    &GenConfig::train_articles, &GenConfig::test_articles, &GenConfig::train_queries,
    &GenConfig::test_queries,   &GenConfig::latent_dim,    &GenConfig::raw_feature_dim,
    &GenConfig::feature_dim,    &GenConfig::query_dim,     &GenConfig::map_hidden,
    &GenConfig::colors};

const char* const kRealFields[] = {"noise_sigma",     "fdna_noise",      "generic_noise",
                                   "title_noise",     "category_spread", "color_spread",
                                   "within_spread",   "map_gain",        "multi_label_fraction",
                                   "missing_color_fraction"};

double GenConfig::* const kRealMembers[] = {
    &GenConfig::noise_sigma,     &GenConfig::fdna_noise,    &GenConfig::generic_noise,
    &GenConfig::title_noise,     &GenConfig::category_spread, &GenConfig::color_spread,
    &GenConfig::within_spread,   &GenConfig::map_gain,      &GenConfig::multi_label_fraction,
    &GenConfig::missing_color_fraction};

const char* const kCategoryNames[] = {"tops", "trousers", "dresses", "jackets",
                                      "pullovers", "skirts", "coats"};

Matrix<double> gaussian(Rng& rng, std::size_t rows, std::size_t cols, double sd) {
  Matrix<double> m(rows, cols);
  for (auto& x : m.values()) x = sd * rng.normal();
  return m;
}

// Random tanh map whose pre-activations have std `gain` on inputs with
// per-coordinate std `input_sd`.
TanhMap random_map(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out, double gain,
                   double input_sd) {
  TanhMap g;
  g.w1 = gaussian(rng, hidden, in, gain / (input_sd * std::sqrt(static_cast<double>(in))));
  g.b1.resize(hidden);
  for (auto& b : g.b1) b = 0.5 * rng.normal();
  g.w2 = gaussian(rng, out, hidden, 1.0 / std::sqrt(static_cast<double>(hidden)));
  return g;
}

std::vector<double> latent_row(const Matrix<double>& z, std::size_t i) {
  return {z.row(i).begin(), z.row(i).end()};
}

// Rescales the map so its outputs over `z` have unit mean per-coordinate std.
void normalise_map(TanhMap& g, const Matrix<double>& z) {
  const std::size_t out = g.w2.rows();
  std::vector<double> sum(out, 0.0), sq(out, 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto y = g.apply(latent_row(z, i));
    for (std::size_t k = 0; k < out; ++k) sum[k] += y[k], sq[k] += y[k] * y[k];
  }
  const double n = static_cast<double>(z.rows());
  double var = 0;
  for (std::size_t k = 0; k < out; ++k) var += sq[k] / n - (sum[k] / n) * (sum[k] / n);
  var /= static_cast<double>(out);
  g.scale = var > 0 ? 1.0 / std::sqrt(var) : 1.0;
}

Tensor2 to_float(const Matrix<double>& m) { return m.cast<float>(); }

// Noisy linear projection of the latents, reduced by a PCA fitted on the
// first `fit_rows` rows.
std::pair<Tensor2, PcaModel> projected_features(Rng& rng, const Matrix<double>& z, std::size_t fit_rows,
                                                std::size_t raw_dim, std::size_t out_dim, double noise) {
  const auto p = gaussian(rng, raw_dim, z.cols(), 1.0 / std::sqrt(static_cast<double>(z.cols())));
  Matrix<double> raw(z.rows(), raw_dim);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t r = 0; r < raw_dim; ++r) {
      double acc = 0;
      for (std::size_t k = 0; k < z.cols(); ++k) acc += p(r, k) * z(i, k);
      raw(i, r) = acc + noise * rng.normal();
    }
  }
  const auto rawf = to_float(raw);
  Tensor2 fit(fit_rows, raw_dim);
  std::copy_n(rawf.data(), fit_rows * raw_dim, fit.data());
  auto pca = pca_fit(fit, out_dim);
  auto features = pca_transform(pca, rawf);
  return {std::move(features), std::move(pca)};
}

ArticleStore slice(const ArticleStore& s, std::size_t begin, std::size_t end) {
  ArticleStore out;
  out.attributes = s.attributes;
  out.ids.assign(s.ids.begin() + static_cast<std::ptrdiff_t>(begin),
                 s.ids.begin() + static_cast<std::ptrdiff_t>(end));
  out.features = Tensor2(end - begin, s.dim());
  std::copy(s.features.data() + begin * s.dim(), s.features.data() + end * s.dim(), out.features.data());
  const std::size_t a = s.attributes.size();
  out.attribute_values.assign(s.attribute_values.begin() + static_cast<std::ptrdiff_t>(begin * a),
                              s.attribute_values.begin() + static_cast<std::ptrdiff_t>(end * a));
  return out;
}

Catalogue slice(const Catalogue& c, std::size_t begin, std::size_t end) {
  return {slice(c.fdna, begin, end), slice(c.generic, begin, end), slice(c.titles, begin, end)};
}

std::size_t lower_median(std::vector<std::size_t> v) {
  std::sort(v.begin(), v.end());
  return v[(v.size() - 1) / 2];
}

}  // namespace

void GenConfig::validate() const {
  std::vector<std::string> bad;
  for (std::size_t i = 0; i < std::size(kSizeFields); ++i) {
    if (this->*kSizeMembers[i] < 1) bad.push_back(std::string(kSizeFields[i]) + " must be >= 1");
  }
  for (std::size_t i = 0; i < std::size(kRealFields); ++i) {
    const double v = this->*kRealMembers[i];
    if (!std::isfinite(v) || v < 0) bad.push_back(std::string(kRealFields[i]) + " must be finite and >= 0");
  }
  if (multi_label_fraction > 1) bad.push_back("multi_label_fraction must be <= 1");
  if (missing_color_fraction > 1) bad.push_back("missing_color_fraction must be <= 1");
  if (category_proportions.size() != std::size(kCategoryNames)) {
    bad.push_back("category_proportions must list " + std::to_string(std::size(kCategoryNames)) + " values");
  } else {
    double sum = 0;
    for (double p : category_proportions) {
      if (!std::isfinite(p) || p < 0) bad.push_back("category_proportions must be >= 0");
      sum += p;
    }
    if (!(sum > 0)) bad.push_back("category_proportions must not all be 0");
  }
  if (feature_dim > raw_feature_dim) bad.push_back("feature_dim must be <= raw_feature_dim");
  if (feature_dim > train_articles || feature_dim > train_queries) {
    bad.push_back("feature_dim must be <= the training article and query counts");
  }
  if (multi_label_fraction > 0 && std::min(train_articles, test_articles) < 3) {
    bad.push_back("multi-label queries need at least 3 articles per split");
  }
  if (colors > 65535) bad.push_back("colors must be <= 65535");
  if (!bad.empty()) {
    std::string msg = "invalid generator config: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw ValidationError(msg);
  }
}

GenConfig GenConfig::from_kv(const KeyValues& kv) {
  GenConfig c;
  for (std::size_t i = 0; i < std::size(kSizeFields); ++i) {
    c.*kSizeMembers[i] = kv.get_u64(kSizeFields[i], c.*kSizeMembers[i]);
  }
  for (std::size_t i = 0; i < std::size(kRealFields); ++i) {
    c.*kRealMembers[i] = kv.get_double(kRealFields[i], c.*kRealMembers[i]);
  }
  c.category_proportions = kv.get_doubles("category_proportions", c.category_proportions);
  c.seed = kv.get_u64("seed", c.seed);
  return c;
}

KeyValues GenConfig::to_kv() const {
  KeyValues kv;
  for (std::size_t i = 0; i < std::size(kSizeFields); ++i) {
    kv.set(kSizeFields[i], std::uint64_t{this->*kSizeMembers[i]});
  }
  for (std::size_t i = 0; i < std::size(kRealFields); ++i) kv.set(kRealFields[i], this->*kRealMembers[i]);
  std::string props;
  for (std::size_t i = 0; i < category_proportions.size(); ++i) {
    props += (i ? "," : "") + format_double(category_proportions[i]);
  }
  kv.set("category_proportions", props);
  kv.set("seed", seed);
  return kv;
}

std::vector<double> TanhMap::apply(std::span<const double> x) const {
  if (x.size() != w1.cols()) throw ShapeError("tanh map input length " + std::to_string(x.size()));
  std::vector<double> h(w1.rows());
  for (std::size_t j = 0; j < h.size(); ++j) {
    double acc = b1[j];
    for (std::size_t k = 0; k < x.size(); ++k) acc += w1(j, k) * x[k];
    h[j] = std::tanh(acc);
  }
  std::vector<double> y(w2.rows());
  for (std::size_t i = 0; i < y.size(); ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < h.size(); ++j) acc += w2(i, j) * h[j];
    y[i] = scale * acc;
  }
  return y;
}

SyntheticCatalog generate_catalog(const GenConfig& cfg) {
  cfg.validate();
  const Rng root = Rng::stream(cfg.seed, "generation");
  const std::size_t m = cfg.train_articles + cfg.test_articles;
  const std::size_t l = cfg.latent_dim;
  const std::size_t ncat = cfg.category_proportions.size();

  Rng structure = root.fork("structure");
  const auto centres = gaussian(structure, ncat, l, cfg.category_spread);
  const auto offsets = gaussian(structure, cfg.colors, l, cfg.color_spread);

  std::vector<double> cumulative(ncat);
  std::partial_sum(cfg.category_proportions.begin(), cfg.category_proportions.end(), cumulative.begin());
  const double total = cumulative.back();

  SyntheticCatalog out;
  out.train_count = cfg.train_articles;
  GroundTruth& t = out.truth;
  t.latents = Matrix<double>(m, l);
  t.categories.resize(m);
  std::vector<std::uint16_t> attributes(m * 2);
  Rng draw = root.fork("articles");
  for (std::size_t i = 0; i < m; ++i) {
    const double u = draw.uniform() * total;
    std::size_t c = 0;
    while (c + 1 < ncat && u >= cumulative[c]) ++c;
    const auto color = draw.below(cfg.colors);
    for (std::size_t k = 0; k < l; ++k) {
      t.latents(i, k) = centres(c, k) + offsets(color, k) + cfg.within_spread * draw.normal();
    }
    t.categories[i] = static_cast<std::uint16_t>(c);
    attributes[2 * i] = static_cast<std::uint16_t>(c + 1);
    const bool missing = draw.uniform() < cfg.missing_color_fraction;
    attributes[2 * i + 1] = missing ? 0 : static_cast<std::uint16_t>(color + 1);
  }

  const double latent_sd = std::sqrt(cfg.category_spread * cfg.category_spread +
                                     cfg.color_spread * cfg.color_spread +
                                     cfg.within_spread * cfg.within_spread);
  const double input_sd = latent_sd > 0 ? latent_sd : 1.0;
  Rng maps = root.fork("maps");
  t.query_map = random_map(maps, l, cfg.map_hidden, cfg.query_dim, cfg.map_gain, input_sd);
  t.title_map = random_map(maps, l, cfg.map_hidden, cfg.query_dim, cfg.map_gain, input_sd);
  normalise_map(t.query_map, t.latents);
  normalise_map(t.title_map, t.latents);
  t.images = Matrix<double>(m, cfg.query_dim);
  for (std::size_t i = 0; i < m; ++i) {
    const auto y = t.query_map.apply(latent_row(t.latents, i));
    std::copy(y.begin(), y.end(), t.images.row(i).begin());
  }

  std::vector<std::uint64_t> ids(m);
  std::iota(ids.begin(), ids.end(), kArticleIdBase);
  const std::vector<AttributeSpec> specs = {
      {"category", static_cast<std::uint16_t>(ncat)},
      {"color", static_cast<std::uint16_t>(cfg.colors)}};

  Rng fdna_rng = root.fork("fdna");
  auto [fdna, fdna_pca] = projected_features(fdna_rng, t.latents, cfg.train_articles,
                                             cfg.raw_feature_dim, cfg.feature_dim, cfg.fdna_noise);
  Rng generic_rng = root.fork("generic");
  auto [generic, generic_pca] = projected_features(generic_rng, t.latents, cfg.train_articles,
                                                   cfg.raw_feature_dim, cfg.feature_dim, cfg.generic_noise);
  out.fdna_pca = std::move(fdna_pca);
  out.generic_pca = std::move(generic_pca);

  Rng title_rng = root.fork("titles");
  Matrix<double> titles(m, cfg.query_dim);
  for (std::size_t i = 0; i < m; ++i) {
    const auto y = t.title_map.apply(latent_row(t.latents, i));
    for (std::size_t k = 0; k < y.size(); ++k) titles(i, k) = y[k] + cfg.title_noise * title_rng.normal();
  }

  Catalogue& c = out.articles;
  c.fdna = {ids, std::move(fdna), specs, attributes};
  c.generic = {ids, std::move(generic), specs, attributes};
  c.titles = {ids, to_float(titles), specs, attributes};
  return out;
}

SyntheticQueries generate_queries(const GenConfig& cfg, const SyntheticCatalog& catalog) {
  cfg.validate();
  const Rng root = Rng::stream(cfg.seed, "generation");
  Rng draw = root.fork("queries");
  const std::size_t n = cfg.train_queries + cfg.test_queries;
  const std::size_t l = cfg.latent_dim;
  const auto& z = catalog.truth.latents;

  SyntheticQueries out;
  Matrix<double> inputs(n, cfg.query_dim);
  out.queries.positives.resize(n);
  out.is_test.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool test = i >= cfg.train_queries;
    const std::size_t base = test ? catalog.train_count : 0;
    const std::size_t count = test ? cfg.test_articles : cfg.train_articles;
    const bool multi = draw.uniform() < cfg.multi_label_fraction;
    const std::size_t k = multi ? 2 + draw.below(2) : 1;
    auto& pos = out.queries.positives[i];
    while (pos.size() < std::min(k, count)) {
      const std::size_t row = base + draw.below(count);
      if (std::find(pos.begin(), pos.end(), row) == pos.end()) pos.push_back(row);
    }
    std::vector<double> sum(l, 0.0);
    for (auto row : pos) {
      for (std::size_t d = 0; d < l; ++d) sum[d] += z(row, d);
    }
    const auto y = catalog.truth.query_map.apply(sum);
    for (std::size_t d = 0; d < y.size(); ++d) inputs(i, d) = y[d] + cfg.noise_sigma * draw.normal();
    out.is_test[i] = test;
  }

  // Generic "off-the-shelf" query descriptors: a fixed random tanh projection
  // of the input, reduced by PCA on the training queries.
  Rng proj = root.fork("static_queries");
  const auto r = gaussian(proj, cfg.raw_feature_dim, cfg.query_dim,
                          1.0 / std::sqrt(static_cast<double>(cfg.query_dim)));
  Tensor2 raw(n, cfg.raw_feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < cfg.raw_feature_dim; ++j) {
      double acc = 0;
      for (std::size_t d = 0; d < cfg.query_dim; ++d) acc += r(j, d) * inputs(i, d);
      raw(i, j) = static_cast<float>(std::tanh(acc));
    }
  }
  Tensor2 fit(cfg.train_queries, cfg.raw_feature_dim);
  std::copy_n(raw.data(), fit.values().size(), fit.data());
  out.static_pca = pca_fit(fit, cfg.feature_dim);

  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), kQueryIdBase);
  out.queries.inputs = {ids, to_float(inputs)};
  out.queries.statics = {ids, pca_transform(out.static_pca, raw)};
  return out;
}

std::size_t oracle_rank(std::span<const float> query_input, std::size_t positive,
                        std::span<const std::size_t> candidates, const SyntheticCatalog& catalog) {
  const auto& images = catalog.truth.images;
  if (query_input.size() != images.cols()) {
    throw ShapeError("oracle_rank: query length " + std::to_string(query_input.size()));
  }
  auto distance = [&](std::size_t row) {
    double acc = 0;
    for (std::size_t k = 0; k < query_input.size(); ++k) {
      const double diff = static_cast<double>(query_input[k]) - images(row, k);
      acc += diff * diff;
    }
    return acc;
  };
  const auto& ids = catalog.articles.ids();
  const double target = distance(positive);
  std::size_t rank = 1;
  bool present = false;
  for (auto row : candidates) {
    if (row == positive) {
      present = true;
      continue;
    }
    const double d = distance(row);
    if (d < target || (d == target && ids[row] < ids[positive])) ++rank;
  }
  if (!present) throw DataError("oracle_rank: positive is not a candidate");
  return rank;
}

OracleSummary oracle_floor(const SyntheticCatalog& catalog, const SyntheticQueries& queries) {
  std::vector<std::size_t> candidates(catalog.articles.size() - catalog.train_count);
  std::iota(candidates.begin(), candidates.end(), catalog.train_count);
  std::vector<std::size_t> ranks;
  const auto& inputs = queries.queries.inputs.features;
  for (std::size_t i = 0; i < queries.queries.size(); ++i) {
    if (!queries.is_test[i]) continue;
    for (auto pos : queries.queries.positives[i]) {
      ranks.push_back(oracle_rank(inputs.row(i), pos, candidates, catalog));
    }
  }
  OracleSummary s;
  s.pairs = ranks.size();
  if (ranks.empty()) return s;
  const double n = static_cast<double>(ranks.size());
  s.median_rank = static_cast<double>(lower_median(ranks));
  s.mean_rank = static_cast<double>(std::accumulate(ranks.begin(), ranks.end(), std::size_t{0})) / n;
  s.top1 = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [](auto r) { return r <= 1; })) / n;
  s.top20 = static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [](auto r) { return r <= 20; })) / n;
  return s;
}

Dataset assemble_dataset(const SyntheticCatalog& catalog, const SyntheticQueries& queries) {
  Dataset d;
  const std::size_t m = catalog.articles.size();
  d.train.catalogue = slice(catalog.articles, 0, catalog.train_count);
  d.test.catalogue = slice(catalog.articles, catalog.train_count, m);
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t i = 0; i < queries.queries.size(); ++i) {
    (queries.is_test[i] ? test_rows : train_rows).push_back(i);
  }
  d.train.queries = queries.queries.subset(train_rows);
  d.test.queries = queries.queries.subset(test_rows);
  for (auto& pos : d.test.queries.positives) {
    for (auto& row : pos) row -= catalog.train_count;
  }
  return d;
}

Dataset generate_dataset(const GenConfig& cfg, const std::filesystem::path& dir, OracleSummary* summary) {
  cfg.validate();
  const auto catalog = generate_catalog(cfg);
  const auto queries = generate_queries(cfg, catalog);
  const auto oracle = oracle_floor(catalog, queries);
  Dataset d = assemble_dataset(catalog, queries);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  }
  KeyValues& m = d.manifest;
  m = cfg.to_kv();
  for (const auto& [name, split] : {std::pair<std::string, const Split*>{"train", &d.train},
                                    std::pair<std::string, const Split*>{"test", &d.test}}) {
    const std::string articles = "articles_" + name + ".fstr";
    const std::string generic = "generic_" + name + ".fstr";
    const std::string titles = "titles_" + name + ".fstr";
    const std::string qs = "queries_" + name + ".qstr";
    const std::string qstatic = "queries_static_" + name + ".qstr";
    const std::string ann = "annotations_" + name + ".tsv";
    save_store(split->catalogue.fdna, dir / articles);
    save_store(split->catalogue.generic, dir / generic);
    save_store(split->catalogue.titles, dir / titles);
    save_query_store(split->queries.inputs, dir / qs);
    save_query_store(split->queries.statics, dir / qstatic);
    write_file(dir / ann, format_annotations(split->queries, split->catalogue));
    m.set("file.articles_" + name, articles);
    m.set("file.generic_" + name, generic);
    m.set("file.titles_" + name, titles);
    m.set("file.queries_" + name, qs);
    m.set("file.queries_static_" + name, qstatic);
    m.set("file.annotations_" + name, ann);
  }
  m.set("M", std::uint64_t{cfg.test_articles});
  m.set("N", std::uint64_t{cfg.train_queries + cfg.test_queries});
  m.set("oracle_pairs", std::uint64_t{oracle.pairs});
  m.set("oracle_median_rank", oracle.median_rank);
  m.set("oracle_mean_rank", oracle.mean_rank);
  m.set("oracle_top1", oracle.top1);
  m.set("oracle_top20", oracle.top20);
  m.save(dir / "manifest.txt");
  if (summary) *summary = oracle;
  return d;
}

}  // namespace shopmatch
