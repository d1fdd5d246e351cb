#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "shopmatch/binary_io.hpp"
#include "shopmatch/features/pca.hpp"
#include "shopmatch/features/store.hpp"
#include "shopmatch/ndcore/rng.hpp"

using namespace shopmatch;
namespace fs = std::filesystem;

namespace {

Tensor2 correlated_samples(std::size_t n, std::size_t d, Rng& rng) {
  // Random linear mix of independent coordinates with decaying scales.
  Tensor2 mix(d, d);
  for (auto& v : mix.values()) v = static_cast<float>(rng.normal());
  Tensor2 x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal() * (1.0 + 3.0 / (1.0 + j));
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.5 * j;
      for (std::size_t k = 0; k < d; ++k) acc += mix(j, k) * z[k] / std::sqrt(double(d));
      x(i, j) = static_cast<float>(acc);
    }
  }
  return x;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("shopmatch_test_" + name);
}

ArticleStore random_store(std::size_t m, std::size_t d, Rng& rng) {
  ArticleStore s;
  s.attributes = {{"category", 7}, {"color", 12}};
  s.features = Tensor2(m, d);
  for (std::size_t i = 0; i < m; ++i) {
    s.ids.push_back(rng.next_u64());
    for (auto& v : s.features.row(i)) v = static_cast<float>(rng.normal());
    s.attribute_values.push_back(static_cast<std::uint16_t>(1 + rng.below(7)));
    s.attribute_values.push_back(static_cast<std::uint16_t>(rng.below(13)));
  }
  return s;
}

}  // namespace

TEST_CASE("pca on axis-aligned variance picks +e1") {
  Rng rng(1);
  Tensor2 x(50, 4);
  for (std::size_t i = 0; i < 50; ++i) {
    x(i, 0) = static_cast<float>(5.0 * rng.normal());
    x(i, 1) = 2.0f;
    x(i, 2) = -1.0f;
    x(i, 3) = 0.5f;
  }
  const auto model = pca_fit(x, 1);
  CHECK(model.components(0, 0) == doctest::Approx(1.0).epsilon(1e-6));
  for (std::size_t j = 1; j < 4; ++j) CHECK(std::abs(model.components(0, j)) < 1e-6);
}

TEST_CASE("full-rank pca preserves pairwise distances and reconstructs") {
  Rng rng(2);
  const auto x = correlated_samples(60, 8, rng);
  const auto model = pca_fit(x, 8);
  const auto y = pca_transform(model, x);
  for (std::size_t a = 0; a < 60; a += 7) {
    for (std::size_t b = a + 1; b < 60; b += 5) {
      double dx = 0, dy = 0;
      for (std::size_t j = 0; j < 8; ++j) {
        dx += std::pow(double(x(a, j)) - x(b, j), 2);
        dy += std::pow(double(y(a, j)) - y(b, j), 2);
      }
      CHECK(std::abs(std::sqrt(dx) - std::sqrt(dy)) < 1e-4);
    }
  }
  // reconstruction x = mean + C^T y
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      double r = model.mean[j];
      for (std::size_t c = 0; c < 8; ++c) r += double(model.components(c, j)) * y(i, c);
      CHECK(std::abs(r - x(i, j)) < 1e-4);
    }
  }
}

TEST_CASE("pca components are orthonormal and variances non-increasing") {
  Rng rng(3);
  const auto x = correlated_samples(200, 12, rng);
  const auto model = pca_fit(x, 6);
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      double acc = 0;
      for (std::size_t j = 0; j < 12; ++j) acc += double(model.components(a, j)) * model.components(b, j);
      CHECK(std::abs(acc - (a == b ? 1.0 : 0.0)) < 1e-5);
    }
    if (a > 0) CHECK(model.explained_variance[a] <= model.explained_variance[a - 1]);
    // sign convention
    float best = 0;
    for (float v : model.components.row(a)) if (std::abs(v) > std::abs(best)) best = v;
    CHECK(best > 0);
  }
}

TEST_CASE("transformed coordinates have the explained variances") {
  Rng rng(4);
  const auto x = correlated_samples(300, 10, rng);
  const auto model = pca_fit(x, 5);
  const auto y = pca_transform(model, x);
  for (std::size_t c = 0; c < 5; ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < 300; ++i) mean += y(i, c);
    mean /= 300;
    for (std::size_t i = 0; i < 300; ++i) var += (y(i, c) - mean) * (y(i, c) - mean);
    var /= 299;
    CHECK(std::abs(var - model.explained_variance[c]) < 1e-4 * std::max(1.0, var));
  }
}

TEST_CASE("pca_transform edge cases") {
  Rng rng(5);
  const auto x = correlated_samples(30, 5, rng);
  const auto model = pca_fit(x, 3);
  const auto z = pca_transform(model, std::span<const float>(model.mean));
  for (float v : z) CHECK(v == 0.0f);
  const auto id = PcaModel::identity(4);
  const std::vector<float> v = {1.5f, -2.0f, 0.0f, 3.25f};
  CHECK(pca_transform(id, std::span<const float>(v)) == v);
  CHECK_THROWS_AS(pca_transform(model, std::span<const float>(v)), ShapeError);
  CHECK_THROWS_AS(pca_fit(x, 6), ParameterError);
  CHECK_THROWS_AS(pca_fit(x, 0), ParameterError);
}

TEST_CASE("production reduction 1536 -> 128") {
  Rng rng(6);
  Tensor2 x(kFullScaleFeatureDim + 72, kFullScaleRawDim);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  const auto model = pca_fit(x, kFullScaleFeatureDim);
  CHECK(model.input_dim() == 1536);
  CHECK(model.output_dim() == 128);
  CHECK(pca_transform(model, x.row(0)).size() == 128);
}

TEST_CASE("article store round trip") {
  Rng rng(7);
  const auto path = temp_path("three.fstr");
  const auto s = random_store(3, 4, rng);
  save_store(s, path);
  const auto back = load_store(path);
  CHECK(back == s);
  fs::remove(path);
}

TEST_CASE("store round trip property over sizes 1..1000") {
  Rng rng(8);
  const auto path = temp_path("prop.fstr");
  const auto qpath = temp_path("prop.qstr");
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t m = 1 + rng.below(1000);
    const std::size_t d = 1 + rng.below(40);
    const auto s = random_store(m, d, rng);
    save_store(s, path);
    const auto back = load_store(path);
    REQUIRE(back.ids == s.ids);
    REQUIRE(std::memcmp(back.features.data(), s.features.data(), s.features.size() * 4) == 0);
    REQUIRE(back.attribute_values == s.attribute_values);
    QueryStore q{s.ids, s.features};
    save_query_store(q, qpath);
    REQUIRE(load_query_store(qpath) == q);
  }
  fs::remove(path);
  fs::remove(qpath);
}

TEST_CASE("store format errors") {
  Rng rng(9);
  const auto path = temp_path("bad.fstr");
  const auto s = random_store(5, 3, rng);
  save_store(s, path);
  auto bytes = read_file(path);

  SUBCASE("wrong magic") {
    auto b = bytes;
    b[0] = 'X';
    write_file(path, std::string_view(b.data(), b.size()));
    CHECK_THROWS_AS(load_store(path), FormatError);
    CHECK_THROWS_AS(load_query_store(path), FormatError);
  }
  SUBCASE("wrong version names its offset") {
    auto b = bytes;
    b[4] = 2;
    write_file(path, std::string_view(b.data(), b.size()));
    try {
      load_store(path);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("truncation") {
    write_file(path, std::string_view(bytes.data(), bytes.size() - 3));
    CHECK_THROWS_AS(load_store(path), FormatError);
    write_file(path, std::string_view(bytes.data(), 10));
    CHECK_THROWS_AS(load_store(path), FormatError);
  }
  SUBCASE("duplicate ids are rejected on save") {
    auto dup = s;
    dup.ids[1] = dup.ids[0];
    CHECK_THROWS_AS(save_store(dup, path), DataError);
  }
  fs::remove(path);
}

TEST_CASE("50000-article store") {
  Rng rng(10);
  ArticleStore s;
  s.attributes = {{"category", 7}};
  s.features = Tensor2(50000, 128);
  for (std::size_t i = 0; i < 50000; ++i) {
    s.ids.push_back(1000000 + i);
    s.attribute_values.push_back(static_cast<std::uint16_t>(1 + i % 7));
  }
  for (auto& v : s.features.values()) v = static_cast<float>(rng.uniform());
  const auto path = temp_path("big.fstr");
  save_store(s, path);
  const auto back = load_store(path);
  CHECK(back.size() == 50000);
  CHECK(back.dim() == 128);
  fs::remove(path);
}
