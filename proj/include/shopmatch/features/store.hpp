#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopmatch/ndcore/matrix.hpp"

namespace shopmatch {

struct AttributeSpec {
  std::string name;
  std::uint16_t cardinality = 0;

  bool operator==(const AttributeSpec&) const = default;
};

// Static article features plus categorical attributes. Attribute values are
// 1-based; 0 marks a missing label.
struct ArticleStore {
  std::vector<std::uint64_t> ids;
  Tensor2 features;  // M x d
  std::vector<AttributeSpec> attributes;
  std::vector<std::uint16_t> attribute_values;  // M x A, row-major

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return features.cols(); }
  std::uint16_t attribute(std::size_t article, std::size_t attr) const {
    return attribute_values[article * attributes.size() + attr];
  }

  // Throws DataError on duplicate ids, shape mismatches, or out-of-range attribute values.
  void validate() const;

  bool operator==(const ArticleStore&) const = default;
};

// Query inputs: the raw query vectors (or static query features).
struct QueryStore {
  std::vector<std::uint64_t> ids;
  Tensor2 features;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return features.cols(); }

  void validate() const;

  bool operator==(const QueryStore&) const = default;
};

std::unordered_map<std::uint64_t, std::size_t> build_id_index(const std::vector<std::uint64_t>& ids);

// Little-endian binary stores: "FSTR" for articles, "QSTR" for queries.
void save_store(const ArticleStore& store, const std::filesystem::path& path);
ArticleStore load_store(const std::filesystem::path& path);
void save_query_store(const QueryStore& store, const std::filesystem::path& path);
QueryStore load_query_store(const std::filesystem::path& path);

}  // namespace shopmatch
