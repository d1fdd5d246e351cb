#include "shopmatch/features/store.hpp"

#include <fstream>
#include <iterator>
#include <unordered_set>

#include "shopmatch/binary_io.hpp"

namespace shopmatch {

namespace {

constexpr std::uint32_t kStoreVersion = 1;

void write_header(ByteWriter& w, std::string_view magic, std::size_t m, std::size_t d,
                  std::size_t a) {
  w.bytes(magic);
  w.u32(kStoreVersion);
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(a));
}

struct Header {
  std::uint32_t m = 0, d = 0, a = 0;
};

Header read_header(ByteReader& r, std::string_view magic) {
  const auto got = r.bytes(4);
  if (got != magic) {
    throw FormatError("bad magic: expected \"" + std::string(magic) + "\"", 0);
  }
  const std::size_t version_at = r.offset();
  const auto version = r.u32();
  if (version != kStoreVersion) {
    throw FormatError("unsupported version " + std::to_string(version), version_at);
  }
  Header h;
  h.m = r.u32();
  h.d = r.u32();
  h.a = r.u32();
  return h;
}

void check_unique(const std::vector<std::uint64_t>& ids) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(ids.size());
  for (auto id : ids) {
    if (!seen.insert(id).second) throw DataError("duplicate id " + std::to_string(id));
  }
}

}  // namespace

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::unordered_map<std::uint64_t, std::size_t> build_id_index(
    const std::vector<std::uint64_t>& ids) {
  std::unordered_map<std::uint64_t, std::size_t> index;
  index.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  return index;
}

void ArticleStore::validate() const {
  if (features.rows() != ids.size()) {
    throw DataError("article store: " + std::to_string(ids.size()) + " ids but " +
                    std::to_string(features.rows()) + " feature rows");
  }
  if (attribute_values.size() != ids.size() * attributes.size()) {
    throw DataError("article store: attribute table has wrong size");
  }
  check_unique(ids);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t a = 0; a < attributes.size(); ++a) {
      if (attribute(i, a) > attributes[a].cardinality) {
        throw DataError("article " + std::to_string(ids[i]) + ": " + attributes[a].name +
                        " value " + std::to_string(attribute(i, a)) + " exceeds cardinality " +
                        std::to_string(attributes[a].cardinality));
      }
    }
  }
}

void QueryStore::validate() const {
  if (features.rows() != ids.size()) {
    throw DataError("query store: " + std::to_string(ids.size()) + " ids but " +
                    std::to_string(features.rows()) + " feature rows");
  }
  check_unique(ids);
}

void save_store(const ArticleStore& store, const std::filesystem::path& path) {
  store.validate();
  ByteWriter w;
  write_header(w, "FSTR", store.size(), store.dim(), store.attributes.size());
  for (const auto& attr : store.attributes) {
    w.u16(static_cast<std::uint16_t>(attr.name.size()));
    w.bytes(attr.name);
    w.u16(attr.cardinality);
  }
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.u64(store.ids[i]);
    for (float v : store.features.row(i)) w.f32(v);
    for (std::size_t a = 0; a < store.attributes.size(); ++a) w.u16(store.attribute(i, a));
  }
  write_file(path, w.buffer());
}

ArticleStore load_store(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  const Header h = read_header(r, "FSTR");
  ArticleStore store;
  store.attributes.resize(h.a);
  for (auto& attr : store.attributes) {
    const auto len = r.u16();
    attr.name = r.bytes(len);
    attr.cardinality = r.u16();
  }
  const std::size_t record = 8 + 4 * std::size_t{h.d} + 2 * std::size_t{h.a};
  if (r.remaining() != record * h.m) {
    r.fail("expected " + std::to_string(h.m) + " records of " + std::to_string(record) +
           " bytes, found " + std::to_string(r.remaining()) + " bytes");
  }
  store.ids.resize(h.m);
  store.features = Tensor2(h.m, h.d);
  store.attribute_values.resize(std::size_t{h.m} * h.a);
  for (std::size_t i = 0; i < h.m; ++i) {
    store.ids[i] = r.u64();
    for (auto& v : store.features.row(i)) v = r.f32();
    for (std::size_t a = 0; a < h.a; ++a) store.attribute_values[i * h.a + a] = r.u16();
  }
  store.validate();
  return store;
}

void save_query_store(const QueryStore& store, const std::filesystem::path& path) {
  store.validate();
  ByteWriter w;
  write_header(w, "QSTR", store.size(), store.dim(), 0);
  for (std::size_t i = 0; i < store.size(); ++i) {
    w.u64(store.ids[i]);
    for (float v : store.features.row(i)) w.f32(v);
  }
  write_file(path, w.buffer());
}

QueryStore load_query_store(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  const std::size_t a_at = 16;
  const Header h = read_header(r, "QSTR");
  if (h.a != 0) throw FormatError("query store must not carry attribute blocks", a_at);
  const std::size_t record = 8 + 4 * std::size_t{h.d};
  if (r.remaining() != record * h.m) {
    r.fail("expected " + std::to_string(h.m) + " records of " + std::to_string(record) +
           " bytes, found " + std::to_string(r.remaining()) + " bytes");
  }
  QueryStore store;
  store.ids.resize(h.m);
  store.features = Tensor2(h.m, h.d);
  for (std::size_t i = 0; i < h.m; ++i) {
    store.ids[i] = r.u64();
    for (auto& v : store.features.row(i)) v = r.f32();
  }
  store.validate();
  return store;
}

}  // namespace shopmatch
