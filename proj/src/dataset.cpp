#include "shopmatch/synth/dataset.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include "shopmatch/binary_io.hpp"
#include "shopmatch/errors.hpp"

namespace shopmatch {

const Tensor2& Catalogue::features(ArticleFeatures which) const {
  switch (which) {
    case ArticleFeatures::fdna: return fdna.features;
    case ArticleFeatures::generic: return generic.features;
    case ArticleFeatures::learned: return titles.features;
  }
  throw ContractError("unknown article feature set");
}

const Tensor2& QuerySet::features(QueryFeatures which) const {
  return which == QueryFeatures::learned ? inputs.features : statics.features;
}

namespace {

QueryStore take_rows(const QueryStore& s, const std::vector<std::size_t>& rows) {
  QueryStore out;
  out.features = Tensor2(rows.size(), s.dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.ids.push_back(s.ids.at(rows[i]));
    std::copy(s.features.row(rows[i]).begin(), s.features.row(rows[i]).end(),
              out.features.row(i).begin());
  }
  return out;
}

std::uint64_t parse_id(std::string_view text, int lineno) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("annotations line " + std::to_string(lineno) + ": bad id '" +
                    std::string(text) + "'");
  }
  return v;
}

}  // namespace

QuerySet QuerySet::subset(const std::vector<std::size_t>& rows) const {
  QuerySet out;
  out.inputs = take_rows(inputs, rows);
  out.statics = take_rows(statics, rows);
  for (auto r : rows) out.positives.push_back(positives.at(r));
  return out;
}

double Dataset::oracle_median_rank() const {
  if (!manifest.has("oracle_median_rank")) throw DataError("manifest has no oracle_median_rank");
  return manifest.get_double("oracle_median_rank", 0);
}

std::string format_annotations(const QuerySet& queries, const Catalogue& catalogue) {
  std::string out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (auto row : queries.positives[i]) {
      out += std::to_string(queries.inputs.ids[i]);
      out += '\t';
      out += std::to_string(catalogue.ids().at(row));
      out += '\n';
    }
  }
  return out;
}

std::vector<std::vector<std::size_t>> parse_annotations(const std::string& text,
                                                        const QueryStore& queries,
                                                        const Catalogue& catalogue) {
  const auto qindex = build_id_index(queries.ids);
  const auto aindex = build_id_index(catalogue.ids());
  std::vector<std::vector<std::size_t>> positives(queries.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError("annotations line " + std::to_string(lineno) + ": expected two tab-separated ids");
    }
    const auto qid = parse_id(std::string_view(line).substr(0, tab), lineno);
    const auto aid = parse_id(std::string_view(line).substr(tab + 1), lineno);
    const auto q = qindex.find(qid);
    if (q == qindex.end()) {
      throw DataError("annotations line " + std::to_string(lineno) + ": unknown query " + std::to_string(qid));
    }
    const auto a = aindex.find(aid);
    if (a == aindex.end()) {
      throw DataError("annotations line " + std::to_string(lineno) + ": article " +
                      std::to_string(aid) + " not in store");
    }
    if (!seen.emplace(q->second, a->second).second) {
      throw DataError("annotations line " + std::to_string(lineno) + ": duplicate pair");
    }
    positives[q->second].push_back(a->second);
  }
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (positives[i].empty()) {
      throw DataError("query " + std::to_string(queries.ids[i]) + " has no annotated article");
    }
  }
  return positives;
}

namespace {

Split load_split(const std::filesystem::path& dir, const KeyValues& m, const std::string& split) {
  auto file = [&](const std::string& kind) { return dir / m.require("file." + kind + "_" + split); };
  Split s;
  s.catalogue.fdna = load_store(file("articles"));
  s.catalogue.generic = load_store(file("generic"));
  s.catalogue.titles = load_store(file("titles"));
  s.queries.inputs = load_query_store(file("queries"));
  s.queries.statics = load_query_store(file("queries_static"));
  const auto& c = s.catalogue;
  if (c.generic.ids != c.fdna.ids || c.titles.ids != c.fdna.ids) {
    throw DataError(split + " article stores list different ids");
  }
  if (s.queries.statics.ids != s.queries.inputs.ids) {
    throw DataError(split + " query stores list different ids");
  }
  const auto bytes = read_file(file("annotations"));
  s.queries.positives = parse_annotations(std::string(bytes.begin(), bytes.end()),
                                          s.queries.inputs, s.catalogue);
  return s;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.manifest = KeyValues::load(dir / "manifest.txt");
  d.train = load_split(dir, d.manifest, "train");
  d.test = load_split(dir, d.manifest, "test");
  return d;
}

}  // namespace shopmatch
