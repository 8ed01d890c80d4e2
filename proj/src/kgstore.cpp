#include "kegat/kgstore.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "kegat/binio.hpp"
#include "kegat/error.hpp"

namespace kegat::kgstore {

namespace {

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

}  // namespace

std::string normalize_concept(std::string_view raw) {
  std::string s(raw);
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  constexpr std::string_view kPrefix = "/c/en/";
  if (s.rfind(kPrefix, 0) == 0) {
    s = s.substr(kPrefix.size());
    if (const auto slash = s.find('/'); slash != std::string::npos) s.resize(slash);
  }
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool sep = c == '_' || std::isspace(static_cast<unsigned char>(c));
    if (sep) {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(c);
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

std::string normalize_relation(std::string_view raw) {
  std::string s(raw);
  if (s.rfind("/r/", 0) != 0) s = "/r/" + s;
  return s;
}

Blocklist default_blocklist() {
  return {"/r/ExternalURL", "/r/DistinctFrom", "/r/Antonym",
          "/r/NotCapableOf", "/r/NotDesires",  "/r/NotHasProperty"};
}

Blocklist read_blocklist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open blocklist " + path.string());
  Blocklist out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t b = 0;
    while (b < line.size() && std::isspace(static_cast<unsigned char>(line[b]))) ++b;
    line = line.substr(b);
    if (line.empty() || line[0] == '#') continue;
    out.insert(normalize_relation(line));
  }
  return out;
}

const Concept* KnowledgeGraph::find(const std::string& id) const {
  auto it = concepts_.find(id);
  return it == concepts_.end() ? nullptr : &it->second;
}

const std::vector<Edge>& KnowledgeGraph::neighbors(const std::string& id) const {
  static const std::vector<Edge> kEmpty;
  auto it = adjacency_.find(id);
  return it == adjacency_.end() ? kEmpty : it->second;
}

std::vector<Edge> KnowledgeGraph::top_neighbors(const std::string& id, std::size_t limit) const {
  const auto& all = neighbors(id);
  return {all.begin(), all.begin() + static_cast<std::ptrdiff_t>(std::min(limit, all.size()))};
}

bool KnowledgeGraph::adjacent(const std::string& a, const std::string& b) const {
  auto it = neighbor_ids_.find(a);
  return it != neighbor_ids_.end() && it->second.count(b) != 0;
}

std::vector<std::string> KnowledgeGraph::concept_ids() const {
  std::vector<std::string> ids;
  ids.reserve(concepts_.size());
  for (const auto& [id, c] : concepts_) ids.push_back(id);
  return ids;
}

void KnowledgeGraph::add(Edge e) {
  if (blocklist_.count(e.relation)) {
    ++stats_.skipped_blocklist;
    ++stats_.skipped_by_relation[e.relation];
    return;
  }
  for (const std::string* id : {&e.head, &e.tail}) {
    if (concepts_.count(*id)) continue;
    Concept c{*id, split(*id, '_')};
    max_surface_ = std::max(max_surface_, c.surface.size());
    concepts_.emplace(*id, std::move(c));
  }
  adjacency_[e.head].push_back(e);
  neighbor_ids_[e.head].insert(e.tail);
  if (e.tail != e.head) {
    adjacency_[e.tail].push_back(e);
    neighbor_ids_[e.tail].insert(e.head);
  }
  edges_.push_back(std::move(e));
  ++stats_.loaded;
}

void KnowledgeGraph::finalize() {
  for (auto& [id, list] : adjacency_) {
    const std::string& self = id;
    std::stable_sort(list.begin(), list.end(), [&self](const Edge& a, const Edge& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      if (a.relation != b.relation) return a.relation < b.relation;
      const auto& oa = a.other(self);
      const auto& ob = b.other(self);
      if (oa != ob) return oa < ob;
      return a.head < b.head;
    });
  }
}

KnowledgeGraph KnowledgeGraph::from_edges(const std::vector<Edge>& edges, Blocklist blocklist) {
  KnowledgeGraph g;
  g.blocklist_ = std::move(blocklist);
  for (const auto& e : edges) {
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw DataError("nonpositive weight");
    if (e.head.empty() || e.tail.empty()) throw DataError("empty concept id");
    g.add(e);
  }
  g.finalize();
  return g;
}

KnowledgeGraph load_graph(const std::filesystem::path& path, const Blocklist& blocklist) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open knowledge graph " + path.string());
  KnowledgeGraph g;
  g.blocklist_ = blocklist;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      ++g.stats_.comment_lines;
      continue;
    }
    auto cols = split(line, '\t');
    if (cols.size() != 4) {
      throw DataError(line_error(lineno, "expected 4 tab-separated columns, got " +
                                             std::to_string(cols.size())));
    }
    double weight = 0.0;
    const auto& wtext = cols[3];
    const auto res = std::from_chars(wtext.data(), wtext.data() + wtext.size(), weight);
    if (res.ec != std::errc() || res.ptr != wtext.data() + wtext.size() || !std::isfinite(weight)) {
      throw DataError(line_error(lineno, "non-numeric weight '" + wtext + "'"));
    }
    if (weight <= 0.0) throw DataError(line_error(lineno, "nonpositive weight"));
    Edge e{normalize_concept(cols[0]), normalize_relation(cols[1]), normalize_concept(cols[2]), weight};
    if (e.head.empty() || e.tail.empty()) throw DataError(line_error(lineno, "empty concept id"));
    g.add(std::move(e));
  }
  g.finalize();
  return g;
}

void save_binary(const KnowledgeGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  binio::put_header(out, 1);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(graph.blocklist().size()));
  for (const auto& r : graph.blocklist()) binio::put_string(out, r);
  const auto& st = graph.stats();
  binio::put<std::uint64_t>(out, st.skipped_blocklist);
  binio::put<std::uint64_t>(out, st.comment_lines);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(st.skipped_by_relation.size()));
  for (const auto& [rel, n] : st.skipped_by_relation) {
    binio::put_string(out, rel);
    binio::put<std::uint64_t>(out, n);
  }
  binio::put<std::uint64_t>(out, graph.edges().size());
  for (const auto& e : graph.edges()) {
    binio::put_string(out, e.head);
    binio::put_string(out, e.relation);
    binio::put_string(out, e.tail);
    binio::put<double>(out, e.weight);
  }
}

KnowledgeGraph load_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const auto version = binio::get_header(in);
  if (version != 1) throw DataError("unsupported KB image version " + std::to_string(version));
  KnowledgeGraph g;
  const auto nblock = binio::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nblock; ++i) g.blocklist_.insert(binio::get_string(in));
  g.stats_.skipped_blocklist = binio::get<std::uint64_t>(in);
  g.stats_.comment_lines = binio::get<std::uint64_t>(in);
  const auto nrel = binio::get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < nrel; ++i) {
    auto rel = binio::get_string(in);
    g.stats_.skipped_by_relation[rel] = binio::get<std::uint64_t>(in);
  }
  const auto nedges = binio::get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < nedges; ++i) {
    Edge e;
    e.head = binio::get_string(in);
    e.relation = binio::get_string(in);
    e.tail = binio::get_string(in);
    e.weight = binio::get<double>(in);
    if (!(e.weight > 0.0)) throw DataError("nonpositive weight in KB image");
    g.add(std::move(e));
  }
  g.finalize();
  return g;
}

KnowledgeGraph load_any(const std::filesystem::path& path, const Blocklist& blocklist) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open knowledge graph " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::equal(magic, magic + 4, binio::kMagic)) return load_binary(path);
  return load_graph(path, blocklist);
}

}  // namespace kegat::kgstore
