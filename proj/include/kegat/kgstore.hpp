#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kegat::kgstore {

// Lowercases, strips a leading "/c/en/" namespace (and any trailing
// "/pos" tag), and joins words with single underscores.
std::string normalize_concept(std::string_view raw);

// Adds the "/r/" prefix when missing.
std::string normalize_relation(std::string_view raw);

struct Concept {
  std::string id;
  std::vector<std::string> surface;
};

struct Edge {
  std::string head;
  std::string relation;
  std::string tail;
  double weight = 1.0;

  // The endpoint that is not `from` (or `from` itself for a self-edge).
  const std::string& other(const std::string& from) const { return from == head ? tail : head; }
  bool operator==(const Edge&) const = default;
};

struct LoadStats {
  std::size_t loaded = 0;
  std::size_t skipped_blocklist = 0;
  std::size_t comment_lines = 0;
  std::map<std::string, std::size_t> skipped_by_relation;
  bool operator==(const LoadStats&) const = default;
};

using Blocklist = std::set<std::string>;

// Relations dropped at load unless overridden.
Blocklist default_blocklist();

// Reads one relation label per line ('#' comments allowed).
Blocklist read_blocklist(const std::filesystem::path& path);

// Immutable weighted multi-relational graph. Edges are indexed from both
// endpoints; each concept's edge list is kept pre-sorted by weight
// (descending) with ties broken by (relation, other endpoint).
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  // Builds from already-normalized edges; blocklisted relations are counted
  // and skipped exactly as in load_graph.
  static KnowledgeGraph from_edges(const std::vector<Edge>& edges, Blocklist blocklist);

  bool contains(const std::string& id) const { return concepts_.count(id) != 0; }
  const Concept* find(const std::string& id) const;

  // Sorted neighbor edges; empty for unknown concepts.
  const std::vector<Edge>& neighbors(const std::string& id) const;
  std::vector<Edge> top_neighbors(const std::string& id, std::size_t limit) const;
  bool adjacent(const std::string& a, const std::string& b) const;

  const std::vector<Edge>& edges() const { return edges_; }
  // Concept ids in lexicographic order.
  std::vector<std::string> concept_ids() const;
  std::size_t concept_count() const { return concepts_.size(); }
  std::size_t max_surface_length() const { return max_surface_; }
  const Blocklist& blocklist() const { return blocklist_; }
  const LoadStats& stats() const { return stats_; }

 private:
  friend KnowledgeGraph load_graph(const std::filesystem::path&, const Blocklist&);
  friend KnowledgeGraph load_binary(const std::filesystem::path&);
  void add(Edge e);
  void finalize();

  std::vector<Edge> edges_;
  std::map<std::string, Concept> concepts_;
  std::unordered_map<std::string, std::vector<Edge>> adjacency_;
  std::unordered_map<std::string, std::set<std::string>> neighbor_ids_;
  Blocklist blocklist_;
  LoadStats stats_;
  std::size_t max_surface_ = 0;
};

// TSV: head \t relation \t tail \t weight, '#' lines skipped. Throws
// DataError naming the line for a wrong column count, a non-numeric weight,
// an empty endpoint or a nonpositive weight.
KnowledgeGraph load_graph(const std::filesystem::path& path, const Blocklist& blocklist);

// Binary image: "KGAT", version byte 1, then blocklist, edges and stats.
void save_binary(const KnowledgeGraph& graph, const std::filesystem::path& path);
KnowledgeGraph load_binary(const std::filesystem::path& path);

// Dispatches on the leading magic bytes.
KnowledgeGraph load_any(const std::filesystem::path& path, const Blocklist& blocklist);

}  // namespace kegat::kgstore
