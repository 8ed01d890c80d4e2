#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kegat/kgstore.hpp"
#include "kegat/linker.hpp"
#include "kegat/vocab.hpp"

// Knowledge injection into the token sequence: realized triples hang off
// entity tokens as branches, each branch token gets a soft position measured
// from the root along its branch, and a visibility matrix keeps different
// branches from seeing each other.
namespace kegat::kemb {

struct Template {
  std::string relation;
  std::vector<std::string> pattern;  // literal tokens plus one "{head}" and one "{tail}"
};

class TemplateSet {
 public:
  // Built-in table for common ConceptNet relations.
  static TemplateSet defaults();
  // JSON object: relation -> pattern string with {head}/{tail} slots. Entries
  // override the built-in table.
  static TemplateSet from_json_file(const std::filesystem::path& path);
  static TemplateSet from_json_text(const std::string& text);

  // Throws DataError unless the pattern has each slot exactly once.
  void set(const std::string& relation, const std::string& pattern);
  const Template* find(const std::string& relation) const;
  const std::map<std::string, Template>& entries() const { return templates_; }
  std::string to_json_text() const;

 private:
  std::map<std::string, Template> templates_;
};

inline constexpr const char* kHeadSlot = "{head}";
inline constexpr const char* kTailSlot = "{tail}";

// Head surface tokens, pattern filler and tail surface tokens in pattern
// order. Relations without a template use "{head} is related to {tail}"
// and log a warning.
std::vector<std::string> realize_triple(const kgstore::Edge& edge, const TemplateSet& templates);

struct Branch {
  std::size_t anchor = 0;
  std::vector<std::string> tokens;
  double weight = 0.0;
};

struct InjectedTree {
  std::vector<std::string> trunk;
  std::vector<Branch> branches;
};

// Attaches the realizations of each span's top `per_entity_limit` edges,
// anchored at the span's last token.
InjectedTree build_tree(std::span<const std::string> tokens, std::span<const linker::TokenSpan> spans,
                        const kgstore::KnowledgeGraph& graph, std::size_t per_entity_limit,
                        const TemplateSet& templates);

class VisibilityMatrix {
 public:
  VisibilityMatrix() = default;
  explicit VisibilityMatrix(std::size_t n, bool fill = false) : n_(n), data_(n * n, fill ? 1 : 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v) { data_[i * n_ + j] = v ? 1 : 0; }
  std::span<const std::uint8_t> raw() const { return data_; }
  bool operator==(const VisibilityMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> data_;
};

// Flatten order: each trunk token is followed by the branches anchored at it,
// those ordered by descending weight (stable on ties).
struct Slot {
  bool trunk = true;
  std::size_t trunk_index = 0;   // anchor for branch tokens
  std::size_t branch = 0;        // index into tree.branches
  std::size_t offset = 0;        // position inside the branch
};
std::vector<Slot> flatten_layout(const InjectedTree& tree);

// Trunk token p -> p; the o-th token of a branch anchored at p -> p + 1 + o.
std::vector<int> assign_soft_positions(const InjectedTree& tree);

// Trunk tokens see each other; a branch token sees its own branch and its
// anchor. Symmetric with a true diagonal. Aligned to flatten_layout.
VisibilityMatrix build_visibility(const InjectedTree& tree);

struct InjectedSequence {
  std::vector<int> tokens;
  std::vector<std::string> text;
  std::vector<int> soft_pos;
  VisibilityMatrix visibility;
  std::vector<std::uint8_t> trunk_mask;

  std::size_t size() const { return tokens.size(); }
};

// Shortest max_len flatten will truncate the trunk down to.
inline constexpr std::size_t kMinTrunkTokens = 8;

// Over-long inputs lose whole branches lowest-weight first (later flatten
// position first on ties), then the trunk tail, which keeps a final [SEP].
InjectedSequence flatten(const InjectedTree& tree, const encoder::Vocab& vocab, std::size_t max_len);

// Appends [PAD] positions up to `length`; pads only see themselves.
void pad_sequence(InjectedSequence& seq, std::size_t length);

// Drops every non-trunk row/column.
InjectedSequence restrict_to_trunk(const InjectedSequence& seq);

}  // namespace kegat::kemb
