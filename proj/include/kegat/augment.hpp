#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kegat/dataset.hpp"
#include "kegat/kemb.hpp"
#include "kegat/kgstore.hpp"

namespace kegat::harness {

enum class CorruptPolicy {
  // Replacement tail drawn uniformly from concepts that are not neighbors of
  // the head (and differ from head and tail).
  UniformNonNeighbor,
};

struct AugmentOptions {
  std::size_t count = 0;
  CorruptPolicy policy = CorruptPolicy::UniformNonNeighbor;
  std::uint64_t seed = 0;
  Subtask subtask = Subtask::A;
  // Label positions cycle instead of being drawn, so splits are exactly
  // balanced.
  bool balanced = false;
  std::string id_prefix = "aug";
};

// Restricts where sensible edges, corrupted tails and distractor edges come
// from. Empty members fall back to the whole graph.
struct AugmentPools {
  std::vector<kgstore::Edge> edges;
  std::vector<std::string> corrupt_candidates;
  std::vector<kgstore::Edge> distractors;
};

// Subtask A: sensible realization of a true edge vs. the same statement with
// a corrupted tail; label is the index of the corrupted one. Subtask B: the
// corrupted statement with the true realization as the correct reason plus
// two realizations of edges sharing neither endpoint with the true edge.
// Throws DataError when the graph is too small to corrupt or distract.
std::vector<ComveInstance> generate_augmented(const kgstore::KnowledgeGraph& graph,
                                              const kemb::TemplateSet& templates,
                                              const AugmentOptions& options,
                                              const AugmentPools& pools = {});

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace kegat::harness
