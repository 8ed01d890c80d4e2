#include "kegat/augment.hpp"

#include <random>

#include "kegat/error.hpp"
#include "kegat/seed.hpp"

namespace kegat::harness {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

namespace {

constexpr int kMaxTries = 64;

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

bool touches(const kgstore::Edge& a, const kgstore::Edge& b) {
  return a.head == b.head || a.head == b.tail || a.tail == b.head || a.tail == b.tail;
}

}  // namespace

std::vector<ComveInstance> generate_augmented(const kgstore::KnowledgeGraph& graph,
                                              const kemb::TemplateSet& templates,
                                              const AugmentOptions& opt, const AugmentPools& pools) {
  std::vector<ComveInstance> out;
  if (opt.count == 0) return out;
  const std::vector<kgstore::Edge>& edges = pools.edges.empty() ? graph.edges() : pools.edges;
  const std::vector<kgstore::Edge>& distractors = pools.distractors.empty() ? graph.edges() : pools.distractors;
  const std::vector<std::string> candidates =
      pools.corrupt_candidates.empty() ? graph.concept_ids() : pools.corrupt_candidates;
  if (edges.empty()) throw DataError("graph has no edges to augment from");

  for (std::size_t k = 0; k < opt.count; ++k) {
    std::mt19937_64 rng(seed::mix(opt.seed, k));
    const kgstore::Edge* truth = nullptr;
    std::string corrupt;
    for (int attempt = 0; attempt < kMaxTries && !truth; ++attempt) {
      const kgstore::Edge& e = pick(edges, rng);
      std::vector<const std::string*> ok;
      for (const auto& c : candidates) {
        if (c != e.head && c != e.tail && !graph.adjacent(e.head, c)) ok.push_back(&c);
      }
      if (ok.empty()) continue;
      truth = &e;
      corrupt = *pick(ok, rng);
    }
    if (!truth) throw DataError("graph too small: no non-neighbor concept to corrupt a tail with");

    kgstore::Edge bad = *truth;
    bad.tail = corrupt;
    const std::string sensible = join_tokens(kemb::realize_triple(*truth, templates));
    const std::string nonsense = join_tokens(kemb::realize_triple(bad, templates));

    ComveInstance x;
    x.subtask = opt.subtask;
    x.id = opt.id_prefix + "-" + std::to_string(k);
    x.meta = {true, truth->head, truth->relation, truth->tail, corrupt};
    const std::size_t n = option_count(opt.subtask);
    x.label = opt.balanced ? static_cast<int>(k % n)
                           : static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    if (opt.subtask == Subtask::A) {
      x.options = {sensible, sensible};
      x.options[x.label] = nonsense;
    } else {
      std::vector<const kgstore::Edge*> far;
      for (const auto& d : distractors) {
        if (!touches(d, *truth)) far.push_back(&d);
      }
      std::vector<std::string> reasons;
      for (int attempt = 0; attempt < kMaxTries * 4 && reasons.size() < 2 && !far.empty(); ++attempt) {
        const std::string r = join_tokens(kemb::realize_triple(*pick(far, rng), templates));
        if (r != sensible && (reasons.empty() || reasons[0] != r)) reasons.push_back(r);
      }
      if (reasons.size() < 2) throw DataError("graph too small: not enough unrelated edges for distractors");
      x.false_sent = nonsense;
      x.options.assign(3, "");
      x.options[x.label] = sensible;
      std::size_t r = 0;
      for (std::size_t i = 0; i < 3; ++i) {
        if (static_cast<int>(i) != x.label) x.options[i] = reasons[r++];
      }
    }
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace kegat::harness
