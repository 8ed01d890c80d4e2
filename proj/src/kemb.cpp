#include "kegat/kemb.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kegat/error.hpp"

namespace kegat::kemb {

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

std::vector<std::string> surface(const std::string& id) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= id.size()) {
    const auto pos = id.find('_', start);
    const auto piece = id.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

TemplateSet TemplateSet::defaults() {
  TemplateSet t;
  const std::pair<const char*, const char*> table[] = {
      {"/r/UsedFor", "{head} is used to {tail}"},
      {"/r/IsA", "{head} is a {tail}"},
      {"/r/AtLocation", "{head} is at {tail}"},
      {"/r/CapableOf", "{head} can {tail}"},
      {"/r/HasProperty", "{head} is {tail}"},
      {"/r/PartOf", "{head} is part of {tail}"},
      {"/r/Causes", "{head} causes {tail}"},
      {"/r/Desires", "{head} wants {tail}"},
      {"/r/HasA", "{head} has {tail}"},
      {"/r/MadeOf", "{head} is made of {tail}"},
      {"/r/HasPrerequisite", "{head} requires {tail}"},
      {"/r/HasSubevent", "{head} involves {tail}"},
      {"/r/HasFirstSubevent", "{head} starts with {tail}"},
      {"/r/HasLastSubevent", "{head} ends with {tail}"},
      {"/r/MotivatedByGoal", "{head} is motivated by {tail}"},
      {"/r/CausesDesire", "{head} makes people want {tail}"},
      {"/r/CreatedBy", "{head} is created by {tail}"},
      {"/r/ReceivesAction", "{head} can be {tail}"},
      {"/r/LocatedNear", "{head} is near {tail}"},
      {"/r/SimilarTo", "{head} is similar to {tail}"},
      {"/r/Synonym", "{head} means {tail}"},
      {"/r/DefinedAs", "{head} is defined as {tail}"},
      {"/r/SymbolOf", "{head} symbolizes {tail}"},
      {"/r/RelatedTo", "{head} is related to {tail}"},
  };
  for (const auto& [rel, pattern] : table) t.set(rel, pattern);
  return t;
}

void TemplateSet::set(const std::string& relation, const std::string& pattern) {
  auto tokens = split_ws(pattern);
  const auto heads = std::count(tokens.begin(), tokens.end(), kHeadSlot);
  const auto tails = std::count(tokens.begin(), tokens.end(), kTailSlot);
  if (heads != 1 || tails != 1) {
    throw DataError("template for " + relation + " must contain {head} and {tail} exactly once");
  }
  const auto rel = kgstore::normalize_relation(relation);
  templates_[rel] = Template{rel, std::move(tokens)};
}

const Template* TemplateSet::find(const std::string& relation) const {
  auto it = templates_.find(relation);
  return it == templates_.end() ? nullptr : &it->second;
}

TemplateSet TemplateSet::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("template file: ") + e.what());
  }
  if (!j.is_object()) throw DataError("template file must be a JSON object");
  TemplateSet t = defaults();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) throw DataError("template for " + it.key() + " must be a string");
    t.set(it.key(), it.value().get<std::string>());
  }
  return t;
}

TemplateSet TemplateSet::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open templates " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string TemplateSet::to_json_text() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [rel, t] : templates_) {
    std::string p;
    for (const auto& tok : t.pattern) {
      if (!p.empty()) p += ' ';
      p += tok;
    }
    j[rel] = p;
  }
  return j.dump(2) + "\n";
}

std::vector<std::string> realize_triple(const kgstore::Edge& edge, const TemplateSet& templates) {
  static const Template kFallback{"", {kHeadSlot, "is", "related", "to", kTailSlot}};
  const Template* t = templates.find(edge.relation);
  if (!t) {
    spdlog::warn("no template for relation {}; using fallback", edge.relation);
    t = &kFallback;
  }
  std::vector<std::string> out;
  for (const auto& tok : t->pattern) {
    if (tok == kHeadSlot) {
      for (auto& w : surface(edge.head)) out.push_back(std::move(w));
    } else if (tok == kTailSlot) {
      for (auto& w : surface(edge.tail)) out.push_back(std::move(w));
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

InjectedTree build_tree(std::span<const std::string> tokens, std::span<const linker::TokenSpan> spans,
                        const kgstore::KnowledgeGraph& graph, std::size_t per_entity_limit,
                        const TemplateSet& templates) {
  InjectedTree tree;
  tree.trunk.assign(tokens.begin(), tokens.end());
  for (const auto& span : spans) {
    for (const auto& edge : graph.top_neighbors(span.concept_id, per_entity_limit)) {
      Branch b{span.end - 1, realize_triple(edge, templates), edge.weight};
      if (!b.tokens.empty()) tree.branches.push_back(std::move(b));
    }
  }
  return tree;
}

std::vector<Slot> flatten_layout(const InjectedTree& tree) {
  std::vector<std::vector<std::size_t>> at(tree.trunk.size());
  for (std::size_t b = 0; b < tree.branches.size(); ++b) at.at(tree.branches[b].anchor).push_back(b);
  std::vector<Slot> slots;
  for (std::size_t p = 0; p < tree.trunk.size(); ++p) {
    slots.push_back({true, p, 0, 0});
    auto& list = at[p];
    std::stable_sort(list.begin(), list.end(), [&tree](std::size_t a, std::size_t b) {
      return tree.branches[a].weight > tree.branches[b].weight;
    });
    for (std::size_t b : list) {
      for (std::size_t o = 0; o < tree.branches[b].tokens.size(); ++o) slots.push_back({false, p, b, o});
    }
  }
  return slots;
}

std::vector<int> assign_soft_positions(const InjectedTree& tree) {
  std::vector<int> pos;
  for (const auto& s : flatten_layout(tree)) {
    pos.push_back(static_cast<int>(s.trunk ? s.trunk_index : s.trunk_index + 1 + s.offset));
  }
  return pos;
}

VisibilityMatrix build_visibility(const InjectedTree& tree) {
  const auto slots = flatten_layout(tree);
  VisibilityMatrix vis(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (std::size_t j = 0; j < slots.size(); ++j) {
      const Slot& a = slots[i];
      const Slot& b = slots[j];
      bool v = false;
      if (a.trunk && b.trunk) {
        v = true;
      } else if (!a.trunk && !b.trunk) {
        v = a.branch == b.branch;
      } else {
        const Slot& br = a.trunk ? b : a;
        const Slot& tr = a.trunk ? a : b;
        v = br.trunk_index == tr.trunk_index;
      }
      vis.set(i, j, v);
    }
  }
  return vis;
}

InjectedSequence flatten(const InjectedTree& tree, const encoder::Vocab& vocab, std::size_t max_len) {
  InjectedTree work = tree;
  if (work.trunk.size() > max_len) {
    if (max_len < kMinTrunkTokens) {
      throw DataError("trunk of " + std::to_string(work.trunk.size()) + " tokens exceeds max_len " +
                      std::to_string(max_len) + " below the truncation floor");
    }
    const bool keep_sep = work.trunk.back() == "[SEP]";
    work.trunk.resize(max_len);
    if (keep_sep) work.trunk.back() = "[SEP]";
    std::erase_if(work.branches, [&](const Branch& b) { return b.anchor >= work.trunk.size(); });
  }
  std::size_t total = work.trunk.size();
  for (const auto& b : work.branches) total += b.tokens.size();
  if (total > max_len) {
    // Rank branches by flatten position so ties drop the later one first.
    std::vector<std::size_t> order;
    for (const auto& s : flatten_layout(work)) {
      if (!s.trunk && s.offset == 0) order.push_back(s.branch);
    }
    std::vector<std::size_t> rank(work.branches.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    std::vector<std::size_t> victims(work.branches.size());
    std::iota(victims.begin(), victims.end(), 0);
    std::sort(victims.begin(), victims.end(), [&](std::size_t a, std::size_t b) {
      if (work.branches[a].weight != work.branches[b].weight) {
        return work.branches[a].weight < work.branches[b].weight;
      }
      return rank[a] > rank[b];
    });
    std::vector<bool> dropped(work.branches.size(), false);
    for (std::size_t v : victims) {
      if (total <= max_len) break;
      dropped[v] = true;
      total -= work.branches[v].tokens.size();
    }
    std::vector<Branch> kept;
    for (std::size_t b = 0; b < work.branches.size(); ++b) {
      if (!dropped[b]) kept.push_back(std::move(work.branches[b]));
    }
    work.branches = std::move(kept);
  }

  InjectedSequence seq;
  const auto slots = flatten_layout(work);
  seq.soft_pos = assign_soft_positions(work);
  seq.visibility = build_visibility(work);
  for (const auto& s : slots) {
    const std::string& tok = s.trunk ? work.trunk[s.trunk_index] : work.branches[s.branch].tokens[s.offset];
    seq.text.push_back(tok);
    seq.tokens.push_back(vocab.lookup(tok));
    seq.trunk_mask.push_back(s.trunk ? 1 : 0);
  }
  return seq;
}

void pad_sequence(InjectedSequence& seq, std::size_t length) {
  const std::size_t n = seq.size();
  if (length <= n) return;
  VisibilityMatrix vis(length);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) vis.set(i, j, seq.visibility(i, j));
  }
  for (std::size_t i = n; i < length; ++i) {
    vis.set(i, i, true);
    seq.tokens.push_back(encoder::Vocab::kPad);
    seq.text.emplace_back("[PAD]");
    seq.soft_pos.push_back(0);
    seq.trunk_mask.push_back(0);
  }
  seq.visibility = std::move(vis);
}

InjectedSequence restrict_to_trunk(const InjectedSequence& seq) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.trunk_mask[i]) keep.push_back(i);
  }
  InjectedSequence out;
  out.visibility = VisibilityMatrix(keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    out.tokens.push_back(seq.tokens[keep[a]]);
    out.text.push_back(seq.text[keep[a]]);
    out.soft_pos.push_back(seq.soft_pos[keep[a]]);
    out.trunk_mask.push_back(1);
    for (std::size_t b = 0; b < keep.size(); ++b) out.visibility.set(a, b, seq.visibility(keep[a], keep[b]));
  }
  return out;
}

}  // namespace kegat::kemb
