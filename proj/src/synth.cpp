#include "kegat/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <fmt/format.h>

#include "kegat/augment.hpp"
#include "kegat/error.hpp"
#include "kegat/linker.hpp"
#include "kegat/seed.hpp"

namespace kegat::harness {

namespace {

const char* const kRelations[] = {"/r/UsedFor", "/r/IsA",        "/r/AtLocation", "/r/CapableOf",
                                  "/r/HasProperty", "/r/PartOf", "/r/Causes",     "/r/Desires",
                                  "/r/HasA",     "/r/MadeOf"};
const char* const kBlockedRelations[] = {"/r/DistinctFrom", "/r/Antonym", "/r/ExternalURL"};

std::set<std::string> reserved_words(const kemb::TemplateSet& templates) {
  std::set<std::string> out;
  for (const auto& [rel, t] : templates.entries()) {
    for (const auto& w : t.pattern) out.insert(w);
  }
  return out;
}

std::string pseudo_word(std::mt19937_64& rng) {
  static const std::string consonants = "bdfgklmnprstvz";
  static const std::string vowels = "aeiou";
  std::uniform_int_distribution<int> syllables(2, 3);
  std::uniform_int_distribution<std::size_t> c(0, consonants.size() - 1);
  std::uniform_int_distribution<std::size_t> v(0, vowels.size() - 1);
  std::string w;
  const int n = syllables(rng);
  for (int i = 0; i < n; ++i) {
    w += consonants[c(rng)];
    w += vowels[v(rng)];
  }
  return w;
}

std::vector<std::string> make_concepts(std::mt19937_64& rng, const SynthSizes& s,
                                       const std::set<std::string>& reserved) {
  std::set<std::string> words_used;
  std::set<std::string> ids;
  std::vector<std::string> out;
  std::bernoulli_distribution two_words(s.two_word_fraction);
  auto fresh = [&] {
    for (;;) {
      std::string w = pseudo_word(rng);
      if (reserved.count(w) || linker::is_stopword(w) || words_used.count(w)) continue;
      words_used.insert(w);
      return w;
    }
  };
  while (out.size() < s.concepts) {
    std::string id = fresh();
    if (two_words(rng)) id += "_" + fresh();
    if (ids.insert(id).second) out.push_back(id);
  }
  return out;
}

// Weights are multiples of 1/1000 so the TSV text round-trips exactly.
double draw_weight(std::mt19937_64& rng, const SynthSizes& s) {
  const auto lo = static_cast<long>(std::llround(s.min_weight * 1000));
  const auto hi = static_cast<long>(std::llround(s.max_weight * 1000));
  return static_cast<double>(std::uniform_int_distribution<long>(lo, hi)(rng)) / 1000.0;
}

double round6(double x) { return std::round(x * 1e6) / 1e6; }

}  // namespace

SynthBenchmark synth_benchmark(std::uint64_t seed, const SynthSizes& s) {
  if (s.concepts < 8 || s.clusters < 2 || s.edges == 0 || s.train == 0 || s.dev == 0 || s.test == 0) {
    throw UsageError("synthetic benchmark sizes must be positive");
  }
  if (s.edges > s.concepts * (s.concepts - 1) / 2) throw UsageError("too many edges for the concept count");
  SynthBenchmark bench;
  bench.templates = kemb::TemplateSet::defaults();
  std::mt19937_64 rng(seed::mix(seed, 1));
  const auto concepts = make_concepts(rng, s, reserved_words(bench.templates));

  // Cluster assignment: round-robin so sizes are equal, then shuffled.
  std::vector<int> cluster(concepts.size());
  for (std::size_t i = 0; i < concepts.size(); ++i) cluster[i] = static_cast<int>(i % s.clusters);
  std::shuffle(cluster.begin(), cluster.end(), rng);
  std::vector<std::vector<std::size_t>> members(s.clusters);
  for (std::size_t i = 0; i < concepts.size(); ++i) members[cluster[i]].push_back(i);
  bench.cluster_of = cluster;

  std::uniform_int_distribution<std::size_t> any(0, concepts.size() - 1);
  std::uniform_int_distribution<std::size_t> any_cluster(0, s.clusters - 1);
  std::uniform_int_distribution<std::size_t> any_rel(0, std::size(kRelations) - 1);
  std::bernoulli_distribution intra(s.intra_cluster);
  std::set<std::pair<std::size_t, std::size_t>> used;
  std::vector<kgstore::Edge> edges;
  while (edges.size() < s.edges) {
    std::size_t a;
    std::size_t b;
    if (intra(rng)) {
      const auto& m = members[any_cluster(rng)];
      if (m.size() < 2) continue;
      std::uniform_int_distribution<std::size_t> pick(0, m.size() - 1);
      a = m[pick(rng)];
      b = m[pick(rng)];
    } else {
      a = any(rng);
      b = any(rng);
    }
    if (a == b || !used.insert({std::min(a, b), std::max(a, b)}).second) continue;
    edges.push_back({concepts[a], kRelations[any_rel(rng)], concepts[b], draw_weight(rng, s)});
  }
  bench.rows = edges;
  std::uniform_int_distribution<std::size_t> any_blocked(0, std::size(kBlockedRelations) - 1);
  for (std::size_t i = 0; i < s.blocklisted_rows; ++i) {
    const std::size_t a = any(rng);
    std::size_t b = any(rng);
    if (a == b) b = (b + 1) % concepts.size();
    const kgstore::Edge e{concepts[a], kBlockedRelations[any_blocked(rng)], concepts[b], draw_weight(rng, s)};
    std::uniform_int_distribution<std::size_t> where(0, bench.rows.size());
    bench.rows.insert(bench.rows.begin() + static_cast<std::ptrdiff_t>(where(rng)), e);
  }
  bench.graph = kgstore::KnowledgeGraph::from_edges(bench.rows, kgstore::default_blocklist());

  // Embeddings: one random centroid per cluster plus isotropic noise.
  const double centroid_norm = s.centroid_rms * std::sqrt(static_cast<double>(s.embedding_dim));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::RowVectorXd> centroid(s.clusters);
  for (auto& c : centroid) {
    c.resize(s.embedding_dim);
    for (int d = 0; d < s.embedding_dim; ++d) c(d) = gauss(rng);
    c *= centroid_norm / c.norm();
  }
  bench.embeddings = reasoning::ConceptTable(s.embedding_dim);
  for (std::size_t i = 0; i < concepts.size(); ++i) {
    Eigen::RowVectorXd v = centroid[cluster[i]];
    for (int d = 0; d < s.embedding_dim; ++d) v(d) = round6(v(d) + s.centroid_rms * s.embedding_noise * gauss(rng));
    bench.embeddings.add(concepts[i], v);
  }

  // Partition by concept.
  std::vector<std::string> order = concepts;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(s.train_fraction * order.size()));
  const auto n_dev = static_cast<std::size_t>(std::llround(s.dev_fraction * order.size()));
  bench.train_concepts.assign(order.begin(), order.begin() + n_train);
  bench.dev_concepts.assign(order.begin() + n_train, order.begin() + n_train + n_dev);
  bench.test_concepts.assign(order.begin() + n_train + n_dev, order.end());
  const std::set<std::string> train_set(bench.train_concepts.begin(), bench.train_concepts.end());
  const std::set<std::string> dev_set(bench.dev_concepts.begin(), bench.dev_concepts.end());
  const std::set<std::string> test_set(bench.test_concepts.begin(), bench.test_concepts.end());

  AugmentPools train_pool;
  AugmentPools dev_pool;
  AugmentPools test_pool;
  for (const auto& e : bench.graph.edges()) {
    if (train_set.count(e.head) && train_set.count(e.tail)) {
      train_pool.edges.push_back(e);
      train_pool.distractors.push_back(e);
    }
    if (dev_set.count(e.head)) dev_pool.edges.push_back(e);
    if (test_set.count(e.head)) test_pool.edges.push_back(e);
  }
  train_pool.corrupt_candidates = bench.train_concepts;
  // Held-out splits corrupt with any concept and distract with edges
  // avoiding the train partition's heads.
  for (const auto& e : bench.graph.edges()) {
    if (!train_set.count(e.head)) {
      dev_pool.distractors.push_back(e);
      test_pool.distractors.push_back(e);
    }
  }
  if (train_pool.edges.empty() || dev_pool.edges.empty() || test_pool.edges.empty()) {
    throw DataError("synthetic graph left a split without edges");
  }

  auto build = [&](Subtask task, std::size_t count, const AugmentPools& pool, const char* split, std::uint64_t salt) {
    AugmentOptions opt;
    opt.count = count;
    opt.seed = seed::mix(seed, salt, task == Subtask::A ? 0 : 1);
    opt.subtask = task;
    opt.balanced = true;
    opt.id_prefix = fmt::format("{}-{}", split, to_string(task));
    auto xs = generate_augmented(bench.graph, bench.templates, opt, pool);
    std::mt19937_64 order_rng(seed::mix(opt.seed, 99));
    std::shuffle(xs.begin(), xs.end(), order_rng);
    return xs;
  };
  for (Subtask task : {Subtask::A, Subtask::B}) {
    SynthSplits& out = task == Subtask::A ? bench.a : bench.b;
    out.train = build(task, s.train, train_pool, "train", 11);
    out.dev = build(task, s.dev, dev_pool, "dev", 12);
    out.test = build(task, s.test, test_pool, "test", 13);
  }
  return bench;
}

void write_synth(const SynthBenchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "kb.tsv");
    if (!out) throw DataError("cannot write " + (dir / "kb.tsv").string());
    out << "# head\trelation\ttail\tweight\n";
    for (const auto& e : bench.rows) {
      out << "/c/en/" << e.head << '\t' << e.relation << "\t/c/en/" << e.tail << '\t'
          << fmt::format("{:.3f}", e.weight) << '\n';
    }
  }
  {
    std::ofstream out(dir / "blocklist.txt");
    for (const auto& r : kgstore::default_blocklist()) out << r << '\n';
  }
  reasoning::save_concept_table(bench.embeddings, dir / "embeddings.txt");
  {
    std::ofstream out(dir / "templates.json");
    out << bench.templates.to_json_text();
  }
  for (Subtask task : {Subtask::A, Subtask::B}) {
    const SynthSplits& s = task == Subtask::A ? bench.a : bench.b;
    const std::string t = to_string(task);
    save_comve(dir / ("train_" + t + ".jsonl"), s.train);
    save_comve(dir / ("dev_" + t + ".jsonl"), s.dev);
    save_comve(dir / ("test_" + t + ".jsonl"), s.test);
  }
}

}  // namespace kegat::harness
