#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kegat/concept_table.hpp"
#include "kegat/dataset.hpp"
#include "kegat/kemb.hpp"
#include "kegat/kgstore.hpp"

namespace kegat::harness {

struct SynthSizes {
  std::size_t concepts = 500;
  std::size_t edges = 2000;
  std::size_t clusters = 25;
  std::size_t blocklisted_rows = 40;  // extra rows the loader must drop
  double min_weight = 0.5;
  double max_weight = 4.0;
  double intra_cluster = 0.95;  // fraction of edges inside one cluster
  double two_word_fraction = 0.2;
  int embedding_dim = 32;
  double centroid_rms = 1.0;      // per-coordinate RMS of each cluster centroid
  double embedding_noise = 0.05;  // per-coordinate stddev around the centroid, relative to centroid_rms
  double train_fraction = 0.6;
  double dev_fraction = 0.2;
  std::size_t train = 1000;
  std::size_t dev = 250;
  std::size_t test = 250;
};

struct SynthSplits {
  std::vector<ComveInstance> train, dev, test;
};

struct SynthBenchmark {
  std::vector<kgstore::Edge> rows;  // as written, blocklisted rows included
  kgstore::KnowledgeGraph graph;
  reasoning::ConceptTable embeddings;
  kemb::TemplateSet templates;
  std::vector<std::string> train_concepts, dev_concepts, test_concepts;
  std::vector<int> cluster_of;  // aligned with concept order in `rows` generation
  SynthSplits a, b;
};

// Clustered toy KB with cluster-structured concept embeddings. Concepts are
// partitioned by head into train/dev/test; every concept mentioned by a train
// instance lies in the train partition, and dev/test heads lie in their own.
SynthBenchmark synth_benchmark(std::uint64_t seed, const SynthSizes& sizes = {});

// kb.tsv, blocklist.txt, embeddings.txt, templates.json and
// {train,dev,test}_{a,b}.jsonl.
void write_synth(const SynthBenchmark& bench, const std::filesystem::path& dir);

}  // namespace kegat::harness
