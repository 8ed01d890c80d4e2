#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kegat/concept_table.hpp"
#include "kegat/dataset.hpp"
#include "kegat/encoder.hpp"
#include "kegat/head.hpp"
#include "kegat/kemb.hpp"
#include "kegat/kgstore.hpp"
#include "kegat/params.hpp"
#include "kegat/reasoning.hpp"

// The full pipeline: linking, knowledge injection, encoder, subgraph
// reasoning, fusion and option scoring, over one named parameter store.
namespace kegat::model {

struct ModelConfig {
  encoder::EncoderConfig encoder;
  reasoning::GatConfig gat;
  int fuse_hidden = 64;
  int fuse_out = 64;
  int refine_hidden = 32;
  int head_hidden = 32;
  bool use_kemb = true;
  bool use_kegat = true;
  bool use_lm_loss = true;
  std::size_t max_len = 128;
  std::size_t per_entity_limit = 2;
  std::size_t max_ngram = 4;
  std::uint64_t seed = 7;  // initialization and subgraph sampling

  std::string to_json() const;
  // Missing keys keep their defaults; unknown keys are a UsageError.
  static ModelConfig from_json(const std::string& text);
  // Width of the vector fed to the scoring head.
  int final_dim() const;
};

// Borrowed knowledge resources; must outlive any prepared instance use.
struct Resources {
  const kgstore::KnowledgeGraph* graph = nullptr;
  const kemb::TemplateSet* templates = nullptr;
  const reasoning::ConceptTable* concepts = nullptr;  // already at node_dim
};

struct PreparedOption {
  kemb::InjectedSequence seq;
  reasoning::Subgraph sub;
};

// Linked, injected and subgraph-sampled form of one instance, computed once.
struct PreparedInstance {
  std::string id;
  int label = 0;
  std::vector<PreparedOption> options;
};

// Vocabulary over the reserved markers, the tokens of `instances`, every
// concept surface word and every template word.
encoder::Vocab build_vocab(std::span<const harness::ComveInstance> instances,
                           const kgstore::KnowledgeGraph& graph, const kemb::TemplateSet& templates);

struct ForwardVars {
  ad::Var scores;  // 1 x A
  ad::Var l1;      // reconstruction loss, mean over options (invalid when disabled)
  ad::Var l2;      // classification loss
};

class Model {
 public:
  Model(ModelConfig config, encoder::Vocab vocab);

  const ModelConfig& config() const { return config_; }
  const encoder::Vocab& vocab() const { return vocab_; }
  trainkit::ParamStore& params() { return params_; }
  const trainkit::ParamStore& params() const { return params_; }

  PreparedInstance prepare(const harness::ComveInstance& instance, const Resources& res) const;

  ForwardVars forward(ad::Tape& tape, trainkit::Binder& binder, const PreparedInstance& x,
                      encoder::Dropout dropout = {}, bool scores_only = false) const;
  head::OptionScores predict(const PreparedInstance& x) const;

 private:
  ModelConfig config_;
  encoder::Vocab vocab_;
  trainkit::ParamStore params_;
};

// Seed for sampling option `option` of instance `id`.
std::uint64_t subgraph_seed(std::uint64_t seed, const std::string& id, std::size_t option);

}  // namespace kegat::model

namespace kegat::model {

// prepare() over a whole split, in parallel, results in input order.
std::vector<PreparedInstance> prepare_all(const Model& model, std::span<const harness::ComveInstance> xs,
                                          const Resources& res);

}  // namespace kegat::model
