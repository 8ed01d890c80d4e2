#include "kegat/model.hpp"

#include <set>

#include <json.hpp>

#include "kegat/error.hpp"
#include "kegat/linker.hpp"
#include "kegat/seed.hpp"

namespace kegat::model {

using nlohmann::json;
using Matrix = Eigen::MatrixXd;

namespace {

const char* const kEncoder = "encoder.";
const char* const kGat = "gat.";
const char* const kFuse = "fuse.";
const char* const kRefine = "refine.";
const char* const kHead = "head.";

template <class T>
void read(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!seen.count(it.key())) throw UsageError("unknown " + where + " config key '" + it.key() + "'");
  }
}

}  // namespace

std::string ModelConfig::to_json() const {
  json j;
  j["encoder"] = {{"d_model", encoder.d_model}, {"layers", encoder.layers}, {"heads", encoder.heads},
                  {"ffn", encoder.ffn},         {"max_pos", encoder.max_pos}, {"dropout", encoder.dropout},
                  {"vocab_size", encoder.vocab_size}};
  j["gat"] = {{"layers", gat.layers}, {"heads", gat.heads}, {"node_dim", gat.node_dim},
              {"sample_k", gat.sample_k}, {"slope", gat.slope}};
  j["fuse_hidden"] = fuse_hidden;
  j["fuse_out"] = fuse_out;
  j["refine_hidden"] = refine_hidden;
  j["head_hidden"] = head_hidden;
  j["use_kemb"] = use_kemb;
  j["use_kegat"] = use_kegat;
  j["use_lm_loss"] = use_lm_loss;
  j["max_len"] = max_len;
  j["per_entity_limit"] = per_entity_limit;
  j["max_ngram"] = max_ngram;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw UsageError("model config is not valid JSON");
  }
  if (!j.is_object()) throw UsageError("model config must be a JSON object");
  ModelConfig c;
  std::set<std::string> seen;
  try {
    if (auto it = j.find("encoder"); it != j.end()) {
      std::set<std::string> s;
      read(*it, "d_model", c.encoder.d_model, s);
      read(*it, "layers", c.encoder.layers, s);
      read(*it, "heads", c.encoder.heads, s);
      read(*it, "ffn", c.encoder.ffn, s);
      read(*it, "max_pos", c.encoder.max_pos, s);
      read(*it, "dropout", c.encoder.dropout, s);
      read(*it, "vocab_size", c.encoder.vocab_size, s);
      reject_unknown(*it, s, "encoder");
    }
    seen.insert("encoder");
    if (auto it = j.find("gat"); it != j.end()) {
      std::set<std::string> s;
      read(*it, "layers", c.gat.layers, s);
      read(*it, "heads", c.gat.heads, s);
      read(*it, "node_dim", c.gat.node_dim, s);
      read(*it, "sample_k", c.gat.sample_k, s);
      read(*it, "slope", c.gat.slope, s);
      reject_unknown(*it, s, "gat");
    }
    seen.insert("gat");
    read(j, "fuse_hidden", c.fuse_hidden, seen);
    read(j, "fuse_out", c.fuse_out, seen);
    read(j, "refine_hidden", c.refine_hidden, seen);
    read(j, "head_hidden", c.head_hidden, seen);
    read(j, "use_kemb", c.use_kemb, seen);
    read(j, "use_kegat", c.use_kegat, seen);
    read(j, "use_lm_loss", c.use_lm_loss, seen);
    read(j, "max_len", c.max_len, seen);
    read(j, "per_entity_limit", c.per_entity_limit, seen);
    read(j, "max_ngram", c.max_ngram, seen);
    read(j, "seed", c.seed, seen);
  } catch (const json::type_error& e) {
    throw UsageError(std::string("model config has a value of the wrong type: ") + e.what());
  }
  reject_unknown(j, seen, "model");
  return c;
}

int ModelConfig::final_dim() const { return use_kegat ? fuse_out + encoder.d_model : encoder.d_model; }

encoder::Vocab build_vocab(std::span<const harness::ComveInstance> instances,
                           const kgstore::KnowledgeGraph& graph, const kemb::TemplateSet& templates) {
  std::vector<std::string> tokens;
  for (const auto& x : instances) {
    for (const auto& seq : harness::convert(x).options) tokens.insert(tokens.end(), seq.begin(), seq.end());
  }
  for (const auto& id : graph.concept_ids()) {
    if (const auto* c = graph.find(id)) tokens.insert(tokens.end(), c->surface.begin(), c->surface.end());
  }
  for (const auto& [rel, t] : templates.entries()) {
    for (const auto& w : t.pattern) {
      if (w != kemb::kHeadSlot && w != kemb::kTailSlot) tokens.push_back(w);
    }
  }
  for (const char* w : {"is", "related", "to"}) tokens.emplace_back(w);
  std::erase_if(tokens, [](const std::string& t) { return linker::is_reserved_marker(t); });
  return encoder::Vocab::from_tokens(tokens);
}

std::uint64_t subgraph_seed(std::uint64_t seed, const std::string& id, std::size_t option) {
  return seed::mix(seed, seed::fnv1a(id), option);
}

Model::Model(ModelConfig config, encoder::Vocab vocab) : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.encoder.vocab_size = vocab_.size();
  if (config_.max_len > static_cast<std::size_t>(config_.encoder.max_pos)) {
    throw UsageError("max_len exceeds the position table");
  }
  std::mt19937_64 rng(seed::mix(config_.seed, 0x1417));
  trainkit::register_weights(params_, kEncoder, "encoder", encoder::init_params(config_.encoder, rng));
  if (config_.use_kegat) {
    trainkit::register_weights(params_, kGat, "gat", reasoning::init_gat(config_.gat, rng));
    trainkit::register_weights(params_, kFuse, "fuse",
                               reasoning::init_fuse(config_.encoder.d_model, config_.gat.node_dim,
                                                    config_.fuse_hidden, config_.fuse_out, rng));
    trainkit::register_weights(params_, kRefine, "refine",
                               reasoning::init_refine(config_.fuse_out, config_.refine_hidden, rng));
  }
  trainkit::register_weights(params_, kHead, "head", head::init_mlp(config_.final_dim(), config_.head_hidden, rng));
  if (config_.use_lm_loss) {
    params_.add("loss.s1", Matrix::Zero(1, 1), "loss");
    params_.add("loss.s2", Matrix::Zero(1, 1), "loss");
  }
}

PreparedInstance Model::prepare(const harness::ComveInstance& instance, const Resources& res) const {
  if (!res.graph || !res.templates) throw UsageError("prepare needs a knowledge graph and templates");
  if (config_.use_kegat && !res.concepts) throw UsageError("KEGAT needs a concept embedding table");
  PreparedInstance out;
  out.id = instance.id;
  out.label = instance.label;
  const auto converted = harness::convert(instance);
  for (std::size_t i = 0; i < converted.size(); ++i) {
    const auto& tokens = converted.options[i];
    // One linking pass feeds both knowledge paths.
    const auto spans = linker::extract_entities(tokens, *res.graph, config_.max_ngram);
    kemb::InjectedTree tree;
    if (config_.use_kemb) {
      tree = kemb::build_tree(tokens, spans, *res.graph, config_.per_entity_limit, *res.templates);
    } else {
      tree.trunk = tokens;
    }
    PreparedOption opt;
    opt.seq = kemb::flatten(tree, vocab_, config_.max_len);
    if (config_.use_kegat) {
      opt.sub = reasoning::build_subgraph(spans, *res.graph, static_cast<std::size_t>(config_.gat.sample_k),
                                          subgraph_seed(config_.seed, instance.id, i));
      opt.sub.node_init = reasoning::init_node_embeddings(opt.sub, *res.concepts, config_.gat.node_dim);
    }
    out.options.push_back(std::move(opt));
  }
  return out;
}

ForwardVars Model::forward(ad::Tape& t, trainkit::Binder& binder, const PreparedInstance& x,
                           encoder::Dropout dropout, bool scores_only) const {
  if (x.options.size() < 2) throw UsageError("instance needs at least two options");
  const auto enc = trainkit::bind_weights(binder, kEncoder, encoder::shape(config_.encoder));
  const auto mlp = trainkit::bind_weights(binder, kHead, head::MlpWeightsT<Matrix>{});
  reasoning::GatWeightsT<ad::Var> gat;
  reasoning::FuseWeightsT<ad::Var> fuse;
  reasoning::RefineWeightsT<ad::Var> refine;
  if (config_.use_kegat) {
    gat = trainkit::bind_weights(binder, kGat, reasoning::gat_shape(config_.gat));
    fuse = trainkit::bind_weights(binder, kFuse, reasoning::FuseWeightsT<Matrix>{});
    refine = trainkit::bind_weights(binder, kRefine, reasoning::RefineWeightsT<Matrix>{});
  }
  std::vector<ad::Var> scores;
  ad::Var lm_total;
  for (const auto& opt : x.options) {
    const ad::Var E = encoder::embed(t, enc, opt.seq);
    const auto out = encoder::encode(t, enc, E, opt.seq.visibility, dropout);
    if (config_.use_lm_loss && !scores_only) {
      std::vector<std::uint8_t> include(opt.seq.size());
      for (std::size_t p = 0; p < opt.seq.size(); ++p) {
        include[p] = opt.seq.trunk_mask[p] && opt.seq.tokens[p] != encoder::Vocab::kPad;
      }
      const ad::Var ce = ad::cross_entropy_rows(t, encoder::lm_logits(t, enc, out.H), opt.seq.tokens, include);
      lm_total = lm_total.valid() ? ad::add(t, lm_total, ce) : ce;
    }
    ad::Var repr = out.pooled;
    if (config_.use_kegat) {
      const ad::Var gnn = reasoning::gat_forward(t, opt.sub, gat, config_.gat.slope, config_.gat.node_dim);
      const ad::Var fused = reasoning::fuse(t, out.pooled, gnn, fuse);
      repr = reasoning::concat_final(t, reasoning::self_refine(t, fused, refine), out.pooled);
    }
    scores.push_back(head::score_option(t, repr, mlp));
  }
  ForwardVars f;
  f.scores = ad::concat_cols(t, scores);
  if (scores_only) return f;
  f.l2 = ad::nll_of_softmax(t, f.scores, x.label);
  if (lm_total.valid()) f.l1 = ad::scale(t, lm_total, 1.0 / static_cast<double>(x.options.size()));
  return f;
}

head::OptionScores Model::predict(const PreparedInstance& x) const {
  ad::Tape t;
  trainkit::Binder binder(t, params_, true);
  const ForwardVars f = forward(t, binder, x, {}, true);
  return head::scores_from_logits(t.value(f.scores).row(0));
}

}  // namespace kegat::model

namespace kegat::model {

std::vector<PreparedInstance> prepare_all(const Model& model, std::span<const harness::ComveInstance> xs,
                                          const Resources& res) {
  std::vector<PreparedInstance> out(xs.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = model.prepare(xs[i], res);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace kegat::model
