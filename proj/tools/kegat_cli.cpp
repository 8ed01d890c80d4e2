// Command-line front end for the KEGAT pipeline.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kegat/augment.hpp"
#include "kegat/checkpoint.hpp"
#include "kegat/concept_table.hpp"
#include "kegat/dataset.hpp"
#include "kegat/error.hpp"
#include "kegat/evaluate.hpp"
#include "kegat/kemb.hpp"
#include "kegat/kernels.hpp"
#include "kegat/kgstore.hpp"
#include "kegat/linker.hpp"
#include "kegat/model.hpp"
#include "kegat/synth.hpp"
#include "kegat/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace kegat;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

struct KnowledgeArgs {
  std::string kb;
  std::string blocklist;
  std::string templates;
  std::string embeddings;
};

void add_knowledge_options(CLI::App* cmd, KnowledgeArgs& k, bool embeddings) {
  cmd->add_option("--kb", k.kb, "knowledge graph (TSV or binary image)")->required();
  cmd->add_option("--blocklist", k.blocklist, "relation blocklist file (default: built-in list)");
  cmd->add_option("--templates", k.templates, "JSON relation templates overriding the built-in table");
  if (embeddings) cmd->add_option("--embeddings", k.embeddings, "concept embedding table (word2vec text)");
}

kgstore::KnowledgeGraph load_kb(const KnowledgeArgs& k) {
  const auto blocklist = k.blocklist.empty() ? kgstore::default_blocklist() : kgstore::read_blocklist(k.blocklist);
  return kgstore::load_any(k.kb, blocklist);
}

kemb::TemplateSet load_templates(const KnowledgeArgs& k) {
  return k.templates.empty() ? kemb::TemplateSet::defaults() : kemb::TemplateSet::from_json_file(k.templates);
}

struct Knowledge {
  kgstore::KnowledgeGraph graph;
  kemb::TemplateSet templates;
  reasoning::ConceptTable concepts;

  model::Resources resources() const { return {&graph, &templates, &concepts}; }
};

Knowledge load_knowledge(const KnowledgeArgs& k, const model::ModelConfig& config) {
  Knowledge out;
  out.graph = load_kb(k);
  out.templates = load_templates(k);
  if (config.use_kegat) {
    if (k.embeddings.empty()) throw UsageError("--embeddings is required unless --no-kegat is given");
    out.concepts = reasoning::load_concept_table(k.embeddings, config.gat.node_dim, config.seed);
  }
  return out;
}

struct DataArgs {
  std::string subtask = "a";
  bool csv = false;
  std::vector<std::string> csv_map;
};

harness::CsvMapping parse_csv_map(const std::vector<std::string>& entries) {
  harness::CsvMapping m;
  for (const auto& e : entries) {
    const auto eq = e.find('=');
    if (eq == std::string::npos) throw UsageError("--csv-map entries look like field=column, got '" + e + "'");
    const std::string key = e.substr(0, eq);
    const std::string col = e.substr(eq + 1);
    if (key == "id") m.id = col;
    else if (key == "sent0") m.sent0 = col;
    else if (key == "sent1") m.sent1 = col;
    else if (key == "false_sent") m.false_sent = col;
    else if (key == "optionA") m.option_a = col;
    else if (key == "optionB") m.option_b = col;
    else if (key == "optionC") m.option_c = col;
    else if (key == "label") m.label = col;
    else throw UsageError("unknown --csv-map field '" + key + "'");
  }
  return m;
}

std::vector<harness::ComveInstance> load_split(const std::string& path, const DataArgs& d) {
  const auto task = harness::parse_subtask(d.subtask);
  if (d.csv) return harness::load_comve_csv(path, task, parse_csv_map(d.csv_map));
  return harness::load_comve(path, task);
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--subtask", d.subtask, "a (pick the nonsensical statement) or b (pick the reason)");
  cmd->add_flag("--csv", d.csv, "read data files as CSV instead of JSONL");
  cmd->add_option("--csv-map", d.csv_map, "CSV column mapping, e.g. label=answer")->delimiter(',');
}

// ---- subcommands ------------------------------------------------------------

int run_kb_ingest(const std::string& input, const std::string& blocklist, const std::string& output) {
  const auto list = blocklist.empty() ? kgstore::default_blocklist() : kgstore::read_blocklist(blocklist);
  const auto g = kgstore::load_any(input, list);
  if (!output.empty()) kgstore::save_binary(g, output);
  const auto& st = g.stats();
  json j = {{"concepts", g.concept_count()},
            {"edges", st.loaded},
            {"skipped_blocklist", st.skipped_blocklist},
            {"comment_lines", st.comment_lines},
            {"skipped_by_relation", st.skipped_by_relation}};
  std::cout << j.dump() << '\n';
  return 0;
}

int run_link(const KnowledgeArgs& k, const std::string& text, std::size_t max_ngram) {
  const auto g = load_kb(k);
  const auto tokens = linker::tokenize(text);
  json spans = json::array();
  for (const auto& s : linker::extract_entities(tokens, g, max_ngram)) {
    spans.push_back({{"start", s.start}, {"end", s.end}, {"concept", s.concept_id}});
  }
  std::cout << json{{"tokens", tokens}, {"entities", spans}}.dump() << '\n';
  return 0;
}

int run_inject(const KnowledgeArgs& k, const std::string& text, std::size_t limit, std::size_t max_len,
               std::size_t max_ngram) {
  const auto g = load_kb(k);
  const auto templates = load_templates(k);
  const auto tokens = linker::tokenize(text);
  const auto spans = linker::extract_entities(tokens, g, max_ngram);
  const auto tree = kemb::build_tree(tokens, spans, g, limit, templates);
  std::vector<std::string> words = tree.trunk;
  for (const auto& b : tree.branches) words.insert(words.end(), b.tokens.begin(), b.tokens.end());
  const auto seq = kemb::flatten(tree, encoder::Vocab::from_tokens(words), max_len);
  json vis = json::array();
  for (std::size_t i = 0; i < seq.size(); ++i) {
    std::string row;
    for (std::size_t j = 0; j < seq.size(); ++j) row += seq.visibility(i, j) ? '1' : '0';
    vis.push_back(row);
  }
  json branches = json::array();
  for (const auto& b : tree.branches) {
    branches.push_back({{"anchor", b.anchor}, {"tokens", b.tokens}, {"weight", b.weight}});
  }
  std::cout << json{{"tokens", seq.text},
                    {"soft_positions", seq.soft_pos},
                    {"trunk_mask", seq.trunk_mask},
                    {"visibility", vis},
                    {"branches", branches}}
                   .dump()
            << '\n';
  return 0;
}

int run_augment(const KnowledgeArgs& k, std::size_t count, std::uint64_t seed, const std::string& subtask,
                const std::string& output) {
  const auto g = load_kb(k);
  harness::AugmentOptions opt;
  opt.count = count;
  opt.seed = seed;
  opt.subtask = harness::parse_subtask(subtask);
  const auto xs = harness::generate_augmented(g, load_templates(k), opt);
  if (output.empty()) {
    harness::write_comve_jsonl(std::cout, xs);
  } else {
    harness::save_comve(output, xs);
  }
  return 0;
}

int run_synth(std::uint64_t seed, const std::string& out_dir, const harness::SynthSizes& sizes) {
  const auto bench = harness::synth_benchmark(seed, sizes);
  harness::write_synth(bench, out_dir);
  spdlog::info("wrote synthetic benchmark to {} ({} concepts, {} edges)", out_dir,
               bench.graph.concept_count(), bench.graph.edges().size());
  return 0;
}

struct TrainArgs {
  KnowledgeArgs knowledge;
  DataArgs data;
  std::string config;
  std::string train;
  std::string dev;
  std::string output = "model.ckpt";
  std::string log;
  bool no_kemb = false;
  bool no_kegat = false;
  bool no_lm = false;
  int gat_layers = -1;
  int gat_heads = -1;
  int sample_k = -1;
  int node_dim = -1;
  int threads = 0;
  std::string backend = "omp";
};

void split_config(const std::string& path, model::ModelConfig& mc, trainkit::TrainConfig& tc) {
  if (path.empty()) return;
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error&) {
    throw UsageError("config " + path + " is not valid JSON");
  }
  if (!j.is_object()) throw UsageError("config " + path + " must be a JSON object");
  if (auto it = j.find("model"); it != j.end()) {
    mc = model::ModelConfig::from_json(it->dump());
    j.erase(it);
  }
  tc = trainkit::TrainConfig::from_json(j.dump());
}

void apply_backend(const std::string& name, int threads) {
  if (name == "serial") {
    kernels::set_backend(kernels::Backend::kSerial);
  } else if (name == "omp") {
    kernels::set_backend(kernels::Backend::kOpenMP);
  } else {
    throw UsageError("unknown --backend '" + name + "' (serial or omp)");
  }
  if (threads > 0) kernels::set_threads(threads);
}

int run_train(const TrainArgs& a) {
  model::ModelConfig mc;
  trainkit::TrainConfig tc;
  split_config(a.config, mc, tc);
  if (a.no_kemb) mc.use_kemb = false;
  if (a.no_kegat) mc.use_kegat = false;
  if (a.no_lm) mc.use_lm_loss = false;
  if (a.gat_layers > 0) mc.gat.layers = a.gat_layers;
  if (a.gat_heads > 0) mc.gat.heads = a.gat_heads;
  if (a.sample_k >= 0) mc.gat.sample_k = a.sample_k;
  if (a.node_dim > 0) mc.gat.node_dim = a.node_dim;
  if (a.threads > 0) tc.threads = a.threads;
  apply_backend(a.backend, tc.threads);

  const auto know = load_knowledge(a.knowledge, mc);
  const auto train = load_split(a.train, a.data);
  const auto dev = load_split(a.dev, a.data);
  if (train.empty() || dev.empty()) throw DataError("train and dev splits must be nonempty");
  model::Model m(mc, model::build_vocab(train, know.graph, know.templates));
  spdlog::info("vocab {} tokens, {} parameters in {} tensors", m.vocab().size(), m.params().scalar_count(),
               m.params().size());
  const auto ptrain = model::prepare_all(m, train, know.resources());
  const auto pdev = model::prepare_all(m, dev, know.resources());

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, std::ios::binary);
    if (!log) throw DataError("cannot write " + a.log);
  }
  const auto result = trainkit::two_phase_train(m, ptrain, pdev, tc, [&](const trainkit::EpochRecord& r) {
    spdlog::info("phase {} epoch {}: loss {:.4f} dev accuracy {:.4f}", r.phase, r.epoch, r.train_loss,
                 r.dev_accuracy);
    if (log) log << trainkit::to_json_line(r) << '\n' << std::flush;
  });
  trainkit::save_checkpoint(result.best, a.output);
  std::cout << json{{"best_dev_accuracy", result.best.best.dev_accuracy},
                    {"best_phase", result.best.best.phase},
                    {"best_epoch", result.best.best.epoch},
                    {"checkpoint", a.output},
                    {"diverged", result.diverged}}
                   .dump()
            << '\n';
  if (result.diverged) {
    spdlog::error("training diverged: {}; saved the last good checkpoint", result.failure);
    return kExitNumeric;
  }
  return 0;
}

struct EvalArgs {
  KnowledgeArgs knowledge;
  DataArgs data;
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::string input;
  std::string predictions;
  std::vector<std::string> texts;
  std::string false_sent;
};

harness::Metrics evaluate_checkpoint(const std::string& path, const KnowledgeArgs& k,
                                     const std::vector<harness::ComveInstance>& data) {
  const auto ckpt = trainkit::load_checkpoint(path);
  const auto m = trainkit::model_from_checkpoint(ckpt);
  const auto know = load_knowledge(k, m.config());
  return harness::evaluate(m, model::prepare_all(m, data, know.resources()));
}

void report(const harness::Metrics& metrics, const std::string& predictions) {
  if (!predictions.empty()) write_file(predictions, harness::predictions_jsonl(metrics));
  std::cout << json{{"accuracy", metrics.accuracy}, {"correct", metrics.correct}, {"total", metrics.total}}.dump()
            << '\n';
}

int run_eval(const EvalArgs& a) {
  report(evaluate_checkpoint(a.checkpoint, a.knowledge, load_split(a.input, a.data)), a.predictions);
  return 0;
}

int run_predict(const EvalArgs& a) {
  std::vector<harness::ComveInstance> data;
  if (!a.input.empty()) {
    data = load_split(a.input, a.data);
  } else {
    harness::ComveInstance x;
    x.id = "cli";
    x.subtask = harness::parse_subtask(a.data.subtask);
    x.options = a.texts;
    x.false_sent = a.false_sent;
    harness::validate(x);
    data.push_back(std::move(x));
  }
  const auto metrics = evaluate_checkpoint(a.checkpoint, a.knowledge, data);
  const std::string lines = harness::predictions_jsonl(metrics);
  if (a.predictions.empty()) {
    std::cout << lines;
  } else {
    write_file(a.predictions, lines);
  }
  return 0;
}

int run_ensemble(const EvalArgs& a) {
  const auto data = load_split(a.input, a.data);
  std::vector<harness::Metrics> members;
  for (const auto& c : a.checkpoints) members.push_back(evaluate_checkpoint(c, a.knowledge, data));
  report(harness::ensemble(members), a.predictions);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-enhanced commonsense validation and explanation"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto* kb = app.add_subcommand("kb", "knowledge graph utilities");
  kb->require_subcommand(1);
  auto* ingest = kb->add_subcommand("ingest", "load a TSV graph, report stats, optionally write a binary image");
  std::string ingest_in, ingest_block, ingest_out;
  ingest->add_option("--input", ingest_in, "TSV or binary graph")->required();
  ingest->add_option("--blocklist", ingest_block, "relation blocklist file");
  ingest->add_option("--output", ingest_out, "binary image to write");

  KnowledgeArgs link_k;
  std::string link_text;
  std::size_t max_ngram = linker::kDefaultMaxNgram;
  auto* link = app.add_subcommand("link", "print the entities linked in a sentence");
  add_knowledge_options(link, link_k, false);
  link->add_option("--text", link_text, "sentence")->required();
  link->add_option("--max-ngram", max_ngram, "longest n-gram tried");

  auto* pre = app.add_subcommand("preprocess", "input preprocessing");
  pre->require_subcommand(1);
  auto* inject = pre->add_subcommand("inject", "print the knowledge-injected sequence of a sentence");
  KnowledgeArgs inject_k;
  std::string inject_text;
  std::size_t limit = 2;
  std::size_t max_len = 128;
  add_knowledge_options(inject, inject_k, false);
  inject->add_option("--text", inject_text, "sentence")->required();
  inject->add_option("--per-entity-limit", limit, "branches per entity");
  inject->add_option("--max-len", max_len, "flattened length budget");
  inject->add_option("--max-ngram", max_ngram, "longest n-gram tried");

  auto* aug = app.add_subcommand("augment", "generate instances from knowledge graph edges");
  KnowledgeArgs aug_k;
  std::size_t aug_count = 100;
  std::uint64_t aug_seed = 7;
  std::string aug_task = "a";
  std::string aug_out;
  add_knowledge_options(aug, aug_k, false);
  aug->add_option("--count", aug_count, "instances to generate");
  aug->add_option("--seed", aug_seed, "random seed");
  aug->add_option("--subtask", aug_task, "a or b");
  aug->add_option("--output", aug_out, "JSONL output (default stdout)");

  auto* syn = app.add_subcommand("synth", "write the synthetic benchmark");
  std::uint64_t syn_seed = 7;
  std::string syn_dir = "synth";
  harness::SynthSizes sizes;
  syn->add_option("--seed", syn_seed, "random seed");
  syn->add_option("--out-dir", syn_dir, "output directory");
  syn->add_option("--concepts", sizes.concepts, "concept count");
  syn->add_option("--edges", sizes.edges, "edge count");
  syn->add_option("--train", sizes.train, "train instances per subtask");
  syn->add_option("--dev", sizes.dev, "dev instances per subtask");
  syn->add_option("--test", sizes.test, "test instances per subtask");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "two-phase training with dev-based model selection");
  add_knowledge_options(train, ta.knowledge, true);
  add_data_options(train, ta.data);
  train->add_option("--config", ta.config, "JSON training config; an optional \"model\" object sets the model");
  train->add_option("--train", ta.train, "training split")->required();
  train->add_option("--dev", ta.dev, "dev split used for model selection")->required();
  train->add_option("--output", ta.output, "best checkpoint path");
  train->add_option("--log", ta.log, "per-epoch metric log (JSONL)");
  train->add_flag("--no-kemb", ta.no_kemb, "disable knowledge injection into the sequence");
  train->add_flag("--no-kegat", ta.no_kegat, "disable the graph attention module");
  train->add_flag("--no-lm-loss", ta.no_lm, "train on the classification loss alone");
  train->add_option("--gat-layers", ta.gat_layers, "graph attention layers");
  train->add_option("--gat-heads", ta.gat_heads, "graph attention heads");
  train->add_option("--sample-k", ta.sample_k, "neighbors sampled per entity");
  train->add_option("--node-dim", ta.node_dim, "graph node dimension");
  train->add_option("--threads", ta.threads, "OpenMP threads");
  train->add_option("--backend", ta.backend, "kernel backend: omp or serial");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "accuracy of a checkpoint on a split");
  add_knowledge_options(eval, ea.knowledge, true);
  add_data_options(eval, ea.data);
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  eval->add_option("--data", ea.input, "split to evaluate")->required();
  eval->add_option("--predictions", ea.predictions, "per-instance prediction dump (JSONL)");

  EvalArgs pa;
  auto* predict = app.add_subcommand("predict", "per-instance predictions");
  add_knowledge_options(predict, pa.knowledge, true);
  add_data_options(predict, pa.data);
  predict->add_option("--checkpoint", pa.checkpoint, "checkpoint file")->required();
  predict->add_option("--data", pa.input, "split to predict");
  predict->add_option("--option", pa.texts, "statement (A) or reason (B); repeat per option");
  predict->add_option("--false-sent", pa.false_sent, "subtask B statement");
  predict->add_option("--output", pa.predictions, "JSONL output (default stdout)");

  EvalArgs ens;
  auto* ensemble = app.add_subcommand("ensemble", "average several checkpoints' probabilities");
  add_knowledge_options(ensemble, ens.knowledge, true);
  add_data_options(ensemble, ens.data);
  ensemble->add_option("--checkpoints", ens.checkpoints, "comma-separated checkpoint files")
      ->required()
      ->delimiter(',');
  ensemble->add_option("--data", ens.input, "split to evaluate")->required();
  ensemble->add_option("--predictions", ens.predictions, "per-instance prediction dump (JSONL)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("kegat"));
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*ingest) return run_kb_ingest(ingest_in, ingest_block, ingest_out);
    if (*link) return run_link(link_k, link_text, max_ngram);
    if (*inject) return run_inject(inject_k, inject_text, limit, max_len, max_ngram);
    if (*aug) return run_augment(aug_k, aug_count, aug_seed, aug_task, aug_out);
    if (*syn) return run_synth(syn_seed, syn_dir, sizes);
    if (*train) return run_train(ta);
    if (*eval) return run_eval(ea);
    if (*predict) return run_predict(pa);
    if (*ensemble) return run_ensemble(ens);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const NumericError& e) {
    spdlog::error("{}", e.what());
    return kExitNumeric;
  }
  return kExitUsage;
}
