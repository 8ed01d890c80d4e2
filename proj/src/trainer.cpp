#include "kegat/trainer.hpp"

#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kegat/error.hpp"
#include "kegat/evaluate.hpp"
#include "kegat/kernels.hpp"
#include "kegat/seed.hpp"

namespace kegat::trainkit {

using nlohmann::json;

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error&) {
    throw UsageError("training config is not valid JSON");
  }
  if (!j.is_object()) throw UsageError("training config must be a JSON object");
  TrainConfig c;
  static const std::set<std::string> known = {"lr_phase1", "lr_phase2",  "epochs_phase1", "epochs_phase2",
                                              "batch_size", "seed",      "adam_eps",      "grad_clip",
                                              "weight_decay", "threads"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw UsageError("unknown training config key '" + it.key() + "'");
  }
  try {
    c.schedule.phase1.lr = j.value("lr_phase1", c.schedule.phase1.lr);
    c.schedule.phase2.lr = j.value("lr_phase2", c.schedule.phase2.lr);
    c.schedule.phase1.epochs = j.value("epochs_phase1", c.schedule.phase1.epochs);
    c.schedule.phase2.epochs = j.value("epochs_phase2", c.schedule.phase2.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.threads = j.value("threads", c.threads);
  } catch (const json::type_error& e) {
    throw UsageError(std::string("training config has a value of the wrong type: ") + e.what());
  }
  c.schedule.validate();
  if (c.batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (!(c.adam_eps > 0.0)) throw UsageError("adam_eps must be positive");
  if (c.grad_clip < 0.0 || c.weight_decay < 0.0) throw UsageError("grad_clip and weight_decay must be nonnegative");
  return c;
}

std::string TrainConfig::to_json() const {
  json j = {{"lr_phase1", schedule.phase1.lr},   {"lr_phase2", schedule.phase2.lr},
            {"epochs_phase1", schedule.phase1.epochs}, {"epochs_phase2", schedule.phase2.epochs},
            {"batch_size", batch_size},           {"seed", seed},
            {"adam_eps", adam_eps},               {"grad_clip", grad_clip},
            {"weight_decay", weight_decay},       {"threads", threads}};
  return j.dump();
}

std::string to_json_line(const EpochRecord& r) {
  json j = {{"phase", r.phase},           {"epoch", r.epoch}, {"steps", r.steps},
            {"train_loss", r.train_loss}, {"dev_accuracy", r.dev_accuracy},
            {"s1", r.s1},                 {"s2", r.s2}};
  return j.dump();
}

namespace {

struct InstanceResult {
  std::vector<Matrix> grads;
  double l1 = 0.0;
  double l2 = 0.0;
};

double read_s(const ParamStore& store, const char* name) {
  return store.has(name) ? store[name].value(0, 0) : 0.0;
}

}  // namespace

BatchStats compute_batch_gradients(model::Model& model, std::span<const model::PreparedInstance* const> batch,
                                   std::uint64_t dropout_seed, double dropout_rate) {
  if (batch.empty()) throw UsageError("empty batch");
  ParamStore& store = model.params();
  store.zero_grad();
  const bool lm = model.config().use_lm_loss;
  const double s1 = read_s(store, "loss.s1");
  const double s2 = read_s(store, "loss.s2");
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const double c1 = lm ? 0.5 * std::exp(-s1) * inv_b : 0.0;
  const double c2 = lm ? 0.5 * std::exp(-s2) * inv_b : inv_b;

  std::vector<InstanceResult> results(batch.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      ad::Tape tape;
      Binder binder(tape, store);
      std::mt19937_64 rng(seed::mix(dropout_seed, static_cast<std::uint64_t>(i)));
      const encoder::Dropout drop{dropout_rate, dropout_rate > 0.0 ? &rng : nullptr};
      const auto f = model.forward(tape, binder, *batch[i], drop);
      InstanceResult& r = results[i];
      r.l2 = tape.scalar(f.l2);
      std::vector<std::pair<ad::Var, double>> seeds{{f.l2, c2}};
      if (lm) {
        r.l1 = tape.scalar(f.l1);
        seeds.emplace_back(f.l1, c1);
      }
      if (!std::isfinite(r.l1) || !std::isfinite(r.l2)) throw NumericError("non-finite loss");
      tape.backward(seeds);
      binder.collect(r.grads);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  BatchStats stats;
  for (const auto& r : results) {
    for (std::size_t p = 0; p < store.size(); ++p) {
      if (r.grads[p].size() != 0 && !store.at(p).frozen) store.at(p).grad += r.grads[p];
    }
    stats.l1 += r.l1;
    stats.l2 += r.l2;
  }
  stats.l1 *= inv_b;
  stats.l2 *= inv_b;
  if (lm) {
    stats.loss = 0.5 * std::exp(-s1) * stats.l1 + 0.5 * std::exp(-s2) * stats.l2 + 0.5 * (s1 + s2);
    Tensor& t1 = store["loss.s1"];
    Tensor& t2 = store["loss.s2"];
    if (!t1.frozen) t1.grad(0, 0) = -0.5 * std::exp(-s1) * stats.l1 + 0.5;
    if (!t2.frozen) t2.grad(0, 0) = -0.5 * std::exp(-s2) * stats.l2 + 0.5;
  } else {
    stats.loss = stats.l2;
  }
  if (!std::isfinite(stats.loss)) throw NumericError("non-finite loss");
  check_finite_gradients(store);
  return stats;
}

double batch_loss(const model::Model& model, std::span<const model::PreparedInstance* const> batch) {
  if (batch.empty()) throw UsageError("empty batch");
  const bool lm = model.config().use_lm_loss;
  double l1 = 0.0;
  double l2 = 0.0;
  for (const auto* x : batch) {
    ad::Tape tape;
    Binder binder(tape, model.params(), true);
    const auto f = model.forward(tape, binder, *x);
    l2 += tape.scalar(f.l2);
    if (lm) l1 += tape.scalar(f.l1);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  l1 *= inv_b;
  l2 *= inv_b;
  if (!lm) return l2;
  const double s1 = read_s(model.params(), "loss.s1");
  const double s2 = read_s(model.params(), "loss.s2");
  return 0.5 * std::exp(-s1) * l1 + 0.5 * std::exp(-s2) * l2 + 0.5 * (s1 + s2);
}

Checkpoint model_snapshot(const model::Model& model, const OptimizerState* opt) {
  Checkpoint c = snapshot(model.params(), opt);
  c.config_json = model.config().to_json();
  c.vocab_text = model.vocab().to_text();
  return c;
}

model::Model model_from_checkpoint(const Checkpoint& ckpt) {
  model::Model m(model::ModelConfig::from_json(ckpt.config_json), encoder::Vocab::from_text(ckpt.vocab_text));
  restore(m.params(), ckpt);
  return m;
}

namespace {

void regularize(ParamStore& store, const TrainConfig& cfg) {
  if (cfg.weight_decay > 0.0) {
    for (auto& t : store.tensors()) {
      if (!t.frozen) t.grad += cfg.weight_decay * t.value;
    }
  }
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& t : store.tensors()) sq += t.grad.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      for (auto& t : store.tensors()) t.grad *= cfg.grad_clip / norm;
    }
  }
}

}  // namespace

TrainResult two_phase_train(model::Model& model, std::span<const model::PreparedInstance> train,
                            std::span<const model::PreparedInstance> dev, const TrainConfig& cfg,
                            const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty() || dev.empty()) throw UsageError("training needs nonempty train and dev splits");
  cfg.schedule.validate();
  if (cfg.threads > 0) kernels::set_threads(cfg.threads);
  ParamStore& store = model.params();
  TrainResult result;
  OptimizerState opt;
  opt.config.eps = cfg.adam_eps;
  Checkpoint last_good = model_snapshot(model);
  last_good.seed = cfg.seed;
  bool have_best = false;
  std::int64_t step = 0;
  const double dropout = model.config().encoder.dropout;

  const Phase phases[2] = {cfg.schedule.phase1, cfg.schedule.phase2};
  for (int phase = 1; phase <= 2; ++phase) {
    const Phase& ph = phases[phase - 1];
    if (phase == 1) {
      store.freeze_all_except("head");
    } else {
      if (ph.epochs == 0) break;
      if (have_best) restore(store, result.best);
      store.unfreeze_all();
    }
    opt.reset(store);
    opt.config.lr = ph.lr;
    for (int epoch = 0; epoch < ph.epochs; ++epoch) {
      std::vector<std::size_t> order(train.size());
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 shuffle_rng(seed::mix(cfg.seed, static_cast<std::uint64_t>(phase),
                                            static_cast<std::uint64_t>(epoch)));
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      double loss_sum = 0.0;
      std::size_t batches = 0;
      try {
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
          const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
          std::vector<const model::PreparedInstance*> batch;
          for (std::size_t k = start; k < end; ++k) batch.push_back(&train[order[k]]);
          const auto stats = compute_batch_gradients(
              model, batch, seed::mix(cfg.seed, 0xd509, static_cast<std::uint64_t>(step)), dropout);
          regularize(store, cfg);
          adam_step(store, opt);
          for (const auto& t : store.tensors()) {
            if (!t.value.allFinite()) throw NumericError("non-finite value in parameter " + t.name);
          }
          ++step;
          loss_sum += stats.loss;
          ++batches;
        }
      } catch (const NumericError& e) {
        spdlog::error("training diverged in phase {} epoch {}: {}", phase, epoch + 1, e.what());
        result.diverged = true;
        result.failure = e.what();
        if (!have_best) result.best = last_good;
        restore(store, result.best);
        store.unfreeze_all();
        return result;
      }
      EpochRecord rec;
      rec.phase = phase;
      rec.epoch = epoch + 1;
      rec.steps = step;
      rec.train_loss = loss_sum / static_cast<double>(batches);
      rec.dev_accuracy = harness::evaluate(model, dev).accuracy;
      rec.s1 = read_s(store, "loss.s1");
      rec.s2 = read_s(store, "loss.s2");
      result.log.push_back(rec);
      if (on_epoch) on_epoch(rec);
      last_good = model_snapshot(model, &opt);
      last_good.seed = cfg.seed;
      last_good.rng_step = step;
      last_good.best = {rec.dev_accuracy, phase, epoch + 1};
      if (!have_best || rec.dev_accuracy > result.best.best.dev_accuracy) {
        result.best = last_good;
        have_best = true;
      }
    }
  }
  store.unfreeze_all();
  restore(store, result.best);
  return result;
}

}  // namespace kegat::trainkit
