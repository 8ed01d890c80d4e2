#include "kegat/evaluate.hpp"

#include <exception>

#include <json.hpp>

#include "kegat/error.hpp"
#include "kegat/head.hpp"

namespace kegat::harness {

Metrics score_predictions(std::vector<Prediction> predictions) {
  Metrics m;
  m.predictions = std::move(predictions);
  m.total = m.predictions.size();
  for (const auto& p : m.predictions) m.correct += p.predicted == p.label ? 1 : 0;
  m.accuracy = m.total ? static_cast<double>(m.correct) / static_cast<double>(m.total) : 0.0;
  return m;
}

Metrics evaluate(const model::Model& model, std::span<const model::PreparedInstance> instances) {
  std::vector<Prediction> preds(instances.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(instances.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const auto s = model.predict(instances[i]);
      Prediction& p = preds[i];
      p.id = instances[i].id;
      p.label = instances[i].label;
      p.predicted = s.predicted;
      p.probs.assign(s.probs.data(), s.probs.data() + s.probs.size());
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return score_predictions(std::move(preds));
}

Metrics ensemble(std::span<const Metrics> members) {
  if (members.empty()) throw UsageError("ensemble needs at least one member");
  const std::size_t n = members[0].predictions.size();
  for (const auto& m : members) {
    if (m.predictions.size() != n) throw UsageError("ensemble members cover different instance counts");
  }
  std::vector<Prediction> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Eigen::RowVectorXd> probs;
    for (const auto& m : members) {
      const auto& p = m.predictions[i];
      if (p.id != members[0].predictions[i].id) throw UsageError("ensemble members disagree on instance order");
      probs.push_back(Eigen::Map<const Eigen::RowVectorXd>(p.probs.data(), static_cast<Eigen::Index>(p.probs.size())));
    }
    const Eigen::RowVectorXd avg = head::ensemble_average(probs);
    out[i].id = members[0].predictions[i].id;
    out[i].label = members[0].predictions[i].label;
    out[i].probs.assign(avg.data(), avg.data() + avg.size());
    out[i].predicted = head::argmax(avg);
  }
  return score_predictions(std::move(out));
}

std::string predictions_jsonl(const Metrics& metrics) {
  std::string out;
  for (const auto& p : metrics.predictions) {
    nlohmann::json j = {{"id", p.id}, {"label", p.label}, {"predicted", p.predicted}, {"probs", p.probs}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace kegat::harness
