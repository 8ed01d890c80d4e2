#pragma once

#include <span>
#include <string>
#include <vector>

#include "kegat/model.hpp"

namespace kegat::harness {

struct Prediction {
  std::string id;
  int label = 0;
  int predicted = 0;
  std::vector<double> probs;
};

struct Metrics {
  double accuracy = 0.0;  // correct / total, 0 for an empty set
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<Prediction> predictions;  // input order
};

Metrics evaluate(const model::Model& model, std::span<const model::PreparedInstance> instances);
Metrics score_predictions(std::vector<Prediction> predictions);

// Averages the probability vectors of several models' predictions over the
// same instances, then re-scores. Throws UsageError on misaligned inputs.
Metrics ensemble(std::span<const Metrics> members);

// One JSON object per instance: id, label, predicted, probs.
std::string predictions_jsonl(const Metrics& metrics);

}  // namespace kegat::harness
