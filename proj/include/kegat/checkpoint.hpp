#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kegat/optim.hpp"
#include "kegat/params.hpp"

namespace kegat::trainkit {

inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedMatrix {
  std::string name;
  Matrix value;
};

struct BestMarker {
  double dev_accuracy = -1.0;
  std::int32_t phase = 0;
  std::int32_t epoch = 0;
};

// Everything needed to resume training or to run inference: parameters,
// optimizer moments, RNG position and the model metadata.
struct Checkpoint {
  std::string config_json;
  std::string vocab_text;
  BestMarker best;
  std::uint64_t seed = 0;
  std::int64_t rng_step = 0;
  std::int64_t optim_step = 0;
  std::vector<NamedMatrix> params;
  std::vector<NamedMatrix> adam_m;  // empty, or aligned with params
  std::vector<NamedMatrix> adam_v;
};

// Copies parameter values and (when given) the optimizer moments.
Checkpoint snapshot(const ParamStore& store, const OptimizerState* opt = nullptr);
// Writes checkpoint values into a store with the same names and shapes.
// Throws DataError on a missing name or a shape mismatch.
void restore(ParamStore& store, const Checkpoint& ckpt, OptimizerState* opt = nullptr);

// Named-tensor records after the "KGAT" magic and version byte. Output
// depends only on the checkpoint contents.
std::string serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kegat::trainkit
