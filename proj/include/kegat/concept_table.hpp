#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace kegat::reasoning {

// Concept embedding table (e.g. Numberbatch) keyed by normalized concept id.
class ConceptTable {
 public:
  ConceptTable() = default;
  ConceptTable(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  void add(const std::string& id, const Eigen::RowVectorXd& v);
  // nullptr for unknown concepts.
  const Eigen::RowVectorXd* find(const std::string& id) const;
  const std::vector<std::string>& ids() const { return ids_; }

  // Multiplies every row by a fixed Gaussian D x target matrix drawn from
  // `seed` (entries N(0, 1/target)).
  ConceptTable project(int target_dim, std::uint64_t seed) const;

 private:
  int dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<Eigen::RowVectorXd> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

// word2vec-style text: optional "count dim" header, then "concept v1 .. vD".
// Rows must share one dimension. When target_dim > 0 and differs from the
// file's dimension the table is projected down with `projection_seed`.
ConceptTable load_concept_table(const std::filesystem::path& path, int target_dim = 0,
                                std::uint64_t projection_seed = 0);
void save_concept_table(const ConceptTable& table, const std::filesystem::path& path);

}  // namespace kegat::reasoning
