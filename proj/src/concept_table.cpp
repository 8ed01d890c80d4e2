#include "kegat/concept_table.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "kegat/error.hpp"
#include "kegat/kgstore.hpp"

namespace kegat::reasoning {

void ConceptTable::add(const std::string& id, const Eigen::RowVectorXd& v) {
  if (v.size() != dim_) {
    throw DataError(fmt::format("embedding for {} has dimension {}, expected {}", id, v.size(), dim_));
  }
  if (auto it = index_.find(id); it != index_.end()) {
    rows_[it->second] = v;
    return;
  }
  index_[id] = ids_.size();
  ids_.push_back(id);
  rows_.push_back(v);
}

const Eigen::RowVectorXd* ConceptTable::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &rows_[it->second];
}

ConceptTable ConceptTable::project(int target_dim, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(target_dim)));
  Eigen::MatrixXd proj(dim_, target_dim);
  for (Eigen::Index c = 0; c < proj.cols(); ++c) {
    for (Eigen::Index r = 0; r < proj.rows(); ++r) proj(r, c) = dist(rng);
  }
  ConceptTable out(target_dim);
  for (std::size_t i = 0; i < ids_.size(); ++i) out.add(ids_[i], rows_[i] * proj);
  return out;
}

namespace {

std::vector<std::string> fields(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(v);
}

bool is_int(const std::string& s) {
  return !s.empty() && s.find_first_not_of("0123456789") == std::string::npos;
}

}  // namespace

ConceptTable load_concept_table(const std::filesystem::path& path, int target_dim,
                                std::uint64_t projection_seed) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open concept embeddings " + path.string());
  std::string line;
  std::size_t lineno = 0;
  int dim = -1;
  ConceptTable table;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = fields(line);
    if (f.empty()) continue;
    if (lineno == 1 && f.size() == 2 && is_int(f[0]) && is_int(f[1])) {
      dim = std::stoi(f[1]);
      table = ConceptTable(dim);
      continue;
    }
    const int row_dim = static_cast<int>(f.size()) - 1;
    if (dim < 0) {
      dim = row_dim;
      table = ConceptTable(dim);
    }
    if (row_dim != dim || dim <= 0) {
      throw DataError(fmt::format("{}:{}: dimension {} differs from {}", path.string(), lineno, row_dim, dim));
    }
    Eigen::RowVectorXd v(dim);
    for (int k = 0; k < dim; ++k) {
      if (!parse_double(f[k + 1], v(k))) {
        throw DataError(fmt::format("{}:{}: bad value '{}'", path.string(), lineno, f[k + 1]));
      }
    }
    const auto id = kgstore::normalize_concept(f[0]);
    if (id.empty()) throw DataError(fmt::format("{}:{}: empty concept", path.string(), lineno));
    table.add(id, v);
  }
  if (target_dim > 0 && dim > 0 && target_dim != dim) return table.project(target_dim, projection_seed);
  return table;
}

void save_concept_table(const ConceptTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << table.size() << ' ' << table.dim() << '\n';
  for (const auto& id : table.ids()) {
    out << id;
    const auto& v = *table.find(id);
    for (Eigen::Index k = 0; k < v.size(); ++k) out << ' ' << fmt::format("{}", v(k));
    out << '\n';
  }
}

}  // namespace kegat::reasoning
