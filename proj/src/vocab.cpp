#include "kegat/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "kegat/error.hpp"

namespace kegat::encoder {

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[CLS]", "[SEP]"}) add(t);
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  std::set<std::string> sorted(tokens.begin(), tokens.end());
  for (const auto& t : sorted) v.add(t);
  return v;
}

int Vocab::lookup(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

int Vocab::add(const std::string& token) {
  auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::string Vocab::to_text() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocab Vocab::from_text(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  Vocab v;
  const char* reserved[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  if (lines.size() < 4) throw DataError("vocab needs the four reserved tokens first");
  for (int i = 0; i < 4; ++i) {
    if (lines[i] != reserved[i]) {
      throw DataError("vocab line " + std::to_string(i + 1) + ": expected " + reserved[i]);
    }
  }
  for (std::size_t i = 4; i < lines.size(); ++i) {
    if (lines[i].empty()) throw DataError("vocab line " + std::to_string(i + 1) + ": empty token");
    if (v.ids_.count(lines[i])) {
      throw DataError("vocab line " + std::to_string(i + 1) + ": duplicate token " + lines[i]);
    }
    v.add(lines[i]);
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_text();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocab " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace kegat::encoder
