#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace kegat::encoder {

// Token <-> id bijection. Ids 0..3 are the reserved markers, in file order.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab();
  // Reserved markers first, then `tokens` deduplicated in sorted order.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int lookup(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int add(const std::string& token);

  // One token per line; line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  std::string to_text() const;
  static Vocab from_text(const std::string& text);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace kegat::encoder
