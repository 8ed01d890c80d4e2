#include "kegat/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kegat/error.hpp"
#include "kegat/linker.hpp"

namespace kegat::harness {

using nlohmann::json;

Subtask parse_subtask(const std::string& tag) {
  if (tag == "a" || tag == "A") return Subtask::A;
  if (tag == "b" || tag == "B") return Subtask::B;
  throw UsageError("unknown subtask tag '" + tag + "' (expected a or b)");
}

std::string to_string(Subtask s) { return s == Subtask::A ? "a" : "b"; }

std::size_t option_count(Subtask s) { return s == Subtask::A ? 2 : 3; }

namespace {

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

void validate(const ComveInstance& x) {
  const std::string where = x.id.empty() ? std::string("instance") : "instance " + x.id;
  if (x.options.size() != option_count(x.subtask)) {
    throw DataError(where + ": expected " + std::to_string(option_count(x.subtask)) + " options");
  }
  if (x.label < 0 || x.label >= static_cast<int>(x.options.size())) {
    throw DataError(where + ": label " + std::to_string(x.label) + " out of range");
  }
  for (const auto& o : x.options) {
    if (blank(o)) throw DataError(where + ": empty text");
  }
  if (x.subtask == Subtask::B && blank(x.false_sent)) throw DataError(where + ": empty false_sent");
}

namespace {

std::string field_string(const json& j, const std::string& key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw DataError(where + ": missing field " + key);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  throw DataError(where + ": field " + key + " must be a string");
}

int field_label(const json& j, const std::string& where) {
  auto it = j.find("label");
  if (it == j.end()) throw DataError(where + ": missing field label");
  if (it->is_number_integer()) return it->get<int>();
  if (it->is_string()) {
    const std::string s = it->get<std::string>();
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'C') return s[0] - 'A';
    try {
      std::size_t used = 0;
      const int v = std::stoi(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw DataError(where + ": field label must be an integer");
}

Provenance read_meta(const json& j) {
  Provenance p;
  auto it = j.find("meta");
  if (it == j.end() || !it->is_object()) return p;
  p.present = true;
  p.head = it->value("head", "");
  p.relation = it->value("relation", "");
  p.tail = it->value("tail", "");
  p.corrupt = it->value("corrupt", "");
  return p;
}

}  // namespace

std::vector<ComveInstance> parse_comve_jsonl(std::istream& in, Subtask subtask, const std::string& source) {
  std::vector<ComveInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed JSON");
    }
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    ComveInstance x;
    x.subtask = subtask;
    x.id = field_string(j, "id", where);
    if (subtask == Subtask::A) {
      x.options = {field_string(j, "sent0", where), field_string(j, "sent1", where)};
    } else {
      x.false_sent = field_string(j, "false_sent", where);
      x.options = {field_string(j, "optionA", where), field_string(j, "optionB", where),
                   field_string(j, "optionC", where)};
    }
    x.label = field_label(j, where);
    x.meta = read_meta(j);
    try {
      validate(x);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    out.push_back(std::move(x));
  }
  if (out.empty()) spdlog::warn("{}: no instances", source);
  return out;
}

std::vector<ComveInstance> load_comve(const std::filesystem::path& path, Subtask subtask) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_comve_jsonl(in, subtask, path.string());
}

void write_comve_jsonl(std::ostream& out, std::span<const ComveInstance> instances) {
  for (const auto& x : instances) {
    json j = json::object();
    j["id"] = x.id;
    if (x.subtask == Subtask::A) {
      j["sent0"] = x.options.at(0);
      j["sent1"] = x.options.at(1);
    } else {
      j["false_sent"] = x.false_sent;
      j["optionA"] = x.options.at(0);
      j["optionB"] = x.options.at(1);
      j["optionC"] = x.options.at(2);
    }
    j["label"] = x.label;
    if (x.meta.present) {
      j["meta"] = {{"head", x.meta.head}, {"relation", x.meta.relation},
                   {"tail", x.meta.tail}, {"corrupt", x.meta.corrupt}};
    }
    out << j.dump() << '\n';
  }
}

void save_comve(const std::filesystem::path& path, std::span<const ComveInstance> instances) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_comve_jsonl(out, instances);
}

namespace {

// Splits a whole CSV document into records, honoring quoted newlines.
std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::istream& in) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool any = false;
  std::size_t line = 1;
  std::size_t start = 1;
  char c;
  auto end_row = [&] {
    fields.push_back(cur);
    cur.clear();
    if (!(fields.size() == 1 && fields[0].empty())) rows.emplace_back(start, fields);
    fields.clear();
    any = false;
  };
  while (in.get(c)) {
    if (!any) {
      start = line;
      any = true;
    }
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          cur += '"';
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\n') {
      end_row();
      ++line;
    } else if (c != '\r') {
      cur += c;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(start) + ": unterminated quoted field");
  if (any) end_row();
  return rows;
}

}  // namespace

std::vector<ComveInstance> load_comve_csv(const std::filesystem::path& path, Subtask subtask,
                                          const CsvMapping& m) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  const auto rows = parse_csv(in);
  std::vector<ComveInstance> out;
  if (rows.empty()) {
    spdlog::warn("{}: no instances", path.string());
    return out;
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].second.size(); ++i) col[rows[0].second[i]] = i;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& [lineno, fields] = rows[r];
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto get = [&](const std::string& name) -> std::string {
      auto it = col.find(name);
      if (it == col.end() || it->second >= fields.size()) throw DataError(where + ": missing field " + name);
      return fields[it->second];
    };
    json j = json::object();
    j["id"] = get(m.id);
    if (subtask == Subtask::A) {
      j["sent0"] = get(m.sent0);
      j["sent1"] = get(m.sent1);
    } else {
      j["false_sent"] = get(m.false_sent);
      j["optionA"] = get(m.option_a);
      j["optionB"] = get(m.option_b);
      j["optionC"] = get(m.option_c);
    }
    j["label"] = get(m.label);
    std::istringstream one(j.dump());
    auto parsed = parse_comve_jsonl(one, subtask, where);
    out.push_back(std::move(parsed.at(0)));
  }
  if (out.empty()) spdlog::warn("{}: no instances", path.string());
  return out;
}

std::vector<std::string> ConvertedInput::texts() const {
  std::vector<std::string> out;
  for (const auto& seq : options) {
    std::string s;
    for (const auto& tok : seq) {
      if (!s.empty()) s += ' ';
      s += tok;
    }
    out.push_back(std::move(s));
  }
  return out;
}

ConvertedInput convert(const ComveInstance& x) {
  ConvertedInput c;
  const auto wrap = [](std::vector<std::string>& seq, const std::string& text) {
    const auto toks = linker::tokenize(text);
    seq.insert(seq.end(), toks.begin(), toks.end());
    seq.push_back("[SEP]");
  };
  for (const auto& option : x.options) {
    std::vector<std::string> seq{"[CLS]"};
    if (x.subtask == Subtask::B) wrap(seq, x.false_sent);
    wrap(seq, option);
    c.options.push_back(std::move(seq));
  }
  return c;
}

}  // namespace kegat::harness
