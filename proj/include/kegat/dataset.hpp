#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace kegat::harness {

enum class Subtask { A, B };

// Accepts "a"/"b" in either case; throws UsageError otherwise.
Subtask parse_subtask(const std::string& tag);
std::string to_string(Subtask s);
// Options per instance: 2 for A, 3 for B.
std::size_t option_count(Subtask s);

// Where a generated instance came from. Absent for loaded data.
struct Provenance {
  bool present = false;
  std::string head, relation, tail, corrupt;
};

struct ComveInstance {
  std::string id;
  Subtask subtask = Subtask::A;
  // A: the two statements. B: the three candidate reasons.
  std::vector<std::string> options;
  std::string false_sent;  // B only
  int label = 0;
  Provenance meta;
};

// Throws DataError when the label is out of range or a text is empty.
void validate(const ComveInstance& instance);

// JSONL, one object per line. A: id, sent0, sent1, label. B: id, false_sent,
// optionA, optionB, optionC, label. Blank lines are skipped; an empty input
// yields an empty list with a warning.
std::vector<ComveInstance> load_comve(const std::filesystem::path& path, Subtask subtask);
std::vector<ComveInstance> parse_comve_jsonl(std::istream& in, Subtask subtask,
                                             const std::string& source = "<input>");
void write_comve_jsonl(std::ostream& out, std::span<const ComveInstance> instances);
void save_comve(const std::filesystem::path& path, std::span<const ComveInstance> instances);

// Column names for CSV import; the official files vary, so all are settable.
struct CsvMapping {
  std::string id = "id";
  std::string sent0 = "sent0";
  std::string sent1 = "sent1";
  std::string false_sent = "FalseSent";
  std::string option_a = "OptionA";
  std::string option_b = "OptionB";
  std::string option_c = "OptionC";
  std::string label = "label";
};
// Header row required; quoted fields with doubled quotes are supported.
// Labels may be integers or, for B, the letters A/B/C.
std::vector<ComveInstance> load_comve_csv(const std::filesystem::path& path, Subtask subtask,
                                          const CsvMapping& mapping = {});

struct ConvertedInput {
  // One token sequence per option, each wrapped in [CLS] ... [SEP].
  std::vector<std::vector<std::string>> options;
  std::size_t size() const { return options.size(); }
  std::vector<std::string> texts() const;
};

// A: "[CLS] S [SEP]" per statement. B: "[CLS] false [SEP] reason [SEP]" per
// reason.
ConvertedInput convert(const ComveInstance& instance);

}  // namespace kegat::harness
