#pragma once

#include <array>
#include <cstddef>
#include <istream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "segcurate/mask.hpp"

namespace segcurate {

// Closed 122-class vocabulary (general, fine-grained and part classes).
const std::vector<std::string_view>& category_vocabulary();
bool is_known_category(std::string_view name);

enum class Granularity { Semantic, Instance, Part };
enum class Multiplicity { Single, Multiple };
enum class Reasoning { Explicit, Implicit };
enum class Linguistic { Short, Long };
enum class Split { Train, Test };

std::string_view to_string(Granularity v);
std::string_view to_string(Multiplicity v);
std::string_view to_string(Reasoning v);
std::string_view to_string(Linguistic v);
std::string_view to_string(Split v);

struct DatasetRecord {
  std::string id;
  std::string image_path;
  std::string instruction;
  std::string answer;
  std::vector<RleMask> masks;
  std::vector<BBox> bboxes;
  std::string category;
  Granularity granularity = Granularity::Semantic;
  Multiplicity multiplicity = Multiplicity::Single;
  Reasoning reasoning = Reasoning::Explicit;
  Linguistic linguistic = Linguistic::Short;
  Split split = Split::Train;
};

// Canonical form: alphabetized keys, compact, one line.
nlohmann::json to_json_value(const DatasetRecord& r);
std::string to_canonical_line(const DatasetRecord& r);

enum class RecordIssue {
  BadJson,
  MissingField,
  BadRle,
  EmptyMask,
  BboxMismatch,
  UnknownCategory,
  UnknownLabel,
  DuplicateId,
};
std::string_view to_string(RecordIssue issue);

struct ValidationIssue {
  std::size_t line = 0;  // 1-based
  std::string id;        // empty when the id could not be read
  RecordIssue code = RecordIssue::BadJson;
  std::string message;
};

struct ValidationWarning {
  std::size_t line = 0;
  std::string id;
  std::string message;
};

struct ValidationResult {
  std::vector<DatasetRecord> records;
  std::vector<std::size_t> record_lines;
  std::vector<ValidationIssue> issues;
  std::vector<ValidationWarning> warnings;
};

// Every schema invariant is checked; each rejected line yields at least one
// issue. Multiplicity is re-derived from the mask count and disagreement is a
// warning, not a rejection. Blank lines are ignored.
ValidationResult validate(std::istream& jsonl, unsigned jobs = 1);
ValidationResult validate_lines(const std::vector<std::string>& lines, unsigned jobs = 1);

inline constexpr int kDefaultLinguisticThreshold = 20;

// Whitespace-token count.
std::size_t word_count(std::string_view text);
// Short iff word count < threshold.
Linguistic classify_linguistic(std::string_view instruction,
                               int threshold_words = kDefaultLinguisticThreshold);

struct DatasetStats {
  std::size_t mask_count = 0;
  std::size_t qa_count = 0;
  std::size_t class_count = 0;
  std::size_t test_mask_count = 0;
  std::size_t test_qa_count = 0;
  std::map<std::string, std::size_t> category_histogram;          // records per category
  std::map<std::size_t, std::size_t> instruction_length_histogram;  // records per word count
  std::map<std::size_t, std::size_t> masks_per_record_histogram;
  std::array<std::size_t, 20> area_ratio_histogram{};  // masks per 5% area band
  int linguistic_threshold = kDefaultLinguisticThreshold;
};

DatasetStats stats(const std::vector<DatasetRecord>& records,
                   int linguistic_threshold = kDefaultLinguisticThreshold);

struct ImageLeak {
  std::string image_path;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct SplitReport {
  std::size_t train_records = 0;
  std::size_t test_records = 0;
  std::vector<std::string> id_leaks;
  std::vector<ImageLeak> image_leaks;

  bool clean() const noexcept { return id_leaks.empty() && image_leaks.empty(); }
};

SplitReport split_check(const std::vector<DatasetRecord>& records);

void to_json(nlohmann::json& j, const ValidationIssue& i);
void to_json(nlohmann::json& j, const ValidationWarning& w);
void to_json(nlohmann::json& j, const DatasetStats& s);
void to_json(nlohmann::json& j, const SplitReport& r);

}  // namespace segcurate
