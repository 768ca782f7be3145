#include "segcurate/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <unordered_map>

#include "segcurate/error.hpp"
#include "segcurate/parallel.hpp"

namespace segcurate {
namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> parse_label(std::string_view text, const std::array<Enum, N>& values) {
  for (const Enum v : values) {
    if (to_string(v) == text) return v;
  }
  return std::nullopt;
}

constexpr std::array kGranularities{Granularity::Semantic, Granularity::Instance, Granularity::Part};
constexpr std::array kMultiplicities{Multiplicity::Single, Multiplicity::Multiple};
constexpr std::array kReasonings{Reasoning::Explicit, Reasoning::Implicit};
constexpr std::array kLinguistics{Linguistic::Short, Linguistic::Long};
constexpr std::array kSplits{Split::Train, Split::Test};

constexpr std::array<std::string_view, 12> kFields{
    "id",       "image_path", "instruction",  "answer",    "masks",      "bboxes",
    "category", "granularity", "multiplicity", "reasoning", "linguistic", "split"};

struct LineOutcome {
  std::optional<DatasetRecord> record;
  std::string id;
  std::vector<ValidationIssue> issues;
  std::vector<ValidationWarning> warnings;
};

std::uint64_t rle_area(const RleMask& rle) {
  std::uint64_t area = 0;
  for (std::size_t i = 1; i < rle.runs.size(); i += 2) area += rle.runs[i];
  return area;
}

LineOutcome check_line(const std::string& text, std::size_t line) {
  LineOutcome out;
  const auto issue = [&](RecordIssue code, std::string message) {
    out.issues.push_back({line, out.id, code, std::move(message)});
  };

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    issue(RecordIssue::BadJson, e.what());
    return out;
  }
  if (!j.is_object()) {
    issue(RecordIssue::BadJson, "record is not a JSON object");
    return out;
  }
  if (j.contains("id") && j["id"].is_string()) out.id = j["id"].get<std::string>();

  for (const auto field : kFields) {
    if (!j.contains(std::string(field))) issue(RecordIssue::MissingField, "missing '" + std::string(field) + "'");
  }
  if (!out.issues.empty()) return out;

  const auto string_field = [&](std::string_view name) -> std::optional<std::string> {
    const auto& v = j[std::string(name)];
    if (!v.is_string()) {
      issue(RecordIssue::MissingField, "'" + std::string(name) + "' must be a string");
      return std::nullopt;
    }
    return v.get<std::string>();
  };

  DatasetRecord r;
  const auto id = string_field("id");
  const auto image = string_field("image_path");
  const auto instruction = string_field("instruction");
  const auto answer = string_field("answer");
  const auto category = string_field("category");
  if (!id || !image || !instruction || !answer || !category) return out;
  r.id = *id;
  r.image_path = *image;
  r.instruction = *instruction;
  r.answer = *answer;
  r.category = *category;
  if (r.id.empty()) issue(RecordIssue::MissingField, "'id' is empty");

  if (!is_known_category(r.category)) {
    issue(RecordIssue::UnknownCategory, "'" + r.category + "' is not in the class vocabulary");
  }

  const auto label = [&]<typename Enum, std::size_t N>(std::string_view name,
                                                       const std::array<Enum, N>& values,
                                                       Enum& dst) {
    const auto& v = j[std::string(name)];
    const auto parsed = v.is_string() ? parse_label(v.get<std::string>(), values) : std::nullopt;
    if (!parsed) {
      issue(RecordIssue::UnknownLabel, "bad " + std::string(name) + " label " + v.dump());
      return;
    }
    dst = *parsed;
  };
  label("granularity", kGranularities, r.granularity);
  label("multiplicity", kMultiplicities, r.multiplicity);
  label("reasoning", kReasonings, r.reasoning);
  label("linguistic", kLinguistics, r.linguistic);
  label("split", kSplits, r.split);

  const auto& masks = j["masks"];
  const auto& boxes = j["bboxes"];
  if (!masks.is_array() || masks.empty()) {
    issue(RecordIssue::BadRle, "'masks' must be a non-empty array");
  } else {
    for (std::size_t m = 0; m < masks.size(); ++m) {
      try {
        RleMask rle = masks[m].get<RleMask>();
        const BinaryMask decoded = rle_decode(rle);
        if (!r.masks.empty() &&
            (rle.height != r.masks.front().height || rle.width != r.masks.front().width)) {
          issue(RecordIssue::BadRle, "mask " + std::to_string(m) + " differs in size from mask 0");
        }
        r.masks.push_back(std::move(rle));
        if (!decoded.any()) issue(RecordIssue::EmptyMask, "mask " + std::to_string(m) + " is empty");
      } catch (const Error& e) {
        issue(RecordIssue::BadRle, "mask " + std::to_string(m) + ": " + e.what());
      }
    }
  }
  if (!boxes.is_array()) {
    issue(RecordIssue::BboxMismatch, "'bboxes' must be an array");
  } else {
    for (const auto& b : boxes) {
      try {
        r.bboxes.push_back(b.get<BBox>());
      } catch (const std::exception& e) {
        issue(RecordIssue::BboxMismatch, std::string("unreadable bbox: ") + e.what());
      }
    }
  }

  if (out.issues.empty()) {
    if (r.bboxes.size() != r.masks.size()) {
      issue(RecordIssue::BboxMismatch, std::to_string(r.bboxes.size()) + " bboxes for " +
                                           std::to_string(r.masks.size()) + " masks");
    } else {
      for (std::size_t m = 0; m < r.masks.size(); ++m) {
        const BBox expected = mask_to_bbox(rle_decode(r.masks[m]));
        if (!(expected == r.bboxes[m])) {
          const nlohmann::json want = expected;
          const nlohmann::json got = r.bboxes[m];
          issue(RecordIssue::BboxMismatch,
                "bbox " + std::to_string(m) + " is " + got.dump() + ", mask gives " + want.dump());
        }
      }
    }
  }
  if (!out.issues.empty()) return out;

  const Multiplicity derived = r.masks.size() >= 2 ? Multiplicity::Multiple : Multiplicity::Single;
  if (derived != r.multiplicity) {
    out.warnings.push_back({line, r.id,
                            "multiplicity '" + std::string(to_string(r.multiplicity)) +
                                "' replaced by '" + std::string(to_string(derived)) + "' (" +
                                std::to_string(r.masks.size()) + " masks)"});
    r.multiplicity = derived;
  }
  out.record = std::move(r);
  return out;
}

}  // namespace

std::string_view to_string(Granularity v) {
  switch (v) {
    case Granularity::Semantic: return "semantic";
    case Granularity::Instance: return "instance";
    case Granularity::Part: return "part";
  }
  return "?";
}

std::string_view to_string(Multiplicity v) {
  return v == Multiplicity::Single ? "single" : "multiple";
}
std::string_view to_string(Reasoning v) { return v == Reasoning::Explicit ? "explicit" : "implicit"; }
std::string_view to_string(Linguistic v) { return v == Linguistic::Short ? "short" : "long"; }
std::string_view to_string(Split v) { return v == Split::Train ? "train" : "test"; }

std::string_view to_string(RecordIssue issue) {
  switch (issue) {
    case RecordIssue::BadJson: return "BadJson";
    case RecordIssue::MissingField: return "MissingField";
    case RecordIssue::BadRle: return "BadRle";
    case RecordIssue::EmptyMask: return "EmptyMask";
    case RecordIssue::BboxMismatch: return "BboxMismatch";
    case RecordIssue::UnknownCategory: return "UnknownCategory";
    case RecordIssue::UnknownLabel: return "UnknownLabel";
    case RecordIssue::DuplicateId: return "DuplicateId";
  }
  return "?";
}

nlohmann::json to_json_value(const DatasetRecord& r) {
  return nlohmann::json{
      {"id", r.id},
      {"image_path", r.image_path},
      {"instruction", r.instruction},
      {"answer", r.answer},
      {"masks", r.masks},
      {"bboxes", r.bboxes},
      {"category", r.category},
      {"granularity", to_string(r.granularity)},
      {"multiplicity", to_string(r.multiplicity)},
      {"reasoning", to_string(r.reasoning)},
      {"linguistic", to_string(r.linguistic)},
      {"split", to_string(r.split)},
  };
}

std::string to_canonical_line(const DatasetRecord& r) { return to_json_value(r).dump(); }

ValidationResult validate_lines(const std::vector<std::string>& lines, unsigned jobs) {
  std::vector<LineOutcome> outcomes(lines.size());
  parallel_for(lines.size(), jobs, [&](std::size_t i) {
    const auto blank = std::all_of(lines[i].begin(), lines[i].end(),
                                   [](unsigned char c) { return std::isspace(c) != 0; });
    if (!blank) outcomes[i] = check_line(lines[i], i + 1);
  });

  // Duplicate detection needs the sequential pass.
  ValidationResult result;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    LineOutcome& o = outcomes[i];
    if (o.record) {
      if (!seen.insert(o.record->id).second) {
        o.issues.push_back({i + 1, o.record->id, RecordIssue::DuplicateId,
                            "id '" + o.record->id + "' already used by an earlier record"});
        o.record.reset();
      }
    }
    for (auto& issue : o.issues) result.issues.push_back(std::move(issue));
    for (auto& w : o.warnings) result.warnings.push_back(std::move(w));
    if (o.record) {
      result.records.push_back(std::move(*o.record));
      result.record_lines.push_back(i + 1);
    }
  }
  return result;
}

ValidationResult validate(std::istream& jsonl, unsigned jobs) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(jsonl, line);) lines.push_back(std::move(line));
  return validate_lines(lines, jobs);
}

std::size_t word_count(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (const char ch : text) {
    const bool space = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

Linguistic classify_linguistic(std::string_view instruction, int threshold_words) {
  const std::size_t words = word_count(instruction);
  if (words == 0) throw Error(ErrorCode::EmptyInstruction, "instruction has no words");
  if (threshold_words < 1) throw Error(ErrorCode::InvalidArgument, "threshold must be >= 1");
  return words < static_cast<std::size_t>(threshold_words) ? Linguistic::Short : Linguistic::Long;
}

DatasetStats stats(const std::vector<DatasetRecord>& records, int linguistic_threshold) {
  DatasetStats s;
  s.linguistic_threshold = linguistic_threshold;
  for (const auto& r : records) {
    ++s.qa_count;
    s.mask_count += r.masks.size();
    if (r.split == Split::Test) {
      ++s.test_qa_count;
      s.test_mask_count += r.masks.size();
    }
    ++s.category_histogram[r.category];
    ++s.instruction_length_histogram[word_count(r.instruction)];
    ++s.masks_per_record_histogram[r.masks.size()];
    for (const auto& m : r.masks) {
      // floor(20 * area / pixels) in integers so band edges are exact
      const std::uint64_t pixels = static_cast<std::uint64_t>(m.height) * static_cast<std::uint64_t>(m.width);
      const auto bin = std::min<std::uint64_t>(20 * rle_area(m) / pixels, 19);
      ++s.area_ratio_histogram[bin];
    }
  }
  s.class_count = s.category_histogram.size();
  return s;
}

SplitReport split_check(const std::vector<DatasetRecord>& records) {
  SplitReport report;
  std::map<std::string, std::array<bool, 2>> id_splits;
  std::map<std::string, std::array<std::vector<std::string>, 2>> images;
  for (const auto& r : records) {
    const auto s = static_cast<std::size_t>(r.split);
    (r.split == Split::Train ? report.train_records : report.test_records) += 1;
    id_splits[r.id][s] = true;
    images[r.image_path][s].push_back(r.id);
  }
  for (const auto& [id, seen] : id_splits) {
    if (seen[0] && seen[1]) report.id_leaks.push_back(id);
  }
  for (auto& [path, ids] : images) {
    if (!ids[0].empty() && !ids[1].empty()) report.image_leaks.push_back({path, ids[0], ids[1]});
  }
  return report;
}

void to_json(nlohmann::json& j, const ValidationIssue& i) {
  j = nlohmann::json{
      {"line", i.line}, {"id", i.id}, {"code", to_string(i.code)}, {"message", i.message}};
}

void to_json(nlohmann::json& j, const ValidationWarning& w) {
  j = nlohmann::json{{"line", w.line}, {"id", w.id}, {"message", w.message}};
}

void to_json(nlohmann::json& j, const DatasetStats& s) {
  nlohmann::json lengths = nlohmann::json::object();
  for (const auto& [len, n] : s.instruction_length_histogram) lengths[std::to_string(len)] = n;
  nlohmann::json per_record = nlohmann::json::object();
  for (const auto& [k, n] : s.masks_per_record_histogram) per_record[std::to_string(k)] = n;
  nlohmann::json area = nlohmann::json::array();
  for (std::size_t b = 0; b < s.area_ratio_histogram.size(); ++b) {
    area.push_back({{"lower", static_cast<double>(b) * 0.05},
                    {"upper", static_cast<double>(b + 1) * 0.05},
                    {"count", s.area_ratio_histogram[b]}});
  }
  j = nlohmann::json{{"mask_count", s.mask_count},
                     {"qa_count", s.qa_count},
                     {"class_count", s.class_count},
                     {"test_mask_count", s.test_mask_count},
                     {"test_qa_count", s.test_qa_count},
                     {"category_histogram", s.category_histogram},
                     {"instruction_length_histogram", lengths},
                     {"masks_per_record_histogram", per_record},
                     {"area_ratio_histogram", area},
                     {"linguistic_threshold", s.linguistic_threshold}};
}

void to_json(nlohmann::json& j, const SplitReport& r) {
  nlohmann::json leaks = nlohmann::json::array();
  for (const auto& l : r.image_leaks) {
    leaks.push_back({{"image_path", l.image_path}, {"train_ids", l.train_ids}, {"test_ids", l.test_ids}});
  }
  j = nlohmann::json{{"train_records", r.train_records},
                     {"test_records", r.test_records},
                     {"id_leaks", r.id_leaks},
                     {"image_leaks", leaks},
                     {"clean", r.clean()}};
}

}  // namespace segcurate
