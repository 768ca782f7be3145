#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "segcurate/mask.hpp"

namespace segcurate {

enum class ReviewStage { MaskReview, QaReview };
enum class ItemStatus { Pending, Leased, Decided };
enum class Verdict { Accept, Reject };

std::string_view to_string(ReviewStage v);
std::string_view to_string(ItemStatus v);
std::string_view to_string(Verdict v);

struct Rubric {
  bool object_recognition = false;
  bool spatial_logic = false;
  bool mask_quality = false;
  bool grammar = false;

  bool all() const noexcept { return object_recognition && spatial_logic && mask_quality && grammar; }
  bool operator==(const Rubric&) const = default;
};

struct ReviewItem {
  std::string id;
  std::string image_path;
  std::vector<RleMask> masks;
  std::string instruction;
  std::string answer;
  ReviewStage stage = ReviewStage::QaReview;
  ItemStatus status = ItemStatus::Pending;
  std::optional<std::string> reviewer;         // set while leased
  std::optional<std::int64_t> lease_expires_ms;  // set while leased
  std::optional<std::string> audit_of;         // source item of an audit copy
};

struct ReviewDecision {
  std::string item_id;
  std::string reviewer;
  Rubric rubric;
  Verdict verdict = Verdict::Reject;
  std::string notes;
  std::int64_t timestamp_ms = 0;  // assigned by the service
  bool revise = false;
};

struct Progress {
  std::size_t pending = 0;
  std::size_t leased = 0;
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::optional<double> acceptance_rate;  // null while nothing is decided
};

struct AuditBatch {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t population = 0;         // accepted items eligible for audit
  std::vector<std::string> sampled;   // source ids, in draw order
  std::vector<std::string> audit_ids; // ids of the enqueued audit copies
};

struct ReviewOptions {
  std::int64_t lease_ttl_ms = 10 * 60 * 1000;
  // Milliseconds since the epoch; injectable for tests.
  std::function<std::int64_t()> clock;
};

std::int64_t system_clock_ms();

// Review queue with leases. Every mutation is recorded as an event and applied
// through the same code path used by replay, so replaying the event log yields
// a byte-identical snapshot. All state is guarded by one mutex.
class ReviewService {
 public:
  explicit ReviewService(ReviewOptions options = {});

  // Events are appended to `path` (created if absent) as they happen.
  void attach_log(const std::string& path);

  // Throws InvalidArgument on a duplicate or empty id.
  void enqueue(ReviewItem item);
  bool contains(const std::string& id) const;

  // Leases the oldest available item. An expired lease makes its item
  // available again. Empty optional means no work.
  std::optional<ReviewItem> next_item(const std::string& reviewer);

  // Check order: UnknownItem, RubricVerdictMismatch, AlreadyDecided,
  // NotLeasedToYou. Returns the stored decision.
  ReviewDecision submit_decision(ReviewDecision decision);

  Progress progress() const;

  // Seeded sample of ceil(fraction * n) accepted items, re-enqueued as audit
  // copies. Throws InvalidFraction unless 0 < fraction <= 1.
  AuditBatch sample_audit(double fraction, std::uint64_t seed);

  std::optional<ReviewItem> item(const std::string& id) const;
  std::vector<ReviewDecision> decisions_for(const std::string& id) const;

  // Canonical state dump, independent of the clock.
  nlohmann::json snapshot() const;
  std::vector<nlohmann::json> events() const;

  // Rebuilds a service from recorded events. Throws InvalidArgument on a
  // malformed or out-of-sequence event.
  static std::unique_ptr<ReviewService> replay(const std::vector<nlohmann::json>& events,
                                               ReviewOptions options = {});
  static std::unique_ptr<ReviewService> replay(std::istream& jsonl, ReviewOptions options = {});

 private:
  struct Entry {
    ReviewItem item;
    std::vector<ReviewDecision> decisions;
  };

  std::int64_t now() const;
  void record(nlohmann::json event);  // caller holds mu_
  void apply(const nlohmann::json& event);
  std::optional<std::size_t> next_available(std::int64_t now) const;

  ReviewOptions options_;
  mutable std::mutex mu_;
  std::vector<Entry> entries_;  // enqueue order
  std::map<std::string, std::size_t> index_;
  std::set<std::size_t> pending_;
  std::set<std::size_t> leased_;
  std::map<std::string, std::size_t> audit_counts_;
  std::vector<nlohmann::json> events_;
  std::ofstream log_;
};

void to_json(nlohmann::json& j, const Rubric& r);
void from_json(const nlohmann::json& j, Rubric& r);
void to_json(nlohmann::json& j, const ReviewItem& item);
void from_json(const nlohmann::json& j, ReviewItem& item);
void to_json(nlohmann::json& j, const ReviewDecision& d);
void from_json(const nlohmann::json& j, ReviewDecision& d);
void to_json(nlohmann::json& j, const Progress& p);
void to_json(nlohmann::json& j, const AuditBatch& b);

}  // namespace segcurate
