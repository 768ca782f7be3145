#include "segcurate/review.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "segcurate/error.hpp"

namespace segcurate {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::array<Enum, N>& values, const char* what) {
  for (const Enum v : values) {
    if (to_string(v) == text) return v;
  }
  throw Error(ErrorCode::InvalidArgument, std::string("unknown ") + what + " '" + text + "'");
}

ReviewStage parse_stage(const std::string& s) {
  return parse_enum(s, std::array{ReviewStage::MaskReview, ReviewStage::QaReview}, "stage");
}
ItemStatus parse_status(const std::string& s) {
  return parse_enum(s, std::array{ItemStatus::Pending, ItemStatus::Leased, ItemStatus::Decided},
                    "status");
}
Verdict parse_verdict(const std::string& s) {
  return parse_enum(s, std::array{Verdict::Accept, Verdict::Reject}, "verdict");
}

// Unbiased draw in [0, bound) from a 64-bit engine.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % bound;
}

// Mask review judges mask quality only.
Rubric effective_rubric(const Rubric& r, ReviewStage stage) {
  if (stage == ReviewStage::QaReview) return r;
  return Rubric{true, true, r.mask_quality, true};
}

}  // namespace

std::string_view to_string(ReviewStage v) {
  return v == ReviewStage::MaskReview ? "mask_review" : "qa_review";
}

std::string_view to_string(ItemStatus v) {
  switch (v) {
    case ItemStatus::Pending: return "pending";
    case ItemStatus::Leased: return "leased";
    case ItemStatus::Decided: return "decided";
  }
  return "?";
}

std::string_view to_string(Verdict v) { return v == Verdict::Accept ? "accept" : "reject"; }

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

ReviewService::ReviewService(ReviewOptions options) : options_(std::move(options)) {
  if (options_.lease_ttl_ms <= 0) throw Error(ErrorCode::InvalidArgument, "lease TTL must be positive");
  if (!options_.clock) options_.clock = system_clock_ms;
}

std::int64_t ReviewService::now() const { return options_.clock(); }

void ReviewService::attach_log(const std::string& path) {
  std::lock_guard lock(mu_);
  std::size_t present = 0;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) ++present;
    }
  }
  if (present > events_.size()) {
    throw Error(ErrorCode::Io, "log '" + path + "' holds events this service has not seen");
  }
  log_.open(path, std::ios::app);
  if (!log_) throw Error(ErrorCode::Io, "cannot open review log '" + path + "'");
  for (std::size_t i = present; i < events_.size(); ++i) log_ << events_[i].dump() << '\n';
  log_.flush();
}

void ReviewService::record(nlohmann::json event) {
  event["seq"] = events_.size() + 1;
  apply(event);
  if (log_.is_open()) {
    log_ << event.dump() << '\n';
    log_.flush();
  }
  events_.push_back(std::move(event));
}

void ReviewService::apply(const nlohmann::json& event) {
  const std::string type = event.at("type").get<std::string>();
  if (type == "enqueue") {
    ReviewItem item = event.at("item").get<ReviewItem>();
    item.status = ItemStatus::Pending;
    item.reviewer.reset();
    item.lease_expires_ms.reset();
    if (item.id.empty() || index_.count(item.id) != 0) {
      throw Error(ErrorCode::InvalidArgument, "duplicate or empty review item id '" + item.id + "'");
    }
    if (item.audit_of) ++audit_counts_[*item.audit_of];
    const std::size_t idx = entries_.size();
    index_.emplace(item.id, idx);
    entries_.push_back({std::move(item), {}});
    pending_.insert(idx);
  } else if (type == "lease") {
    const std::size_t idx = index_.at(event.at("item_id").get<std::string>());
    ReviewItem& item = entries_[idx].item;
    item.status = ItemStatus::Leased;
    item.reviewer = event.at("reviewer").get<std::string>();
    item.lease_expires_ms = event.at("expires_ms").get<std::int64_t>();
    pending_.erase(idx);
    leased_.insert(idx);
  } else if (type == "decision") {
    const ReviewDecision d = event.at("decision").get<ReviewDecision>();
    const std::size_t idx = index_.at(d.item_id);
    Entry& e = entries_[idx];
    e.decisions.push_back(d);
    e.item.status = ItemStatus::Decided;
    e.item.reviewer.reset();
    e.item.lease_expires_ms.reset();
    pending_.erase(idx);
    leased_.erase(idx);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown review event type '" + type + "'");
  }
}

void ReviewService::enqueue(ReviewItem item) {
  std::lock_guard lock(mu_);
  if (item.id.empty() || index_.count(item.id) != 0) {
    throw Error(ErrorCode::InvalidArgument, "duplicate or empty review item id '" + item.id + "'");
  }
  record({{"type", "enqueue"}, {"ts", now()}, {"item", item}});
}

bool ReviewService::contains(const std::string& id) const {
  std::lock_guard lock(mu_);
  return index_.count(id) != 0;
}

std::optional<std::size_t> ReviewService::next_available(std::int64_t t) const {
  std::optional<std::size_t> best;
  if (!pending_.empty()) best = *pending_.begin();
  for (const std::size_t idx : leased_) {
    if (best && idx > *best) break;
    if (*entries_[idx].item.lease_expires_ms <= t) {
      best = idx;
      break;
    }
  }
  return best;
}

std::optional<ReviewItem> ReviewService::next_item(const std::string& reviewer) {
  if (reviewer.empty()) throw Error(ErrorCode::InvalidArgument, "reviewer id must be non-empty");
  std::lock_guard lock(mu_);
  const std::int64_t t = now();
  const auto idx = next_available(t);
  if (!idx) return std::nullopt;
  record({{"type", "lease"},
          {"ts", t},
          {"item_id", entries_[*idx].item.id},
          {"reviewer", reviewer},
          {"expires_ms", t + options_.lease_ttl_ms}});
  return entries_[*idx].item;
}

ReviewDecision ReviewService::submit_decision(ReviewDecision d) {
  if (d.reviewer.empty()) throw Error(ErrorCode::InvalidArgument, "reviewer id must be non-empty");
  std::lock_guard lock(mu_);
  const auto it = index_.find(d.item_id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownItem, "no review item '" + d.item_id + "'");
  const Entry& e = entries_[it->second];

  d.rubric = effective_rubric(d.rubric, e.item.stage);
  if (d.verdict == Verdict::Accept && !d.rubric.all()) {
    throw Error(ErrorCode::RubricVerdictMismatch, "accept requires every rubric criterion to pass");
  }
  if (d.verdict == Verdict::Reject && d.rubric.all() && d.notes.empty()) {
    throw Error(ErrorCode::RubricVerdictMismatch,
                "reject needs a failed rubric criterion or a note");
  }

  const std::int64_t t = now();
  if (e.item.status == ItemStatus::Decided) {
    const bool own = std::any_of(e.decisions.begin(), e.decisions.end(),
                                 [&](const ReviewDecision& p) { return p.reviewer == d.reviewer; });
    if (!d.revise || !own) {
      throw Error(ErrorCode::AlreadyDecided, "item '" + d.item_id + "' is already decided");
    }
  } else {
    const bool holds = e.item.status == ItemStatus::Leased && e.item.reviewer == d.reviewer &&
                       *e.item.lease_expires_ms > t;
    if (!holds) {
      throw Error(ErrorCode::NotLeasedToYou,
                  "item '" + d.item_id + "' is not leased to '" + d.reviewer + "'");
    }
  }
  d.timestamp_ms = t;
  record({{"type", "decision"}, {"ts", t}, {"decision", d}});
  return d;
}

Progress ReviewService::progress() const {
  std::lock_guard lock(mu_);
  const std::int64_t t = now();
  Progress p;
  for (const Entry& e : entries_) {
    switch (e.item.status) {
      case ItemStatus::Pending: ++p.pending; break;
      case ItemStatus::Leased:
        if (*e.item.lease_expires_ms > t) {
          ++p.leased;
        } else {
          ++p.pending;
        }
        break;
      case ItemStatus::Decided:
        if (e.decisions.back().verdict == Verdict::Accept) {
          ++p.accepted;
        } else {
          ++p.rejected;
        }
        break;
    }
  }
  if (const std::size_t decided = p.accepted + p.rejected; decided > 0) {
    p.acceptance_rate = static_cast<double>(p.accepted) / static_cast<double>(decided);
  }
  return p;
}

AuditBatch ReviewService::sample_audit(double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::InvalidFraction, "audit fraction must lie in (0, 1]");
  }
  std::lock_guard lock(mu_);
  std::vector<std::string> accepted;
  for (const Entry& e : entries_) {
    if (e.item.status == ItemStatus::Decided && !e.item.audit_of &&
        e.decisions.back().verdict == Verdict::Accept) {
      accepted.push_back(e.item.id);
    }
  }
  std::sort(accepted.begin(), accepted.end());

  AuditBatch batch;
  batch.fraction = fraction;
  batch.seed = seed;
  batch.population = accepted.size();
  const double exact = fraction * static_cast<double>(accepted.size());
  auto count = static_cast<std::size_t>(std::llround(exact));
  if (static_cast<double>(count) < exact - 1e-9) ++count;
  count = std::min(count, accepted.size());

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + uniform_below(rng, accepted.size() - i);
    std::swap(accepted[i], accepted[j]);
  }
  const std::int64_t t = now();
  for (std::size_t i = 0; i < count; ++i) {
    const Entry& src = entries_[index_.at(accepted[i])];
    ReviewItem copy = src.item;
    copy.audit_of = src.item.id;
    copy.id = src.item.id + "#audit" + std::to_string(audit_counts_[src.item.id] + 1);
    batch.sampled.push_back(src.item.id);
    batch.audit_ids.push_back(copy.id);
    record({{"type", "enqueue"},
            {"ts", t},
            {"item", copy},
            {"audit", {{"fraction", fraction}, {"seed", seed}}}});
  }
  return batch;
}

std::optional<ReviewItem> ReviewService::item(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return entries_[it->second].item;
}

std::vector<ReviewDecision> ReviewService::decisions_for(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::UnknownItem, "no review item '" + id + "'");
  return entries_[it->second].decisions;
}

nlohmann::json ReviewService::snapshot() const {
  std::lock_guard lock(mu_);
  nlohmann::json items = nlohmann::json::array();
  for (const Entry& e : entries_) {
    nlohmann::json j = e.item;
    j["decisions"] = e.decisions;
    items.push_back(std::move(j));
  }
  return {{"items", std::move(items)}, {"event_count", events_.size()}};
}

std::vector<nlohmann::json> ReviewService::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::unique_ptr<ReviewService> ReviewService::replay(const std::vector<nlohmann::json>& events,
                                                     ReviewOptions options) {
  auto service = std::make_unique<ReviewService>(std::move(options));
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& ev = events[i];
    try {
      if (ev.at("seq").get<std::size_t>() != i + 1) {
        throw Error(ErrorCode::InvalidArgument, "event sequence gap at position " + std::to_string(i + 1));
      }
      service->apply(ev);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::InvalidArgument,
                  "malformed event " + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw Error(ErrorCode::InvalidArgument,
                  "event " + std::to_string(i + 1) + " refers to an unknown item");
    }
    service->events_.push_back(ev);
  }
  return service;
}

std::unique_ptr<ReviewService> ReviewService::replay(std::istream& jsonl, ReviewOptions options) {
  std::vector<nlohmann::json> events;
  std::string line;
  while (std::getline(jsonl, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto ev = nlohmann::json::parse(line, nullptr, false);
    if (ev.is_discarded()) {
      throw Error(ErrorCode::InvalidArgument,
                  "review log line " + std::to_string(events.size() + 1) + " is not JSON");
    }
    events.push_back(std::move(ev));
  }
  return replay(events, std::move(options));
}

void to_json(nlohmann::json& j, const Rubric& r) {
  j = nlohmann::json{{"object_recognition", r.object_recognition},
                     {"spatial_logic", r.spatial_logic},
                     {"mask_quality", r.mask_quality},
                     {"grammar", r.grammar}};
}

void from_json(const nlohmann::json& j, Rubric& r) {
  r.object_recognition = j.at("object_recognition").get<bool>();
  r.spatial_logic = j.at("spatial_logic").get<bool>();
  r.mask_quality = j.at("mask_quality").get<bool>();
  r.grammar = j.at("grammar").get<bool>();
}

void to_json(nlohmann::json& j, const ReviewItem& item) {
  j = nlohmann::json{{"id", item.id},
                     {"image_path", item.image_path},
                     {"masks", item.masks},
                     {"instruction", item.instruction},
                     {"answer", item.answer},
                     {"stage", to_string(item.stage)},
                     {"status", to_string(item.status)}};
  j["reviewer"] = item.reviewer ? nlohmann::json(*item.reviewer) : nlohmann::json(nullptr);
  j["lease_expires_ms"] =
      item.lease_expires_ms ? nlohmann::json(*item.lease_expires_ms) : nlohmann::json(nullptr);
  j["audit_of"] = item.audit_of ? nlohmann::json(*item.audit_of) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ReviewItem& item) {
  item.id = j.at("id").get<std::string>();
  item.image_path = j.value("image_path", "");
  item.masks = j.value("masks", std::vector<RleMask>{});
  item.instruction = j.value("instruction", "");
  item.answer = j.value("answer", "");
  item.stage = parse_stage(j.value("stage", "qa_review"));
  item.status = parse_status(j.value("status", "pending"));
  const auto opt_string = [&j](const char* key) -> std::optional<std::string> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<std::string>();
  };
  item.reviewer = opt_string("reviewer");
  item.audit_of = opt_string("audit_of");
  if (j.contains("lease_expires_ms") && !j["lease_expires_ms"].is_null()) {
    item.lease_expires_ms = j["lease_expires_ms"].get<std::int64_t>();
  } else {
    item.lease_expires_ms.reset();
  }
}

void to_json(nlohmann::json& j, const ReviewDecision& d) {
  j = nlohmann::json{{"item_id", d.item_id},   {"reviewer", d.reviewer},
                     {"rubric", d.rubric},     {"verdict", to_string(d.verdict)},
                     {"notes", d.notes},       {"timestamp_ms", d.timestamp_ms},
                     {"revise", d.revise}};
}

void from_json(const nlohmann::json& j, ReviewDecision& d) {
  d.item_id = j.at("item_id").get<std::string>();
  d.reviewer = j.at("reviewer").get<std::string>();
  d.rubric = j.at("rubric").get<Rubric>();
  d.verdict = parse_verdict(j.at("verdict").get<std::string>());
  d.notes = j.value("notes", "");
  d.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
  d.revise = j.value("revise", false);
}

void to_json(nlohmann::json& j, const Progress& p) {
  j = nlohmann::json{{"pending", p.pending},
                     {"leased", p.leased},
                     {"accepted", p.accepted},
                     {"rejected", p.rejected}};
  j["acceptance_rate"] = p.acceptance_rate ? nlohmann::json(*p.acceptance_rate) : nlohmann::json(nullptr);
}

void to_json(nlohmann::json& j, const AuditBatch& b) {
  j = nlohmann::json{{"fraction", b.fraction},     {"seed", b.seed},
                     {"population", b.population}, {"sampled", b.sampled},
                     {"audit_ids", b.audit_ids}};
}

}  // namespace segcurate
