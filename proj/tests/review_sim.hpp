#pragma once

#include <atomic>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "segcurate/review.hpp"

namespace segcurate::testing {

inline ReviewItem make_item(const std::string& id, ReviewStage stage = ReviewStage::QaReview) {
  ReviewItem item;
  item.id = id;
  item.image_path = "images/" + id + ".png";
  item.masks = {RleMask{2, 2, {1, 2, 1}}};
  item.instruction = "Segment the ship.";
  item.answer = "The ship near the pier.";
  item.stage = stage;
  return item;
}

inline Rubric all_pass() { return Rubric{true, true, true, true}; }

struct SimulationOutcome {
  std::size_t decisions = 0;
  std::size_t lease_events = 0;
  std::size_t overlapping_leases = 0;  // lease granted while another live lease existed
  std::size_t items_without_single_decision = 0;
  std::size_t unexpected_errors = 0;
};

// `reviewers` threads drain the queue; each accepts items with an even index
// and rejects the rest with a failed grammar flag.
inline void run_reviewers(ReviewService& service, int reviewers, std::atomic<std::size_t>& errors) {
  std::vector<std::thread> threads;
  for (int r = 0; r < reviewers; ++r) {
    threads.emplace_back([&service, &errors, r] {
      const std::string who = "reviewer-" + std::to_string(r);
      while (true) {
        std::optional<ReviewItem> item;
        try {
          item = service.next_item(who);
        } catch (...) {
          ++errors;
          return;
        }
        if (!item) {
          const Progress p = service.progress();
          if (p.pending == 0 && p.leased == 0) return;
          std::this_thread::yield();
          continue;
        }
        ReviewDecision d;
        d.item_id = item->id;
        d.reviewer = who;
        d.rubric = all_pass();
        const bool accept = std::stoi(item->id.substr(item->id.find('-') + 1)) % 2 == 0;
        d.verdict = accept ? Verdict::Accept : Verdict::Reject;
        if (!accept) d.rubric.grammar = false;
        try {
          service.submit_decision(d);
        } catch (...) {
          ++errors;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
}

// Checks the lease and decision history recorded in the event log.
inline SimulationOutcome audit_events(const std::vector<nlohmann::json>& events,
                                      const std::vector<std::string>& ids) {
  SimulationOutcome out;
  struct State {
    bool live = false;
    std::int64_t expires = 0;
    std::size_t decisions = 0;
  };
  std::map<std::string, State> state;
  for (const auto& ev : events) {
    const std::string type = ev.at("type");
    if (type == "lease") {
      ++out.lease_events;
      State& s = state[ev.at("item_id").get<std::string>()];
      const std::int64_t ts = ev.at("ts");
      if (s.live && s.expires > ts) ++out.overlapping_leases;
      if (s.decisions > 0) ++out.overlapping_leases;
      s.live = true;
      s.expires = ev.at("expires_ms");
    } else if (type == "decision") {
      ++out.decisions;
      State& s = state[ev.at("decision").at("item_id").get<std::string>()];
      ++s.decisions;
      s.live = false;
    }
  }
  for (const auto& id : ids) {
    if (state[id].decisions != 1) ++out.items_without_single_decision;
  }
  return out;
}

// Enqueues `items` fresh items into `service` and drains them concurrently.
inline SimulationOutcome simulate_review(ReviewService& service, int reviewers, int items) {
  std::vector<std::string> ids;
  for (int i = 0; i < items; ++i) {
    ids.push_back("item-" + std::to_string(i));
    service.enqueue(make_item(ids.back()));
  }
  std::atomic<std::size_t> errors{0};
  run_reviewers(service, reviewers, errors);
  SimulationOutcome out = audit_events(service.events(), ids);
  out.unexpected_errors = errors.load();
  return out;
}

}  // namespace segcurate::testing
