#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "zsd/detail/json_text.hpp"
#include "zsd/detail/ring_buffer.hpp"
#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

enum class Prefilter : std::uint8_t { pass, fast_benign };

/// Activity-rate features that must all be quiet for the fast path:
/// write rate, rename rate, delete rate, egress rate, privilege change.
inline constexpr std::array<std::size_t, 5> kActivityFeatures = {0, 3, 7, 8, 10};
inline constexpr double kQuiescenceThreshold = 0.05;

inline Prefilter phase1_prefilter(const Features& x) {
  for (auto i : kActivityFeatures) {
    if (!(x[i] < kQuiescenceThreshold)) return Prefilter::pass;
  }
  return Prefilter::fast_benign;
}

enum class Decision : std::uint8_t { benign, malicious, deferred };

inline std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::benign: return "benign";
    case Decision::malicious: return "malicious";
    case Decision::deferred: return "deferred";
  }
  return "?";
}

/// Threshold rule with an ambiguity band. A score is expected exactly when the
/// assignment is an outlier past warmup; anything else is a ContractError.
/// With delta == 0 the band is empty and this is the bare `s > tau` rule.
inline Decision decide(const ClusterAssignment& a, std::optional<double> score,
                       const PipelineConfig& cfg, bool warmup_passed = true) {
  const bool expect_score = a.is_outlier() && warmup_passed;
  if (expect_score && !score) throw ContractError("outlier past warmup reached decide without a score");
  if (!expect_score && score) throw ContractError("score supplied for an event that must not be scored");
  if (!expect_score) return Decision::benign;
  const double s = *score;
  if (cfg.delta > 0.0 && std::abs(s - cfg.tau) <= cfg.delta) return Decision::deferred;
  return s > cfg.tau ? Decision::malicious : Decision::benign;
}

/// Final rule for a deferred event once it has been re-scored.
inline Label resolve_deferred(double rescored, const PipelineConfig& cfg) {
  return rescored > cfg.tau ? Label::malicious : Label::benign;
}

struct SmoothResult {
  Label label = Label::benign;
  bool changed = false;
};

/// m-of-n confirmation: a raw malicious label survives only if at least
/// smooth_m of (prior labels in the ring plus this one) are malicious.
/// Benign raw labels pass through unchanged.
inline SmoothResult smooth(const detail::RingBuffer<Label>& ring, Label raw, const PipelineConfig& cfg) {
  if (raw == Label::benign) return {Label::benign, false};
  std::int64_t count = 1;
  for (std::size_t i = 0; i < ring.size(); ++i) count += ring[i] == Label::malicious ? 1 : 0;
  if (count >= cfg.smooth_m) return {Label::malicious, false};
  return {Label::benign, true};
}

struct DeferredEntry {
  std::uint64_t seq = 0;
  std::int64_t event_ts = 0;
  std::int64_t deadline = 0;  // entity event count at which it must resolve
  double initial_score = 0.0;
  std::chrono::steady_clock::time_point dequeued{};
};

/// Per-entity refinement state: recent raw labels, pending deferrals and the
/// warmup counter.
class EnsembleState {
 public:
  EnsembleState(const PipelineConfig& cfg, std::int64_t warmup_grace)
      : ring_(static_cast<std::size_t>(cfg.smooth_window)), warmup_grace_(warmup_grace) {}

  static std::int64_t default_warmup(const PipelineConfig& cfg) { return cfg.min_pts * 4; }

  /// Counts one more event for the entity. Call once per event before deciding.
  void observe_event() { ++events_seen_; }
  std::int64_t events_seen() const noexcept { return events_seen_; }
  std::int64_t warmup_grace() const noexcept { return warmup_grace_; }
  bool warmup_passed() const noexcept { return events_seen_ > warmup_grace_; }

  /// Applies smoothing to `raw` and records `raw` in the ring.
  SmoothResult push_raw(Label raw, const PipelineConfig& cfg) {
    const SmoothResult r = smooth(ring_, raw, cfg);
    ring_.push_back(raw);
    return r;
  }

  void defer(DeferredEntry entry) { pending_.push_back(entry); }

  /// Pops the oldest pending deferral whose deadline has been reached.
  std::optional<DeferredEntry> pop_due() {
    if (pending_.empty() || pending_.front().deadline > events_seen_) return std::nullopt;
    DeferredEntry e = pending_.front();
    pending_.pop_front();
    return e;
  }

  /// Pops any pending deferral regardless of deadline (end of stream).
  std::optional<DeferredEntry> pop_any() {
    if (pending_.empty()) return std::nullopt;
    DeferredEntry e = pending_.front();
    pending_.pop_front();
    return e;
  }

  std::size_t pending() const noexcept { return pending_.size(); }
  const detail::RingBuffer<Label>& ring() const noexcept { return ring_; }

  std::size_t storage_bytes() const noexcept {
    return ring_.storage_bytes() + pending_.size() * sizeof(DeferredEntry);
  }

 private:
  detail::RingBuffer<Label> ring_;
  std::deque<DeferredEntry> pending_;
  std::int64_t events_seen_ = 0;
  std::int64_t warmup_grace_;
};

/// One verdict as a JSON Lines record (no trailing newline).
inline std::string format_verdict_line(const Verdict& v) {
  std::string out;
  out.reserve(128);
  out += "{\"event_ts\":";
  out += std::to_string(v.event_ts);
  out += ",\"entity\":";
  detail::append_json_string(out, v.entity);
  out += ",\"label\":\"";
  out += to_string(v.label);
  out += "\",\"score\":";
  out += detail::format_fixed(v.score, 6);
  out += ",\"phase\":\"";
  out += to_string(v.phase);
  out += "\",\"decided_ts\":";
  out += std::to_string(v.decided_ts);
  out += ",\"seq\":";
  out += std::to_string(v.seq);
  out += '}';
  return out;
}

inline Verdict parse_verdict_line(std::string_view line, std::size_t line_no = 1) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.begin(), line.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(line_no, std::string("malformed verdict: ") + e.what());
  }
  try {
    Verdict v;
    v.event_ts = j.at("event_ts").get<std::int64_t>();
    v.entity = j.at("entity").get<std::string>();
    const auto label = parse_label(j.at("label").get<std::string>());
    const auto phase = parse_phase(j.at("phase").get<std::string>());
    if (!label || !phase) throw ParseError(line_no, "bad label or phase");
    v.label = *label;
    v.phase = *phase;
    v.score = j.at("score").get<double>();
    v.decided_ts = j.at("decided_ts").get<std::int64_t>();
    v.seq = j.value("seq", std::uint64_t{0});
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, std::string("bad verdict record: ") + e.what());
  }
}

}  // namespace zsd
