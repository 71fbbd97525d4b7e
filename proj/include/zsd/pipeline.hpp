#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsd/clustering.hpp"
#include "zsd/detail/json_text.hpp"
#include "zsd/detail/random.hpp"
#include "zsd/detail/ring_buffer.hpp"
#include "zsd/ensemble.hpp"
#include "zsd/features.hpp"
#include "zsd/scorer.hpp"
#include "zsd/types.hpp"

namespace zsd {

struct PipelineOptions {
  /// Events per entity before malicious verdicts are allowed. Defaults to min_pts * 4.
  std::optional<std::int64_t> warmup_grace;
  bool dump_features = false;
  bool dump_clusters = false;
};

struct FeatureRow {
  std::string entity;
  std::int64_t window_id = 0;
  Features values{};
};

struct ClusterRow {
  std::int64_t window_id = 0;
  ClusterAssignment assignment = ClusterAssignment::outlier();
  std::size_t neighbor_count = 0;
};

struct LatencySummary {
  std::size_t count = 0;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, p99_ms = 0, max_ms = 0;

  /// Nearest-rank percentiles over microsecond samples. Reorders `us`.
  static LatencySummary from_micros(std::vector<double>& us) {
    LatencySummary s;
    s.count = us.size();
    if (us.empty()) return s;
    std::sort(us.begin(), us.end());
    double total = 0;
    for (double v : us) total += v;
    auto rank = [&](double q) {
      const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(us.size())));
      return us[std::min(us.size() - 1, idx == 0 ? 0 : idx - 1)] / 1000.0;
    };
    s.mean_ms = total / static_cast<double>(us.size()) / 1000.0;
    s.p50_ms = rank(0.50);
    s.p95_ms = rank(0.95);
    s.p99_ms = rank(0.99);
    s.max_ms = us.back() / 1000.0;
    return s;
  }
};

inline constexpr std::array<Phase, 6> kAllPhases = {Phase::fast_path, Phase::cluster_inlier, Phase::warmup,
                                                    Phase::scored,    Phase::smoothed,       Phase::deferred_resolved};

/// Run-level accounting. Latency is measured per event from the moment a
/// worker dequeues it to the moment its verdict (or deferral) is produced, so
/// input parsing is excluded. Deferred events additionally report the time
/// until their final resolution.
struct RunStats {
  std::size_t events = 0;
  std::size_t verdicts = 0;
  std::size_t workers = 1;
  std::size_t entities = 0;
  double wall_seconds = 0;
  double throughput_eps = 0;
  LatencySummary decision_latency;
  LatencySummary resolution_latency;
  std::array<std::size_t, 6> phase_counts{};
  std::size_t malicious = 0;
  std::size_t deferred = 0;
  std::size_t scorer_calls = 0;
  /// Bytes held by windows, histories, reference sets and ensemble state at
  /// the end of the run. None of these shrink during a run, so this is the peak.
  std::size_t peak_state_bytes = 0;

  nlohmann::json to_json() const {
    auto lat = [](const LatencySummary& s) {
      return nlohmann::json{{"count", s.count}, {"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms},
                            {"p95_ms", s.p95_ms}, {"p99_ms", s.p99_ms}, {"max_ms", s.max_ms}};
    };
    nlohmann::json phases = nlohmann::json::object();
    for (std::size_t i = 0; i < kAllPhases.size(); ++i) phases[std::string(to_string(kAllPhases[i]))] = phase_counts[i];
    return {{"events", events},
            {"verdicts", verdicts},
            {"workers", workers},
            {"entities", entities},
            {"wall_seconds", wall_seconds},
            {"throughput_eps", throughput_eps},
            {"latency_basis", "dequeue_to_verdict"},
            {"decision_latency", lat(decision_latency)},
            {"resolution_latency", lat(resolution_latency)},
            {"phase_counts", phases},
            {"malicious", malicious},
            {"deferred", deferred},
            {"scorer_calls", scorer_calls},
            {"peak_state_bytes", peak_state_bytes}};
  }
};

/// Everything one worker owns: per-entity windows, score histories, density
/// references and ensemble state. Entities never span shards and an entity's
/// verdicts depend only on its own events.
class Shard {
 public:
  Shard(const PipelineConfig& cfg, const ScorerModel& model, const PipelineOptions& opt = {})
      : cfg_(validate_config(cfg)),
        model_(&model),
        opt_(opt),
        warmup_grace_(opt.warmup_grace.value_or(EnsembleState::default_warmup(cfg))) {}

  /// Runs one event through window update, extraction, prefilter, density
  /// gate, scorer and ensemble. Appends zero or more verdicts: this event's
  /// (unless deferred) and any deferrals of the entity that came due.
  void process_event(const Observation& e, std::uint64_t seq, std::vector<Verdict>& out) {
    const auto t0 = std::chrono::steady_clock::now();
    EntityState& st = state_for(e.entity);
    st.window.push(e, static_cast<std::int64_t>(seq));
    st.last_ts = e.ts;
    const Features x = squash(raw_features(st.window));
    st.history.push_back(x);
    st.ensemble.observe_event();
    if (opt_.dump_features) features_.push_back({e.entity, static_cast<std::int64_t>(seq), x});

    Verdict v;
    v.event_ts = e.ts;
    v.entity = e.entity;
    v.decided_ts = e.ts;
    v.seq = seq;
    bool emit = true;

    if (phase1_prefilter(x) == Prefilter::fast_benign) {
      v.phase = Phase::fast_path;
      st.ensemble.push_raw(Label::benign, cfg_);
    } else {
      const AssignResult a = st.reference.assign(x);
      if (opt_.dump_clusters) clusters_.push_back({static_cast<std::int64_t>(seq), a.assignment, a.neighbor_count});
      if (a.assignment.is_inlier()) {
        v.phase = Phase::cluster_inlier;
        decide(a.assignment, std::nullopt, cfg_, st.ensemble.warmup_passed());
        st.ensemble.push_raw(Label::benign, cfg_);
      } else if (!st.ensemble.warmup_passed()) {
        v.phase = Phase::warmup;
        decide(a.assignment, std::nullopt, cfg_, false);
        st.ensemble.push_raw(Label::benign, cfg_);
      } else {
        const double s = score(st);
        const Decision d = decide(a.assignment, s, cfg_, true);
        if (d == Decision::deferred) {
          st.ensemble.defer({seq, e.ts, st.ensemble.events_seen() + cfg_.reeval_window, s, t0});
          ++deferred_;
          emit = false;
        } else {
          const Label raw = d == Decision::malicious ? Label::malicious : Label::benign;
          const SmoothResult sm = st.ensemble.push_raw(raw, cfg_);
          v.label = sm.label;
          v.score = s;
          v.phase = sm.changed ? Phase::smoothed : Phase::scored;
        }
      }
    }
    if (emit) emit_verdict(std::move(v), out);
    decision_us_.push_back(micros_since(t0));

    while (auto due = st.ensemble.pop_due()) resolve(*due, st, e.entity, e.ts, out);
  }

  /// Resolves every outstanding deferral (end of stream).
  void finish(std::vector<Verdict>& out) {
    std::vector<std::string> names;
    names.reserve(entities_.size());
    for (const auto& [name, st] : entities_) names.push_back(name);
    std::sort(names.begin(), names.end());
    for (const auto& name : names) {
      EntityState& st = entities_.at(name);
      while (auto due = st.ensemble.pop_any()) resolve(*due, st, name, st.last_ts, out);
    }
  }

  std::size_t state_bytes() const {
    std::size_t total = 0;
    for (const auto& [name, st] : entities_) {
      total += name.capacity() + sizeof(EntityState) + st.window.storage_bytes() + st.history.storage_bytes() +
               st.reference.storage_bytes() + st.ensemble.storage_bytes();
    }
    return total;
  }

  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::vector<double>& decision_micros() { return decision_us_; }
  std::vector<double>& resolution_micros() { return resolution_us_; }
  std::vector<FeatureRow>& feature_rows() { return features_; }
  std::vector<ClusterRow>& cluster_rows() { return clusters_; }
  const std::array<std::size_t, 6>& phase_counts() const noexcept { return phase_counts_; }
  std::size_t malicious() const noexcept { return malicious_; }
  std::size_t deferred() const noexcept { return deferred_; }
  std::size_t scorer_calls() const noexcept { return scorer_calls_; }

 private:
  struct EntityState {
    EntityState(const std::string& entity, const PipelineConfig& cfg, std::int64_t warmup)
        : window(entity, static_cast<std::size_t>(cfg.window_events)),
          history(static_cast<std::size_t>(cfg.seq_len)),
          reference(static_cast<std::size_t>(cfg.reference_capacity), cfg.epsilon,
                    static_cast<std::size_t>(cfg.min_pts)),
          ensemble(cfg, warmup) {}

    EntityWindow window;
    detail::RingBuffer<Features> history;
    ReferenceSet reference;
    EnsembleState ensemble;
    std::int64_t last_ts = 0;
  };

  EntityState& state_for(const std::string& entity) {
    auto it = entities_.find(entity);
    if (it == entities_.end()) {
      it = entities_.try_emplace(entity, entity, cfg_, warmup_grace_).first;
    }
    return it->second;
  }

  double score(const EntityState& st) {
    ++scorer_calls_;
    return forward(*model_, st.history);
  }

  void resolve(const DeferredEntry& due, EntityState& st, const std::string& entity, std::int64_t now_ts,
               std::vector<Verdict>& out) {
    const double s = score(st);
    const SmoothResult sm = st.ensemble.push_raw(resolve_deferred(s, cfg_), cfg_);
    Verdict v;
    v.event_ts = due.event_ts;
    v.entity = entity;
    v.label = sm.label;
    v.score = s;
    v.phase = sm.changed ? Phase::smoothed : Phase::deferred_resolved;
    v.decided_ts = now_ts;
    v.seq = due.seq;
    emit_verdict(std::move(v), out);
    resolution_us_.push_back(micros_since(due.dequeued));
  }

  void emit_verdict(Verdict v, std::vector<Verdict>& out) {
    for (std::size_t i = 0; i < kAllPhases.size(); ++i) {
      if (kAllPhases[i] == v.phase) ++phase_counts_[i];
    }
    if (v.label == Label::malicious) {
      ++malicious_;
      if (!phase_has_score(v.phase)) throw ContractError("malicious verdict without a score");
    }
    out.push_back(std::move(v));
  }

  static double micros_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
  }

  PipelineConfig cfg_;
  const ScorerModel* model_;
  PipelineOptions opt_;
  std::int64_t warmup_grace_;
  std::unordered_map<std::string, EntityState> entities_;
  std::vector<double> decision_us_;
  std::vector<double> resolution_us_;
  std::vector<FeatureRow> features_;
  std::vector<ClusterRow> clusters_;
  std::array<std::size_t, 6> phase_counts_{};
  std::size_t malicious_ = 0;
  std::size_t deferred_ = 0;
  std::size_t scorer_calls_ = 0;
};

/// Shard index for an entity: stable hash modulo worker count.
inline std::size_t shard_of(std::string_view entity, std::size_t workers) {
  return static_cast<std::size_t>(detail::fnv1a(entity) % workers);
}

/// Canonical output order: (event_ts, entity), ties by input position.
inline bool verdict_order(const Verdict& a, const Verdict& b) {
  if (a.event_ts != b.event_ts) return a.event_ts < b.event_ts;
  if (a.entity != b.entity) return a.entity < b.entity;
  return a.seq < b.seq;
}

struct RunResult {
  std::vector<Verdict> verdicts;
  RunStats stats;
  std::vector<FeatureRow> features;  // filled when dump_features
  std::vector<ClusterRow> clusters;  // filled when dump_clusters
};

/// Runs the detector over a whole stream. A router partitions events by
/// entity hash across cfg.workers shards; each shard runs on its own thread
/// with no shared mutable state; a single merge orders the verdicts.
inline RunResult run(std::span<const Event> events, const ScorerModel& model, const PipelineConfig& cfg,
                     const PipelineOptions& opt = {}) {
  validate_config(cfg);
  model.check_shape();
  if (model.input != kFeatureCount) throw DimensionError("scorer input size must be 12");

  const auto workers = static_cast<std::size_t>(cfg.workers);
  RunResult result;
  std::vector<Shard> shards;
  shards.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) shards.emplace_back(cfg, model, opt);
  std::vector<std::vector<Verdict>> outputs(workers);

  const auto start = std::chrono::steady_clock::now();
  if (workers == 1) {
    outputs[0].reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) shards[0].process_event(events[i], i, outputs[0]);
    shards[0].finish(outputs[0]);
  } else {
    std::vector<std::vector<std::uint32_t>> routed(workers);
    for (std::size_t i = 0; i < events.size(); ++i) {
      routed[shard_of(events[i].entity, workers)].push_back(static_cast<std::uint32_t>(i));
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          outputs[w].reserve(routed[w].size());
          for (auto idx : routed[w]) shards[w].process_event(events[idx], idx, outputs[w]);
          shards[w].finish(outputs[w]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  std::size_t total = 0;
  for (const auto& o : outputs) total += o.size();
  result.verdicts.reserve(total);
  for (auto& o : outputs) std::move(o.begin(), o.end(), std::back_inserter(result.verdicts));
  std::sort(result.verdicts.begin(), result.verdicts.end(), verdict_order);
  const auto stop = std::chrono::steady_clock::now();

  RunStats& s = result.stats;
  s.events = events.size();
  s.verdicts = result.verdicts.size();
  s.workers = workers;
  s.wall_seconds = std::chrono::duration<double>(stop - start).count();
  s.throughput_eps = s.wall_seconds > 0 ? static_cast<double>(s.events) / s.wall_seconds : 0.0;
  std::vector<double> decision, resolution;
  for (auto& sh : shards) {
    auto& d = sh.decision_micros();
    decision.insert(decision.end(), d.begin(), d.end());
    auto& r = sh.resolution_micros();
    resolution.insert(resolution.end(), r.begin(), r.end());
    for (std::size_t i = 0; i < s.phase_counts.size(); ++i) s.phase_counts[i] += sh.phase_counts()[i];
    s.malicious += sh.malicious();
    s.deferred += sh.deferred();
    s.scorer_calls += sh.scorer_calls();
    s.peak_state_bytes += sh.state_bytes();
    s.entities += sh.entity_count();
    auto& f = sh.feature_rows();
    std::move(f.begin(), f.end(), std::back_inserter(result.features));
    auto& c = sh.cluster_rows();
    std::move(c.begin(), c.end(), std::back_inserter(result.clusters));
  }
  s.decision_latency = LatencySummary::from_micros(decision);
  s.resolution_latency = LatencySummary::from_micros(resolution);
  std::sort(result.features.begin(), result.features.end(),
            [](const FeatureRow& a, const FeatureRow& b) { return a.window_id < b.window_id; });
  std::sort(result.clusters.begin(), result.clusters.end(),
            [](const ClusterRow& a, const ClusterRow& b) { return a.window_id < b.window_id; });
  if (s.verdicts != s.events) throw ContractError("verdict count does not match event count");
  return result;
}

inline std::string features_csv(std::span<const FeatureRow> rows) {
  std::string out = "entity,window_id";
  for (std::size_t i = 1; i <= kFeatureCount; ++i) out += ",f" + std::to_string(i);
  out += '\n';
  for (const auto& r : rows) {
    out += r.entity;
    out += ',';
    out += std::to_string(r.window_id);
    for (double v : r.values) {
      out += ',';
      out += detail::format_fixed(v, 6);
    }
    out += '\n';
  }
  return out;
}

inline std::string clusters_csv(std::span<const ClusterRow> rows) {
  std::string out = "window_id,assignment,neighbor_count\n";
  for (const auto& r : rows) {
    out += std::to_string(r.window_id);
    out += r.assignment.is_inlier() ? ",inlier:" + std::to_string(r.assignment.cluster_id()) : std::string(",outlier");
    out += ',';
    out += std::to_string(r.neighbor_count);
    out += '\n';
  }
  return out;
}

}  // namespace zsd
