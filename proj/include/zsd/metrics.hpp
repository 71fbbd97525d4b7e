#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsd/detail/json_text.hpp"
#include "zsd/error.hpp"
#include "zsd/truth.hpp"
#include "zsd/types.hpp"

namespace zsd {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  /// 1 when nothing was predicted malicious.
  double precision() const { return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  /// 1 when nothing was truly malicious.
  double recall() const { return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
  /// 0 when there were no benign events.
  double fpr() const { return fp + tn == 0 ? 0.0 : static_cast<double>(fp) / static_cast<double>(fp + tn); }

  void add(bool truth_malicious, bool predicted_malicious) {
    if (truth_malicious) {
      ++(predicted_malicious ? tp : fn);
    } else {
      ++(predicted_malicious ? fp : tn);
    }
  }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }

  bool operator==(const ConfusionCounts&) const = default;

  nlohmann::json to_json() const {
    return {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}, {"precision", precision()},
            {"recall", recall()}, {"f1", f1()}, {"fpr", fpr()}};
  }
};

struct DetectionLatencyRecord {
  std::string entity;
  std::string family;
  std::int64_t first_malicious_ts = 0;
  std::optional<std::int64_t> first_malicious_verdict_ts;  // none = censored (missed)

  bool detected() const noexcept { return first_malicious_verdict_ts.has_value(); }
  std::optional<double> latency_ms() const {
    if (!first_malicious_verdict_ts) return std::nullopt;
    return static_cast<double>(*first_malicious_verdict_ts - first_malicious_ts) / 1000.0;
  }
};

struct FamilySummary {
  std::size_t attacks = 0;
  std::size_t detected = 0;
  double latency_sum_ms = 0.0;

  double detection_rate() const {
    return attacks == 0 ? 0.0 : static_cast<double>(detected) / static_cast<double>(attacks);
  }
  std::size_t misses() const noexcept { return attacks - detected; }
  std::optional<double> mean_latency_ms() const {
    if (detected == 0) return std::nullopt;
    return latency_sum_ms / static_cast<double>(detected);
  }

  FamilySummary& operator+=(const FamilySummary& o) {
    attacks += o.attacks;
    detected += o.detected;
    latency_sum_ms += o.latency_sum_ms;
    return *this;
  }
};

struct EvalReport {
  ConfusionCounts events;
  /// Event-level counts restricted to entities of each archetype.
  std::map<std::string, ConfusionCounts> by_archetype;
  std::map<std::string, FamilySummary> by_family;
  std::vector<DetectionLatencyRecord> latencies;

  /// Event-level counts over the benign archetypes only (office, build, backup).
  ConfusionCounts benign_archetypes() const {
    ConfusionCounts c;
    for (const auto& [arch, counts] : by_archetype) {
      if (arch != "attack") c += counts;
    }
    return c;
  }

  EvalReport& operator+=(const EvalReport& o) {
    events += o.events;
    for (const auto& [k, v] : o.by_archetype) by_archetype[k] += v;
    for (const auto& [k, v] : o.by_family) by_family[k] += v;
    latencies.insert(latencies.end(), o.latencies.begin(), o.latencies.end());
    return *this;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["events"] = events.to_json();
    j["benign_archetypes"] = benign_archetypes().to_json();
    j["by_archetype"] = nlohmann::json::object();
    for (const auto& [k, v] : by_archetype) j["by_archetype"][k] = v.to_json();
    j["by_family"] = nlohmann::json::object();
    for (const auto& [k, v] : by_family) {
      const auto lat = v.mean_latency_ms();
      j["by_family"][k] = {{"attacks", v.attacks},
                           {"detected", v.detected},
                           {"detection_rate", v.detection_rate()},
                           {"misses", v.misses()},
                           {"mean_latency_ms", lat ? nlohmann::json(*lat) : nlohmann::json()}};
    }
    auto& recs = j["latencies"] = nlohmann::json::array();
    for (const auto& r : latencies) {
      const auto lat = r.latency_ms();
      recs.push_back({{"entity", r.entity},
                      {"family", r.family},
                      {"first_malicious_ts", r.first_malicious_ts},
                      {"first_malicious_verdict_ts", r.first_malicious_verdict_ts
                                                         ? nlohmann::json(*r.first_malicious_verdict_ts)
                                                         : nlohmann::json()},
                      {"latency_ms", lat ? nlohmann::json(*lat) : nlohmann::json()},
                      {"censored", !r.detected()}});
    }
    return j;
  }
};

/// Joins verdicts with the truth index. Event truth is derived from the
/// entity record, so verdicts never need to carry labels. An attack entity
/// counts as detected only by a malicious verdict on one of its malicious
/// events; alarms during its benign prefix are false positives.
inline EvalReport score_run(std::span<const Verdict> verdicts, const TruthIndex& truth) {
  EvalReport rep;
  std::unordered_map<std::string, std::size_t> seen;
  std::unordered_map<std::string, std::int64_t> first_alarm;
  for (const auto& v : verdicts) {
    const EntityTruth* t = truth.find(v.entity);
    if (t == nullptr) throw JoinError("verdict references unknown entity " + v.entity);
    ++seen[v.entity];
    const bool is_mal = t->event_is_malicious(v.event_ts);
    const bool pred = v.label == Label::malicious;
    rep.events.add(is_mal, pred);
    rep.by_archetype[t->archetype.empty() ? "unknown" : t->archetype].add(is_mal, pred);
    if (is_mal && pred) {
      auto [it, fresh] = first_alarm.try_emplace(v.entity, v.decided_ts);
      if (!fresh) it->second = std::min(it->second, v.decided_ts);
    }
  }
  for (const auto& t : truth.entities()) {
    const auto it = seen.find(t.entity);
    const std::size_t n = it == seen.end() ? 0 : it->second;
    if (t.event_count != 0 && n != t.event_count) {
      throw JoinError("entity " + t.entity + ": truth lists " + std::to_string(t.event_count) + " events, " +
                      std::to_string(n) + " verdicts");
    }
    if (t.label != Label::malicious) continue;
    DetectionLatencyRecord rec{t.entity, t.family, *t.first_malicious_ts, std::nullopt};
    if (auto a = first_alarm.find(t.entity); a != first_alarm.end()) rec.first_malicious_verdict_ts = a->second;
    FamilySummary& fam = rep.by_family[t.family.empty() ? "unknown" : t.family];
    ++fam.attacks;
    if (const auto lat = rec.latency_ms()) {
      ++fam.detected;
      fam.latency_sum_ms += *lat;
    }
    rep.latencies.push_back(std::move(rec));
  }
  return rep;
}

/// Median of pairwise slopes. Pairs with equal x are skipped; 0 when no pair
/// remains.
inline double theil_sen_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("theil_sen_slope: x and y differ in length");
  std::vector<double> slopes;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      if (x[j] != x[i]) slopes.push_back((y[j] - y[i]) / (x[j] - x[i]));
    }
  }
  if (slopes.empty()) return 0.0;
  std::sort(slopes.begin(), slopes.end());
  const std::size_t m = slopes.size();
  return m % 2 == 1 ? slopes[m / 2] : 0.5 * (slopes[m / 2 - 1] + slopes[m / 2]);
}

inline std::string_view trend_sign(double slope, double eps = 1e-12) {
  if (slope > eps) return "positive";
  if (slope < -eps) return "negative";
  return "flat";
}

/// Non-increasing up to at most `max_inversions` adjacent rises, each no
/// larger than `tolerance`.
inline bool non_increasing_within(std::span<const double> y, double tolerance = 0.02, int max_inversions = 1) {
  int inversions = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    const double rise = y[i] - y[i - 1];
    if (rise <= 1e-12) continue;
    if (rise > tolerance + 1e-12) return false;
    if (++inversions > max_inversions) return false;
  }
  return true;
}

struct SweepRow {
  std::string sweep_param;
  double sweep_value = 0.0;
  std::string family;
  EvalReport report;  // typically the sum over seeds
};

struct SweepTrend {
  std::string family;
  std::vector<double> values;
  std::vector<double> detection_rates;
  double slope = 0.0;
  std::string sign;
  bool non_increasing = false;
};

struct SweepSummary {
  std::string csv;
  std::vector<SweepTrend> trends;

  nlohmann::json to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : trends) {
      arr.push_back({{"family", t.family}, {"sweep_values", t.values}, {"detection_rates", t.detection_rates},
                     {"theil_sen_slope", t.slope}, {"trend", t.sign}, {"non_increasing", t.non_increasing}});
    }
    return {{"trends", arr}};
  }
};

inline constexpr std::string_view kSweepCsvHeader =
    "sweep_param,sweep_value,family,detection_rate,fpr,precision,recall,f1,mean_latency_ms,misses";

/// One CSV row per (sweep value, family), in input order, plus a per-family
/// trend of detection rate over the swept value. Detection rate pools the
/// attack entities of all seeds, which equals the mean over seeds when every
/// seed has the same number of attacks.
inline SweepSummary sweep_report(std::span<const SweepRow> rows) {
  SweepSummary out;
  out.csv = std::string(kSweepCsvHeader) + "\n";
  std::map<std::string, SweepTrend> trends;
  std::vector<std::string> order;
  for (const auto& row : rows) {
    const auto fit = row.report.by_family.find(row.family);
    const FamilySummary fam = fit == row.report.by_family.end() ? FamilySummary{} : fit->second;
    const ConfusionCounts& c = row.report.events;
    const auto lat = fam.mean_latency_ms();
    std::string line = row.sweep_param;
    line += ',' + detail::format_fixed(row.sweep_value, 4);
    line += ',' + row.family;
    line += ',' + detail::format_fixed(fam.detection_rate(), 6);
    line += ',' + detail::format_fixed(c.fpr(), 6);
    line += ',' + detail::format_fixed(c.precision(), 6);
    line += ',' + detail::format_fixed(c.recall(), 6);
    line += ',' + detail::format_fixed(c.f1(), 6);
    line += ',' + (lat ? detail::format_fixed(*lat, 3) : std::string("nan"));
    line += ',' + std::to_string(fam.misses());
    out.csv += line + '\n';

    auto [it, fresh] = trends.try_emplace(row.family);
    if (fresh) {
      it->second.family = row.family;
      order.push_back(row.family);
    }
    it->second.values.push_back(row.sweep_value);
    it->second.detection_rates.push_back(fam.detection_rate());
  }
  for (const auto& name : order) {
    SweepTrend t = std::move(trends[name]);
    t.slope = theil_sen_slope(t.values, t.detection_rates);
    t.sign = std::string(trend_sign(t.slope));
    t.non_increasing = non_increasing_within(t.detection_rates);
    out.trends.push_back(std::move(t));
  }
  return out;
}

}  // namespace zsd
