#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

#include "zsd/error.hpp"

namespace zsd {

enum class EventKind : std::uint8_t {
  file_read,
  file_write,
  file_create,
  file_rename,
  file_delete,
  proc_spawn,
  priv_change,
  net_connect,
  net_send,
};

inline constexpr std::array<std::string_view, 9> kEventKindNames = {
    "file_read",  "file_write", "file_create", "file_rename", "file_delete",
    "proc_spawn", "priv_change", "net_connect", "net_send"};

inline std::string_view to_string(EventKind k) {
  return kEventKindNames[static_cast<std::size_t>(k)];
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (std::size_t i = 0; i < kEventKindNames.size(); ++i) {
    if (kEventKindNames[i] == s) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

enum class Label : std::uint8_t { benign, malicious };

inline std::string_view to_string(Label l) {
  return l == Label::benign ? "benign" : "malicious";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "benign") return Label::benign;
  if (s == "malicious") return Label::malicious;
  return std::nullopt;
}

/// Ground truth uses the same two values as verdict labels.
using Truth = Label;

/// Everything the detection path is allowed to see about one telemetry record.
struct Observation {
  std::int64_t ts = 0;  // microseconds since epoch
  std::string entity;
  EventKind kind = EventKind::file_read;
  std::optional<std::string> path;
  std::optional<std::string> ext_before;
  std::optional<std::string> ext_after;
  std::optional<std::uint64_t> bytes;
  std::optional<double> entropy;  // bits per byte, [0, 8]
  std::optional<std::string> dst;
};

/// An observation plus the simulator's ground truth. Detection code only ever
/// takes `const Observation&`, so the truth field cannot leak into a verdict.
struct Event : Observation {
  std::optional<Truth> truth;
};

/// Throws SchemaError (line 0 unless given) when a domain invariant fails.
inline void validate_event(const Observation& e, std::size_t line_no = 0) {
  if (e.ts < 0) throw SchemaError(line_no, "ts must be non-negative");
  if (e.entity.empty()) throw SchemaError(line_no, "entity must be non-empty");
  if (e.entropy && !(*e.entropy >= 0.0 && *e.entropy <= 8.0)) {
    throw SchemaError(line_no, "entropy out of [0,8]");
  }
  const bool rename = e.kind == EventKind::file_rename;
  if (rename && !(e.ext_before && e.ext_after)) {
    throw SchemaError(line_no, "file_rename requires ext_before and ext_after");
  }
  if (!rename && (e.ext_before || e.ext_after)) {
    throw SchemaError(line_no, "ext_before/ext_after only allowed on file_rename");
  }
}

inline constexpr std::size_t kFeatureCount = 12;

using Features = std::array<double, kFeatureCount>;

struct FeatureVector {
  Features values{};
  std::int64_t window_id = 0;
  std::string entity;
};

class ClusterAssignment {
 public:
  static ClusterAssignment inlier(std::int64_t cluster_id) {
    if (cluster_id < 0) throw ContractError("cluster id must be non-negative");
    return ClusterAssignment(cluster_id);
  }
  static ClusterAssignment outlier() { return ClusterAssignment(-1); }

  bool is_inlier() const noexcept { return id_ >= 0; }
  bool is_outlier() const noexcept { return id_ < 0; }
  std::int64_t cluster_id() const {
    if (id_ < 0) throw ContractError("outlier has no cluster id");
    return id_;
  }

  friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;

 private:
  explicit ClusterAssignment(std::int64_t id) : id_(id) {}
  std::int64_t id_;
};

/// Which stage of the cascade produced the label. `warmup` marks outliers seen
/// before the entity's grace count elapsed; they are never malicious.
enum class Phase : std::uint8_t {
  fast_path,
  cluster_inlier,
  warmup,
  scored,
  smoothed,
  deferred_resolved,
};

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::fast_path: return "fast_path";
    case Phase::cluster_inlier: return "cluster_inlier";
    case Phase::warmup: return "warmup";
    case Phase::scored: return "scored";
    case Phase::smoothed: return "smoothed";
    case Phase::deferred_resolved: return "deferred_resolved";
  }
  return "?";
}

inline std::optional<Phase> parse_phase(std::string_view s) {
  for (auto p : {Phase::fast_path, Phase::cluster_inlier, Phase::warmup, Phase::scored,
                 Phase::smoothed, Phase::deferred_resolved}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

/// True for phases in which the recurrent scorer was consulted.
constexpr bool phase_has_score(Phase p) {
  return p == Phase::scored || p == Phase::smoothed || p == Phase::deferred_resolved;
}

struct Verdict {
  std::int64_t event_ts = 0;
  std::string entity;
  Label label = Label::benign;
  double score = 0.0;
  Phase phase = Phase::fast_path;
  // Stream time at which the decision was taken: the ts of the event whose
  // processing produced it. Wall-clock latency lives in RunStats.
  std::int64_t decided_ts = 0;
  std::uint64_t seq = 0;  // position of the event in the input stream

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct PipelineConfig {
  double epsilon = 0.35;
  std::int64_t min_pts = 8;
  double tau = 0.5;
  double delta = 0.05;
  std::int64_t reeval_window = 32;
  std::int64_t smooth_m = 2;
  std::int64_t smooth_window = 8;
  std::int64_t seq_len = 16;
  std::int64_t window_events = 256;
  std::int64_t reference_capacity = 4096;
  std::int64_t workers = 1;
  std::uint64_t seed = 0;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Returns `cfg` unchanged when every bound holds, else throws ConfigError
/// naming the first violated field (in declaration order).
inline PipelineConfig validate_config(const PipelineConfig& cfg) {
  if (!(std::isfinite(cfg.epsilon) && cfg.epsilon > 0.0)) throw ConfigError("epsilon", "> 0");
  if (cfg.min_pts < 1) throw ConfigError("min_pts", ">= 1");
  if (!(cfg.tau > 0.0 && cfg.tau < 1.0)) throw ConfigError("tau", "in (0,1)");
  if (!(std::isfinite(cfg.delta) && cfg.delta >= 0.0)) throw ConfigError("delta", ">= 0");
  if (!(cfg.tau - cfg.delta > 0.0 && cfg.tau + cfg.delta < 1.0)) {
    throw ConfigError("delta", "tau +/- delta must lie inside (0,1)");
  }
  if (cfg.reeval_window < 0) throw ConfigError("reeval_window", ">= 0");
  if (cfg.smooth_m < 1) throw ConfigError("smooth_m", ">= 1");
  if (cfg.smooth_window < cfg.smooth_m) throw ConfigError("smooth_window", ">= smooth_m");
  if (cfg.seq_len < 1) throw ConfigError("seq_len", ">= 1");
  if (cfg.window_events < 1) throw ConfigError("window_events", ">= 1");
  if (cfg.reference_capacity < cfg.min_pts) {
    throw ConfigError("reference_capacity", ">= min_pts");
  }
  if (cfg.workers < 1) throw ConfigError("workers", ">= 1");
  return cfg;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError(std::string(key), "not a number: '" + std::string(text) + "'");
  }
  return value;
}

template <class T>
std::string format_number(T value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  (void)ec;
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Reads `key = value` lines ('#' starts a comment). Keys are exactly the
/// PipelineConfig field names; unknown or repeated keys are errors. Missing
/// keys keep their defaults. The result is validated.
inline PipelineConfig parse_config(std::istream& in) {
  PipelineConfig cfg;
  std::string line;
  std::array<bool, 12> seen{};
  auto mark = [&](std::size_t idx, std::string_view key) {
    if (seen[idx]) throw ConfigError(std::string(key), "duplicate key");
    seen[idx] = true;
  };
  while (std::getline(in, line)) {
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ConfigError(std::string(view), "expected key=value");
    const auto key = detail::trim(view.substr(0, eq));
    const auto val = detail::trim(view.substr(eq + 1));
    using detail::parse_number;
    if (key == "epsilon") { mark(0, key); cfg.epsilon = parse_number<double>(key, val); }
    else if (key == "min_pts") { mark(1, key); cfg.min_pts = parse_number<std::int64_t>(key, val); }
    else if (key == "tau") { mark(2, key); cfg.tau = parse_number<double>(key, val); }
    else if (key == "delta") { mark(3, key); cfg.delta = parse_number<double>(key, val); }
    else if (key == "reeval_window") { mark(4, key); cfg.reeval_window = parse_number<std::int64_t>(key, val); }
    else if (key == "smooth_m") { mark(5, key); cfg.smooth_m = parse_number<std::int64_t>(key, val); }
    else if (key == "smooth_window") { mark(6, key); cfg.smooth_window = parse_number<std::int64_t>(key, val); }
    else if (key == "seq_len") { mark(7, key); cfg.seq_len = parse_number<std::int64_t>(key, val); }
    else if (key == "window_events") { mark(8, key); cfg.window_events = parse_number<std::int64_t>(key, val); }
    else if (key == "reference_capacity") { mark(9, key); cfg.reference_capacity = parse_number<std::int64_t>(key, val); }
    else if (key == "workers") { mark(10, key); cfg.workers = parse_number<std::int64_t>(key, val); }
    else if (key == "seed") { mark(11, key); cfg.seed = parse_number<std::uint64_t>(key, val); }
    else throw ConfigError(std::string(key), "unknown key");
  }
  return validate_config(cfg);
}

inline PipelineConfig parse_config(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_config(in);
}

/// Shortest round-trip decimal for every real, so parse(serialize(c)) == c.
inline std::string serialize_config(const PipelineConfig& cfg) {
  using detail::format_number;
  std::string out;
  auto put = [&](std::string_view key, const std::string& val) {
    out.append(key).append(" = ").append(val).push_back('\n');
  };
  put("epsilon", format_number(cfg.epsilon));
  put("min_pts", format_number(cfg.min_pts));
  put("tau", format_number(cfg.tau));
  put("delta", format_number(cfg.delta));
  put("reeval_window", format_number(cfg.reeval_window));
  put("smooth_m", format_number(cfg.smooth_m));
  put("smooth_window", format_number(cfg.smooth_window));
  put("seq_len", format_number(cfg.seq_len));
  put("window_events", format_number(cfg.window_events));
  put("reference_capacity", format_number(cfg.reference_capacity));
  put("workers", format_number(cfg.workers));
  put("seed", format_number(cfg.seed));
  return out;
}

}  // namespace zsd
