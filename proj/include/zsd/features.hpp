#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "zsd/detail/random.hpp"
#include "zsd/detail/ring_buffer.hpp"
#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

/// Shannon entropy in bits per byte of a 256-bin byte histogram.
inline double shannon_entropy(std::span<const std::uint64_t, 256> counts) {
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw EmptyInput("entropy of an empty histogram");
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return std::clamp(h, 0.0, 8.0);
}

inline double shannon_entropy(const std::array<std::uint64_t, 256>& counts) {
  return shannon_entropy(std::span<const std::uint64_t, 256>(counts));
}

/// Compact form of an observation as retained in a window. Paths are kept as
/// 64-bit hashes; collisions only perturb the path-count features.
struct WindowEvent {
  std::int64_t ts = 0;
  EventKind kind = EventKind::file_read;
  bool has_path = false;
  bool ext_changed = false;
  std::uint64_t path_hash = 0;
  std::uint64_t bytes = 0;
  double entropy = std::numeric_limits<double>::quiet_NaN();  // NaN when absent

  static WindowEvent from(const Observation& o) {
    WindowEvent w;
    w.ts = o.ts;
    w.kind = o.kind;
    if (o.path) {
      w.has_path = true;
      w.path_hash = detail::fnv1a(*o.path);
    }
    w.ext_changed = o.kind == EventKind::file_rename && o.ext_before && o.ext_after &&
                    *o.ext_before != *o.ext_after;
    w.bytes = o.bytes.value_or(0);
    if (o.entropy) w.entropy = *o.entropy;
    return w;
  }
};

/// The last W events of one entity, in arrival order.
class EntityWindow {
 public:
  EntityWindow(std::string entity, std::size_t capacity)
      : entity_(std::move(entity)), events_(capacity) {}

  void push(const WindowEvent& e, std::int64_t window_id) {
    events_.push_back(e);
    window_id_ = window_id;
  }
  void push(const Observation& o, std::int64_t window_id) { push(WindowEvent::from(o), window_id); }

  const std::string& entity() const noexcept { return entity_; }
  std::int64_t window_id() const noexcept { return window_id_; }
  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  std::size_t capacity() const noexcept { return events_.capacity(); }
  const WindowEvent& operator[](std::size_t i) const { return events_[i]; }

  /// ts range in seconds, floored at 1 ms.
  double span_seconds() const {
    if (events_.empty()) return 0.001;
    const double s = static_cast<double>(events_.back().ts - events_.front().ts) * 1e-6;
    return std::max(s, 0.001);
  }

  std::size_t storage_bytes() const noexcept { return events_.storage_bytes() + entity_.capacity(); }

 private:
  std::string entity_;
  detail::RingBuffer<WindowEvent> events_;
  std::int64_t window_id_ = 0;
};

/// Unsquashed per-window quantities. Each maps to one component of the
/// feature vector through `squash`.
struct RawFeatures {
  double span_s = 0.001;
  double writes = 0;
  double mean_write_entropy = 0;  // bits/byte, 0 if no write carried entropy
  double mean_read_entropy = 0;
  double renames = 0;
  double ext_changes = 0;
  double distinct_paths = 0;
  double read_then_write = 0;  // fraction of writes whose path was read earlier in the window
  double deletes = 0;
  double egress_bytes = 0;
  double connects = 0;
  bool priv_change = false;
  double dispersion = 0;  // variance/mean of inter-event gaps in microseconds
};

namespace detail {

/// Open-addressing set of path hashes with a per-slot read flag. Slots are
/// tagged with a generation so reset() is O(1); one table is reused across
/// extractions on the same thread.
class PathTable {
 public:
  /// Empties the table and makes room for `expected` keys.
  void reset(std::size_t expected) {
    std::size_t cap = 16;
    while (cap < expected * 2) cap <<= 1;
    if (cap > keys_.size() || ++generation_ == 0) {
      keys_.assign(std::max(cap, keys_.size()), 0);
      gen_.assign(keys_.size(), 0);
      read_.assign(keys_.size(), 0);
      generation_ = 1;
    }
    mask_ = keys_.size() - 1;
    size_ = 0;
  }

  /// Returns the slot, inserting the key if new.
  std::size_t slot(std::uint64_t key) {
    std::size_t i = static_cast<std::size_t>(splitmix64(key)) & mask_;
    while (gen_[i] == generation_ && keys_[i] != key) i = (i + 1) & mask_;
    if (gen_[i] != generation_) {
      gen_[i] = generation_;
      keys_[i] = key;
      read_[i] = 0;
      ++size_;
    }
    return i;
  }

  void mark_read(std::size_t slot) { read_[slot] = 1; }
  bool was_read(std::size_t slot) const { return read_[slot] != 0; }
  std::size_t size() const noexcept { return size_; }

 private:
  std::vector<std::uint64_t> keys_;
  std::vector<std::uint32_t> gen_;
  std::vector<std::uint8_t> read_;
  std::uint32_t generation_ = 0;
  std::size_t mask_ = 0;
  std::size_t size_ = 0;
};

}  // namespace detail

inline RawFeatures raw_features(const EntityWindow& w) {
  RawFeatures r;
  r.span_s = w.span_seconds();
  const std::size_t n = w.size();
  thread_local detail::PathTable paths;
  paths.reset(n);

  double write_entropy_sum = 0, read_entropy_sum = 0;
  std::size_t write_entropy_n = 0, read_entropy_n = 0;
  std::size_t writes_preceded = 0;
  double gap_sum = 0, gap_sq_sum = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const WindowEvent& e = w[i];
    if (i > 0) {
      const double gap = static_cast<double>(e.ts - w[i - 1].ts);
      gap_sum += gap;
      gap_sq_sum += gap * gap;
    }
    std::size_t slot = 0;
    if (e.has_path) slot = paths.slot(e.path_hash);
    const bool has_entropy = !std::isnan(e.entropy);
    switch (e.kind) {
      case EventKind::file_read:
        if (has_entropy) {
          read_entropy_sum += e.entropy;
          ++read_entropy_n;
        }
        if (e.has_path) paths.mark_read(slot);
        break;
      case EventKind::file_write:
        r.writes += 1;
        if (has_entropy) {
          write_entropy_sum += e.entropy;
          ++write_entropy_n;
        }
        if (e.has_path && paths.was_read(slot)) ++writes_preceded;
        break;
      case EventKind::file_rename:
        r.renames += 1;
        if (e.ext_changed) r.ext_changes += 1;
        break;
      case EventKind::file_delete: r.deletes += 1; break;
      case EventKind::net_send: r.egress_bytes += static_cast<double>(e.bytes); break;
      case EventKind::net_connect: r.connects += 1; break;
      case EventKind::priv_change: r.priv_change = true; break;
      case EventKind::file_create:
      case EventKind::proc_spawn: break;
    }
  }

  r.distinct_paths = static_cast<double>(paths.size());
  if (write_entropy_n > 0) r.mean_write_entropy = write_entropy_sum / static_cast<double>(write_entropy_n);
  if (read_entropy_n > 0) r.mean_read_entropy = read_entropy_sum / static_cast<double>(read_entropy_n);
  if (r.writes > 0) r.read_then_write = static_cast<double>(writes_preceded) / r.writes;

  if (n >= 3) {
    const double gaps = static_cast<double>(n - 1);
    const double mean = gap_sum / gaps;
    if (mean > 0) {
      const double var = std::max(0.0, gap_sq_sum / gaps - mean * mean);
      r.dispersion = var / mean;
    }
  }
  return r;
}

namespace detail {
inline double saturate(double r, double half) { return r / (r + half); }
}  // namespace detail

/// Maps raw window quantities into [0,1]^12. Component order:
///  0 write rate, 1 mean write entropy, 2 entropy lift over reads, 3 rename rate,
///  4 extension-change ratio, 5 distinct paths, 6 read-then-write fraction,
///  7 delete rate, 8 egress bytes rate, 9 connect rate, 10 privilege change,
///  11 burstiness of inter-event gaps.
inline Features squash(const RawFeatures& r) {
  using detail::saturate;
  const double s = r.span_s;
  Features f{};
  f[0] = saturate(r.writes / s, 20.0);
  f[1] = r.mean_write_entropy / 8.0;
  f[2] = std::max(0.0, r.mean_write_entropy - r.mean_read_entropy) / 8.0;
  f[3] = saturate(r.renames / s, 5.0);
  f[4] = r.ext_changes / std::max(1.0, r.renames);
  f[5] = std::min(1.0, std::log2(1.0 + r.distinct_paths) / 16.0);
  f[6] = r.read_then_write;
  f[7] = saturate(r.deletes / s, 5.0);
  f[8] = std::min(1.0, std::log2(1.0 + r.egress_bytes / s) / 30.0);
  f[9] = saturate(r.connects / s, 10.0);
  f[10] = r.priv_change ? 1.0 : 0.0;
  f[11] = saturate(r.dispersion, 1e6);
  for ([[maybe_unused]] double v : f) assert(std::isfinite(v) && v >= 0.0 && v <= 1.0);
  return f;
}

/// Feature vector of the window as it stands. Pure: equal windows give
/// bit-identical vectors.
inline FeatureVector extract(const EntityWindow& w) {
  FeatureVector fv;
  fv.values = squash(raw_features(w));
  fv.window_id = w.window_id();
  fv.entity = w.entity();
  return fv;
}

}  // namespace zsd
