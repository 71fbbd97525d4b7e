#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

inline double squared_distance(const Features& a, const Features& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

struct AssignResult {
  ClusterAssignment assignment = ClusterAssignment::outlier();
  std::size_t neighbor_count = 0;  // points of the reference set within epsilon of x
};

namespace detail {

/// out[s] = squared distance from x to point s of a column-major float block.
#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
__attribute__((target_clones("avx2", "default")))
#endif
inline void squared_distances_f32(const Features& x, const float* cols, std::size_t stride, std::size_t n,
                                  float* out) {
  const float x0 = static_cast<float>(x[0]);
  for (std::size_t s = 0; s < n; ++s) {
    const float t = x0 - cols[s];
    out[s] = t * t;
  }
  for (std::size_t d = 1; d < kFeatureCount; ++d) {
    const float xd = static_cast<float>(x[d]);
    const float* col = cols + d * stride;
    for (std::size_t s = 0; s < n; ++s) {
      const float t = xd - col[s];
      out[s] += t * t;
    }
  }
}

}  // namespace detail

/// Bounded density model over the most recent feature vectors.
///
/// `assign` counts the retained points within epsilon of x (linear scan),
/// labels x, then retains it, evicting the oldest point when full.
///
/// Core flags follow the textbook definition: a point is core when its
/// epsilon-neighbourhood among the retained points, itself included, has at
/// least min_pts members. They are maintained without an eviction scan: every
/// point counts the younger neighbours that arrived after it (those can never
/// be evicted first) and remembers the insertion serials of its min_pts-1
/// youngest older neighbours, which is enough to decide the flag exactly once
/// older points start leaving.
class ReferenceSet {
 public:
  ReferenceSet(std::size_t capacity, double epsilon, std::size_t min_pts)
      : capacity_(capacity), epsilon_(epsilon), min_pts_(min_pts), older_slots_(min_pts > 0 ? min_pts - 1 : 0) {
    if (capacity_ == 0) throw ConfigError("reference_capacity", "must be positive");
    if (min_pts_ == 0) throw ConfigError("min_pts", ">= 1");
    if (!(epsilon_ > 0.0)) throw ConfigError("epsilon", "> 0");
    recent_.resize(older_slots_);
  }

  AssignResult assign(const Features& x) {
    const double eps2 = epsilon_ * epsilon_;
    const bool full = size_ == capacity_;
    const std::size_t evicted = full ? head_ : kNone;
    // Oldest retained serial once x is in and the oldest point (if full) is out.
    const std::uint64_t frontier = !full ? (size_ == 0 ? next_serial_ : serial_[0])
                                         : (capacity_ > 1 ? serial_[head_ + 1 == capacity_ ? 0 : head_ + 1]
                                                          : next_serial_);

    // Single-precision distances to every retained point. Anything within
    // kFloatSlack of the epsilon boundary is recomputed in double precision,
    // so neighbour counts match an all-double scan exactly.
    dist_.resize(size_);
    detail::squared_distances_f32(x, coordsf_.data(), stride_, size_, dist_.data());
    auto exact = [&](std::size_t slot) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < kFeatureCount; ++d) {
        const double t = x[d] - coords_[d * stride_ + slot];
        d2 += t * t;
      }
      return d2;
    };

    // Settle the rare points whose single-precision distance is too close to
    // the boundary to trust, then count neighbours without branching.
    const float hi = static_cast<float>(eps2 + kFloatSlack);
    const float lo = static_cast<float>(eps2 - kFloatSlack);
    for (std::size_t slot = 0; slot < size_; ++slot) {
      const float approx = dist_[slot];
      if (approx >= lo && approx <= hi) {
        dist_[slot] = exact(slot) <= eps2 ? lo : std::numeric_limits<float>::infinity();
      }
    }
    std::size_t n = 0;
    {
      const float* dist = dist_.data();
      std::uint32_t* younger = younger_.data();
      for (std::size_t slot = 0; slot < size_; ++slot) {
        const std::uint32_t in = dist[slot] <= hi ? 1U : 0U;
        younger[slot] += in;
        n += in;
      }
    }

    // Serials of the youngest older_slots_ neighbours, oldest first.
    std::size_t keep = 0;
    for (std::size_t i = size_; i-- > 0 && keep < older_slots_;) {
      const std::size_t slot = physical(i);
      if (dist_[slot] <= hi) recent_[keep++] = serial_[slot];
    }
    std::reverse(recent_.begin(), recent_.begin() + static_cast<std::ptrdiff_t>(keep));

    // Nearest neighbour that is core once x is in (only needed for inliers),
    // by single-precision distance; ties go to the oldest point.
    std::size_t best_slot = kNone;
    if (n >= min_pts_) {
      float best = std::numeric_limits<float>::infinity();
      auto nearest = [&](std::size_t begin, std::size_t end) {
        for (std::size_t slot = begin; slot < end; ++slot) {
          const float approx = dist_[slot];
          if (approx > hi || approx >= best || slot == evicted) continue;
          if (is_core_slot(slot, frontier)) {
            best = approx;
            best_slot = slot;
          }
        }
      };
      if (!full) {
        nearest(0, size_);
      } else {
        nearest(head_, capacity_);
        nearest(0, head_);
      }
    }

    // Retain x.
    std::size_t slot;
    if (!full) {
      slot = size_++;
      ensure_room(size_);
      serial_.push_back(0);
      younger_.push_back(0);
      cluster_.push_back(-1);
      older_.resize(older_.size() + older_slots_, 0);
      older_count_.push_back(0);
    } else {
      slot = head_;
      head_ = head_ + 1 == capacity_ ? 0 : head_ + 1;
    }
    for (std::size_t d = 0; d < kFeatureCount; ++d) {
      coords_[d * stride_ + slot] = x[d];
      coordsf_[d * stride_ + slot] = static_cast<float>(x[d]);
    }
    serial_[slot] = next_serial_++;
    younger_[slot] = 0;
    cluster_[slot] = -1;
    std::copy_n(recent_.begin(), keep, older_.begin() + static_cast<std::ptrdiff_t>(slot * older_slots_));
    older_count_[slot] = static_cast<std::uint32_t>(keep);

    AssignResult result;
    result.neighbor_count = n;
    if (n >= min_pts_) {
      std::int64_t id;
      if (best_slot != kNone && cluster_[best_slot] >= 0) {
        id = cluster_[best_slot];
      } else {
        id = next_cluster_++;
        if (best_slot != kNone) cluster_[best_slot] = id;
      }
      cluster_[slot] = id;
      result.assignment = ClusterAssignment::inlier(id);
    }
    return result;
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t capacity() const noexcept { return capacity_; }
  double epsilon() const noexcept { return epsilon_; }
  std::size_t min_pts() const noexcept { return min_pts_; }

  /// i = 0 is the oldest retained point.
  Features point(std::size_t i) const {
    const std::size_t slot = physical(i);
    Features f{};
    for (std::size_t d = 0; d < kFeatureCount; ++d) f[d] = coords_[d * stride_ + slot];
    return f;
  }
  bool is_core(std::size_t i) const { return is_core_slot(physical(i), oldest_serial()); }
  /// Cluster id recorded when the point was assigned, -1 for outliers.
  std::int64_t cluster_id(std::size_t i) const { return cluster_[physical(i)]; }

  std::size_t storage_bytes() const noexcept {
    return coords_.capacity() * sizeof(double) + coordsf_.capacity() * sizeof(float) + serial_.capacity() * 8 + younger_.capacity() * 4 +
           cluster_.capacity() * 8 + older_.capacity() * 8 + older_count_.capacity() * 4 +
           dist_.capacity() * sizeof(float) + recent_.capacity() * 8;
  }

 private:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  /// Bound on |float d2 - double d2| for points in [0,1]^12, with margin.
  static constexpr double kFloatSlack = 1e-4;

  std::size_t physical(std::size_t i) const {
    if (size_ < capacity_) return i;
    const std::size_t p = head_ + i;
    return p >= capacity_ ? p - capacity_ : p;
  }

  std::uint64_t oldest_serial() const {
    if (size_ == 0) return next_serial_;
    return serial_[size_ < capacity_ ? 0 : head_];
  }

  /// Column-major coordinates with `stride_` slots per column, grown by
  /// doubling up to the capacity.
  void ensure_room(std::size_t slots) {
    if (slots <= stride_) return;
    const std::size_t grown = std::min(capacity_, std::max<std::size_t>(64, stride_ * 2));
    std::vector<double> next(kFeatureCount * grown, 0.0);
    std::vector<float> nextf(kFeatureCount * grown, 0.0f);
    for (std::size_t d = 0; d < kFeatureCount; ++d) {
      std::copy_n(coords_.data() + d * stride_, stride_, next.data() + d * grown);
      std::copy_n(coordsf_.data() + d * stride_, stride_, nextf.data() + d * grown);
    }
    coords_ = std::move(next);
    coordsf_ = std::move(nextf);
    stride_ = grown;
  }

  bool is_core_slot(std::size_t slot, std::uint64_t frontier) const {
    std::size_t count = 1 + younger_[slot];
    if (count >= min_pts_) return true;
    const auto* older = older_.data() + slot * older_slots_;
    for (std::uint32_t k = 0; k < older_count_[slot]; ++k) {
      if (older[k] >= frontier) ++count;
    }
    return count >= min_pts_;
  }

  std::size_t capacity_;
  double epsilon_;
  std::size_t min_pts_;
  std::size_t older_slots_;

  std::size_t size_ = 0;
  std::size_t head_ = 0;  // oldest slot once full
  std::size_t stride_ = 0;
  std::uint64_t next_serial_ = 0;
  std::int64_t next_cluster_ = 0;

  std::vector<double> coords_;
  std::vector<float> coordsf_;  // single-precision copy for the bulk scan
  std::vector<std::uint64_t> serial_;
  std::vector<std::uint32_t> younger_;
  std::vector<std::int64_t> cluster_;
  std::vector<std::uint64_t> older_;  // older_slots_ serials per slot
  std::vector<std::uint32_t> older_count_;
  std::vector<float> dist_;             // scratch
  std::vector<std::uint64_t> recent_;   // scratch ring of neighbour serials
};

/// Spec-level entry point: assign x against `ref` and retain it.
inline AssignResult assign(const FeatureVector& x, ReferenceSet& ref) { return ref.assign(x.values); }

struct BatchClustering {
  std::vector<ClusterAssignment> labels;
  std::vector<bool> core;
  std::size_t cluster_count = 0;

  std::size_t outlier_count() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](const auto& a) { return a.is_outlier(); }));
  }
};

/// Exact DBSCAN over a static point set. Cluster ids follow the order in which
/// the first core point of each cluster appears; border points go to the
/// first cluster that reaches them.
inline BatchClustering dbscan_batch(std::span<const Features> points, double epsilon,
                                    std::size_t min_pts) {
  const std::size_t n = points.size();
  const double eps2 = epsilon * epsilon;
  BatchClustering out;
  out.labels.assign(n, ClusterAssignment::outlier());
  out.core.assign(n, false);

  std::vector<std::vector<std::size_t>> hood(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (squared_distance(points[i], points[j]) <= eps2) hood[i].push_back(j);
    }
    out.core[i] = hood[i].size() >= min_pts;
  }

  std::vector<bool> visited(n, false);
  std::int64_t next_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (visited[i] || !out.core[i]) continue;
    const std::int64_t id = next_id++;
    std::deque<std::size_t> frontier{i};
    visited[i] = true;
    out.labels[i] = ClusterAssignment::inlier(id);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (!out.core[p]) continue;
      for (std::size_t q : hood[p]) {
        if (visited[q]) continue;
        visited[q] = true;
        out.labels[q] = ClusterAssignment::inlier(id);
        frontier.push_back(q);
      }
    }
  }
  out.cluster_count = static_cast<std::size_t>(next_id);
  return out;
}

}  // namespace zsd
