#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "zsd/detail/random.hpp"
#include "zsd/error.hpp"
#include "zsd/types.hpp"

namespace zsd {

/// Elman recurrent scorer:
///   h_t = tanh(Wx x_t + Wh h_{t-1} + bh),  h_0 = 0
///   score = sigmoid(wo . h_T + bo)
/// Matrices are row-major. The same struct doubles as a gradient container.
struct ScorerModel {
  std::size_t hidden = 0;
  std::size_t input = kFeatureCount;
  std::vector<double> wx;  // hidden x input
  std::vector<double> wh;  // hidden x hidden
  std::vector<double> bh;  // hidden
  std::vector<double> wo;  // hidden
  double bo = 0.0;

  static ScorerModel zeros(std::size_t hidden, std::size_t input = kFeatureCount) {
    ScorerModel m;
    m.hidden = hidden;
    m.input = input;
    m.wx.assign(hidden * input, 0.0);
    m.wh.assign(hidden * hidden, 0.0);
    m.bh.assign(hidden, 0.0);
    m.wo.assign(hidden, 0.0);
    return m;
  }

  std::size_t parameter_count() const { return wx.size() + wh.size() + bh.size() + wo.size() + 1; }

  /// Visits every parameter in serialization order (Wx, Wh, bh, wo, bo).
  template <class F>
  void for_each_parameter(F&& f) { visit(*this, f); }
  template <class F>
  void for_each_parameter(F&& f) const { visit(*this, f); }

  void check_shape() const {
    if (hidden == 0 || input == 0 || wx.size() != hidden * input || wh.size() != hidden * hidden ||
        bh.size() != hidden || wo.size() != hidden) {
      throw DimensionError("scorer model has inconsistent dimensions");
    }
  }

  friend bool operator==(const ScorerModel&, const ScorerModel&) = default;

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    for (auto& v : self.wx) f(v);
    for (auto& v : self.wh) f(v);
    for (auto& v : self.bh) f(v);
    for (auto& v : self.wo) f(v);
    f(self.bo);
  }
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {

template <class Seq>
void check_sequence(const ScorerModel& m, const Seq& seq) {
  m.check_shape();
  if (seq.size() == 0) throw DimensionError("empty sequence");
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (std::size(seq[t]) != m.input) {
      throw DimensionError("sequence element " + std::to_string(t) + " has length " +
                           std::to_string(std::size(seq[t])) + ", model expects " +
                           std::to_string(m.input));
    }
  }
}

/// One recurrence step: next = tanh(Wx x + Wh prev + bh).
template <class Vec>
void elman_step(const ScorerModel& m, const Vec& x, const double* prev, double* next) {
  const std::size_t H = m.hidden, F = m.input;
  for (std::size_t i = 0; i < H; ++i) {
    double a = m.bh[i];
    const double* wxr = m.wx.data() + i * F;
    for (std::size_t j = 0; j < F; ++j) a += wxr[j] * x[j];
    if (prev) {
      const double* whr = m.wh.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) a += whr[j] * prev[j];
    }
    next[i] = std::tanh(a);
  }
}

}  // namespace detail

/// Anomaly score in (0,1) for a sequence of feature vectors (oldest first).
/// `Seq` is any indexable sequence whose elements are indexable with size().
template <class Seq>
double forward(const ScorerModel& m, const Seq& seq) {
  detail::check_sequence(m, seq);
  const std::size_t H = m.hidden;
  std::vector<double> h(H), next(H);
  for (std::size_t t = 0; t < seq.size(); ++t) {
    detail::elman_step(m, seq[t], t == 0 ? nullptr : h.data(), next.data());
    h.swap(next);
  }
  double z = m.bo;
  for (std::size_t i = 0; i < H; ++i) z += m.wo[i] * h[i];
  return sigmoid(z);
}

inline constexpr double kScoreClampLo = 1e-7;
inline constexpr double kScoreClampHi = 1.0 - 1e-7;

/// Binary cross-entropy of a clamped score.
inline double loss(double score, int label) {
  const double s = std::clamp(score, kScoreClampLo, kScoreClampHi);
  return label == 1 ? -std::log(s) : -std::log(1.0 - s);
}

struct GradientResult {
  ScorerModel gradient;
  double score = 0.0;
  double loss = 0.0;
};

/// Exact gradient of loss(forward(m, seq), label) by backpropagation through
/// time. Where the clamp is active the loss is flat in the score, so the
/// gradient is zero.
template <class Seq>
GradientResult grad(const ScorerModel& m, const Seq& seq, int label) {
  detail::check_sequence(m, seq);
  const std::size_t H = m.hidden, F = m.input, T = seq.size();

  // hs[t] holds h_{t+1}; h_0 is implicit zero.
  std::vector<double> hs(T * H);
  for (std::size_t t = 0; t < T; ++t) {
    detail::elman_step(m, seq[t], t == 0 ? nullptr : hs.data() + (t - 1) * H, hs.data() + t * H);
  }
  const double* hT = hs.data() + (T - 1) * H;
  double z = m.bo;
  for (std::size_t i = 0; i < H; ++i) z += m.wo[i] * hT[i];
  const double s = sigmoid(z);

  GradientResult out;
  out.score = s;
  out.loss = loss(s, label);
  out.gradient = ScorerModel::zeros(H, F);
  ScorerModel& g = out.gradient;

  const bool clamped = s < kScoreClampLo || s > kScoreClampHi;
  const double dz = clamped ? 0.0 : s - static_cast<double>(label);
  g.bo = dz;
  std::vector<double> dh(H), da(H);
  for (std::size_t i = 0; i < H; ++i) {
    g.wo[i] = dz * hT[i];
    dh[i] = dz * m.wo[i];
  }
  for (std::size_t step = T; step-- > 0;) {
    const double* h = hs.data() + step * H;
    const double* hprev = step == 0 ? nullptr : hs.data() + (step - 1) * H;
    const auto& x = seq[step];
    for (std::size_t i = 0; i < H; ++i) da[i] = dh[i] * (1.0 - h[i] * h[i]);
    for (std::size_t i = 0; i < H; ++i) {
      g.bh[i] += da[i];
      double* gx = g.wx.data() + i * F;
      for (std::size_t j = 0; j < F; ++j) gx[j] += da[i] * x[j];
      if (hprev) {
        double* gh = g.wh.data() + i * H;
        for (std::size_t j = 0; j < H; ++j) gh[j] += da[i] * hprev[j];
      }
    }
    if (step == 0) break;
    for (std::size_t j = 0; j < H; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < H; ++i) acc += m.wh[i * H + j] * da[i];
      dh[j] = acc;
    }
  }
  return out;
}

struct TrainConfig {
  double lr = 0.05;
  std::int64_t epochs = 30;
  double clip_norm = 5.0;
  std::uint64_t seed = 7;
  std::int64_t hidden = 32;
  double init_scale = 0.1;  // parameters start uniform in (-init_scale, init_scale)
  /// Start the output layer at zero, so every initial score is exactly 0.5.
  /// The recurrent layer keeps its random start: with every parameter at
  /// zero the hidden state is 0 and only the output bias receives gradient.
  bool zero_output = false;

  void validate() const {
    if (!(lr > 0.0 && std::isfinite(lr))) throw ConfigError("lr", "> 0");
    if (epochs < 1) throw ConfigError("epochs", ">= 1");
    if (!(clip_norm > 0.0)) throw ConfigError("clip_norm", "> 0");
    if (hidden < 1) throw ConfigError("hidden", ">= 1");
    if (!(init_scale >= 0.0)) throw ConfigError("init_scale", ">= 0");
  }
};

struct Example {
  std::vector<Features> seq;  // oldest first
  int label = 0;
};

struct TrainResult {
  ScorerModel model;
  /// Mean dataset loss of the initial model, then after each epoch.
  std::vector<double> loss_trace;
};

inline double mean_loss(const ScorerModel& m, std::span<const Example> data) {
  double total = 0.0;
  for (const auto& ex : data) total += loss(forward(m, ex.seq), ex.label);
  return total / static_cast<double>(data.size());
}

inline double accuracy(const ScorerModel& m, std::span<const Example> data, double tau = 0.5) {
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const int predicted = forward(m, ex.seq) > tau ? 1 : 0;
    if (predicted == ex.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Balanced toy set: label 1 iff component 0 of every vector exceeds 0.8.
/// Other components are uniform noise in [0,1].
inline std::vector<Example> separable_toy_set(std::size_t n, std::size_t seq_len, std::uint64_t seed) {
  detail::Rng rng(detail::derive_seed(seed, "scorer.toy"));
  std::vector<Example> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Example& ex = out[i];
    ex.label = i % 2 == 0 ? 1 : 0;
    ex.seq.resize(seq_len);
    for (auto& x : ex.seq) {
      for (auto& v : x) v = rng.uniform();
      x[0] = ex.label == 1 ? rng.uniform(0.8 + 1e-9, 1.0) : rng.uniform(0.0, 0.8);
    }
  }
  return out;
}

/// Per-example SGD with global-norm gradient clipping. Deterministic given
/// (data, cfg): initialisation and per-epoch shuffles come from cfg.seed.
inline TrainResult train(std::span<const Example> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DegenerateData("empty training set");
  bool has_pos = false, has_neg = false;
  for (const auto& ex : data) {
    if (ex.label != 0 && ex.label != 1) throw DegenerateData("labels must be 0 or 1");
    (ex.label == 1 ? has_pos : has_neg) = true;
  }
  if (!(has_pos && has_neg)) throw DegenerateData("training set needs both labels");

  detail::Rng rng(detail::derive_seed(cfg.seed, "scorer.train"));
  TrainResult out;
  out.model = ScorerModel::zeros(static_cast<std::size_t>(cfg.hidden));
  if (cfg.init_scale > 0.0) {
    out.model.for_each_parameter([&](double& v) { v = rng.uniform(-cfg.init_scale, cfg.init_scale); });
  }
  if (cfg.zero_output) {
    std::fill(out.model.wo.begin(), out.model.wo.end(), 0.0);
    out.model.bo = 0.0;
  }
  ScorerModel& m = out.model;
  out.loss_trace.push_back(mean_loss(m, data));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      GradientResult gr = grad(m, data[idx].seq, data[idx].label);
      double sq = 0.0;
      gr.gradient.for_each_parameter([&](const double& v) { sq += v * v; });
      const double norm = std::sqrt(sq);
      const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      const double step = cfg.lr * scale;
      auto apply = [step](std::vector<double>& p, const std::vector<double>& d) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= step * d[i];
      };
      apply(m.wx, gr.gradient.wx);
      apply(m.wh, gr.gradient.wh);
      apply(m.bh, gr.gradient.bh);
      apply(m.wo, gr.gradient.wo);
      m.bo -= step * gr.gradient.bo;
    }
    out.loss_trace.push_back(mean_loss(m, data));
  }
  return out;
}

/// Writes the versioned text model: header "ZSDMODEL 1 H F", then Wx (H rows),
/// Wh (H rows), bh, wo and bo, one row each, 17 significant digits.
inline void save_model(const ScorerModel& m, std::ostream& out) {
  m.check_shape();
  out << "ZSDMODEL 1 " << m.hidden << ' ' << m.input << '\n';
  char buf[40];
  auto row = [&](const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", p[i]);
      if (i) out << ' ';
      out << buf;
    }
    out << '\n';
  };
  for (std::size_t i = 0; i < m.hidden; ++i) row(m.wx.data() + i * m.input, m.input);
  for (std::size_t i = 0; i < m.hidden; ++i) row(m.wh.data() + i * m.hidden, m.hidden);
  row(m.bh.data(), m.hidden);
  row(m.wo.data(), m.hidden);
  row(&m.bo, 1);
  if (!out) throw IoError("failed writing model");
}

inline ScorerModel load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty model file");
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t H = 0, F = 0;
  if (!(header >> magic >> version >> H >> F) || magic != "ZSDMODEL") {
    throw ParseError(1, "bad model header");
  }
  if (version != 1) throw ParseError(1, "unsupported model version " + std::to_string(version));
  if (H == 0 || F == 0) throw ParseError(1, "model dimensions must be positive");
  if (F != kFeatureCount) throw DimensionError("model input size " + std::to_string(F) + " != 12");

  ScorerModel m = ScorerModel::zeros(H, F);
  std::size_t line_no = 1;
  auto row = [&](double* p, std::size_t n) {
    if (!std::getline(in, line)) throw ParseError(line_no + 1, "truncated model file");
    ++line_no;
    std::istringstream ss(line);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(ss >> tok)) throw ParseError(line_no, "expected " + std::to_string(n) + " values");
      char* end = nullptr;
      p[i] = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size() || !std::isfinite(p[i])) {
        throw ParseError(line_no, "bad parameter '" + tok + "'");
      }
    }
    if (ss >> tok) throw ParseError(line_no, "trailing values");
  };
  for (std::size_t i = 0; i < H; ++i) row(m.wx.data() + i * F, F);
  for (std::size_t i = 0; i < H; ++i) row(m.wh.data() + i * H, H);
  row(m.bh.data(), H);
  row(m.wo.data(), H);
  row(&m.bo, 1);
  return m;
}

}  // namespace zsd
