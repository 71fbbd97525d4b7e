#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsd/clustering.hpp"
#include "zsd/detail/random.hpp"
#include "zsd/detail/ring_buffer.hpp"
#include "zsd/ensemble.hpp"
#include "zsd/features.hpp"
#include "zsd/metrics.hpp"
#include "zsd/pipeline.hpp"
#include "zsd/scorer.hpp"
#include "zsd/simulator.hpp"

namespace zsd {

struct TrainingSetOptions {
  /// Fraction of non-gated (inlier or warmup) events kept as extra examples.
  double background_rate = 0.05;
  std::size_t max_per_class = 3000;
  std::uint64_t seed = 11;
};

/// Builds scorer examples from a labeled stream by replaying the detector's
/// front half (window, history, prefilter, density gate) per entity. Every
/// event the gate would send to the scorer becomes an example; a sample of
/// the remaining non-fast-path events is added so the scorer also sees
/// ordinary behaviour. Each class is capped after a seeded shuffle.
inline std::vector<Example> collect_examples(std::span<const Event> events, const PipelineConfig& cfg,
                                             const TrainingSetOptions& opt = {}) {
  validate_config(cfg);
  struct State {
    State(const std::string& name, const PipelineConfig& c)
        : window(name, static_cast<std::size_t>(c.window_events)),
          history(static_cast<std::size_t>(c.seq_len)),
          reference(static_cast<std::size_t>(c.reference_capacity), c.epsilon, static_cast<std::size_t>(c.min_pts)) {}
    EntityWindow window;
    detail::RingBuffer<Features> history;
    ReferenceSet reference;
    std::int64_t seen = 0;
  };
  std::unordered_map<std::string, State> states;
  detail::Rng rng(detail::derive_seed(opt.seed, "training.sample"));
  const std::int64_t grace = EnsembleState::default_warmup(cfg);
  std::vector<Example> pos, neg;

  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (!e.truth) throw ContractError("training events must carry truth labels");
    State& st = states.try_emplace(e.entity, e.entity, cfg).first->second;
    st.window.push(e, static_cast<std::int64_t>(i));
    const Features x = squash(raw_features(st.window));
    st.history.push_back(x);
    ++st.seen;
    const double u = rng.uniform();
    if (phase1_prefilter(x) == Prefilter::fast_benign) continue;
    const AssignResult a = st.reference.assign(x);
    const bool gated = a.assignment.is_outlier() && st.seen > grace;
    if (!gated && u >= opt.background_rate) continue;
    Example ex;
    ex.seq.reserve(st.history.size());
    for (std::size_t k = 0; k < st.history.size(); ++k) ex.seq.push_back(st.history[k]);
    ex.label = *e.truth == Label::malicious ? 1 : 0;
    (ex.label == 1 ? pos : neg).push_back(std::move(ex));
  }

  detail::shuffle(pos.begin(), pos.end(), rng);
  detail::shuffle(neg.begin(), neg.end(), rng);
  if (pos.size() > opt.max_per_class) pos.resize(opt.max_per_class);
  if (neg.size() > opt.max_per_class) neg.resize(opt.max_per_class);
  std::vector<Example> out;
  out.reserve(pos.size() + neg.size());
  std::move(pos.begin(), pos.end(), std::back_inserter(out));
  std::move(neg.begin(), neg.end(), std::back_inserter(out));
  return out;
}

/// Held-out training scenario: every family, with speed and entropy jittered
/// around the preset so the scorer does not memorise one operating point.
inline sim::Scenario training_scenario(std::uint64_t seed,
                                       const std::map<std::string, sim::FamilyProfile>& presets =
                                           sim::builtin_presets()) {
  sim::Scenario sc;
  sc.duration_s = 600.0;
  sc.seed = seed;
  sc.benign = {6, 2, 1};
  detail::Rng rng(detail::derive_seed(seed, "training.jitter"));
  int slot = 0;
  for (int round = 0; round < 5; ++round) {
    for (auto fam : sim::kFamilies) {
      sim::FamilyProfile p = presets.at(std::string(fam));
      p.files_per_sec *= std::exp2(rng.uniform(-1.0, 1.0));
      p.entropy_mean = std::clamp(p.entropy_mean + rng.normal(0.0, 0.1), 0.0, 8.0);
      p.delay_start_s = rng.uniform(20.0, 45.0);
      sc.attacks.push_back({p, 20.0 + 25.0 * slot++, 300});
    }
  }
  return sc;
}

struct DetectorTraining {
  std::uint64_t scenario_seed = 9001;
  TrainConfig train;
  TrainingSetOptions sampling;

  DetectorTraining() {
    train.hidden = 16;
    train.epochs = 20;
  }
};

struct TrainedDetector {
  ScorerModel model;
  std::vector<double> loss_trace;
  std::size_t examples = 0;
  std::size_t positives = 0;
};

inline TrainedDetector train_detector(std::span<const Event> events, const PipelineConfig& cfg,
                                      const DetectorTraining& opt = {}) {
  const auto examples = collect_examples(events, cfg, opt.sampling);
  TrainResult r = train(examples, opt.train);
  TrainedDetector out{std::move(r.model), std::move(r.loss_trace), examples.size(), 0};
  for (const auto& e : examples) out.positives += static_cast<std::size_t>(e.label);
  return out;
}

/// Generates the held-out training scenario and trains on it.
inline TrainedDetector train_default_detector(const PipelineConfig& cfg, const DetectorTraining& opt = {},
                                              const std::map<std::string, sim::FamilyProfile>& presets =
                                                  sim::builtin_presets()) {
  const auto g = sim::generate(training_scenario(opt.scenario_seed, presets));
  return train_detector(g.events, cfg, opt);
}

/// Mixed benign and attack load of exactly `n` events (the first `n` of a
/// scenario scaled up until it is long enough). Used for throughput runs.
inline std::vector<Event> bench_stream(std::size_t n, std::uint64_t seed = 1,
                                       const std::map<std::string, sim::FamilyProfile>& presets =
                                           sim::builtin_presets()) {
  for (int scale = 1;; scale *= 2) {
    sim::Scenario sc;
    sc.duration_s = 600.0;
    sc.seed = seed;
    sc.benign = {6 * scale, 2 * scale, scale};
    int slot = 0;
    for (int k = 0; k < scale; ++k) {
      for (auto fam : sim::kFamilies) sc.attacks.push_back({presets.at(std::string(fam)), 30.0 + 15.0 * slot++, 300});
    }
    auto g = sim::generate(sc);
    if (g.events.size() >= n || scale >= 1024) {
      if (g.events.size() > n) g.events.resize(n);
      return std::move(g.events);
    }
  }
}

/// Runs one scenario under one seed and scores the verdicts.
inline EvalReport evaluate_scenario(sim::Scenario sc, std::uint64_t seed, const ScorerModel& model,
                                    const PipelineConfig& cfg) {
  sc.seed = seed;
  const auto g = sim::generate(sc);
  const RunResult r = run(g.events, model, cfg);
  return score_run(r.verdicts, g.truth);
}

/// Evaluates every point of a suite over the suite's seeds, pooling the
/// reports of all seeds per point.
inline std::vector<SweepRow> run_suite(const sim::Suite& suite, const ScorerModel& model, const PipelineConfig& cfg) {
  std::vector<SweepRow> rows;
  for (const auto& pt : suite.points) {
    SweepRow row{pt.sweep_param, pt.sweep_value, pt.family, {}};
    for (auto seed : suite.seeds) row.report += evaluate_scenario(pt.scenario, seed, model, cfg);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace zsd
