#include <gtest/gtest.h>

#include "oracles.hpp"
#include "zsd/ensemble.hpp"

using namespace zsd;

namespace {

PipelineConfig base_config() {
  PipelineConfig cfg;
  cfg.tau = 0.5;
  cfg.delta = 0.05;
  return cfg;
}

detail::RingBuffer<Label> ring_of(std::initializer_list<Label> labels, std::size_t cap = 8) {
  detail::RingBuffer<Label> r(cap);
  for (auto l : labels) r.push_back(l);
  return r;
}

}  // namespace

TEST(Prefilter, Examples) {
  Features x{};
  EXPECT_EQ(phase1_prefilter(x), Prefilter::fast_benign);
  x[0] = 0.8;
  EXPECT_EQ(phase1_prefilter(x), Prefilter::pass);
  x[0] = 0.05;
  EXPECT_EQ(phase1_prefilter(x), Prefilter::pass);
  x[0] = 0.0499;
  EXPECT_EQ(phase1_prefilter(x), Prefilter::fast_benign);
  Features y{};
  y[1] = 1.0;  // entropy alone is not activity
  EXPECT_EQ(phase1_prefilter(y), Prefilter::fast_benign);
  y[10] = 1.0;
  EXPECT_EQ(phase1_prefilter(y), Prefilter::pass);
}

TEST(Decide, Examples) {
  const auto cfg = base_config();
  EXPECT_EQ(decide(ClusterAssignment::inlier(3), std::nullopt, cfg), Decision::benign);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), 0.9, cfg), Decision::malicious);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), 0.1, cfg), Decision::benign);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), 0.52, cfg), Decision::deferred);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), 0.45, cfg), Decision::deferred);
  EXPECT_EQ(resolve_deferred(0.61, cfg), Label::malicious);
  EXPECT_EQ(resolve_deferred(0.5, cfg), Label::benign);
}

TEST(Decide, ContractViolations) {
  const auto cfg = base_config();
  EXPECT_THROW(decide(ClusterAssignment::outlier(), std::nullopt, cfg), ContractError);
  EXPECT_THROW(decide(ClusterAssignment::inlier(0), 0.9, cfg), ContractError);
  EXPECT_THROW(decide(ClusterAssignment::outlier(), 0.9, cfg, false), ContractError);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), std::nullopt, cfg, false), Decision::benign);
}

TEST(Decide, ZeroBandIsBareThreshold) {
  auto cfg = base_config();
  cfg.delta = 0.0;
  EXPECT_EQ(decide(ClusterAssignment::outlier(), 0.5, cfg), Decision::benign);
  EXPECT_EQ(decide(ClusterAssignment::outlier(), std::nextafter(0.5, 1.0), cfg), Decision::malicious);
}

TEST(Smooth, Examples) {
  auto cfg = base_config();
  cfg.smooth_m = 3;
  auto r = smooth(ring_of({}), Label::malicious, cfg);
  EXPECT_EQ(r.label, Label::benign);
  EXPECT_TRUE(r.changed);
  r = smooth(ring_of({Label::malicious, Label::benign, Label::malicious}), Label::malicious, cfg);
  EXPECT_EQ(r.label, Label::malicious);
  EXPECT_FALSE(r.changed);
  r = smooth(ring_of({Label::malicious, Label::malicious}), Label::benign, cfg);
  EXPECT_EQ(r.label, Label::benign);
  EXPECT_FALSE(r.changed);
}

TEST(Smooth, MOneIsIdentity) {
  auto cfg = base_config();
  cfg.smooth_m = 1;
  detail::Rng rng(1);
  EnsembleState st(cfg, 0);
  for (int i = 0; i < 500; ++i) {
    const Label raw = rng.below(2) ? Label::malicious : Label::benign;
    EXPECT_EQ(st.push_raw(raw, cfg).label, raw);
  }
}

TEST(Smooth, RingHoldsRawLabels) {
  auto cfg = base_config();
  cfg.smooth_m = 2;
  cfg.smooth_window = 3;
  EnsembleState st(cfg, 0);
  EXPECT_EQ(st.push_raw(Label::malicious, cfg).label, Label::benign);  // suppressed but remembered
  EXPECT_EQ(st.push_raw(Label::malicious, cfg).label, Label::malicious);
  st.push_raw(Label::benign, cfg);
  st.push_raw(Label::benign, cfg);
  st.push_raw(Label::benign, cfg);  // both malicious labels have left the ring
  EXPECT_EQ(st.push_raw(Label::malicious, cfg).label, Label::benign);
}

TEST(Deferral, ResolvesAtDeadline) {
  auto cfg = base_config();
  cfg.reeval_window = 3;
  EnsembleState st(cfg, 0);
  st.observe_event();
  ASSERT_EQ(decide(ClusterAssignment::outlier(), 0.52, cfg), Decision::deferred);
  st.defer({0, 100, st.events_seen() + cfg.reeval_window, 0.52, {}});
  for (int i = 0; i < 2; ++i) {
    st.observe_event();
    EXPECT_FALSE(st.pop_due().has_value());
  }
  st.observe_event();
  const auto due = st.pop_due();
  ASSERT_TRUE(due.has_value());
  EXPECT_EQ(due->event_ts, 100);
  EXPECT_EQ(resolve_deferred(0.61, cfg), Label::malicious);
  EXPECT_EQ(st.pending(), 0u);
}

TEST(Warmup, GraceCountsEvents) {
  PipelineConfig cfg;
  EXPECT_EQ(EnsembleState::default_warmup(cfg), cfg.min_pts * 4);
  EnsembleState st(cfg, 2);
  st.observe_event();
  st.observe_event();
  EXPECT_FALSE(st.warmup_passed());
  st.observe_event();
  EXPECT_TRUE(st.warmup_passed());
}

TEST(AlgorithmOne, RandomPairsMatchTranscription) {
  PipelineConfig cfg;
  cfg.delta = 0.0;
  cfg.smooth_m = 1;
  detail::Rng rng(2024);
  EnsembleState st(cfg, 0);
  for (int i = 0; i < 10000; ++i) {
    const bool outlier = rng.below(2) == 1;
    double s = rng.uniform();
    if (i % 50 == 0) s = cfg.tau;
    st.observe_event();
    const auto a = outlier ? ClusterAssignment::outlier() : ClusterAssignment::inlier(static_cast<std::int64_t>(rng.below(9)));
    const auto d = decide(a, outlier ? std::optional<double>(s) : std::nullopt, cfg, st.warmup_passed());
    ASSERT_NE(d, Decision::deferred);
    const Label final_label = st.push_raw(d == Decision::malicious ? Label::malicious : Label::benign, cfg).label;
    EXPECT_EQ(final_label == Label::malicious, oracle::algorithm1_malicious(outlier, s, cfg.tau));
  }
}

TEST(VerdictLine, RoundTrip) {
  Verdict v;
  v.event_ts = 1700000000000001;
  v.entity = "host\\a \"b\"";
  v.label = Label::malicious;
  v.score = 0.875;
  v.phase = Phase::deferred_resolved;
  v.decided_ts = 1700000000000100;
  v.seq = 42;
  const auto back = parse_verdict_line(format_verdict_line(v));
  EXPECT_EQ(back, v);
  EXPECT_THROW(parse_verdict_line("{\"event_ts\":1}"), ParseError);
  EXPECT_THROW(parse_verdict_line("nope"), ParseError);
}
