#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "zsd/metrics.hpp"

using namespace zsd;

TEST(Confusion, HandComputedCases) {
  const auto truth = oracle::metrics_truth();
  for (const auto& c : oracle::metrics_cases()) {
    SCOPED_TRACE(c.name);
    const auto rep = score_run(oracle::metrics_verdicts(c), truth);
    EXPECT_EQ(rep.events, (ConfusionCounts{c.tp, c.fp, c.tn, c.fn}));
    EXPECT_NEAR(rep.events.precision(), c.precision, 1e-12);
    EXPECT_NEAR(rep.events.recall(), c.recall, 1e-12);
    EXPECT_NEAR(rep.events.f1(), c.f1, 1e-12);
    EXPECT_NEAR(rep.events.fpr(), c.fpr, 1e-12);
    const auto& lat = rep.latencies;
    const auto a = std::find_if(lat.begin(), lat.end(), [](const auto& r) { return r.entity == "a"; });
    ASSERT_NE(a, lat.end());
    EXPECT_EQ(a->latency_ms().has_value(), c.latency_a_ms.has_value());
    if (c.latency_a_ms) {
      EXPECT_NEAR(*a->latency_ms(), *c.latency_a_ms, 1e-12);
    }
  }
}

TEST(Confusion, DirectCounts) {
  const ConfusionCounts c{2, 1, 6, 1};
  EXPECT_DOUBLE_EQ(c.precision(), 2.0 / 3);
  EXPECT_DOUBLE_EQ(c.recall(), 2.0 / 3);
  EXPECT_DOUBLE_EQ(c.f1(), 2.0 / 3);
  EXPECT_DOUBLE_EQ(c.fpr(), 1.0 / 7);
}

TEST(ScoreRun, FamilySummaryAndLatency) {
  const auto truth = oracle::metrics_truth();
  oracle::MetricsCase c{"x", {"a100b", "a150m", "c5b"}, 0, 0, 0, 0, 0, 0, 0, 0, std::nullopt};
  const auto rep = score_run(oracle::metrics_verdicts(c), truth);
  EXPECT_EQ(rep.by_family.at("lockbit").detected, 1u);
  EXPECT_DOUBLE_EQ(*rep.by_family.at("lockbit").mean_latency_ms(), 0.05);
  EXPECT_EQ(rep.by_family.at("conti").detected, 0u);
  EXPECT_FALSE(rep.by_family.at("conti").mean_latency_ms().has_value());
  EXPECT_EQ(rep.by_archetype.at("attack").total(), 3u);
  const auto j = rep.to_json();
  EXPECT_TRUE(j["by_family"]["conti"]["mean_latency_ms"].is_null());
}

TEST(ScoreRun, LatencyUsesDecisionTime) {
  TruthIndex t;
  t.add({"a", Label::malicious, "attack", "lockbit", 100, 0});
  Verdict v;
  v.entity = "a";
  v.event_ts = 120;
  v.decided_ts = 2120;  // resolved after a deferral
  v.label = Label::malicious;
  const auto rep = score_run(std::vector<Verdict>{v}, t);
  EXPECT_DOUBLE_EQ(*rep.latencies[0].latency_ms(), 2.02);
}

TEST(ScoreRun, JoinErrors) {
  const auto truth = oracle::metrics_truth();
  oracle::MetricsCase stranger{"x", {"z1b"}, 0, 0, 0, 0, 0, 0, 0, 0, std::nullopt};
  EXPECT_THROW(score_run(oracle::metrics_verdicts(stranger), truth), JoinError);
  TruthIndex counted;
  counted.add({"b", Label::benign, "office", "", std::nullopt, 3});
  oracle::MetricsCase short_run{"x", {"b1b", "b2b"}, 0, 0, 0, 0, 0, 0, 0, 0, std::nullopt};
  EXPECT_THROW(score_run(oracle::metrics_verdicts(short_run), counted), JoinError);
}

TEST(Truth, JsonRoundTripAndErrors) {
  const auto t = oracle::metrics_truth();
  const auto back = TruthIndex::from_json(t.to_json());
  EXPECT_EQ(back.to_json(), t.to_json());
  EXPECT_THROW(TruthIndex::from_json(nlohmann::json::parse(R"({"entities":[{"entity":"a","label":"malicious"}]})")),
               JoinError);
  EXPECT_THROW(TruthIndex::from_json(nlohmann::json::parse(R"({"nope":1})")), JoinError);
}

TEST(Trend, TheilSen) {
  const std::vector<double> x{0, 0.25, 0.5, 0.75, 1.0};
  EXPECT_NEAR(theil_sen_slope(x, std::vector<double>{1.0, 0.9, 0.8, 0.7, 0.6}), -0.4, 1e-12);
  EXPECT_EQ(trend_sign(theil_sen_slope(x, std::vector<double>{1.0, 0.9, 0.8, 0.7, 0.6})), "negative");
  EXPECT_EQ(trend_sign(theil_sen_slope(std::vector<double>{1, 2}, std::vector<double>{0.5, 0.5})), "flat");
  EXPECT_EQ(theil_sen_slope(std::vector<double>{1, 1}, std::vector<double>{0, 5}), 0.0);
  // Robust to a single outlier.
  EXPECT_NEAR(theil_sen_slope(x, std::vector<double>{1.0, 0.9, 5.0, 0.7, 0.6}), -0.4, 1e-12);
  EXPECT_THROW(theil_sen_slope(x, std::vector<double>{1.0}), DimensionError);
}

TEST(Trend, NonIncreasingTolerance) {
  EXPECT_TRUE(non_increasing_within(std::vector<double>{1, 0.9, 0.9, 0.5}));
  EXPECT_TRUE(non_increasing_within(std::vector<double>{1, 0.9, 0.91, 0.5}));
  EXPECT_FALSE(non_increasing_within(std::vector<double>{1, 0.9, 0.95, 0.5}));
  EXPECT_FALSE(non_increasing_within(std::vector<double>{1, 0.9, 0.91, 0.8, 0.81}));
  EXPECT_TRUE(non_increasing_within(std::vector<double>{}));
}

TEST(Sweep, CsvAndTrend) {
  const auto truth = oracle::metrics_truth();
  std::vector<SweepRow> rows;
  const std::vector<std::vector<std::string>> runs{{"a150m", "c1m"}, {"a150m", "c1b"}, {"a150b", "c1b"}};
  for (std::size_t i = 0; i < runs.size(); ++i) {
    oracle::MetricsCase c{"x", runs[i], 0, 0, 0, 0, 0, 0, 0, 0, std::nullopt};
    rows.push_back({"obfuscation", 0.5 * static_cast<double>(i), "lockbit", score_run(oracle::metrics_verdicts(c), truth)});
  }
  const auto s = sweep_report(rows);
  EXPECT_EQ(s.csv.substr(0, s.csv.find('\n')), std::string(kSweepCsvHeader));
  EXPECT_NE(s.csv.find("obfuscation,0.0000,lockbit,1.000000,"), std::string::npos);
  EXPECT_NE(s.csv.find(",nan,1\n"), std::string::npos);
  ASSERT_EQ(s.trends.size(), 1u);
  EXPECT_EQ(s.trends[0].sign, "negative");
  EXPECT_TRUE(s.trends[0].non_increasing);
  EXPECT_EQ(s.trends[0].detection_rates, (std::vector<double>{1.0, 1.0, 0.0}));
}
