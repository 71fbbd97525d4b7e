#include <gtest/gtest.h>

#include <cmath>

#include "zsd/detail/random.hpp"
#include "zsd/features.hpp"

using namespace zsd;

namespace {

Observation obs(std::int64_t ts, EventKind kind, std::optional<std::string> path = std::nullopt,
                std::optional<double> entropy = std::nullopt) {
  Observation o;
  o.ts = ts;
  o.entity = "p";
  o.kind = kind;
  o.path = std::move(path);
  o.entropy = entropy;
  return o;
}

}  // namespace

TEST(Entropy, HandComputedHistograms) {
  std::array<std::uint64_t, 256> c{};
  c[0x41] = 100;
  EXPECT_DOUBLE_EQ(shannon_entropy(c), 0.0);
  c.fill(1);
  EXPECT_DOUBLE_EQ(shannon_entropy(c), 8.0);
  c.fill(0);
  c[0x61] = 2;
  c[0x62] = 2;
  EXPECT_DOUBLE_EQ(shannon_entropy(c), 1.0);
  c.fill(0);
  EXPECT_THROW(shannon_entropy(c), EmptyInput);
}

TEST(Features, SingleReadIsNeutral) {
  EntityWindow w("p", 256);
  w.push(obs(0, EventKind::file_read), 0);
  const auto f = extract(w).values;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (i == 5) continue;  // no path, so distinct_paths is 0 as well
    EXPECT_EQ(f[i], 0.0) << "component " << i;
  }
  EXPECT_EQ(f[5], 0.0);
}

TEST(Features, WriteBurst) {
  EntityWindow w("p", 256);
  for (int i = 0; i < 100; ++i) {
    const auto ts = static_cast<std::int64_t>(std::llround(i * 1e6 / 99.0));
    w.push(obs(ts, EventKind::file_write, "/same.docx", 8.0), i);
  }
  const auto f = extract(w).values;
  EXPECT_NEAR(f[0], 100.0 / 120.0, 1e-12);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
  EXPECT_NEAR(f[5], std::log2(2.0) / 16.0, 1e-15);
  EXPECT_DOUBLE_EQ(f[6], 0.0);  // nothing was read first
  EXPECT_EQ(extract(w).window_id, 99);
}

TEST(Features, RenameBurst) {
  EntityWindow w("p", 256);
  for (int i = 0; i < 10; ++i) {
    Observation o = obs(static_cast<std::int64_t>(std::llround(i * 2e6 / 9.0)), EventKind::file_rename,
                        "/f" + std::to_string(i));
    o.ext_before = "docx";
    o.ext_after = "lock";
    w.push(o, i);
  }
  const auto f = extract(w).values;
  EXPECT_NEAR(f[3], 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(f[4], 1.0);
}

TEST(Features, ReadThenWriteAndEntropyLift) {
  EntityWindow w("p", 256);
  w.push(obs(0, EventKind::file_read, "/a", 4.0), 0);
  w.push(obs(1000, EventKind::file_write, "/a", 8.0), 1);
  w.push(obs(2000, EventKind::file_write, "/b", 8.0), 2);
  const auto f = extract(w).values;
  EXPECT_DOUBLE_EQ(f[6], 0.5);
  EXPECT_DOUBLE_EQ(f[2], 0.5);
  EXPECT_DOUBLE_EQ(f[1], 1.0);
}

TEST(Features, WindowKeepsLastW) {
  EntityWindow small("p", 4), exact("p", 4);
  for (int i = 0; i < 10; ++i) small.push(obs(i * 1000, i < 6 ? EventKind::file_write : EventKind::file_read), i);
  for (int i = 6; i < 10; ++i) exact.push(obs(i * 1000, EventKind::file_read), i);
  EXPECT_EQ(small.size(), 4u);
  EXPECT_EQ(extract(small).values, extract(exact).values);
}

TEST(Features, BoundedAndPureOnRandomWindows) {
  detail::Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    EntityWindow a("p", 64), b("p", 64);
    std::int64_t ts = 0;
    const int n = 1 + static_cast<int>(rng.below(120));
    for (int i = 0; i < n; ++i) {
      ts += static_cast<std::int64_t>(rng.below(2000000));
      Observation o = obs(ts, static_cast<EventKind>(rng.below(kEventKindNames.size())),
                          "/p" + std::to_string(rng.below(30)));
      if (rng.uniform() < 0.7) o.entropy = rng.uniform(0.0, 8.0);
      if (o.kind == EventKind::file_rename) {
        o.ext_before = "a";
        o.ext_after = rng.uniform() < 0.5 ? "a" : "b";
      }
      o.bytes = rng.below(1u << 24);
      a.push(o, i);
      b.push(o, i);
    }
    const auto fa = extract(a).values;
    const auto fb = extract(b).values;
    EXPECT_EQ(fa, fb);
    for (double v : fa) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}
