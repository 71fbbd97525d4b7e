#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "zsd/simulator.hpp"

using namespace zsd;
namespace fs = std::filesystem;

namespace {

std::string serialize(const sim::GeneratedStream& g) {
  std::ostringstream ev, tr;
  sim::write_stream(g, ev, tr);
  return ev.str() + tr.str();
}

sim::Scenario mixed(std::uint64_t seed) {
  sim::Scenario sc;
  sc.duration_s = 90;
  sc.seed = seed;
  sc.benign = {3, 1, 1};
  sc.attacks.push_back({sim::builtin_presets().at("conti"), 5.0, 100});
  return sc;
}

}  // namespace

TEST(Simulator, NoAttacksMeansAllBenign) {
  sim::Scenario sc;
  sc.duration_s = 120;
  sc.benign = {4, 1, 1};
  const auto g = sim::generate(sc);
  ASSERT_FALSE(g.events.empty());
  for (const auto& e : g.events) EXPECT_EQ(e.truth, Label::benign);
  for (const auto& t : g.truth.entities()) EXPECT_EQ(t.label, Label::benign);
}

TEST(Simulator, TenFilesAreTenTriples) {
  sim::FamilyProfile p = sim::builtin_presets().at("lockbit");
  p.files_per_sec = 10;
  p.delay_start_s = 0;
  p.exfil_bytes_per_sec = 0;
  p.entropy_mean = 7.8;
  p.entropy_sd = 0.1;
  sim::Scenario sc;
  sc.duration_s = 1.0;
  sc.host_crypto_bytes_per_sec = 1e12;
  sc.attacks.push_back({p, 0.0, 0});
  const auto g = sim::generate(sc);
  std::size_t reads = 0, writes = 0, renames = 0;
  double sum = 0;
  for (const auto& e : g.events) {
    EXPECT_EQ(e.truth, Label::malicious);
    if (!e.path || e.path->rfind("/home/victim", 0) != 0) continue;
    switch (e.kind) {
      case EventKind::file_read: ++reads; break;
      case EventKind::file_write:
        ++writes;
        sum += *e.entropy;
        EXPECT_GE(*e.entropy, 7.3);
        EXPECT_LE(*e.entropy, 8.0);
        break;
      case EventKind::file_rename:
        ++renames;
        EXPECT_EQ(*e.ext_after, "lockbit");
        EXPECT_NE(*e.ext_before, "lockbit");
        break;
      default: break;
    }
  }
  EXPECT_EQ(reads, 10u);
  EXPECT_EQ(writes, 10u);
  EXPECT_EQ(renames, 10u);
  EXPECT_NEAR(sum / 10.0, 7.8, 0.1);
}

TEST(Simulator, SeedDeterminism) {
  EXPECT_EQ(serialize(sim::generate(mixed(1))), serialize(sim::generate(mixed(1))));
  EXPECT_NE(serialize(sim::generate(mixed(1))), serialize(sim::generate(mixed(2))));
}

TEST(Simulator, TruthSidecarAgreesWithEvents) {
  const auto g = sim::generate(mixed(3));
  EXPECT_TRUE(std::is_sorted(g.events.begin(), g.events.end(),
                             [](const Event& a, const Event& b) { return a.ts < b.ts; }));
  std::map<std::string, std::size_t> counts;
  for (const auto& e : g.events) {
    const auto* t = g.truth.find(e.entity);
    ASSERT_NE(t, nullptr);
    EXPECT_EQ(e.truth == Label::malicious, t->event_is_malicious(e.ts));
    ++counts[e.entity];
  }
  for (const auto& t : g.truth.entities()) EXPECT_EQ(t.event_count, counts[t.entity]);
  const auto* atk = g.truth.find("attack-conti-0");
  ASSERT_NE(atk, nullptr);
  EXPECT_EQ(atk->label, Label::malicious);
  EXPECT_EQ(atk->family, "conti");
}

TEST(Simulator, FullObfuscationMasksTelltales) {
  sim::FamilyProfile p = sim::builtin_presets().at("lockbit");
  p.obfuscation = 1.0;
  p.delay_start_s = 0;
  sim::Scenario sc;
  sc.duration_s = 10;
  sc.attacks.push_back({p, 0.0, 50});
  const auto g = sim::generate(sc);
  for (const auto& e : g.events) {
    EXPECT_NE(e.kind, EventKind::file_rename);
    EXPECT_NE(e.kind, EventKind::priv_change);
    if (e.kind == EventKind::net_send) {
      EXPECT_EQ(*e.dst, "cdn.example.org");
    }
  }
}

TEST(Simulator, MaskingIsNestedAcrossLevels) {
  // Raising obfuscation on a fixed seed can only remove renames.
  auto renames = [](double o) {
    sim::FamilyProfile p = sim::builtin_presets().at("revil");
    p.obfuscation = o;
    sim::Scenario sc;
    sc.duration_s = 60;
    sc.attacks.push_back({p, 0.0, 100});
    std::set<std::string> out;
    for (const auto& e : sim::generate(sc).events) {
      if (e.kind == EventKind::file_rename) out.insert(*e.path);
    }
    return out;
  };
  const auto low = renames(0.25), high = renames(0.75);
  EXPECT_LT(high.size(), low.size());
  for (const auto& p : high) EXPECT_TRUE(low.count(p));
}

TEST(Simulator, FastAttacksFanOutToWorkers) {
  sim::FamilyProfile p = sim::builtin_presets().at("lockbit");
  p.files_per_sec = 100;
  sim::Scenario sc;
  sc.duration_s = 60;
  sc.attacks.push_back({p, 0.0, 200});
  const auto g = sim::generate(sc);
  std::size_t workers = 0;
  for (const auto& t : g.truth.entities()) {
    if (t.entity.find("/w") != std::string::npos) {
      ++workers;
      EXPECT_EQ(t.label, Label::malicious);
      EXPECT_GT(t.event_count, 0u);
    }
  }
  EXPECT_EQ(workers, 4u);  // ceil(100 / 25)
}

TEST(Simulator, IntermittentAttackPauses) {
  sim::FamilyProfile p = sim::builtin_presets().at("blackmatter");
  p.intermittent_duty = 0.5;
  p.delay_start_s = 0;
  p.exfil_bytes_per_sec = 0;
  sim::Scenario sc;
  sc.duration_s = 40;
  sc.attacks.push_back({p, 0.0, 0});
  const auto g = sim::generate(sc);
  const auto base = g.events.front().ts;
  for (const auto& e : g.events) {
    if (e.kind != EventKind::file_read) continue;
    const double phase = std::fmod(static_cast<double>(e.ts - base) * 1e-6, 10.0);
    EXPECT_LT(phase, 5.0 + 1e-6);
  }
}

TEST(Presets, DataFileMatchesBuiltins) {
  std::ifstream in(std::string(ZSD_DATA_DIR) + "/families.json");
  ASSERT_TRUE(in.good());
  const auto loaded = sim::load_presets(in);
  const auto builtin = sim::builtin_presets();
  ASSERT_EQ(loaded.size(), builtin.size());
  for (const auto& [name, prof] : builtin) EXPECT_EQ(loaded.at(name).to_json(), prof.to_json()) << name;
}

TEST(Presets, RejectsBadValues) {
  std::istringstream unknown(R"({"x": {"files_per_sec": 3, "speed": 2}})");
  EXPECT_THROW(sim::load_presets(unknown), ConfigError);
  std::istringstream range(R"({"x": {"obfuscation": 1.5}})");
  EXPECT_THROW(sim::load_presets(range), ConfigError);
  std::istringstream junk("{");
  EXPECT_THROW(sim::load_presets(junk), ConfigError);
}

TEST(Scenario, JsonRoundTripAndOverrides) {
  const auto sc = mixed(4);
  const auto back = sim::Scenario::from_json(sc.to_json());
  EXPECT_EQ(back.to_json(), sc.to_json());
  const auto j = nlohmann::json::parse(
      R"({"duration_s": 30, "attacks": [{"profile": "revil"}, {"profile": {"preset": "conti", "obfuscation": 0.5}}]})");
  const auto s = sim::Scenario::from_json(j);
  EXPECT_EQ(s.attacks[0].profile.to_json(), sim::builtin_presets().at("revil").to_json());
  EXPECT_DOUBLE_EQ(s.attacks[1].profile.obfuscation, 0.5);
  EXPECT_DOUBLE_EQ(s.attacks[1].profile.files_per_sec, sim::builtin_presets().at("conti").files_per_sec);
  EXPECT_THROW(sim::Scenario::from_json(nlohmann::json::parse(R"({"duration": 3})")), ConfigError);
  EXPECT_THROW(sim::Scenario::from_json(nlohmann::json::parse(R"({"attacks": [{"profile": "wannacry"}]})")),
               ConfigError);
  EXPECT_THROW(sim::Scenario::from_json(nlohmann::json::parse(R"({"duration_s": -1})")), ConfigError);
}

TEST(Suites, ManifestsOnDisk) {
  const fs::path dir = fs::temp_directory_path() / "zsd_suite_test";
  fs::remove_all(dir);
  const auto files = sim::make_paper_suite(dir);
  for (auto name : sim::kSuiteNames) EXPECT_TRUE(fs::is_directory(dir / std::string(name)));
  EXPECT_FALSE(files.empty());

  // S3 manifests differ only in the obfuscation of the attacks (and the sweep value).
  auto load = [&](const std::string& f) {
    std::ifstream in(dir / "s3" / f);
    auto j = nlohmann::json::parse(in);
    j.erase("sweep_value");
    for (auto& a : j["attacks"]) a["profile"].erase("obfuscation");
    return j;
  };
  EXPECT_EQ(load("lockbit_o0.json"), load("lockbit_o0.75.json"));
  EXPECT_EQ(load("conti_o0.25.json"), load("conti_o1.json"));
  fs::remove_all(dir);
}

TEST(Suites, Shapes) {
  const auto s3 = sim::experiment_suite(sim::SuiteId::s3);
  EXPECT_EQ(s3.points.size(), 15u);
  const auto s4 = sim::experiment_suite(sim::SuiteId::s4);
  double lo = 1e9, hi = 0;
  for (const auto& p : s4.points) {
    lo = std::min(lo, p.sweep_value);
    hi = std::max(hi, p.sweep_value);
  }
  EXPECT_GE(hi / lo, 10.0);
  const auto s1 = sim::experiment_suite(sim::SuiteId::s1);
  ASSERT_EQ(s1.points.size(), 4u);
  for (const auto& p : s1.points) {
    EXPECT_DOUBLE_EQ(p.scenario.duration_s, 600.0);
    EXPECT_GE(p.scenario.benign.backup, 1);
  }
  EXPECT_EQ(s1.seeds, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_FALSE(sim::parse_suite("s9").has_value());
}
