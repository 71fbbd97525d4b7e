#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "zsd/detail/random.hpp"
#include "zsd/error.hpp"
#include "zsd/ingest.hpp"
#include "zsd/truth.hpp"
#include "zsd/types.hpp"

namespace zsd::sim {

enum class FileType : std::uint8_t { docx, xlsx, pdf, jpg, exe };

inline constexpr std::array<std::string_view, 5> kFileTypeNames = {"docx", "xlsx", "pdf", "jpg", "exe"};

/// Typical payload entropy (bits/byte) and size of each victim file type.
/// Formats that are already compressed leave little entropy headroom for an
/// encryptor, which is what makes them harder to spot.
struct FileTypeTraits {
  double entropy_mean;
  double entropy_sd;
  double mean_bytes;
};

inline constexpr std::array<FileTypeTraits, 5> kFileTypes = {{
    {5.0, 0.30, 120e3},   // docx
    {4.8, 0.30, 80e3},    // xlsx
    {6.2, 0.30, 400e3},   // pdf
    {7.6, 0.15, 1.5e6},   // jpg
    {4.5, 0.30, 1.0e6},   // exe
}};

struct FamilyProfile {
  std::string name = "custom";
  double files_per_sec = 10.0;
  double entropy_mean = 7.8;
  double entropy_sd = 0.1;
  double obfuscation = 0.0;
  double intermittent_duty = 1.0;
  double delay_start_s = 0.0;
  std::array<double, 5> filetype_mix{1, 1, 1, 1, 1};
  double exfil_bytes_per_sec = 0.0;
  std::string rename_to_ext = "locked";

  void validate() const {
    auto bad = [&](const char* field) { return ConfigError(std::string("profile.") + field, name); };
    if (!(files_per_sec > 0.0 && std::isfinite(files_per_sec))) throw bad("files_per_sec");
    if (!(entropy_mean >= 0.0 && entropy_mean <= 8.0)) throw bad("entropy_mean");
    if (!(entropy_sd >= 0.0)) throw bad("entropy_sd");
    if (!(obfuscation >= 0.0 && obfuscation <= 1.0)) throw bad("obfuscation");
    if (!(intermittent_duty > 0.0 && intermittent_duty <= 1.0)) throw bad("intermittent_duty");
    if (!(delay_start_s >= 0.0)) throw bad("delay_start_s");
    double sum = 0.0;
    for (double w : filetype_mix) {
      if (!(w >= 0.0)) throw bad("filetype_mix");
      sum += w;
    }
    if (!(sum > 0.0)) throw bad("filetype_mix");
    if (!(exfil_bytes_per_sec >= 0.0)) throw bad("exfil_bytes_per_sec");
    if (rename_to_ext.empty()) throw bad("rename_to_ext");
  }

  nlohmann::json to_json() const {
    nlohmann::json mix = nlohmann::json::object();
    for (std::size_t i = 0; i < kFileTypeNames.size(); ++i) mix[std::string(kFileTypeNames[i])] = filetype_mix[i];
    return {{"name", name},
            {"files_per_sec", files_per_sec},
            {"entropy_mean", entropy_mean},
            {"entropy_sd", entropy_sd},
            {"obfuscation", obfuscation},
            {"intermittent_duty", intermittent_duty},
            {"delay_start_s", delay_start_s},
            {"filetype_mix", mix},
            {"exfil_bytes_per_sec", exfil_bytes_per_sec},
            {"rename_to_ext", rename_to_ext}};
  }

  /// Overwrites the fields present in `j`; unknown keys are errors.
  void apply_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("profile", "must be an object");
    for (const auto& item : j.items()) {
      const auto& k = item.key();
      const auto& v = item.value();
      try {
        if (k == "name") name = v.get<std::string>();
        else if (k == "files_per_sec") files_per_sec = v.get<double>();
        else if (k == "entropy_mean") entropy_mean = v.get<double>();
        else if (k == "entropy_sd") entropy_sd = v.get<double>();
        else if (k == "obfuscation") obfuscation = v.get<double>();
        else if (k == "intermittent_duty") intermittent_duty = v.get<double>();
        else if (k == "delay_start_s") delay_start_s = v.get<double>();
        else if (k == "exfil_bytes_per_sec") exfil_bytes_per_sec = v.get<double>();
        else if (k == "rename_to_ext") rename_to_ext = v.get<std::string>();
        else if (k == "preset") continue;
        else if (k == "filetype_mix") {
          filetype_mix.fill(0.0);
          for (const auto& w : v.items()) {
            auto pos = std::find(kFileTypeNames.begin(), kFileTypeNames.end(), w.key());
            if (pos == kFileTypeNames.end()) throw ConfigError("profile.filetype_mix", "unknown type " + w.key());
            filetype_mix[static_cast<std::size_t>(pos - kFileTypeNames.begin())] = w.value().get<double>();
          }
        } else {
          throw ConfigError("profile." + k, "unknown key");
        }
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError("profile." + k, e.what());
      }
    }
  }
};

/// Built-in family presets. data/families.json carries the same values and
/// can be edited and passed to the CLI without rebuilding.
inline std::map<std::string, FamilyProfile> builtin_presets() {
  std::map<std::string, FamilyProfile> p;
  p["lockbit"] = {"lockbit", 14.0, 7.85, 0.08, 0.00, 1.00, 20.0, {1, 1, 1, 1, 1}, 262144.0, "lockbit"};
  p["conti"] = {"conti", 9.0, 7.75, 0.12, 0.10, 0.90, 30.0, {1, 1, 1, 1, 1}, 131072.0, "CONTI"};
  p["revil"] = {"revil", 7.0, 7.75, 0.12, 0.05, 0.85, 25.0, {1, 1, 1, 1, 1}, 131072.0, "x7k2q9"};
  p["blackmatter"] = {"blackmatter", 5.0, 7.60, 0.20, 0.20, 0.60, 40.0, {1, 1, 1, 1, 1}, 65536.0, "bmx91"};
  return p;
}

inline std::map<std::string, FamilyProfile> load_presets(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("presets", e.what());
  }
  std::map<std::string, FamilyProfile> out;
  for (const auto& item : j.items()) {
    FamilyProfile f;
    f.name = item.key();
    f.apply_json(item.value());
    f.validate();
    out[item.key()] = f;
  }
  return out;
}

struct BenignWorkers {
  int office = 0;
  int build = 0;
  int backup = 0;
};

struct AttackSpec {
  FamilyProfile profile;
  double start_s = 0.0;
  std::int64_t max_files = 0;  // 0 = until the scenario ends
};

struct Scenario {
  double duration_s = 60.0;
  BenignWorkers benign;
  std::vector<AttackSpec> attacks;
  std::uint64_t seed = 1;
  /// Encryption throughput of the simulated host. An attack that tries to
  /// process files faster than this allows only encrypts part of each file.
  double host_crypto_bytes_per_sec = 16e6;
  /// Files per second a single encryptor process sustains. Faster attacks
  /// spread the files over freshly spawned worker processes.
  double process_files_per_sec = 25.0;

  void validate() const {
    if (!(duration_s > 0.0 && std::isfinite(duration_s))) throw ConfigError("duration_s", "> 0");
    if (benign.office < 0 || benign.build < 0 || benign.backup < 0) throw ConfigError("benign_workers", ">= 0");
    if (!(host_crypto_bytes_per_sec > 0.0)) throw ConfigError("host_crypto_bytes_per_sec", "> 0");
    if (!(process_files_per_sec > 0.0)) throw ConfigError("process_files_per_sec", "> 0");
    for (const auto& a : attacks) {
      a.profile.validate();
      if (!(a.start_s >= 0.0)) throw ConfigError("attacks.start_s", ">= 0");
      if (a.max_files < 0) throw ConfigError("attacks.max_files", ">= 0");
    }
  }

  nlohmann::json to_json() const {
    nlohmann::json atk = nlohmann::json::array();
    for (const auto& a : attacks) {
      atk.push_back({{"start_s", a.start_s}, {"max_files", a.max_files}, {"profile", a.profile.to_json()}});
    }
    return {{"duration_s", duration_s},
            {"seed", seed},
            {"host_crypto_bytes_per_sec", host_crypto_bytes_per_sec},
            {"process_files_per_sec", process_files_per_sec},
            {"benign_workers", {{"office", benign.office}, {"build", benign.build}, {"backup", benign.backup}}},
            {"attacks", atk}};
  }

  /// Parses a manifest. A profile is either a preset name or an object,
  /// optionally holding "preset" plus overrides.
  static Scenario from_json(const nlohmann::json& j,
                            const std::map<std::string, FamilyProfile>& presets = builtin_presets()) {
    Scenario s;
    try {
      for (const auto& item : j.items()) {
        const auto& k = item.key();
        const auto& v = item.value();
        if (k == "duration_s") s.duration_s = v.get<double>();
        else if (k == "seed") s.seed = v.get<std::uint64_t>();
        else if (k == "host_crypto_bytes_per_sec") s.host_crypto_bytes_per_sec = v.get<double>();
        else if (k == "process_files_per_sec") s.process_files_per_sec = v.get<double>();
        else if (k == "benign_workers") {
          for (const auto& w : v.items()) {
            if (w.key() == "office") s.benign.office = w.value().get<int>();
            else if (w.key() == "build") s.benign.build = w.value().get<int>();
            else if (w.key() == "backup") s.benign.backup = w.value().get<int>();
            else throw ConfigError("benign_workers." + w.key(), "unknown archetype");
          }
        } else if (k == "attacks") {
          for (const auto& a : v) {
            AttackSpec spec;
            spec.start_s = a.value("start_s", 0.0);
            spec.max_files = a.value("max_files", std::int64_t{0});
            const auto& prof = a.at("profile");
            auto preset_of = [&](const std::string& name) {
              auto it = presets.find(name);
              if (it == presets.end()) throw ConfigError("profile", "unknown preset " + name);
              return it->second;
            };
            if (prof.is_string()) {
              spec.profile = preset_of(prof.get<std::string>());
            } else {
              if (prof.contains("preset")) spec.profile = preset_of(prof.at("preset").get<std::string>());
              spec.profile.apply_json(prof);
            }
            s.attacks.push_back(std::move(spec));
          }
        } else if (k == "sweep_param" || k == "sweep_value" || k == "seeds" || k == "name") {
          continue;  // suite metadata
        } else {
          throw ConfigError(k, "unknown scenario key");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("scenario", e.what());
    }
    s.validate();
    return s;
  }
};

struct GeneratedStream {
  std::vector<Event> events;
  TruthIndex truth;
};

namespace detail {

using zsd::detail::Rng;

inline constexpr std::int64_t kBaseTs = 1'700'000'000'000'000;

inline double quantize4(double v) { return std::round(v * 1e4) / 1e4; }
inline double clamp_entropy(double v) { return quantize4(std::clamp(v, 0.0, 8.0)); }

/// Appends events of one entity. Emission order need not be time order;
/// generate() sorts the stream afterwards.
class Emitter {
 public:
  Emitter(std::string entity, std::vector<Event>& out) : entity_(std::move(entity)), out_(out) {}

  Event& emit(double t_s, EventKind kind, Truth truth) {
    Event e;
    e.ts = kBaseTs + std::llround(t_s * 1e6);
    e.entity = entity_;
    e.kind = kind;
    e.truth = truth;
    out_.push_back(std::move(e));
    return out_.back();
  }

  const std::string& entity() const { return entity_; }

 private:
  std::string entity_;
  std::vector<Event>& out_;
};

inline FileType pick_type(Rng& rng, const std::array<double, 5>& mix) {
  double total = 0;
  for (double w : mix) total += w;
  double u = rng.uniform() * total;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    if (u < mix[i]) return static_cast<FileType>(i);
    u -= mix[i];
  }
  for (std::size_t i = mix.size(); i-- > 0;) {
    if (mix[i] > 0) return static_cast<FileType>(i);
  }
  return FileType::docx;
}

inline double type_entropy(Rng& rng, FileType t) {
  const auto& tr = kFileTypes[static_cast<std::size_t>(t)];
  return clamp_entropy(rng.normal(tr.entropy_mean, tr.entropy_sd));
}

inline std::uint64_t type_size(Rng& rng, FileType t) {
  const auto& tr = kFileTypes[static_cast<std::size_t>(t)];
  return static_cast<std::uint64_t>(tr.mean_bytes * rng.uniform(0.5, 1.5));
}

struct UserFile {
  std::string path;
  FileType type;
  double entropy;
  std::uint64_t bytes;
};

inline std::vector<UserFile> make_user_files(Rng& rng, const std::string& dir, std::size_t n) {
  static constexpr std::array<double, 5> office_mix{5, 3.5, 1.5, 0.5, 0};
  std::vector<UserFile> files;
  for (std::size_t i = 0; i < n; ++i) {
    const FileType t = pick_type(rng, office_mix);
    files.push_back({dir + "/doc" + std::to_string(i) + "." + std::string(kFileTypeNames[static_cast<std::size_t>(t)]),
                     t, type_entropy(rng, t), type_size(rng, t)});
  }
  return files;
}

/// Interactive document work: open, edit and save, temp files, occasional
/// save-as and cloud sync. Used for office workers and for the benign phase
/// of hijacked processes (at a higher action rate).
inline void office_activity(Emitter& em, Rng& rng, std::vector<UserFile>& files, double t_begin, double t_end,
                            double actions_per_sec) {
  double t = t_begin + rng.exponential(actions_per_sec);
  std::size_t tmp_counter = 0;
  while (t < t_end) {
    auto& f = files[rng.below(files.size())];
    const double u = rng.uniform();
    if (u < 0.50) {
      auto& r = em.emit(t, EventKind::file_read, Truth::benign);
      r.path = f.path;
      r.bytes = f.bytes;
      r.entropy = f.entropy;
      const double save = t + rng.uniform(0.4, 2.5);
      if (save < t_end) {
        f.entropy = clamp_entropy(f.entropy + rng.normal(0.0, 0.05));
        f.bytes = static_cast<std::uint64_t>(static_cast<double>(f.bytes) * rng.uniform(0.95, 1.1));
        auto& w = em.emit(save, EventKind::file_write, Truth::benign);
        w.path = f.path;
        w.bytes = f.bytes;
        w.entropy = f.entropy;
        t = save;
      }
    } else if (u < 0.65) {
      auto& r = em.emit(t, EventKind::file_read, Truth::benign);
      r.path = f.path;
      r.bytes = f.bytes;
      r.entropy = f.entropy;
    } else if (u < 0.75) {
      const std::string tmp = f.path.substr(0, f.path.rfind('/')) + "/~$tmp" + std::to_string(tmp_counter++) + ".tmp";
      em.emit(t, EventKind::file_create, Truth::benign).path = tmp;
      auto& w = em.emit(t + 0.05, EventKind::file_write, Truth::benign);
      w.path = tmp;
      w.bytes = 4096;
      w.entropy = clamp_entropy(rng.normal(3.0, 0.3));
      em.emit(t + rng.uniform(0.5, 2.0), EventKind::file_delete, Truth::benign).path = tmp;
    } else if (u < 0.83) {
      const auto ext = std::string(kFileTypeNames[static_cast<std::size_t>(f.type)]);
      auto& r = em.emit(t, EventKind::file_rename, Truth::benign);
      r.path = f.path;
      r.ext_before = ext;
      r.ext_after = ext;
    } else {
      em.emit(t, EventKind::net_connect, Truth::benign).dst = "sync.example.com";
      auto& s = em.emit(t + 0.02, EventKind::net_send, Truth::benign);
      s.dst = "sync.example.com";
      s.bytes = static_cast<std::uint64_t>(rng.uniform(2e3, 30e3));
    }
    t += rng.exponential(actions_per_sec);
  }
}

inline void gen_office(Emitter& em, Rng& rng, int index, double duration) {
  auto files = make_user_files(rng, "/home/user" + std::to_string(index) + "/docs", 40);
  office_activity(em, rng, files, rng.uniform(0.0, 5.0), duration, 0.35);
}

/// Compile bursts separated by idle time: many source reads, object writes,
/// temp churn and an occasional privileged install step.
inline void gen_build(Emitter& em, Rng& rng, int index, double duration) {
  const std::string root = "/build/p" + std::to_string(index);
  double t = rng.uniform(5.0, 40.0);
  std::size_t burst_no = 0;
  while (t < duration) {
    const double burst_len = rng.uniform(3.0, 10.0);
    const double units_per_sec = rng.uniform(25.0, 45.0);
    em.emit(t, EventKind::proc_spawn, Truth::benign).path = "/usr/bin/cc";
    double u = t + 0.01;
    std::size_t unit = 0;
    while (u < t + burst_len && u < duration) {
      const std::string src = root + "/src/u" + std::to_string(unit) + ".c";
      const std::string obj = root + "/obj/u" + std::to_string(unit) + ".o";
      auto& r = em.emit(u, EventKind::file_read, Truth::benign);
      r.path = src;
      r.bytes = static_cast<std::uint64_t>(rng.uniform(4e3, 60e3));
      r.entropy = clamp_entropy(rng.normal(4.4, 0.2));
      const double dt = 1.0 / units_per_sec;
      if (burst_no == 0) em.emit(u + 0.3 * dt, EventKind::file_create, Truth::benign).path = obj;
      auto& w = em.emit(u + 0.6 * dt, EventKind::file_write, Truth::benign);
      w.path = obj;
      w.bytes = static_cast<std::uint64_t>(rng.uniform(8e3, 120e3));
      w.entropy = clamp_entropy(rng.normal(5.8, 0.3));
      u += dt;
      ++unit;
    }
    const double link = std::min(u, duration);
    const auto exe_bytes = static_cast<std::uint64_t>(rng.uniform(1e6, 4e6));
    const double exe_entropy = clamp_entropy(rng.normal(6.0, 0.2));
    auto& exe = em.emit(link, EventKind::file_write, Truth::benign);
    exe.path = root + "/bin/app.exe";
    exe.bytes = exe_bytes;
    exe.entropy = exe_entropy;
    for (int k = 0; k < 4; ++k) {
      em.emit(link + 0.01 * (k + 1), EventKind::file_delete, Truth::benign).path =
          root + "/obj/tmp" + std::to_string(k) + ".tmp";
    }
    if (rng.uniform() < 0.15) {
      em.emit(link + 0.1, EventKind::priv_change, Truth::benign);
      auto& inst = em.emit(link + 0.2, EventKind::file_write, Truth::benign);
      inst.path = "/usr/local/bin/app";
      inst.bytes = exe_bytes;
      inst.entropy = exe_entropy;
    }
    ++burst_no;
    t = link + rng.uniform(30.0, 120.0);
  }
}

/// Sustained copy of user files into a backup tree with unchanged entropy,
/// upload to a backup server and periodic rotation. Some copies are staged
/// under a .part name and renamed into place.
inline void gen_backup(Emitter& em, Rng& rng, int index, double duration) {
  const std::string dest = "/backup/b" + std::to_string(index);
  auto files = make_user_files(rng, "/home/shared", 400);
  double t = rng.uniform(0.0, 10.0);
  double next_rotation = t + 30.0;
  std::size_t copied = 0;
  const double files_per_sec = rng.uniform(4.0, 6.0);
  em.emit(t, EventKind::net_connect, Truth::benign).dst = "backup.example.com";
  while (t < duration) {
    const auto& f = files[copied % files.size()];
    const std::string target = dest + "/" + std::to_string(copied / files.size()) + f.path;
    auto& r = em.emit(t, EventKind::file_read, Truth::benign);
    r.path = f.path;
    r.bytes = f.bytes;
    r.entropy = f.entropy;
    const double dt = rng.exponential(files_per_sec);
    const bool staged = rng.uniform() < 0.3;
    auto& w = em.emit(t + 0.3 * dt, EventKind::file_write, Truth::benign);
    w.path = staged ? target + ".part" : target;
    w.bytes = f.bytes;
    w.entropy = f.entropy;
    if (staged) {
      auto& rn = em.emit(t + 0.5 * dt, EventKind::file_rename, Truth::benign);
      rn.path = target + ".part";
      rn.ext_before = "part";
      rn.ext_after = std::string(kFileTypeNames[static_cast<std::size_t>(f.type)]);
    }
    auto& s = em.emit(t + 0.7 * dt, EventKind::net_send, Truth::benign);
    s.dst = "backup.example.com";
    s.bytes = f.bytes / 3;
    if (t >= next_rotation) {
      for (int k = 0; k < 5; ++k) {
        em.emit(t + 0.8 * dt + 0.001 * k, EventKind::file_delete, Truth::benign).path =
            dest + "/old/" + std::to_string(copied) + "_" + std::to_string(k);
      }
      next_rotation += 30.0;
    }
    ++copied;
    t += dt;
  }
}

/// A process that behaves like an interactive client until delay_start_s,
/// then escalates privileges, deletes shadow copies and encrypts files in
/// place: read, overwrite with high-entropy payload, rename to the family
/// extension, while exfiltrating data. Each telltale is
/// independently masked with probability `obfuscation`; the random draws are
/// made whether or not they are used, so raising obfuscation on a fixed seed
/// masks a superset of the telltales masked at a lower level.
///
/// When files_per_sec exceeds what one process sustains, the process spawns
/// worker processes right after the onset and hands out files round-robin.
/// Workers are separate entities that are malicious from their first event.
struct AttackOutcome {
  std::optional<std::int64_t> first_ts;
  std::vector<std::pair<std::string, std::int64_t>> workers;  // entity, first_ts
};

inline AttackOutcome gen_attack(Emitter& em, std::vector<Event>& out, Rng& rng, int index, const AttackSpec& spec,
                                const Scenario& sc) {
  const FamilyProfile& p = spec.profile;
  const double duration = sc.duration_s;
  const double start = spec.start_s;
  AttackOutcome outcome;
  if (start >= duration) return outcome;
  const double onset = start + p.delay_start_s;

  auto own = make_user_files(rng, "/home/host" + std::to_string(index) + "/docs", 30);
  office_activity(em, rng, own, start, std::min(onset, duration), 2.0);
  if (onset >= duration) return outcome;

  Rng mask_rng(rng.next_u64());
  Rng exfil_rng(rng.next_u64());
  std::optional<std::int64_t>& first_ts = outcome.first_ts;
  // Onset: escalate and remove shadow copies before touching user files.
  // A masked onset reuses the privileges the process already has.
  auto& spawn = em.emit(onset, EventKind::proc_spawn, Truth::malicious);
  spawn.path = "/usr/bin/vssadmin";
  first_ts = spawn.ts;
  if (!(mask_rng.uniform() < p.obfuscation)) {
    em.emit(onset + 0.005, EventKind::priv_change, Truth::malicious);
    for (int k = 0; k < 2; ++k) {
      em.emit(onset + 0.01 + 0.005 * k, EventKind::file_delete, Truth::malicious).path =
          "/snapshots/shadow" + std::to_string(k);
    }
  }

  const double period = 10.0;
  const double on_len = p.intermittent_duty * period;
  auto wall_time = [&](double active) {
    if (p.intermittent_duty >= 1.0) return onset + active;
    const double cycles = std::floor(active / on_len);
    return onset + cycles * period + (active - cycles * on_len);
  };

  const auto fanout = static_cast<std::size_t>(std::ceil(p.files_per_sec / sc.process_files_per_sec - 1e-9));
  std::vector<Emitter> workers;
  std::vector<std::optional<std::int64_t>> worker_first(fanout > 1 ? fanout : 0);
  if (fanout > 1) {
    for (std::size_t k = 0; k < fanout; ++k) {
      em.emit(onset + 0.02 + 0.001 * static_cast<double>(k), EventKind::proc_spawn, Truth::malicious).path =
          "/proc/self/exe";
      workers.emplace_back(em.entity() + "/w" + std::to_string(k), out);
    }
  }

  const double dt = 1.0 / p.files_per_sec;
  const std::string dir = "/home/victim" + std::to_string(index);
  double last_t = onset;
  for (std::int64_t i = 0; spec.max_files == 0 || i < spec.max_files; ++i) {
    const double t = wall_time(static_cast<double>(i) * dt);
    if (t >= duration) break;
    const FileType type = pick_type(rng, p.filetype_mix);
    const auto type_idx = static_cast<std::size_t>(type);
    const double original = type_entropy(rng, type);
    const std::uint64_t size = type_size(rng, type);
    const double encrypted = clamp_entropy(rng.normal(p.entropy_mean, p.entropy_sd));
    const double mask_entropy = mask_rng.uniform();
    const double mask_rename = mask_rng.uniform();
    const double benign_redraw = clamp_entropy(original + mask_rng.normal(0.0, 0.05));

    const double fraction = std::min(1.0, sc.host_crypto_bytes_per_sec / (p.files_per_sec * static_cast<double>(size)));
    const double written =
        mask_entropy < p.obfuscation ? benign_redraw : clamp_entropy(fraction * encrypted + (1.0 - fraction) * original);

    const std::string ext(kFileTypeNames[type_idx]);
    const std::string path = dir + "/f" + std::to_string(i) + "." + ext;
    const std::size_t worker = fanout > 1 ? static_cast<std::size_t>(i) % fanout : 0;
    Emitter& enc = fanout > 1 ? workers[worker] : em;
    auto& r = enc.emit(t, EventKind::file_read, Truth::malicious);
    r.path = path;
    r.bytes = size;
    r.entropy = original;
    if (fanout > 1 && !worker_first[worker]) worker_first[worker] = r.ts;
    auto& w = enc.emit(t + 0.35 * dt, EventKind::file_write, Truth::malicious);
    w.path = path;
    w.bytes = size;
    w.entropy = written;
    if (!(mask_rename < p.obfuscation)) {
      auto& rn = enc.emit(t + 0.7 * dt, EventKind::file_rename, Truth::malicious);
      rn.path = path;
      rn.ext_before = ext;
      rn.ext_after = p.rename_to_ext;
    }
    last_t = t + dt;
  }

  if (p.exfil_bytes_per_sec > 0.0) {
    // One send per second alongside encryption. Masked sends are throttled
    // and go to an innocuous-looking peer.
    bool connected = false;
    for (double t = onset + 0.5; t < std::min(last_t, duration); t += 1.0) {
      const double jitter = exfil_rng.uniform(0.8, 1.2);
      const bool masked = exfil_rng.uniform() < p.obfuscation;
      const std::string dst = masked ? "cdn.example.org" : "203.0.113.7";
      if (!connected) {
        em.emit(t - 0.01, EventKind::net_connect, Truth::malicious).dst = dst;
        connected = true;
      }
      auto& s = em.emit(t, EventKind::net_send, Truth::malicious);
      s.dst = dst;
      s.bytes = static_cast<std::uint64_t>(p.exfil_bytes_per_sec * jitter / (masked ? 25.0 : 1.0));
    }
  }
  for (std::size_t k = 0; k < worker_first.size(); ++k) {
    if (worker_first[k]) outcome.workers.emplace_back(workers[k].entity(), *worker_first[k]);
  }
  return outcome;
}

}  // namespace detail

/// Generates the full labeled stream of a scenario. Every entity draws from
/// its own seeded random stream, so adding an entity leaves the others intact.
inline GeneratedStream generate(const Scenario& sc) {
  sc.validate();
  GeneratedStream g;
  std::vector<Event>& ev = g.events;
  auto rng_for = [&](const std::string& entity) { return detail::Rng(zsd::detail::derive_seed(sc.seed, entity)); };

  auto benign = [&](const char* archetype, int count, auto&& body) {
    for (int i = 0; i < count; ++i) {
      const std::string name = std::string(archetype) + "-" + std::to_string(i);
      auto rng = rng_for(name);
      detail::Emitter em(name, ev);
      body(em, rng, i, sc.duration_s);
      g.truth.add({name, Label::benign, archetype, "", std::nullopt, 0});
    }
  };
  benign("office", sc.benign.office, detail::gen_office);
  benign("build", sc.benign.build, detail::gen_build);
  benign("backup", sc.benign.backup, detail::gen_backup);

  for (std::size_t i = 0; i < sc.attacks.size(); ++i) {
    const auto& a = sc.attacks[i];
    const std::string name = "attack-" + a.profile.name + "-" + std::to_string(i);
    auto rng = rng_for(name);
    detail::Emitter em(name, ev);
    const auto outcome = detail::gen_attack(em, ev, rng, static_cast<int>(i), a, sc);
    const auto& first = outcome.first_ts;
    g.truth.add({name, first ? Label::malicious : Label::benign, "attack", a.profile.name, first, 0});
    for (const auto& [worker, ts] : outcome.workers) {
      g.truth.add({worker, Label::malicious, "attack", a.profile.name, ts, 0});
    }
  }

  const auto end_ts = detail::kBaseTs + std::llround(sc.duration_s * 1e6);
  std::erase_if(ev, [&](const Event& e) { return e.ts >= end_ts; });
  std::stable_sort(ev.begin(), ev.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
  for (auto& e : ev) {
    EntityTruth* t = g.truth.find(e.entity);
    e.truth = t->event_is_malicious(e.ts) ? Label::malicious : Label::benign;
    ++t->event_count;
  }
  return g;
}

inline void write_stream(const GeneratedStream& g, std::ostream& events_out, std::ostream& truth_out) {
  for (const auto& e : g.events) events_out << format_event_line(e) << '\n';
  truth_out << g.truth.to_json().dump(2) << '\n';
}

enum class SuiteId : std::uint8_t { s1, s2, s3, s4, s5 };

inline constexpr std::array<std::string_view, 5> kSuiteNames = {"s1", "s2", "s3", "s4", "s5"};

inline std::optional<SuiteId> parse_suite(std::string_view s) {
  for (std::size_t i = 0; i < kSuiteNames.size(); ++i) {
    if (kSuiteNames[i] == s) return static_cast<SuiteId>(i);
  }
  return std::nullopt;
}

struct SuitePoint {
  std::string name;          // manifest file stem
  std::string sweep_param;   // family | filetype | obfuscation | files_per_sec | load
  double sweep_value = 0.0;
  std::string family;
  Scenario scenario;
};

struct Suite {
  SuiteId id = SuiteId::s1;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<SuitePoint> points;
};

inline constexpr std::array<std::string_view, 4> kFamilies = {"lockbit", "conti", "revil", "blackmatter"};

namespace detail {

inline Scenario family_scenario(const FamilyProfile& prof, double duration, int attacks, double spacing,
                                BenignWorkers benign, std::int64_t max_files) {
  Scenario sc;
  sc.duration_s = duration;
  sc.benign = benign;
  for (int i = 0; i < attacks; ++i) sc.attacks.push_back({prof, 30.0 + spacing * i, max_files});
  return sc;
}

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace detail

/// The standard experiment suites. Scenario seeds are placeholders; each
/// point is run once per suite seed.
inline Suite experiment_suite(SuiteId id, const std::map<std::string, FamilyProfile>& presets = builtin_presets()) {
  Suite s;
  s.id = id;
  const BenignWorkers mixed{6, 2, 1};
  switch (id) {
    case SuiteId::s1:
      for (auto fam : kFamilies) {
        const auto& prof = presets.at(std::string(fam));
        s.points.push_back({std::string(fam), "family", 0.0, std::string(fam),
                            detail::family_scenario(prof, 600.0, 5, 90.0, mixed, 300)});
      }
      break;
    case SuiteId::s2:
      for (auto fam : kFamilies) {
        for (std::size_t t = 0; t < kFileTypeNames.size(); ++t) {
          FamilyProfile prof = presets.at(std::string(fam));
          prof.filetype_mix.fill(0.0);
          prof.filetype_mix[t] = 1.0;
          s.points.push_back({std::string(fam) + "_" + std::string(kFileTypeNames[t]), "filetype",
                              static_cast<double>(t), std::string(fam),
                              detail::family_scenario(prof, 300.0, 4, 60.0, mixed, 200)});
        }
      }
      break;
    case SuiteId::s3:
      for (auto fam : {"lockbit", "conti", "revil"}) {
        for (double o : {0.0, 0.25, 0.5, 0.75, 1.0}) {
          FamilyProfile prof = presets.at(fam);
          prof.obfuscation = o;
          s.points.push_back({std::string(fam) + "_o" + detail::format_value(o), "obfuscation", o, fam,
                              detail::family_scenario(prof, 300.0, 6, 40.0, mixed, 200)});
        }
      }
      break;
    case SuiteId::s4:
      for (auto fam : {"lockbit", "blackmatter"}) {
        for (double fps : {2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0}) {
          FamilyProfile prof = presets.at(fam);
          prof.files_per_sec = fps;
          s.points.push_back({std::string(fam) + "_fps" + detail::format_value(fps), "files_per_sec", fps, fam,
                              detail::family_scenario(prof, 300.0, 6, 40.0, mixed, 200)});
        }
      }
      break;
    case SuiteId::s5:
      for (int scale : {1, 2, 4, 8, 16}) {
        Scenario sc = detail::family_scenario(presets.at("lockbit"), 120.0, scale, 10.0,
                                              {6 * scale, 2 * scale, scale}, 300);
        s.points.push_back({"load_x" + std::to_string(scale), "load", static_cast<double>(scale), "lockbit",
                            std::move(sc)});
      }
      break;
  }
  return s;
}

/// Writes one directory per suite with a scenario manifest per sweep point.
inline std::vector<std::filesystem::path> make_paper_suite(const std::filesystem::path& out_dir,
                                                           const std::map<std::string, FamilyProfile>& presets =
                                                               builtin_presets()) {
  namespace fs = std::filesystem;
  std::vector<fs::path> written;
  std::error_code ec;
  for (std::size_t i = 0; i < kSuiteNames.size(); ++i) {
    const Suite suite = experiment_suite(static_cast<SuiteId>(i), presets);
    const fs::path dir = out_dir / std::string(kSuiteNames[i]);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& pt : suite.points) {
      const fs::path file = dir / (pt.name + ".json");
      std::ofstream out(file);
      nlohmann::json j = pt.scenario.to_json();
      j["sweep_param"] = pt.sweep_param;
      j["sweep_value"] = pt.sweep_value;
      j["seeds"] = suite.seeds;
      out << j.dump(2) << '\n';
      if (!out) throw IoError("cannot write " + file.string());
      written.push_back(file);
    }
  }
  return written;
}

}  // namespace zsd::sim
