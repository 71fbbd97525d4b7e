// zsd: simulate, train, detect, eval, bench and sweep from one binary.
// Exit codes: 0 ok, 1 usage error, 2 data or config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "zsd/zsd.hpp"

namespace fs = std::filesystem;

namespace {

enum class LogLevel { error = 0, warn, info, debug };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* v = std::getenv("ZSD_LOG");
    const std::string s = v ? v : "warn";
    if (s == "error") return LogLevel::error;
    if (s == "info") return LogLevel::info;
    if (s == "debug") return LogLevel::debug;
    return LogLevel::warn;
  }();
  return level;
}

void log(LogLevel lvl, const std::string& msg) {
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  if (lvl <= log_level()) std::cerr << "zsd[" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw zsd::IoError("cannot open " + path);
  return in;
}

/// "-" writes to stdout.
class Output {
 public:
  explicit Output(const std::string& path) : path_(path) {
    if (path == "-") return;
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
      std::error_code ec;
      fs::create_directories(parent, ec);
    }
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw zsd::IoError("cannot write " + path);
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  void close() {
    stream().flush();
    if (!stream()) throw zsd::IoError("failed writing " + path_);
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
};

void write_text(const std::string& path, const std::string& text) {
  Output out(path);
  out.stream() << text;
  out.close();
}

zsd::PipelineConfig load_config(const std::string& path) {
  if (path.empty()) return zsd::PipelineConfig{};
  auto in = open_in(path);
  return zsd::parse_config(in);
}

zsd::ScorerModel load_model_file(const std::string& path) {
  auto in = open_in(path);
  return zsd::load_model(in);
}

std::map<std::string, zsd::sim::FamilyProfile> load_presets_file(const std::string& path) {
  if (path.empty()) return zsd::sim::builtin_presets();
  auto in = open_in(path);
  return zsd::sim::load_presets(in);
}

std::vector<zsd::Verdict> read_verdicts(const std::string& path) {
  auto in = open_in(path);
  std::vector<zsd::Verdict> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (zsd::detail::trim(line).empty()) continue;
    out.push_back(zsd::parse_verdict_line(line, n));
  }
  return out;
}

std::string verdicts_text(const std::vector<zsd::Verdict>& verdicts) {
  std::string out;
  out.reserve(verdicts.size() * 120);
  for (const auto& v : verdicts) {
    out += zsd::format_verdict_line(v);
    out += '\n';
  }
  return out;
}

// --- subcommands ---

struct SimulateArgs {
  std::string scenario, out, truth_out, presets;
  std::uint64_t seed = 1;
};

void cmd_simulate(const SimulateArgs& a) {
  const auto presets = load_presets_file(a.presets);
  auto in = open_in(a.scenario);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw zsd::ConfigError("scenario", e.what());
  }
  auto sc = zsd::sim::Scenario::from_json(j, presets);
  sc.seed = a.seed;
  const auto g = zsd::sim::generate(sc);
  const std::string truth_path = a.truth_out.empty() ? a.out + ".truth.json" : a.truth_out;
  Output events(a.out), truth(truth_path);
  zsd::sim::write_stream(g, events.stream(), truth.stream());
  events.close();
  truth.close();
  log(LogLevel::info, std::to_string(g.events.size()) + " events, " + std::to_string(g.truth.entities().size()) +
                          " entities -> " + a.out);
}

struct TrainArgs {
  std::string data, config, out, loss_out;
  zsd::DetectorTraining opt;
};

void cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  a.opt.train.validate();
  zsd::EventStream stream(a.data, true);
  const auto events = stream.read_all();
  if (events.empty()) throw zsd::EmptyInput("no training events in " + a.data);
  const auto det = zsd::train_detector(events, cfg, a.opt);
  Output out(a.out);
  zsd::save_model(det.model, out.stream());
  out.close();
  if (!a.loss_out.empty()) {
    std::string csv = "epoch,mean_loss\n";
    for (std::size_t i = 0; i < det.loss_trace.size(); ++i) {
      csv += std::to_string(i) + ',' + zsd::detail::format_fixed(det.loss_trace[i], 6) + '\n';
    }
    write_text(a.loss_out, csv);
  }
  log(LogLevel::info, std::to_string(det.examples) + " examples (" + std::to_string(det.positives) +
                          " malicious), loss " + std::to_string(det.loss_trace.front()) + " -> " +
                          std::to_string(det.loss_trace.back()));
}

struct DetectArgs {
  std::string model, input = "-", out = "-", config, stats_out;
  std::int64_t workers = 0;  // 0 keeps the config value
  bool dump_features = false, dump_clusters = false, strict = false;
};

void cmd_detect(const DetectArgs& a) {
  auto cfg = load_config(a.config);
  if (a.workers > 0) cfg.workers = a.workers;
  zsd::validate_config(cfg);
  const auto model = load_model_file(a.model);
  zsd::EventStream stream(a.input, a.strict);
  const auto events = stream.read_all();
  if (stream.skipped_count() > 0) {
    log(LogLevel::warn, "skipped " + std::to_string(stream.skipped_count()) + " malformed lines");
  }
  if (stream.out_of_order_count() > 0) {
    log(LogLevel::warn, std::to_string(stream.out_of_order_count()) + " records arrived with decreasing ts");
  }
  zsd::PipelineOptions opt;
  opt.dump_features = a.dump_features;
  opt.dump_clusters = a.dump_clusters;
  const auto r = zsd::run(events, model, cfg, opt);
  if (a.dump_features) {
    write_text(a.out, zsd::features_csv(r.features));
  } else if (a.dump_clusters) {
    write_text(a.out, zsd::clusters_csv(r.clusters));
  } else {
    write_text(a.out, verdicts_text(r.verdicts));
  }
  if (!a.stats_out.empty()) {
    auto j = r.stats.to_json();
    j["skipped_lines"] = stream.skipped_count();
    j["out_of_order"] = stream.out_of_order_count();
    write_text(a.stats_out, j.dump(2) + "\n");
  }
  log(LogLevel::info, std::to_string(r.stats.events) + " events, " + std::to_string(r.stats.malicious) +
                          " malicious verdicts");
}

struct EvalArgs {
  std::string verdicts, truth, out = "-";
};

void cmd_eval(const EvalArgs& a) {
  const auto verdicts = read_verdicts(a.verdicts);
  auto in = open_in(a.truth);
  const auto truth = zsd::TruthIndex::load(in);
  const auto rep = zsd::score_run(verdicts, truth);
  write_text(a.out, rep.to_json().dump(2) + "\n");
}

struct BenchArgs {
  std::size_t events = 100000;
  std::int64_t workers = 1;
  std::uint64_t seed = 1;
  std::string model, config;
};

void cmd_bench(const BenchArgs& a) {
  auto cfg = load_config(a.config);
  cfg.workers = a.workers;
  zsd::validate_config(cfg);
  zsd::ScorerModel model;
  if (a.model.empty()) {
    log(LogLevel::info, "no --model given, training the default detector");
    model = zsd::train_default_detector(cfg).model;
  } else {
    model = load_model_file(a.model);
  }
  const auto events = zsd::bench_stream(a.events, a.seed);
  const auto r = zsd::run(events, model, cfg);
  std::cout << r.stats.to_json().dump(2) << '\n';
}

struct SweepArgs {
  std::string suite, out_dir, config, presets;
};

void cmd_sweep(const SweepArgs& a) {
  const auto id = zsd::sim::parse_suite(a.suite);
  if (!id) throw zsd::ConfigError("suite", "expected s1..s5");
  const auto cfg = load_config(a.config);
  const auto presets = load_presets_file(a.presets);
  const fs::path dir(a.out_dir);

  log(LogLevel::info, "training on the held-out scenario");
  const auto det = zsd::train_default_detector(cfg, {}, presets);
  {
    Output m((dir / "model.txt").string());
    zsd::save_model(det.model, m.stream());
    m.close();
  }
  const auto suite = zsd::sim::experiment_suite(*id, presets);
  std::vector<zsd::SweepRow> rows;
  for (const auto& pt : suite.points) {
    zsd::SweepRow row{pt.sweep_param, pt.sweep_value, pt.family, {}};
    for (auto seed : suite.seeds) row.report += zsd::evaluate_scenario(pt.scenario, seed, det.model, cfg);
    log(LogLevel::info, pt.name + ": detection " +
                            std::to_string(row.report.by_family[pt.family].detection_rate()));
    rows.push_back(std::move(row));
  }
  const auto summary = zsd::sweep_report(rows);
  const std::string stem = "sweep_" + a.suite;
  write_text((dir / (stem + ".csv")).string(), summary.csv);
  auto j = summary.to_json();
  j["suite"] = a.suite;
  j["seeds"] = suite.seeds;
  write_text((dir / (stem + "_trend.json")).string(), j.dump(2) + "\n");
  for (const auto& t : summary.trends) std::cout << a.suite << ' ' << t.family << " trend " << t.sign << '\n';
}

struct MakeSuiteArgs {
  std::string out_dir, presets;
};

void cmd_make_suite(const MakeSuiteArgs& a) {
  const auto files = zsd::sim::make_paper_suite(a.out_dir, load_presets_file(a.presets));
  log(LogLevel::info, "wrote " + std::to_string(files.size()) + " scenario manifests");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming ransomware behaviour detector"};
  app.require_subcommand(1, 1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Generate a labeled event stream from a scenario manifest");
  s->add_option("--scenario", sim.scenario, "Scenario manifest (JSON)")->required();
  s->add_option("--seed", sim.seed, "Generator seed");
  s->add_option("-o,--out", sim.out, "Event stream (JSON Lines)")->required();
  s->add_option("--truth-out", sim.truth_out, "Truth sidecar (default: <out>.truth.json)");
  s->add_option("--presets", sim.presets, "Family presets (JSON)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the sequence scorer on a labeled stream");
  t->add_option("--data", tr.data, "Labeled event stream")->required();
  t->add_option("--config", tr.config, "Pipeline config (key = value)");
  t->add_option("-o,--out", tr.out, "Model file")->required();
  t->add_option("--epochs", tr.opt.train.epochs);
  t->add_option("--lr", tr.opt.train.lr);
  t->add_option("--hidden", tr.opt.train.hidden);
  t->add_option("--seed", tr.opt.train.seed);
  t->add_option("--background-rate", tr.opt.sampling.background_rate);
  t->add_option("--loss-out", tr.loss_out, "Per-epoch mean loss (CSV)");

  DetectArgs de;
  auto* d = app.add_subcommand("detect", "Run the detector over an event stream");
  d->add_option("--model", de.model, "Model file")->required();
  d->add_option("--input", de.input, "Event stream, - for stdin");
  d->add_option("-o,--out", de.out, "Verdicts (JSON Lines), - for stdout");
  d->add_option("--config", de.config, "Pipeline config (key = value)");
  d->add_option("--workers", de.workers, "Worker shards (overrides config)")->check(CLI::PositiveNumber);
  d->add_option("--stats-out", de.stats_out, "Run statistics (JSON)");
  auto* df = d->add_flag("--dump-features", de.dump_features, "Write the feature CSV instead of verdicts");
  auto* dc = d->add_flag("--dump-clusters", de.dump_clusters, "Write the cluster CSV instead of verdicts");
  df->excludes(dc);
  d->add_flag("--strict", de.strict, "Fail on the first malformed record");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score verdicts against a truth sidecar");
  e->add_option("--verdicts", ev.verdicts)->required();
  e->add_option("--truth", ev.truth)->required();
  e->add_option("-o,--out", ev.out, "Report (JSON)");

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "Throughput run on synthetic load; prints run statistics");
  b->add_option("--events", be.events)->check(CLI::PositiveNumber);
  b->add_option("--workers", be.workers)->check(CLI::PositiveNumber);
  b->add_option("--seed", be.seed);
  b->add_option("--model", be.model, "Model file (default: train one)");
  b->add_option("--config", be.config);

  SweepArgs sw;
  auto* w = app.add_subcommand("sweep", "Train once, then run and score one experiment suite");
  w->add_option("--suite", sw.suite)->required()->check(CLI::IsMember({"s1", "s2", "s3", "s4", "s5"}));
  w->add_option("--out-dir", sw.out_dir)->required();
  w->add_option("--config", sw.config);
  w->add_option("--presets", sw.presets);

  MakeSuiteArgs ms;
  auto* m = app.add_subcommand("make-suite", "Write the scenario manifests of every suite");
  m->add_option("--out-dir", ms.out_dir)->required();
  m->add_option("--presets", ms.presets);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::cerr << err.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (*s) cmd_simulate(sim);
    else if (*t) cmd_train(tr);
    else if (*d) cmd_detect(de);
    else if (*e) cmd_eval(ev);
    else if (*b) cmd_bench(be);
    else if (*w) cmd_sweep(sw);
    else if (*m) cmd_make_suite(ms);
  } catch (const zsd::Error& err) {
    log(LogLevel::error, err.what());
    return 2;
  }
  return 0;
}
