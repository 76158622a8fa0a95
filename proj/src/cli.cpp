#include "triage/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "triage/classifier.hpp"
#include "triage/dataset.hpp"
#include "triage/error.hpp"

namespace triage::cli {

namespace fs = std::filesystem;

const char* to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::scan: return "scan";
    case Mode::generate: return "generate";
    case Mode::detect: return "detect";
    case Mode::matrix: return "matrix";
    case Mode::sweep: return "sweep";
    case Mode::replay: return "replay";
  }
  return "unknown";
}

BackendConfig BackendConfig::parse(const std::string& descriptor) {
  const auto colon = descriptor.find(':');
  if (colon == std::string::npos) {
    throw ConfigError(fmt::format(
        "backend '{}' must be builtin:PATH, cache:PATH or external:COMMAND", descriptor));
  }
  BackendConfig b;
  b.kind = descriptor.substr(0, colon);
  const std::string rest = descriptor.substr(colon + 1);
  if (b.kind == "builtin" || b.kind == "cache") {
    b.path = rest;
  } else if (b.kind == "external") {
    std::istringstream words(rest);
    for (std::string w; words >> w;) b.command.push_back(w);
  } else {
    throw ConfigError(fmt::format("unknown backend kind '{}'", b.kind));
  }
  return b;
}

void RunConfig::validate(Mode mode) const {
  if (dataset.empty()) throw ConfigError("no dataset manifest given (dataset / --dataset)");
  if (!fs::exists(dataset)) {
    throw ConfigError(fmt::format("dataset manifest {} does not exist", dataset.string()));
  }
  if (splits.empty()) throw ConfigError("no dataset splits selected");
  if (backend.kind == "builtin" || backend.kind == "cache") {
    if (!fs::exists(backend.path)) {
      throw ConfigError(fmt::format("backend file {} does not exist", backend.path.string()));
    }
  } else if (backend.kind == "external") {
    if (backend.command.empty()) throw ConfigError("external backend needs a command");
    if (!(backend.timeout_seconds > 0.0)) throw ConfigError("backend timeout must be positive");
  } else if (backend.kind.empty()) {
    throw ConfigError("no classifier backend given (backend / --backend)");
  } else {
    throw ConfigError(fmt::format("unknown backend kind '{}'", backend.kind));
  }
  if (workers == 0) throw ConfigError("workers must be at least 1");
  if (mode != Mode::replay && out.empty()) throw ConfigError("no output directory (out / --out)");
  policy.validate();

  auto check_tau = [](double tau, const char* name) {
    if (!std::isfinite(tau) || tau < 0.0) {
      throw ValidationError(fmt::format("{} must be a finite value >= 0, got {}", name, tau));
    }
  };
  check_tau(thresholds.tau_low, "tau_low");
  check_tau(thresholds.tau_high, "tau_high");
  switch (mode) {
    case Mode::matrix:
      thresholds.validate();
      if (slices.empty()) throw ConfigError("matrix mode needs at least one slice");
      for (const auto& s : slices) EntropySlice::parse(s);
      break;
    case Mode::sweep:
      if (taus.empty()) throw ConfigError("sweep mode needs a list of thresholds (taus / --taus)");
      for (std::size_t i = 0; i < taus.size(); ++i) {
        check_tau(taus[i], "sweep threshold");
        if (i > 0 && !(taus[i] > taus[i - 1])) {
          throw ValidationError(fmt::format(
              "sweep thresholds must be strictly increasing ({} after {})", taus[i], taus[i - 1]));
        }
      }
      break;
    default: break;
  }
}

Json to_json(const RunConfig& c) {
  Json backend{{"kind", c.backend.kind}};
  if (c.backend.kind == "external") {
    backend["command"] = c.backend.command;
    backend["timeout_seconds"] = c.backend.timeout_seconds;
  } else {
    backend["path"] = c.backend.path.string();
  }
  return Json{{"dataset", c.dataset.string()},
              {"splits", c.splits},
              {"backend", backend},
              {"tau_low", c.thresholds.tau_low},
              {"tau_high", c.thresholds.tau_high},
              {"taus", c.taus},
              {"slices", c.slices},
              {"policy", to_json(c.policy)},
              {"workers", c.workers},
              {"out", c.out.string()},
              {"error_previews", c.error_previews},
              {"timestamp", c.timestamp}};
}

namespace {

fs::path resolve_path(const fs::path& base, const fs::path& p) {
  if (p.empty()) return p;
  return (p.is_absolute() ? p : fs::absolute(base / p)).lexically_normal();
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("dataset")) c.dataset = resolve_path(base, j["dataset"].get<std::string>());
    if (j.contains("splits")) c.splits = j["splits"].get<std::vector<std::string>>();
    if (j.contains("backend")) {
      const Json& b = j["backend"];
      if (b.is_string()) {
        c.backend = BackendConfig::parse(b.get<std::string>());
      } else {
        c.backend.kind = b.at("kind").get<std::string>();
        if (b.contains("path")) c.backend.path = b["path"].get<std::string>();
        if (b.contains("command")) c.backend.command = b["command"].get<std::vector<std::string>>();
        if (b.contains("timeout_seconds")) c.backend.timeout_seconds = b["timeout_seconds"].get<double>();
      }
      c.backend.path = resolve_path(base, c.backend.path);
    }
    if (j.contains("tau_low")) c.thresholds.tau_low = j["tau_low"].get<double>();
    if (j.contains("tau_high")) c.thresholds.tau_high = j["tau_high"].get<double>();
    if (j.contains("taus")) c.taus = j["taus"].get<std::vector<double>>();
    if (j.contains("slices")) c.slices = j["slices"].get<std::vector<std::string>>();
    if (j.contains("policy")) c.policy = transform_policy_from_json(j["policy"]);
    if (j.contains("workers")) c.workers = j["workers"].get<std::size_t>();
    if (j.contains("out")) c.out = resolve_path(base, j["out"].get<std::string>());
    if (j.contains("error_previews")) c.error_previews = j["error_previews"].get<std::size_t>();
    if (j.contains("timestamp")) c.timestamp = j["timestamp"].get<std::string>();
  } catch (const Json::exception& e) {
    throw ConfigError(fmt::format("bad run config: {}", e.what()));
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config {}", path.string()));
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(fmt::format("{} is not valid JSON", path.string()));
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config ? load_run_config(*o.config) : RunConfig{};
  const fs::path cwd = fs::current_path();
  if (o.dataset) c.dataset = resolve_path(cwd, *o.dataset);
  if (o.splits) c.splits = *o.splits;
  if (o.tau_low) c.thresholds.tau_low = *o.tau_low;
  if (o.tau_high) c.thresholds.tau_high = *o.tau_high;
  if (o.taus) c.taus = *o.taus;
  if (o.slices) c.slices = *o.slices;
  if (o.seed) c.policy.seed = *o.seed;
  if (o.transforms) {
    c.policy.enabled.clear();
    for (const auto& name : *o.transforms) {
      const auto kind = parse_transform_kind(name);
      if (!kind) throw ConfigError(fmt::format("unknown transform kind '{}'", name));
      c.policy.enabled.push_back(*kind);
    }
  }
  if (o.backend) {
    const double timeout = c.backend.timeout_seconds;
    c.backend = BackendConfig::parse(*o.backend);
    c.backend.timeout_seconds = timeout;
    c.backend.path = resolve_path(cwd, c.backend.path);
  }
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = resolve_path(cwd, *o.out);
  return c;
}

// -- run pipeline ---------------------------------------------------------------

namespace {

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, int code, const std::string& message)
      : std::runtime_error(message), stage_(std::move(stage)), code_(code) {}
  const std::string& stage() const noexcept { return stage_; }
  int code() const noexcept { return code_; }

 private:
  std::string stage_;
  int code_;
};

// Runs fn, translating library exceptions into a stage-tagged exit code.
template <class Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const BackendError& e) {
    throw StageError(name, kExitBackend, fmt::format("{}: {}", to_string(e.failure()), e.what()));
  } catch (const ConfigError& e) {
    throw StageError(name, kExitConfig, e.what());
  } catch (const ParseError& e) {
    throw StageError(name, kExitConfig, e.what());
  } catch (const ValidationError& e) {
    throw StageError(name, kExitConfig, e.what());
  } catch (const std::exception& e) {
    throw StageError(name, kExitBackend, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(fmt::format("cannot write {}", path.string()));
}

struct Loaded {
  DatasetManifest manifest;
  std::vector<Sample> samples;
  std::unique_ptr<Classifier> classifier;
  std::vector<PredictionRecord> records;
};

std::unique_ptr<Classifier> make_classifier(const RunConfig& c, const DatasetManifest& manifest,
                                            const ImageShape& shape) {
  if (c.backend.kind == "builtin") {
    return std::make_unique<BuiltinClassifier>(load_builtin_model(c.backend.path), shape,
                                               c.backend.path.filename().string());
  }
  if (c.backend.kind == "cache") {
    return std::make_unique<CacheClassifier>(read_prediction_cache(c.backend.path),
                                             c.backend.path.filename().string());
  }
  ExternalProcessOptions options;
  options.command = c.backend.command;
  options.class_count = manifest.class_count;
  options.input_shape = shape;
  options.batch_timeout = std::chrono::milliseconds(
      static_cast<long long>(std::llround(c.backend.timeout_seconds * 1000.0)));
  return std::make_unique<ExternalProcessClassifier>(std::move(options));
}

Loaded load_everything(const RunConfig& c) {
  Loaded l;
  stage("dataset", [&] {
    l.manifest = load_manifest(c.dataset);
    for (const auto& split : c.splits) {
      auto part = load_split(l.manifest, split);
      std::move(part.begin(), part.end(), std::back_inserter(l.samples));
    }
    for (const auto& s : l.samples) {
      if (s.image.shape() != l.samples.front().image.shape()) {
        throw ParseError(fmt::format("non-uniform shape: {} is {}, {} is {}", s.id,
                                     triage::to_string(s.image.shape()), l.samples.front().id,
                                     triage::to_string(l.samples.front().image.shape())));
      }
    }
    return 0;
  });
  const ImageShape shape = l.samples.empty() ? ImageShape{1, 1, 1} : l.samples.front().image.shape();
  stage("backend", [&] {
    l.classifier = make_classifier(c, l.manifest, shape);
    if (l.classifier->class_count() != l.manifest.class_count) {
      throw BackendError(BackendFailure::shape_mismatch,
                         fmt::format("classifier has {} classes, dataset '{}' has {}",
                                     l.classifier->class_count(), l.manifest.name,
                                     l.manifest.class_count));
    }
    return 0;
  });
  stage("predict", [&] {
    std::vector<Query> queries;
    queries.reserve(l.samples.size());
    for (const auto& s : l.samples) queries.push_back(Query{s.id, &s.image});
    auto predictions = predict_all(*l.classifier, queries, c.workers);
    std::vector<std::string> ids;
    for (const auto& s : l.samples) ids.push_back(s.id);
    l.records = batch_records(ids, predictions);
    return 0;
  });
  return l;
}

std::size_t count_correct(const Loaded& l) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < l.records.size(); ++i) {
    if (l.records[i].predicted_label == l.samples[i].label) ++correct;
  }
  return correct;
}

Json base_summary(const RunConfig& c, Mode mode, const Loaded& l) {
  const std::size_t correct = count_correct(l);
  return Json{{"mode", to_string(mode)},
              {"dataset", l.manifest.name},
              {"samples", l.records.size()},
              {"correct", correct},
              {"accuracy", l.records.empty() ? Json(nullptr)
                                             : Json(static_cast<double>(correct) /
                                                    static_cast<double>(l.records.size()))},
              {"classifier", l.classifier->descriptor()},
              {"seed", c.policy.seed}};
}

Json optional_ratio(const std::optional<double>& r) { return r ? Json(*r) : Json(nullptr); }

int run_mode(Mode mode, const RunConfig& c, const std::optional<fs::path>& replay_file,
             std::ostream& out) {
  stage("config", [&] {
    c.validate(mode);
    return 0;
  });
  if (mode != Mode::replay) {
    stage("output", [&] {
      fs::create_directories(c.out);
      write_text(c.out / "config.json", to_json(c).dump(2) + "\n");
      return 0;
    });
  }
  Loaded l = load_everything(c);
  const SampleIndex index = stage("dataset", [&] { return SampleIndex(l.samples); });
  if (mode != Mode::replay) {
    stage("output", [&] {
      write_prediction_csv(c.out / "predictions.csv", l.records);
      return 0;
    });
  }
  Json summary = base_summary(c, mode, l);

  switch (mode) {
    case Mode::scan: {
      stage("output", [&] {
        std::ofstream csv(c.out / "records.csv");
        csv << "sample_id,label,predicted,shannon\n";
        for (std::size_t i = 0; i < l.records.size(); ++i) {
          csv << fmt::format("{},{},{},{}\n", l.records[i].sample_id, l.samples[i].label,
                             l.records[i].predicted_label, l.records[i].shannon.value);
        }
        return 0;
      });
      break;
    }
    case Mode::generate: {
      const auto candidates = stage("select", [&] {
        return build_candidates(l.records, index.labels(), c.thresholds.tau_high);
      });
      const auto errors = stage("generate", [&] {
        return generate(candidates, c.policy, *l.classifier, index, c.workers);
      });
      summary["tau_high"] = c.thresholds.tau_high;
      summary["candidates"] = candidates.members.size();
      summary["attempts"] = errors.attempts;
      summary["errors"] = errors.entries.size();
      summary["ratio"] = optional_ratio(errors.ratio());
      stage("output", [&] {
        std::ofstream jsonl(c.out / "errors.jsonl", std::ios::binary);
        write_jsonl(jsonl, errors.entries);
        std::ofstream csv(c.out / "errors.csv", std::ios::binary);
        write_error_csv(csv, errors.entries);
        return 0;
      });
      out << fmt::format("generate: {} candidates, {} errors\n", candidates.members.size(),
                         errors.entries.size());
      break;
    }
    case Mode::detect: {
      const auto flags =
          stage("detect", [&] { return detect(l.records, index.labels(), c.thresholds.tau_low); });
      summary["tau_low"] = c.thresholds.tau_low;
      summary["flags"] = flags.entries.size();
      stage("output", [&] {
        std::ofstream jsonl(c.out / "flags.jsonl", std::ios::binary);
        write_jsonl(jsonl, flags.entries);
        std::ofstream csv(c.out / "flags.csv", std::ios::binary);
        write_flag_csv(csv, flags.entries);
        TriageReport report;
        report.dataset = l.manifest.name;
        report.sample_count = l.records.size();
        report.correct_count = count_correct(l);
        report.metadata.classifier = l.classifier->descriptor();
        report.metadata.timestamp = c.timestamp;
        attach_flags(report, flags, index);
        write_text(c.out / "gallery.html", render(report, RenderFormat::html_gallery));
        return 0;
      });
      out << fmt::format("detect: {} flagged\n", flags.entries.size());
      break;
    }
    case Mode::matrix: {
      std::vector<EntropySlice> slices;
      for (const auto& s : c.slices) slices.push_back(EntropySlice::parse(s));
      auto report = stage("matrix", [&] {
        return build_matrix_report(l.manifest.name, l.records, index, slices, *l.classifier,
                                   c.policy, c.workers);
      });
      const auto flags =
          stage("detect", [&] { return detect(l.records, index.labels(), c.thresholds.tau_low); });
      report.metadata.thresholds = {{"tau_low", c.thresholds.tau_low},
                                    {"tau_high", c.thresholds.tau_high}};
      report.metadata.timestamp = c.timestamp;
      stage("output", [&] {
        attach_flags(report, flags, index);
        write_text(c.out / "report.json", render(report, RenderFormat::json));
        write_text(c.out / "report.md", render(report, RenderFormat::markdown));
        write_text(c.out / "gallery.html", render(report, RenderFormat::html_gallery));
        return 0;
      });
      out << render(report, RenderFormat::markdown);
      break;
    }
    case Mode::sweep: {
      const auto points = stage("sweep", [&] {
        return threshold_sweep(l.records, index, c.taus, c.policy, *l.classifier, c.workers);
      });
      Json series = Json::array();
      stage("output", [&] {
        std::ofstream csv(c.out / "sweep.csv", std::ios::binary);
        csv << "tau,attempts,errors,ratio\n";
        for (const auto& p : points) {
          csv << fmt::format("{},{},{},{}\n", p.tau, p.attempts, p.errors,
                             p.ratio ? fmt::format("{}", *p.ratio) : std::string());
          series.push_back({{"tau", p.tau},
                            {"attempts", p.attempts},
                            {"errors", p.errors},
                            {"ratio", optional_ratio(p.ratio)}});
        }
        return 0;
      });
      summary["sweep"] = series;
      for (const auto& p : points) {
        out << fmt::format("tau {}: {}/{}\n", p.tau, p.errors, p.attempts);
      }
      break;
    }
    case Mode::replay: {
      const auto entries = stage("replay", [&] {
        std::ifstream in(*replay_file);
        if (!in) throw ConfigError(fmt::format("cannot open {}", replay_file->string()));
        return read_error_jsonl(in);
      });
      std::vector<TransformTask> tasks;
      for (const auto& e : entries) tasks.push_back(TransformTask{e.sample_id, e.transform});
      const auto predicted = stage("replay", [&] {
        return predict_transformed(tasks, *l.classifier, index, c.workers);
      });
      std::size_t reproduced = 0;
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const bool ok = predicted[i] != index.at(e.sample_id).label &&
                        predicted[i] == e.transformed_label;
        if (ok) {
          ++reproduced;
        } else {
          out << fmt::format("not reproduced: {} ({}) predicted {}, recorded {}\n", e.sample_id,
                             triage::to_string(e.transform.kind()), predicted[i],
                             e.transformed_label);
        }
      }
      out << fmt::format("replay: {}/{} mismatches reproduced\n", reproduced, entries.size());
      return reproduced == entries.size() ? kExitOk : kExitBackend;
    }
  }
  stage("output", [&] {
    write_text(c.out / "summary.json", summary.dump(2) + "\n");
    return 0;
  });
  return kExitOk;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Entropy-guided metamorphic test generation and label-noise triage"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, dataset, splits, transforms, backend, out_dir, taus, slices, replay_path;
  double tau_low = 0, tau_high = 0;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  const std::vector<std::pair<Mode, const char*>> modes{
      {Mode::scan, "Compute predictions and Shannon indices only"},
      {Mode::generate, "Generate metamorphic tests from high-entropy inputs"},
      {Mode::detect, "Flag confident mispredictions as likely low-quality data"},
      {Mode::matrix, "Error-ratio table: every transform on every entropy slice"},
      {Mode::sweep, "Error ratio of generate over a list of thresholds"},
      {Mode::replay, "Re-run recorded errors and check they still reproduce"},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [mode, help] : modes) {
    CLI::App* sub = app.add_subcommand(to_string(mode), help);
    sub->add_option("--config", config, "Run config (JSON)");
    sub->add_option("--dataset", dataset, "Dataset manifest (JSON)");
    sub->add_option("--splits", splits, "Comma-separated split names");
    sub->add_option("--tau-low", tau_low, "Entropy threshold for detect");
    sub->add_option("--tau-high", tau_high, "Entropy threshold for generate");
    sub->add_option("--taus", taus, "Comma-separated sweep thresholds");
    sub->add_option("--slices", slices, "Comma-separated matrix slices, e.g. \"<0.001,>0.4\"");
    sub->add_option("--seed", seed, "Transform draw seed");
    sub->add_option("--transforms", transforms, "Comma-separated transform kinds");
    sub->add_option("--backend", backend, "builtin:PATH, cache:PATH or external:COMMAND");
    sub->add_option("--workers", workers, "Worker threads");
    sub->add_option("--out", out_dir, "Output directory");
    if (mode == Mode::replay) sub->add_option("errors", replay_path, "errors.jsonl")->required();
    subs.push_back(sub);
  }

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
  }

  std::size_t picked = 0;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) picked = i;
  }
  const Mode mode = modes[picked].first;
  const CLI::App* sub = subs[picked];
  auto given = [&](const char* name) { return sub->get_option(name)->count() > 0; };

  if (given("--config")) o.config = config;
  if (given("--dataset")) o.dataset = dataset;
  if (given("--splits")) o.splits = split_list(splits);
  if (given("--tau-low")) o.tau_low = tau_low;
  if (given("--tau-high")) o.tau_high = tau_high;
  if (given("--seed")) o.seed = seed;
  if (given("--transforms")) o.transforms = split_list(transforms);
  if (given("--backend")) o.backend = backend;
  if (given("--workers")) o.workers = workers;
  if (given("--out")) o.out = out_dir;
  if (given("--slices")) o.slices = split_list(slices);

  try {
    if (given("--taus")) {
      std::vector<double> values;
      for (const auto& t : split_list(taus)) {
        try {
          values.push_back(std::stod(t));
        } catch (const std::exception&) {
          throw StageError("arguments", kExitConfig, fmt::format("bad threshold '{}'", t));
        }
      }
      o.taus = values;
    }
    const RunConfig c = stage("config", [&] { return resolve_config(o); });
    std::optional<fs::path> replay;
    if (mode == Mode::replay) replay = fs::path(replay_path);
    return run_mode(mode, c, replay, out);
  } catch (const StageError& e) {
    err << "error [" << e.stage() << "]: " << e.what() << "\n";
    return e.code();
  }
}

}  // namespace triage::cli
