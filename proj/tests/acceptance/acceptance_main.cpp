// Acceptance criteria 1-8. Prints one [PASS]/[FAIL] line per criterion and
// exits nonzero if any failed.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "reference.hpp"
#include "trainer.hpp"
#include "triage/cli.hpp"
#include "triage/dataset.hpp"
#include "triage/error.hpp"
#include "triage/selection.hpp"
#include "triage/transforms.hpp"

namespace fs = std::filesystem;
using namespace triage;

namespace {

// Collects failed checks for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& line) { notes_.push_back(line); }
  bool ok() const { return failures_.empty(); }
  const std::vector<std::string>& failures() const { return failures_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

int cli_run(std::vector<std::string> args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0 && !err.str().empty()) std::cerr << err.str();
  return code;
}

template <class E>
bool throws(const std::function<void()>& fn, const std::string& needle = {}) {
  try {
    fn();
  } catch (const E& e) {
    return needle.empty() || std::string(e.what()).find(needle) != std::string::npos;
  } catch (...) {
    return false;
  }
  return false;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// -- 1 -----------------------------------------------------------------------

void entropy_ground_truth(Check& c) {
  struct Case {
    std::vector<double> probs;
    double expected, tol;
  };
  for (const Case& k : {Case{{0.033, 0.033, 0.9, 0.034}, 0.44, 0.01},
                        Case{{0.25, 0.2, 0.3, 0.25}, 1.38, 0.01},
                        Case{{0.0033, 0.0033, 0.99, 0.0034}, 0.066, 0.005}}) {
    const double h = shannon_index(k.probs).value;
    c.note(fmt::format("H = {:.4f} (expected {} +/- {})", h, k.expected, k.tol));
    c.expect(std::abs(h - k.expected) <= k.tol, fmt::format("H = {} vs {}", h, k.expected));
  }
}

// -- 2 -----------------------------------------------------------------------

void entropy_properties(Check& c) {
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + rng() % 20;
    auto p = testing::random_distribution(rng, n);
    const double h = shannon_index(p).value;
    c.expect(h >= 0.0 && h <= std::log(double(n)), fmt::format("bounds violated: {}", h));
    auto q = p;
    std::shuffle(q.begin(), q.end(), rng);
    c.expect(shannon_index(q).value == h, "permutation changed the value");
    worst = std::max(worst, std::abs(h - reference::entropy_50_digits(p)));
  }
  c.note(fmt::format("max deviation from 50-digit reference: {:.2e}", worst));
  c.expect(worst <= 1e-12, fmt::format("reference deviation {}", worst));
}

// -- 3 -----------------------------------------------------------------------

void algorithm_equivalence(Check& c) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> tau(0.0, 2.0);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 1 + rng() % 100;
    const std::size_t classes = 2 + rng() % 9;
    std::vector<reference::LabeledPrediction> raw;
    std::vector<PredictionRecord> records;
    LabelMap labels;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = fmt::format("fz{}/{}", round, i);
      auto probs = testing::random_distribution(rng, classes, 0.4);
      const ClassIndex y = rng() % 3 == 0 ? rng() % classes : argmax_label(PredictionVector(probs));
      raw.push_back({id, probs, y});
      records.push_back(make_record(id, PredictionVector(probs)));
      labels[id] = y;
    }
    const double t = tau(rng);
    auto want_g = reference::brute_force_candidates(raw, t);
    auto want_f = reference::brute_force_flags(raw, t);
    std::sort(want_g.begin(), want_g.end());
    std::sort(want_f.begin(), want_f.end());
    std::vector<std::string> got_g, got_f;
    for (const auto& m : build_candidates(records, labels, t).members) got_g.push_back(m.sample_id);
    for (const auto& f : detect(records, labels, t).entries) got_f.push_back(f.sample_id);
    c.expect(got_g == want_g, fmt::format("round {}: candidate set differs", round));
    c.expect(got_f == want_f, fmt::format("round {}: flag set differs", round));
  }
}

// -- 4 -----------------------------------------------------------------------

void transform_correctness(Check& c) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 5; ++i) {
    const auto image = testing::random_image(rng, {28, 28, std::size_t(1 + 2 * (i % 2))});
    for (TransformKind kind : kAllTransformKinds) {
      c.expect(apply_transform(image, TransformSpec::identity(kind)) == image,
               fmt::format("identity {} not bit-exact", to_string(kind)));
    }
  }
  const ImageTensor square({2, 2, 1}, {0.1, 0.2, 0.3, 0.4});
  c.expect(apply_transform(square, TransformSpec(Rotate2d{90})) ==
               ImageTensor({2, 2, 1}, {0.2, 0.4, 0.1, 0.3}),
           "90 degree rotation is not the analytic permutation");

  double worst = 0.0;
  std::uniform_real_distribution<double> angle(-180.0, 180.0);
  for (int i = 0; i < 20; ++i) {
    const auto image = testing::random_image(rng, {28, 28, 1});
    const double deg = i == 0 ? 7.3 : angle(rng);
    const auto got = apply_transform(image, TransformSpec(Rotate2d{deg}));
    const auto want = reference::naive_rotate(image, deg);
    for (std::size_t k = 0; k < got.pixels().size(); ++k) {
      worst = std::max(worst, std::abs(got.pixels()[k] - want.pixels()[k]));
    }
  }
  c.note(fmt::format("max deviation from naive rotation: {:.2e}", worst));
  c.expect(worst <= 1e-6, fmt::format("rotation deviation {}", worst));

  TransformPolicy wide;
  wide.rotate_degrees = {-180, 180};
  wide.affine_linear = {-0.5, 0.5};
  wide.perspective_fraction = {-0.25, 0.25};
  bool in_hull = true;
  for (std::uint64_t i = 0; i < 400; ++i) {
    const auto image = testing::random_image(rng, {16, 16, 1});
    for (double v : apply_transform(image, choice(wide, i, image.shape())).pixels()) {
      in_hull = in_hull && v >= 0.0 && v <= 1.0;
    }
  }
  c.expect(in_hull, "output outside [0,1]");
}

// -- 5 -----------------------------------------------------------------------

std::optional<double> ratio_of(const Json& cells, const std::string& slice, const std::string& kind,
                               Check& c) {
  for (const auto& cell : cells) {
    if (cell["slice"] == slice && cell["transform"] == kind) {
      c.note(fmt::format("{:<12} {:<12} {}/{}", slice, kind, cell["errors"].get<int>(),
                         cell["attempts"].get<int>()));
      if (cell["ratio"].is_null()) return std::nullopt;
      return cell["ratio"].get<double>();
    }
  }
  return std::nullopt;
}

void trend_reproduction(Check& c, const fs::path& work) {
  const fs::path manifest_path = fs::path(TRIAGE_TEST_DATA) / "digits/manifest.json";
  const auto manifest = load_manifest(manifest_path);
  const auto train = load_split(manifest, "train");
  const auto test = load_split(manifest, "test");
  const auto model = testing::train_mlp(train, manifest.class_count);
  const double acc = testing::accuracy(model, test);
  c.note(fmt::format("digits test accuracy: {:.4f} ({} train / {} test)", acc, train.size(),
                     test.size()));
  c.expect(acc >= 0.95, fmt::format("accuracy {} < 0.95", acc));
  save_builtin_model(model, work / "digits.cmlp");

  const std::string backend = "builtin:" + (work / "digits.cmlp").string();
  const int code = cli_run({"matrix", "--dataset", manifest_path.string(), "--backend", backend,
                            "--slices", "<0.001,>0.4", "--seed", "0", "--workers", "4", "--out",
                            (work / "matrix").string()});
  c.expect(code == 0, fmt::format("matrix exited {}", code));
  if (code != 0) return;
  std::ifstream in(work / "matrix/report.json");
  const Json report = Json::parse(in);
  for (TransformKind kind : kAllTransformKinds) {
    const auto low = ratio_of(report["cells"], "s_x < 0.001", to_string(kind), c);
    const auto high = ratio_of(report["cells"], "s_x > 0.4", to_string(kind), c);
    c.expect(low && high, fmt::format("{}: empty slice", to_string(kind)));
    if (low && high) {
      c.expect(*high > *low,
               fmt::format("{}: high slice {} <= low slice {}", to_string(kind), *high, *low));
    }
  }

  const int sweep = cli_run({"sweep", "--dataset", manifest_path.string(), "--backend", backend,
                             "--taus", "0,0.1,0.2,0.3,0.4", "--seed", "0", "--workers", "4",
                             "--out", (work / "sweep").string()});
  c.expect(sweep == 0, fmt::format("sweep exited {}", sweep));
  if (sweep != 0) return;
  std::ifstream sin(work / "sweep/summary.json");
  const Json series = Json::parse(sin)["sweep"];
  std::vector<double> ratios;
  for (const auto& p : series) {
    c.note(fmt::format("tau {:.1f}: {}/{}", p["tau"].get<double>(), p["errors"].get<int>(),
                       p["attempts"].get<int>()));
    c.expect(!p["ratio"].is_null(), "empty sweep point");
    ratios.push_back(p["ratio"].is_null() ? 0.0 : p["ratio"].get<double>());
  }
  int inversions = 0;
  for (std::size_t i = 1; i < ratios.size(); ++i) {
    if (ratios[i] < ratios[i - 1]) {
      ++inversions;
      c.expect(ratios[i - 1] - ratios[i] <= 0.02,
               fmt::format("inversion of {} at tau index {}", ratios[i - 1] - ratios[i], i));
    }
  }
  c.expect(inversions <= 1, fmt::format("{} inversions in the sweep", inversions));
}

// -- 6 -----------------------------------------------------------------------

void determinism(Check& c, const fs::path& work) {
  const fs::path manifest = fs::path(TRIAGE_TEST_DATA) / "digits/manifest.json";
  const Json config{{"dataset", manifest.string()},
                    {"backend", "builtin:" + (work / "digits.cmlp").string()},
                    {"tau_high", 0.1},
                    {"policy", {{"seed", 7}}}};
  std::ofstream(work / "generate.json") << config.dump(2);
  std::vector<std::vector<std::uint8_t>> outputs;
  for (const char* out : {"gen_a", "gen_b"}) {
    const int code = cli_run({"generate", "--config", (work / "generate.json").string(), "--out",
                              (work / out).string()});
    c.expect(code == 0, fmt::format("generate exited {}", code));
    outputs.push_back(read_bytes(work / out / "errors.jsonl"));
  }
  const auto lines = std::count(outputs[0].begin(), outputs[0].end(), '\n');
  c.note(fmt::format("errors.jsonl: {} entries, {} bytes", lines, outputs[0].size()));
  c.expect(!outputs[0].empty(), "no errors were generated");
  c.expect(outputs[0] == outputs[1], "errors.jsonl differs between runs");

  std::string text;
  const int replay = cli_run({"replay", "--config", (work / "generate.json").string(),
                              (work / "gen_a/errors.jsonl").string()},
                             &text);
  c.note(text.substr(text.rfind("replay:")));
  c.expect(replay == 0, fmt::format("replay exited {}", replay));
}

// -- 7 -----------------------------------------------------------------------

std::vector<std::uint8_t> be32(std::uint32_t v) {
  return {std::uint8_t(v >> 24), std::uint8_t(v >> 16), std::uint8_t(v >> 8), std::uint8_t(v)};
}

void parsers(Check& c, const fs::path& work) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> byte(0, 255);

  // IDX: bytes -> samples -> bytes.
  std::vector<std::uint8_t> images = be32(kIdxImagesMagic);
  for (std::uint32_t v : {7u, 6u, 5u}) {
    const auto b = be32(v);
    images.insert(images.end(), b.begin(), b.end());
  }
  for (int i = 0; i < 7 * 30; ++i) images.push_back(std::uint8_t(byte(rng)));
  std::vector<std::uint8_t> labels = be32(kIdxLabelsMagic);
  const auto n = be32(7);
  labels.insert(labels.end(), n.begin(), n.end());
  for (int i = 0; i < 7; ++i) labels.push_back(std::uint8_t(i));
  write_bytes(work / "a.idx3", images);
  write_bytes(work / "a.idx1", labels);
  const auto samples = load_idx_pair(work / "a.idx3", work / "a.idx1");
  write_idx_pair(samples, work / "b.idx3", work / "b.idx1");
  c.expect(read_bytes(work / "b.idx3") == images && read_bytes(work / "b.idx1") == labels,
           "IDX round trip is not byte-exact");

  // CIFAR-10: bytes -> samples -> bytes.
  std::vector<std::uint8_t> cifar;
  for (int r = 0; r < 3; ++r) {
    cifar.push_back(std::uint8_t(r * 3));
    for (int i = 0; i < 3072; ++i) cifar.push_back(std::uint8_t(byte(rng)));
  }
  write_bytes(work / "a.bin", cifar);
  const std::vector<fs::path> files{work / "a.bin"};
  write_cifar10_bin(load_cifar10_bin(files), work / "b.bin");
  c.expect(read_bytes(work / "b.bin") == cifar, "CIFAR-10 round trip is not byte-exact");

  // Malformed fixtures.
  auto short_labels = labels;
  short_labels[7] = 6;
  short_labels.pop_back();
  write_bytes(work / "count.idx1", short_labels);
  c.expect(throws<ParseError>([&] { load_idx_pair(work / "a.idx3", work / "count.idx1"); },
                              "count mismatch"),
           "count mismatch not rejected");
  auto bad_magic = images;
  bad_magic[2] = 0x09;
  write_bytes(work / "magic.idx3", bad_magic);
  c.expect(throws<ParseError>([&] { load_idx_pair(work / "magic.idx3", work / "a.idx1"); },
                              "bad magic"),
           "bad magic not rejected");
  auto truncated = images;
  truncated.resize(truncated.size() - 10);
  write_bytes(work / "trunc.idx3", truncated);
  c.expect(throws<ParseError>([&] { load_idx_pair(work / "trunc.idx3", work / "a.idx1"); },
                              "unexpected end of file"),
           "truncated IDX not rejected");
  auto cifar_trunc = cifar;
  cifar_trunc.pop_back();
  write_bytes(work / "trunc.bin", cifar_trunc);
  const std::vector<fs::path> tf{work / "trunc.bin"};
  c.expect(throws<ParseError>([&] { load_cifar10_bin(tf); }, "not a multiple"),
           "truncated CIFAR-10 not rejected");

  // Through the CLI the same fixtures are configuration errors (exit 2).
  write_bytes(work / "cli.idx3", bad_magic);
  write_bytes(work / "cli.idx1", labels);
  std::ofstream(work / "cli.json") << Json{{"name", "bad"},
                                           {"class_count", 10},
                                           {"splits",
                                            {{"test",
                                              {{"format", "idx"},
                                               {"images", "cli.idx3"},
                                               {"labels", "cli.idx1"}}}}}}
                                          .dump();
  testing::ScriptedFixture fx;
  write_prediction_cache(work / "cli_cache.csv", fx.cache);
  const int code = cli_run({"scan", "--dataset", (work / "cli.json").string(), "--backend",
                            "cache:" + (work / "cli_cache.csv").string(), "--out",
                            (work / "cli_out").string()});
  c.expect(code == cli::kExitConfig, fmt::format("malformed dataset exited {}", code));
}

// -- 8 -----------------------------------------------------------------------

void flag_behavior(Check& c, const fs::path& work) {
  testing::PlantedFlagFixture fx;
  const auto manifest = fx.write(work / "planted");
  const int code = cli_run({"detect", "--dataset", manifest.string(), "--backend",
                            "cache:" + (work / "planted/cache.csv").string(), "--tau-low", "0.1",
                            "--out", (work / "planted_out").string()});
  c.expect(code == 0, fmt::format("detect exited {}", code));
  std::ifstream in(work / "planted_out/flags.jsonl");
  std::vector<Json> flags;
  for (std::string line; std::getline(in, line);) flags.push_back(Json::parse(line));
  c.expect(flags.size() == 1, fmt::format("{} flags instead of 1", flags.size()));
  if (flags.size() == 1) {
    const auto& f = flags[0];
    c.note(fmt::format("flagged {} label {} predicted {} H={:.4f}", f["sample_id"].get<std::string>(),
                       f["label"].get<int>(), f["predicted"].get<int>(), f["shannon"].get<double>()));
    c.expect(f["sample_id"] == "flag/test/42" && f["label"] == 5 && f["predicted"] == 3,
             "wrong sample flagged");
  }
}

}  // namespace

int main() {
  testing::TempDir work("triage-acceptance");
  struct Criterion {
    int number;
    const char* name;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "entropy ground truth", entropy_ground_truth},
      {2, "entropy properties", entropy_properties},
      {3, "algorithm equivalence", algorithm_equivalence},
      {4, "transform correctness", transform_correctness},
      {5, "trend reproduction", [&](Check& c) { trend_reproduction(c, work.path()); }},
      {6, "determinism and replay", [&](Check& c) { determinism(c, work.path()); }},
      {7, "parsers", [&](Check& c) { parsers(c, work.path()); }},
      {8, "flag behavior", [&](Check& c) { flag_behavior(c, work.path()); }},
  };
  int failed = 0;
  for (const auto& criterion : criteria) {
    Check check;
    try {
      criterion.run(check);
    } catch (const std::exception& e) {
      check.expect(false, fmt::format("exception: {}", e.what()));
    }
    for (const auto& n : check.notes()) std::cout << "    " << n << "\n";
    for (const auto& f : check.failures()) std::cout << "    failure: " << f << "\n";
    std::cout << fmt::format("[{}] criterion {}: {}\n", check.ok() ? "PASS" : "FAIL",
                             criterion.number, criterion.name)
              << std::flush;
    if (!check.ok()) ++failed;
  }
  std::cout << fmt::format("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
