#include "triage/report.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "triage/error.hpp"
#include "triage/png.hpp"

namespace triage {

bool EntropySlice::contains(double shannon) const noexcept {
  switch (op) {
    case Op::less: return shannon < threshold;
    case Op::greater: return shannon > threshold;
    case Op::all: return true;
  }
  return false;
}

std::string EntropySlice::label() const {
  switch (op) {
    case Op::less: return fmt::format("s_x < {}", threshold);
    case Op::greater: return fmt::format("s_x > {}", threshold);
    case Op::all: return "all";
  }
  return "all";
}

EntropySlice EntropySlice::parse(std::string_view text) {
  std::string compact;
  for (char ch : text) {
    if (!std::isspace(static_cast<unsigned char>(ch))) compact += ch;
  }
  std::string_view rest = compact;
  if (rest == "all") return EntropySlice{};
  if (rest.starts_with("s_x")) {
    rest.remove_prefix(3);
  } else if (rest.starts_with("s")) {
    rest.remove_prefix(1);
  }
  if (rest.empty() || (rest.front() != '<' && rest.front() != '>')) {
    throw ConfigError(fmt::format("slice '{}' must look like \"<0.001\", \">0.4\" or \"all\"", text));
  }
  const Op op = rest.front() == '<' ? Op::less : Op::greater;
  rest.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
  if (ec != std::errc{} || ptr != rest.data() + rest.size() || value < 0.0) {
    throw ConfigError(fmt::format("slice '{}' has a bad threshold", text));
  }
  return EntropySlice{op, value};
}

std::vector<EntropySlice> default_slices() {
  return {EntropySlice{EntropySlice::Op::less, 0.001}, EntropySlice{EntropySlice::Op::greater, 0.4}};
}

const char* display_name(TransformKind kind) noexcept {
  switch (kind) {
    case TransformKind::pan: return "Panning";
    case TransformKind::rotate2d: return "2D rotation";
    case TransformKind::affine: return "Affine";
    case TransformKind::perspective: return "Perspective";
  }
  return "?";
}

std::string GalleryItem::caption() const {
  return fmt::format("Label: {} / Prediction: {}", label, prediction);
}

const MatrixCell* TriageReport::cell(std::string_view slice, TransformKind kind) const {
  for (const auto& c : cells) {
    if (c.slice == slice && c.kind == kind) return &c;
  }
  return nullptr;
}

TriageReport build_matrix_report(std::string dataset, std::span<const PredictionRecord> records,
                                 const SampleIndex& samples, std::span<const EntropySlice> slices,
                                 const Classifier& classifier, const TransformPolicy& policy,
                                 std::size_t workers) {
  policy.validate();
  TriageReport report;
  report.dataset = std::move(dataset);
  report.sample_count = records.size();
  report.kinds = policy.enabled;
  report.metadata.seed = policy.seed;
  report.metadata.policy = to_json(policy);
  report.metadata.classifier = classifier.descriptor();

  std::vector<const PredictionRecord*> correct;
  for (const auto& r : records) {
    const Sample& s = samples.at(r.sample_id);
    if (s.label == r.predicted_label) correct.push_back(&r);
  }
  report.correct_count = correct.size();
  std::sort(correct.begin(), correct.end(),
            [](const auto* a, const auto* b) { return a->sample_id < b->sample_id; });

  // Each (sample, kind) pair is evaluated once even if it falls in several slices.
  std::map<std::pair<std::string, TransformKind>, std::size_t> task_slot;
  std::vector<TransformTask> tasks;
  std::vector<std::vector<const PredictionRecord*>> members(slices.size());
  for (std::size_t si = 0; si < slices.size(); ++si) {
    for (const auto* r : correct) {
      if (!slices[si].contains(r->shannon.value)) continue;
      members[si].push_back(r);
      for (TransformKind kind : policy.enabled) {
        auto [it, inserted] = task_slot.try_emplace({r->sample_id, kind}, tasks.size());
        if (inserted) {
          const Sample& s = samples.at(r->sample_id);
          tasks.push_back(TransformTask{
              r->sample_id,
              draw_parameters(policy, kind, draw_index_for(r->sample_id), s.image.shape())});
        }
      }
    }
  }
  const auto predicted = predict_transformed(tasks, classifier, samples, workers);

  for (std::size_t si = 0; si < slices.size(); ++si) {
    const std::string label = slices[si].label();
    report.slices.push_back(label);
    for (TransformKind kind : policy.enabled) {
      MatrixCell cell{label, kind, 0, 0, std::nullopt};
      for (const auto* r : members[si]) {
        ++cell.attempts;
        const std::size_t slot = task_slot.at({r->sample_id, kind});
        if (predicted[slot] != samples.at(r->sample_id).label) ++cell.errors;
      }
      if (cell.attempts > 0) {
        cell.ratio = static_cast<double>(cell.errors) / static_cast<double>(cell.attempts);
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

void attach_flags(TriageReport& report, const FlagSet& flags, const SampleIndex& samples) {
  report.flag_count = flags.entries.size();
  report.flag_previews = flags.entries;
  for (const auto& f : flags.entries) {
    const auto png = encode_png(samples.at(f.sample_id).image);
    report.gallery.push_back(
        GalleryItem{f.sample_id, "flag", f.label, f.predicted, "", base64_encode(png)});
  }
}

void attach_errors(TriageReport& report, const ErrorSet& errors, const SampleIndex& samples,
                   std::size_t preview_limit) {
  report.error_count = errors.entries.size();
  const std::size_t n = std::min(preview_limit, errors.entries.size());
  report.error_previews.assign(errors.entries.begin(),
                               errors.entries.begin() + static_cast<std::ptrdiff_t>(n));
  for (const auto& e : report.error_previews) {
    const auto image = apply_transform(samples.at(e.sample_id).image, e.transform);
    report.gallery.push_back(GalleryItem{e.sample_id, "error", e.label, e.transformed_label,
                                         to_string(e.transform.kind()),
                                         base64_encode(encode_png(image))});
  }
}

// -- JSON ---------------------------------------------------------------------

namespace {

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

TransformKind kind_from_json(const Json& j) {
  const auto kind = parse_transform_kind(j.get<std::string>());
  if (!kind) throw ParseError(fmt::format("unknown transform kind {}", j.dump()));
  return *kind;
}

}  // namespace

Json report_to_json(const TriageReport& report) {
  Json kinds = Json::array();
  for (auto k : report.kinds) kinds.push_back(to_string(k));
  Json cells = Json::array();
  for (const auto& c : report.cells) {
    cells.push_back({{"slice", c.slice},
                     {"transform", to_string(c.kind)},
                     {"attempts", c.attempts},
                     {"errors", c.errors},
                     {"ratio", optional_number(c.ratio)}});
  }
  Json flags = Json::array();
  for (const auto& f : report.flag_previews) flags.push_back(to_json(f));
  Json errors = Json::array();
  for (const auto& e : report.error_previews) errors.push_back(to_json(e));
  Json gallery = Json::array();
  for (const auto& g : report.gallery) {
    gallery.push_back({{"sample_id", g.sample_id},
                       {"source", g.source},
                       {"label", g.label},
                       {"prediction", g.prediction},
                       {"transform", g.transform},
                       {"png_base64", g.png_base64}});
  }
  return Json{
      {"report_version", TriageReport::kVersion},
      {"dataset", report.dataset},
      {"sample_count", report.sample_count},
      {"correct_count", report.correct_count},
      {"slices", report.slices},
      {"transforms", kinds},
      {"cells", cells},
      {"flags", {{"count", report.flag_count}, {"previews", flags}}},
      {"errors", {{"count", report.error_count}, {"previews", errors}}},
      {"gallery", gallery},
      {"metadata",
       {{"seed", report.metadata.seed},
        {"policy", report.metadata.policy},
        {"thresholds", report.metadata.thresholds},
        {"classifier", report.metadata.classifier},
        {"timestamp", report.metadata.timestamp}}},
  };
}

TriageReport report_from_json(const Json& j) {
  try {
    if (j.at("report_version").get<int>() != TriageReport::kVersion) {
      throw ParseError(fmt::format("unsupported report_version {}", j["report_version"].dump()));
    }
    TriageReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.sample_count = j.at("sample_count").get<std::size_t>();
    r.correct_count = j.at("correct_count").get<std::size_t>();
    r.slices = j.at("slices").get<std::vector<std::string>>();
    for (const auto& k : j.at("transforms")) r.kinds.push_back(kind_from_json(k));
    for (const auto& c : j.at("cells")) {
      MatrixCell cell{c.at("slice").get<std::string>(), kind_from_json(c.at("transform")),
                      c.at("attempts").get<std::size_t>(), c.at("errors").get<std::size_t>(),
                      std::nullopt};
      if (!c.at("ratio").is_null()) cell.ratio = c["ratio"].get<double>();
      r.cells.push_back(std::move(cell));
    }
    r.flag_count = j.at("flags").at("count").get<std::size_t>();
    for (const auto& f : j["flags"].at("previews")) r.flag_previews.push_back(flag_entry_from_json(f));
    r.error_count = j.at("errors").at("count").get<std::size_t>();
    for (const auto& e : j["errors"].at("previews")) {
      r.error_previews.push_back(error_entry_from_json(e));
    }
    for (const auto& g : j.at("gallery")) {
      r.gallery.push_back(GalleryItem{g.at("sample_id").get<std::string>(),
                                      g.at("source").get<std::string>(),
                                      g.at("label").get<ClassIndex>(),
                                      g.at("prediction").get<ClassIndex>(),
                                      g.at("transform").get<std::string>(),
                                      g.at("png_base64").get<std::string>()});
    }
    const auto& m = j.at("metadata");
    r.metadata = RunMetadata{m.at("seed").get<std::uint64_t>(), m.at("policy"),
                             m.at("thresholds"), m.at("classifier").get<std::string>(),
                             m.at("timestamp").get<std::string>()};
    return r;
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("bad report document: {}", e.what()));
  }
}

// -- rendering ----------------------------------------------------------------

namespace {

constexpr const char* kAbsent = "—";

std::string html_escape(std::string_view text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string render_markdown(const TriageReport& report) {
  std::ostringstream md;
  md << "# Error ratios: " << report.dataset << "\n\n";
  md << fmt::format("Samples: {}, correctly predicted: {}\n\n", report.sample_count,
                    report.correct_count);

  auto header = [&] {
    md << "| Shannon threshold |";
    for (auto k : report.kinds) md << ' ' << display_name(k) << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < report.kinds.size(); ++i) md << "---|";
    md << '\n';
  };

  md << "Ratio of erroneous inputs (#error/#test)\n\n";
  header();
  for (const auto& slice : report.slices) {
    md << "| " << slice << " |";
    for (auto k : report.kinds) {
      const MatrixCell* c = report.cell(slice, k);
      md << ' ' << (c && c->ratio ? fmt::format("{:.2f}", *c->ratio) : kAbsent) << " |";
    }
    md << '\n';
  }

  md << "\nCounts (#error/#test)\n\n";
  header();
  for (const auto& slice : report.slices) {
    md << "| " << slice << " |";
    for (auto k : report.kinds) {
      const MatrixCell* c = report.cell(slice, k);
      md << ' ' << (c ? fmt::format("{}/{}", c->errors, c->attempts) : kAbsent) << " |";
    }
    md << '\n';
  }
  md << fmt::format("\nFlagged low-quality samples: {}\n", report.flag_count);
  return md.str();
}

std::string render_html(const TriageReport& report) {
  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>"
       << html_escape(report.dataset) << " gallery</title>\n"
       << "<style>body{font-family:sans-serif}figure{display:inline-block;margin:8px;"
          "text-align:center}img{width:112px;image-rendering:pixelated;border:1px solid #888}"
          "figcaption{font-size:12px}</style>\n</head>\n<body>\n";
  html << "<h1>" << html_escape(report.dataset) << "</h1>\n";
  html << fmt::format("<p>Flagged samples: {}. Erroneous transformed inputs: {}.</p>\n",
                      report.flag_count, report.error_count);
  html << "<div class=\"gallery\">\n";
  for (const auto& g : report.gallery) {
    html << "<figure class=\"" << g.source << "\"><img alt=\"" << html_escape(g.sample_id)
         << "\" src=\"data:image/png;base64," << g.png_base64 << "\">"
         << "<figcaption>" << html_escape(g.caption()) << "<br>" << html_escape(g.sample_id);
    if (!g.transform.empty()) html << " (" << html_escape(g.transform) << ")";
    html << "</figcaption></figure>\n";
  }
  html << "</div>\n</body>\n</html>\n";
  return html.str();
}

}  // namespace

std::string render(const TriageReport& report, RenderFormat format) {
  switch (format) {
    case RenderFormat::json: return report_to_json(report).dump(2) + "\n";
    case RenderFormat::markdown: return render_markdown(report);
    case RenderFormat::html_gallery: return render_html(report);
  }
  return {};
}

}  // namespace triage
