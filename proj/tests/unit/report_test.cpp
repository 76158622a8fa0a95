#include <gtest/gtest.h>

#include <regex>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "triage/error.hpp"
#include "triage/report.hpp"

namespace triage {
namespace {

std::vector<PredictionRecord> records_of(const std::vector<Sample>& samples,
                                         const PredictionCache& cache) {
  std::vector<PredictionRecord> out;
  for (const Sample& s : samples) out.push_back(make_record(s.id, *cache.find(s.id)));
  return out;
}

// Every sample confidently correct or uncertain-correct; transformed
// predictions either always flip or never flip.
struct Uniform {
  std::vector<Sample> samples;
  PredictionCache cache{2};
  explicit Uniform(bool flip) {
    for (int i = 0; i < 8; ++i) {
      const std::string id = "u/test/" + std::to_string(i);
      samples.push_back({id, ImageTensor({3, 3, 1}), 0});
      cache.insert(id, PredictionVector(i % 2 ? std::vector<double>{0.55, 0.45}
                                              : std::vector<double>{1.0, 0.0}));
      for (TransformKind k : kAllTransformKinds) {
        cache.insert(transformed_query_id(id, k),
                     PredictionVector(flip ? std::vector<double>{0.2, 0.8}
                                           : std::vector<double>{0.9, 0.1}));
      }
    }
  }
};

TEST(MatrixReport, AllFlipAndNoneFlip) {
  for (bool flip : {true, false}) {
    Uniform u(flip);
    const SampleIndex index(u.samples);
    const CacheClassifier clf(u.cache);
    const auto slices = default_slices();
    const auto report = build_matrix_report("u", records_of(u.samples, u.cache), index, slices,
                                            clf, TransformPolicy{});
    ASSERT_EQ(report.cells.size(), 8u);
    for (const auto& c : report.cells) {
      EXPECT_EQ(c.attempts, 4u);
      ASSERT_TRUE(c.ratio);
      EXPECT_EQ(*c.ratio, flip ? 1.0 : 0.0);
    }
  }
}

TEST(MatrixReport, ScriptedTable) {
  testing::ScriptedFixture fx;
  const SampleIndex index(fx.samples);
  const CacheClassifier clf(fx.cache);
  const auto slices = default_slices();
  const auto report =
      build_matrix_report("fx", records_of(fx.samples, fx.cache), index, slices, clf, {});
  EXPECT_EQ(report.sample_count, 6u);
  EXPECT_EQ(report.correct_count, 5u);
  ASSERT_EQ(report.slices, (std::vector<std::string>{"s_x < 0.001", "s_x > 0.4"}));
  struct Want {
    TransformKind kind;
    std::size_t low_errors, high_errors;
  };
  for (const Want& w : {Want{TransformKind::pan, 0, 2}, Want{TransformKind::rotate2d, 1, 2},
                        Want{TransformKind::affine, 0, 2}, Want{TransformKind::perspective, 0, 2}}) {
    const auto* low = report.cell("s_x < 0.001", w.kind);
    const auto* high = report.cell("s_x > 0.4", w.kind);
    ASSERT_TRUE(low && high);
    EXPECT_EQ(low->attempts, 1u);
    EXPECT_EQ(low->errors, w.low_errors) << to_string(w.kind);
    EXPECT_EQ(high->attempts, 3u);
    EXPECT_EQ(high->errors, w.high_errors);
    EXPECT_DOUBLE_EQ(*high->ratio, 2.0 / 3.0);
  }
  const auto md = render(report, RenderFormat::markdown);
  EXPECT_NE(md.find("| s_x < 0.001 | 0.00 | 1.00 | 0.00 | 0.00 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| s_x > 0.4 | 0.67 | 0.67 | 0.67 | 0.67 |"), std::string::npos) << md;
  EXPECT_NE(md.find("| Shannon threshold | Panning | 2D rotation | Affine | Perspective |"),
            std::string::npos);
}

TEST(MatrixReport, EmptySliceIsAbsent) {
  testing::ScriptedFixture fx;
  const SampleIndex index(fx.samples);
  const CacheClassifier clf(fx.cache);
  const std::vector<EntropySlice> slices{EntropySlice::parse(">5"), EntropySlice::parse("all")};
  TransformPolicy pan;
  pan.enabled = {TransformKind::pan};
  const auto report =
      build_matrix_report("fx", records_of(fx.samples, fx.cache), index, slices, clf, pan);
  const auto* empty = report.cell("s_x > 5", TransformKind::pan);
  ASSERT_TRUE(empty);
  EXPECT_EQ(empty->attempts, 0u);
  EXPECT_FALSE(empty->ratio);
  EXPECT_EQ(report.cell("all", TransformKind::pan)->attempts, 5u);
  EXPECT_NE(render(report, RenderFormat::markdown).find("| s_x > 5 | — |"), std::string::npos);
}

TEST(Slices, ParseAndLabel) {
  EXPECT_EQ(EntropySlice::parse("<0.001"), (EntropySlice{EntropySlice::Op::less, 0.001}));
  EXPECT_EQ(EntropySlice::parse(" s_x > 0.4"), (EntropySlice{EntropySlice::Op::greater, 0.4}));
  EXPECT_EQ(EntropySlice::parse("all").label(), "all");
  EXPECT_EQ(default_slices()[0].label(), "s_x < 0.001");
  EXPECT_TRUE(EntropySlice::parse("<0.1").contains(0.05));
  EXPECT_FALSE(EntropySlice::parse("<0.1").contains(0.1));
  EXPECT_THROW(EntropySlice::parse("=3"), Error);
  EXPECT_THROW(EntropySlice::parse("<abc"), Error);
}

TriageReport full_report() {
  testing::ScriptedFixture fx;
  const SampleIndex index(fx.samples);
  const CacheClassifier clf(fx.cache);
  const auto records = records_of(fx.samples, fx.cache);
  const auto slices = default_slices();
  auto report = build_matrix_report("fx", records, index, slices, clf, {});
  attach_flags(report, detect(records, index.labels(), 1.0), index);
  attach_errors(report, generate(build_candidates(records, index.labels(), 0.4), {}, clf, index),
                index, 1);
  report.metadata.thresholds = {{"tau_low", 1.0}, {"tau_high", 0.4}};
  return report;
}

TEST(Render, JsonRoundTrip) {
  const auto report = full_report();
  EXPECT_EQ(report_from_json(Json::parse(render(report, RenderFormat::json))), report);
  const TriageReport empty;
  EXPECT_EQ(report_from_json(report_to_json(empty)), empty);
}

TEST(Render, GalleryHoldsFlagsAndErrorPreviews) {
  const auto report = full_report();
  EXPECT_EQ(report.flag_count, 1u);
  EXPECT_EQ(report.error_count, 2u);
  EXPECT_EQ(report.error_previews.size(), 1u);
  ASSERT_EQ(report.gallery.size(), 2u);
  const auto html = render(report, RenderFormat::html_gallery);
  const std::regex img("<img ");
  EXPECT_EQ(std::distance(std::sregex_iterator(html.begin(), html.end(), img),
                          std::sregex_iterator()),
            2);
  EXPECT_NE(html.find("Label: 0 / Prediction: 2"), std::string::npos);
  EXPECT_NE(html.find("data:image/png;base64,iVBORw0KGgo"), std::string::npos);
}

TEST(Render, CaptionStyle) {
  GalleryItem item{"m/test/0", "flag", 5, 3, "", ""};
  EXPECT_EQ(item.caption(), "Label: 5 / Prediction: 3");
}

TEST(Render, EmptyReportDocumentsAreValid) {
  const TriageReport empty;
  EXPECT_NO_THROW(Json::parse(render(empty, RenderFormat::json)));
  const auto md = render(empty, RenderFormat::markdown);
  EXPECT_NE(md.find("| Shannon threshold |"), std::string::npos);
  const auto html = render(empty, RenderFormat::html_gallery);
  EXPECT_EQ(html.find("<img"), std::string::npos);
  EXPECT_NE(html.find("</html>"), std::string::npos);
}

TEST(Render, RatiosMatchCounts) {
  std::mt19937_64 rng(4);
  TriageReport report;
  report.slices = {"all"};
  report.kinds = {kAllTransformKinds.begin(), kAllTransformKinds.end()};
  std::uniform_int_distribution<std::size_t> n(1, 997);
  for (TransformKind k : report.kinds) {
    const std::size_t attempts = n(rng);
    const std::size_t errors = attempts / 3;
    report.cells.push_back({"all", k, attempts, errors, double(errors) / double(attempts)});
  }
  const auto j = Json::parse(render(report, RenderFormat::json));
  for (const auto& c : j.at("cells")) {
    const double expected = c["errors"].get<double>() / c["attempts"].get<double>();
    EXPECT_NEAR(c["ratio"].get<double>(), expected, 5e-5);
  }
  const auto md = render(report, RenderFormat::markdown);
  for (const auto& c : report.cells) {
    EXPECT_NE(md.find(fmt::format(" {:.2f} |", *c.ratio)), std::string::npos);
  }
}

}  // namespace
}  // namespace triage
