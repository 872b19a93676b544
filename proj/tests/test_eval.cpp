#include <gtest/gtest.h>

#include <random>
#include <set>

#include "test_util.hpp"
#include "tsrnde/eval.hpp"
#include "tsrnde/pipeline.hpp"

using namespace tsrnde;

namespace {

ConfusionMatrix four_state() {
  return ConfusionMatrix::from_rows({{1152, 83, 1, 18}, {61, 1241, 0, 12}, {6, 6, 1377, 11}, {19, 14, 19, 1408}});
}

// Summation oracle: 2x2 counts by brute force over the K x K entries.
std::array<std::uint64_t, 4> collapse_oracle(const ConfusionMatrix& cm, const std::set<std::size_t>& pos) {
  std::array<std::uint64_t, 4> out{};
  for (std::size_t i = 0; i < cm.classes; ++i)
    for (std::size_t j = 0; j < cm.classes; ++j) out[(pos.count(i) ? 2 : 0) + (pos.count(j) ? 1 : 0)] += cm.at(i, j);
  return out;
}

}  // namespace

TEST(Confusion, PerfectPrediction) {
  std::vector<std::uint8_t> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<std::uint8_t>(i % 4);
  const auto cm = confusion(labels, labels, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(cm.at(i, j), i == j ? 25u : 0u);
  const std::size_t pos[] = {1, 2, 3};
  EXPECT_EQ(metrics(cm, pos).accuracy, 1.0);
}

TEST(Confusion, SingleRowAndErrors) {
  const auto cm = confusion(std::vector<std::uint8_t>{2}, std::vector<std::uint8_t>{1}, 3);
  EXPECT_EQ(cm.total(), 1u);
  EXPECT_EQ(cm.at(2, 1), 1u);
  EXPECT_ERRC(confusion(std::vector<std::uint8_t>{4}, std::vector<std::uint8_t>{1}, 3), Errc::out_of_bounds);
  EXPECT_ERRC(confusion(std::vector<std::uint8_t>{1, 1}, std::vector<std::uint8_t>{1}, 3), Errc::dimension_mismatch);
}

TEST(Confusion, ReproducesReferenceMatrixFromLabels) {
  const auto ref = four_state();
  std::vector<std::uint8_t> actual, predicted;
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::uint64_t n = 0; n < ref.at(i, j); ++n) {
        actual.push_back(static_cast<std::uint8_t>(i));
        predicted.push_back(static_cast<std::uint8_t>(j));
      }
  std::mt19937_64 rng(1);
  std::vector<std::size_t> order(actual.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::uint8_t> a2, p2;
  for (auto i : order) {
    a2.push_back(actual[i]);
    p2.push_back(predicted[i]);
  }
  EXPECT_EQ(confusion(a2, p2, 4).counts, ref.counts);
}

TEST(Confusion, MasksSkipInvalidPixels) {
  LabelMask truth(3, 1, 2), pred(3, 1, 2);
  truth.labels = {0, 1, 1};
  pred.labels = {0, 0, 1};
  pred.valid[1] = 0;
  const auto cm = confusion(truth, pred, 2);
  EXPECT_EQ(cm.total(), 2u);
  EXPECT_EQ(cm.trace(), 2u);
}

TEST(Metrics, ReferenceFourState) {
  const auto cm = four_state();
  EXPECT_EQ(cm.total(), 5428u);
  EXPECT_EQ(cm.trace(), 5178u);
  const std::size_t pos[] = {1, 2, 3};
  EXPECT_DOUBLE_EQ(metrics(cm, pos).accuracy, 5178.0 / 5428.0);
  EXPECT_NEAR(100.0 * metrics(cm, pos).accuracy, 95.4, 0.1);
}

TEST(Metrics, ReferenceBinary) {
  const auto two = ConfusionMatrix::from_rows({{1152, 102}, {86, 4088}});
  const auto m = binary_metrics(two);
  EXPECT_NEAR(m.accuracy, 0.96536, 5e-6);
  EXPECT_NEAR(*m.precision, 0.97566, 5e-6);
  EXPECT_NEAR(*m.recall, 0.97940, 5e-6);
  EXPECT_DOUBLE_EQ(*m.precision, 4088.0 / 4190.0);
}

TEST(Metrics, IdentityAndUndefined) {
  const auto m = binary_metrics(ConfusionMatrix::from_rows({{5, 0}, {0, 5}}));
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(*m.precision, 1.0);
  EXPECT_EQ(*m.recall, 1.0);
  const auto none = binary_metrics(ConfusionMatrix::from_rows({{5, 0}, {3, 0}}));
  EXPECT_FALSE(none.precision.has_value());
  EXPECT_EQ(*none.recall, 0.0);
  EXPECT_EQ(format_metric(none.precision), "undefined");
  const auto no_pos = binary_metrics(ConfusionMatrix::from_rows({{5, 1}, {0, 0}}));
  EXPECT_FALSE(no_pos.recall.has_value());
  EXPECT_EQ(*no_pos.precision, 0.0);
}

TEST(Collapse, ReferenceViews) {
  const auto cm = four_state();
  const auto a = collapse(cm, {{1, 2, 3}, "defect"});
  EXPECT_EQ(a.counts, (std::vector<std::uint64_t>{1152, 102, 86, 4088}));
  const auto b = collapse(cm, {{2, 3}, "unacceptable"});
  // summation gives 2537; the published table prints 2538
  EXPECT_EQ(b.counts, (std::vector<std::uint64_t>{2537, 31, 45, 2815}));
  const auto mb = binary_metrics(b);
  EXPECT_NEAR(100.0 * mb.accuracy, 98.6, 0.1);
  EXPECT_NEAR(100.0 * *mb.precision, 98.9, 0.1);
  EXPECT_NEAR(100.0 * *mb.recall, 98.4, 0.1);
}

TEST(Collapse, DiagonalStaysDiagonal) {
  const auto cm = ConfusionMatrix::from_rows({{4, 0, 0}, {0, 7, 0}, {0, 0, 9}});
  const auto two = collapse(cm, {{1, 2}, "x"});
  EXPECT_EQ(two.counts, (std::vector<std::uint64_t>{4, 0, 0, 16}));
}

TEST(Collapse, RejectsBadSpecs) {
  const auto cm = four_state();
  EXPECT_ERRC(collapse(cm, {{}, "empty"}), Errc::invalid_argument);
  EXPECT_ERRC(collapse(cm, {{0, 1, 2, 3}, "all"}), Errc::invalid_argument);
  EXPECT_ERRC(collapse(cm, {{4}, "out"}), Errc::invalid_argument);
}

TEST(Collapse, RandomMatricesProperties) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    ConfusionMatrix cm(k);
    for (auto& c : cm.counts) c = rng() % 50;
    cm.at(0, 0) += 1;
    std::set<std::size_t> pos;
    while (pos.empty() || pos.size() == k) {
      pos.clear();
      for (std::size_t c = 0; c < k; ++c)
        if (rng() % 2) pos.insert(c);
    }
    const auto two = collapse(cm, {{pos.begin(), pos.end()}, "p"});
    EXPECT_EQ(two.total(), cm.total());
    const auto oracle = collapse_oracle(cm, pos);
    EXPECT_EQ(two.counts, (std::vector<std::uint64_t>(oracle.begin(), oracle.end())));
    EXPECT_GE(binary_metrics(two).accuracy, metrics(cm, std::vector<std::size_t>(pos.begin(), pos.end())).accuracy);
    // aggregate precision/recall equal those of the collapsed matrix
    const auto agg = metrics(cm, std::vector<std::size_t>(pos.begin(), pos.end()));
    const auto bin = binary_metrics(two);
    EXPECT_EQ(agg.precision, bin.precision);
    EXPECT_EQ(agg.recall, bin.recall);
  }
}

TEST(Segmentation, Shades) {
  LabelMask map(4, 1, 4);
  map.labels = {0, 1, 2, 3};
  EXPECT_EQ(render_segmentation(map, 4).pixels, (std::vector<std::uint8_t>{0, 85, 170, 255}));
  LabelMask two(2, 1, 2);
  two.labels = {0, 1};
  EXPECT_EQ(render_segmentation(two, 2).pixels, (std::vector<std::uint8_t>{0, 255}));
  LabelMask uniform(3, 3, 3, 2);
  const auto img = render_segmentation(uniform, 3);
  for (auto v : img.pixels) EXPECT_EQ(v, img.pixels[0]);
  uniform.valid[4] = 0;
  EXPECT_EQ(render_segmentation(uniform, 3).pixels[4], invalid_shade);
}

TEST(Segmentation, InjectiveUpTo256Classes) {
  for (std::size_t k = 2; k <= 256; ++k) {
    std::set<std::uint8_t> shades;
    for (std::size_t c = 0; c < k; ++c) shades.insert(class_shade(c, k));
    ASSERT_EQ(shades.size(), k) << k;
  }
}

TEST(RegionReport, PerfectMap) {
  LabelMask truth(4, 4, 4);
  for (std::size_t i = 0; i < 16; ++i) truth.labels[i] = static_cast<std::uint8_t>((i / 8) * 2 + (i % 4) / 2);
  const auto r = region_report(truth, truth);
  ASSERT_EQ(r.regions.size(), 4u);
  for (const auto& s : r.regions) {
    EXPECT_EQ(s.fraction_correct, 1.0);
    EXPECT_EQ(s.majority_class, s.truth_class);
  }
}

TEST(RegionReport, SaltNoiseKeepsMajority) {
  LabelMask truth(40, 40, 4);
  for (std::size_t r = 0; r < 40; ++r)
    for (std::size_t c = 0; c < 40; ++c) truth.labels[truth.index(r, c)] = static_cast<std::uint8_t>((r >= 20) * 2 + (c >= 20));
  auto pred = truth;
  std::mt19937_64 rng(4);
  for (auto& l : pred.labels)
    if (rng() % 20 == 0) l = static_cast<std::uint8_t>(rng() % 4);
  const auto r = region_report(pred, truth);
  for (const auto& s : r.regions) {
    EXPECT_EQ(s.majority_class, s.truth_class);
    EXPECT_GT(s.fraction_correct, 0.9);
  }
}

TEST(RegionReport, EmptyRegionOmitted) {
  LabelMask truth(2, 2, 3);
  truth.labels = {0, 0, 1, 1};
  const auto r = region_report(truth, truth);
  EXPECT_EQ(r.regions.size(), 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
}

TEST(MatrixFile, RoundTripAndText) {
  const auto cm = ConfusionMatrix::from_rows({{1, 2}, {3, 4}}, {"ok", "bad"});
  EXPECT_EQ(decode_confusion_csv(encode_confusion_csv(cm)), cm);
  const auto txt = format_confusion_text(cm);
  EXPECT_NE(txt.find("n="), std::string::npos);
  EXPECT_ERRC(decode_confusion_csv("a,b,c\nx,1,2\n"), Errc::corrupt_file);
}

TEST(MatrixFile, ReferenceFileReport) {
  const auto cm = decode_confusion_csv(text::read_file(std::filesystem::path(TSRNDE_SOURCE_DIR) / "configs/pla_four_state.csv"));
  EXPECT_EQ(cm.counts, four_state().counts);
  const auto report = format_eval_report(evaluate_matrix(cm, default_collapses(4)));
  for (const char* pct : {"95.4%", "96.5%", "97.6%", "97.9%", "98.6%", "98.9%", "98.4%"})
    EXPECT_NE(report.find(pct), std::string::npos) << pct;
}
