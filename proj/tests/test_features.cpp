#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "test_util.hpp"
#include "tsrnde/features.hpp"
#include "tsrnde/synthgen.hpp"

using namespace tsrnde;

namespace {

Dataset column(const std::vector<double>& xs) {
  Dataset ds{1, 1, {}, {}, {}};
  for (double x : xs) ds.push_back(std::vector<double>{x}, 0, {});
  return ds;
}

Dataset random_dataset(std::size_t n, std::size_t f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  Dataset ds{f, 3, {}, {}, {}};
  std::vector<double> x(f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) x[j] = 3.0 * n01(rng) + static_cast<double>(j);
    ds.push_back(x, static_cast<std::uint8_t>(i % 3), {static_cast<std::uint32_t>(i), 0});
  }
  return ds;
}

FeatureImage filled_image(std::size_t w, std::size_t h, std::size_t degree) {
  FeatureImage img(w, h, degree, Packing::concat_padded);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<double>(i % 97) - 40.0;
  std::fill(img.valid.begin(), img.valid.end(), 1);
  return img;
}

// Multiset of rows keyed by provenance, for partition checks.
std::multimap<std::uint32_t, std::vector<double>> rows_of(const Dataset& ds) {
  std::multimap<std::uint32_t, std::vector<double>> m;
  for (std::size_t i = 0; i < ds.size(); ++i) m.emplace(ds.provenance[i].row, std::vector<double>(ds.row(i).begin(), ds.row(i).end()));
  return m;
}

}  // namespace

TEST(Assemble, TrimmedInteriorCount) {
  const auto img = filled_image(20, 20, 2);
  const auto mask = trim_mask(LabelMask(20, 20, 1), 5);
  const auto ds = assemble(img, mask);
  EXPECT_EQ(ds.size(), 100u);
  EXPECT_EQ(ds.feature_count, 9u);
  EXPECT_EQ(ds.provenance.front(), (PixelCoord{5, 5}));
}

TEST(Assemble, AllInvalidIsEmptyClass) {
  LabelMask mask(4, 4, 1);
  std::fill(mask.valid.begin(), mask.valid.end(), 0);
  EXPECT_ERRC(assemble(filled_image(4, 4, 2), mask), Errc::empty_class);
}

TEST(Assemble, ClassLosingAllPixels) {
  LabelMask mask(4, 4, 2);
  mask.labels[0] = 1;
  mask.valid[0] = 0;
  EXPECT_ERRC(assemble(filled_image(4, 4, 2), mask), Errc::empty_class);
}

TEST(Assemble, SkipsFailedFits) {
  auto img = filled_image(3, 3, 2);
  img.valid[4] = 0;
  EXPECT_EQ(assemble(img, LabelMask(3, 3, 1)).size(), 8u);
  EXPECT_ERRC(assemble(filled_image(3, 4, 2), LabelMask(3, 3, 1)), Errc::dimension_mismatch);
}

TEST(Assemble, SurrogateQuadrants) {
  const auto [layout, truth] = four_class_scene(236, 182, {0, 0.1, 0.2, 0.3});
  const auto ds = assemble(filled_image(236, 182, 4), trim_mask(truth, 5));
  std::vector<std::size_t> per(4, 0);
  for (auto l : ds.labels) ++per[l];
  for (auto n : per) {
    EXPECT_EQ(n, 108u * 81u);
    EXPECT_GE(n, 5000u);
  }
  EXPECT_EQ(ds.size(), 4u * 108u * 81u);
}

TEST(FitScaler, HandExample) {
  const auto s = fit_scaler(column({1, 2, 3}));
  EXPECT_DOUBLE_EQ(s.mean[0], 2.0);
  EXPECT_NEAR(s.std[0], std::sqrt(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(s.std[0], 0.8165, 1e-4);
  const auto scaled = apply_scaler(column({1, 2, 3}), s);
  EXPECT_NEAR(scaled.values[0], -1.2247, 1e-4);
  EXPECT_DOUBLE_EQ(scaled.values[1], 0.0);
  EXPECT_NEAR(scaled.values[2], 1.2247, 1e-4);
}

TEST(FitScaler, ConstantColumn) {
  const auto s = fit_scaler(column({5, 5, 5}));
  EXPECT_DOUBLE_EQ(s.mean[0], 5.0);
  EXPECT_EQ(s.std[0], 0.0);
  EXPECT_TRUE(s.is_constant(0));
  const auto scaled = apply_scaler(column({5, 17, -3}), s);
  for (double v : scaled.values) EXPECT_EQ(v, 0.0);
}

TEST(FitScaler, StandardizesTrainingColumns) {
  const auto ds = random_dataset(500, 6, 1);
  const auto scaled = apply_scaler(ds, fit_scaler(ds));
  const auto again = fit_scaler(scaled);
  for (std::size_t f = 0; f < 6; ++f) {
    EXPECT_LT(std::abs(again.mean[f]), 1e-12);
    EXPECT_LT(std::abs(again.std[f] - 1.0), 1e-12);
  }
}

TEST(FitScaler, IgnoresTestRows) {
  const auto ds = random_dataset(300, 4, 2);
  SplitSpec spec{0.8, 0.1, 9};
  auto parts = split(ds, spec);
  const auto before = fit_scaler(parts.train);
  for (auto& v : parts.test.values) v = v * 100.0 + 7.0;
  EXPECT_EQ(fit_scaler(parts.train), before);
}

TEST(Augment, Counts) {
  const auto ds = random_dataset(1000, 3, 3);
  EXPECT_EQ(augment(ds, 0.05, 50, 1).size(), 51000u);
}

TEST(Augment, ZeroAmplitudeCopies) {
  const auto ds = random_dataset(20, 3, 4);
  const auto a = augment(ds, 0.0, 3, 1);
  ASSERT_EQ(a.size(), 80u);
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < 20; ++i) {
      EXPECT_TRUE(std::equal(a.row(c * 20 + i).begin(), a.row(c * 20 + i).end(), ds.row(i).begin()));
      EXPECT_EQ(a.labels[c * 20 + i], ds.labels[i]);
    }
}

TEST(Augment, ElementwiseBound) {
  const auto ds = random_dataset(200, 5, 5);
  const auto a = augment(ds, 0.05, 10, 77);
  for (std::size_t c = 0; c <= 10; ++c)
    for (std::size_t i = 0; i < 200; ++i)
      for (std::size_t f = 0; f < 5; ++f) {
        const double o = ds.row(i)[f], e = a.row(c * 200 + i)[f];
        ASSERT_LE(std::abs(e - o), 0.05 * std::abs(o) * (1 + 1e-15));
      }
  EXPECT_EQ(augment(ds, 0.05, 10, 77), a);
  EXPECT_NE(augment(ds, 0.05, 10, 78), a);
}

TEST(Augment, IndependentOfWorkerCount) {
  const auto ds = random_dataset(3000, 4, 6);
  const auto a = augment(ds, 0.05, 5, 1);
  worker_limit().store(1);
  const auto b = augment(ds, 0.05, 5, 1);
  worker_limit().store(0);
  EXPECT_EQ(a, b);
}

TEST(Perturb, BoundIdentityDeterminism) {
  const auto ds = random_dataset(300, 5, 7);
  const auto p = perturb(ds, 0.03, 12);
  for (std::size_t i = 0; i < ds.values.size(); ++i)
    ASSERT_LE(std::abs(p.values[i] - ds.values[i]), 0.03 * std::abs(ds.values[i]) * (1 + 1e-15));
  EXPECT_NE(p.values, ds.values);
  EXPECT_EQ(perturb(ds, 0.0, 12), ds);
  EXPECT_EQ(perturb(ds, 0.03, 12), p);
}

TEST(Perturb, FeatureImageSkipsInvalid) {
  auto img = filled_image(4, 4, 2);
  img.valid[3] = 0;
  const auto p = perturb(img, 0.03, 1);
  EXPECT_TRUE(std::equal(p.features(3).begin(), p.features(3).end(), img.features(3).begin()));
  for (std::size_t i = 0; i < img.values.size(); ++i)
    ASSERT_LE(std::abs(p.values[i] - img.values[i]), 0.03 * std::abs(img.values[i]) * (1 + 1e-15));
}

TEST(Split, Sizes) {
  const SplitSpec spec{0.8, 0.1, 0};
  const auto a = split_sizes(1000, spec);
  EXPECT_EQ(a.train, 720u);
  EXPECT_EQ(a.validation, 80u);
  EXPECT_EQ(a.test, 200u);
  const auto b = split_sizes(10, spec);
  EXPECT_EQ(b.train, 7u);
  EXPECT_EQ(b.validation, 1u);
  EXPECT_EQ(b.test, 2u);
  EXPECT_ERRC(split_sizes(3, spec), Errc::invalid_argument);
  EXPECT_ERRC(split_sizes(100, SplitSpec{1.0, 0.1, 0}), Errc::invalid_argument);
}

TEST(Split, PartitionProperty) {
  const auto ds = random_dataset(1000, 3, 8);
  const auto parts = split(ds, {0.8, 0.1, 4});
  EXPECT_EQ(parts.train.size(), 720u);
  EXPECT_EQ(parts.validation.size(), 80u);
  EXPECT_EQ(parts.test.size(), 200u);
  auto all = rows_of(parts.train);
  all.merge(rows_of(parts.validation));
  all.merge(rows_of(parts.test));
  EXPECT_EQ(all, rows_of(ds));
}

TEST(Split, SeedDeterminism) {
  const auto ds = random_dataset(200, 2, 9);
  const auto a = split(ds, {0.8, 0.1, 1});
  const auto b = split(ds, {0.8, 0.1, 1});
  const auto c = split(ds, {0.8, 0.1, 2});
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.train, b.train);
  EXPECT_NE(a.test, c.test);
}

TEST(DatasetFile, RoundTrip) {
  testutil::TempDir dir;
  const auto ds = random_dataset(25, 4, 10);
  save_dataset(dir / "d.csv", ds);
  const auto back = load_dataset(dir / "d.csv", 3);
  EXPECT_EQ(back, ds);
}

TEST(StatsFile, RoundTrip) {
  const auto s = fit_scaler(random_dataset(50, 5, 11));
  EXPECT_EQ(decode_stats(encode_stats(s)), s);
  EXPECT_ERRC(decode_stats("1,2\n"), Errc::corrupt_file);
}
