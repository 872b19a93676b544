#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "tsrnde/ingest.hpp"
#include "tsrnde/textio.hpp"

using namespace tsrnde;

namespace {

FrameSequence ramp_sequence(std::size_t w, std::size_t h, std::size_t frames) {
  std::vector<double> t(frames), data(w * h * frames);
  for (std::size_t k = 0; k < frames; ++k) t[k] = 0.5 + static_cast<double>(k);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = 0.25 * static_cast<double>(i) + 1.0 / 3.0;
  return FrameSequence(w, h, t, data, 254.0);
}

// Brute-force trim oracle: keep a pixel only if every position in its
// square neighbourhood is inside the image and carries the same label.
LabelMask trim_oracle(const LabelMask& m, std::size_t k) {
  LabelMask out = m;
  const auto r = static_cast<long>(k);
  for (long y = 0; y < static_cast<long>(m.height); ++y) {
    for (long x = 0; x < static_cast<long>(m.width); ++x) {
      bool keep = true;
      for (long dy = -r; dy <= r && keep; ++dy) {
        for (long dx = -r; dx <= r && keep; ++dx) {
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(m.height) || xx >= static_cast<long>(m.width)) keep = false;
          else if (m.labels[m.index(yy, xx)] != m.labels[m.index(y, x)]) keep = false;
        }
      }
      if (!keep) out.valid[m.index(y, x)] = 0;
    }
  }
  return out;
}

void write_frame(const std::filesystem::path& p, const std::vector<std::vector<double>>& rows) {
  std::string s;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) s += (c ? "," : "") + text::fmt_double(r[c]);
    s += "\n";
  }
  text::write_file(p, s);
}

}  // namespace

TEST(LoadSequence, MinimalManifest) {
  testutil::TempDir dir;
  write_frame(dir / "a.csv", {{1, 2}, {3, 4}});
  write_frame(dir / "b.csv", {{5, 6}, {7, 8}});
  write_frame(dir / "c.csv", {{9, 10}, {11, 12}});
  text::write_file(dir / "seq.manifest",
                   "width = 2\nheight = 2\nsaturation_value = 254\nframe = a.csv 0.066\nframe = b.csv 0.133\n"
                   "frame = c.csv 0.2\n");
  const auto seq = load_sequence(dir / "seq.manifest");
  EXPECT_EQ(seq.frame_count(), 3u);
  EXPECT_EQ(seq.width(), 2u);
  EXPECT_EQ(seq.height(), 2u);
  EXPECT_DOUBLE_EQ(seq.timestamps()[1], 0.133);
  EXPECT_DOUBLE_EQ(seq.at(2, 1, 0), 11.0);
  EXPECT_DOUBLE_EQ(seq.saturation_value(), 254.0);
}

TEST(LoadSequence, CrlfAndFpsTimestamps) {
  testutil::TempDir dir;
  text::write_file(dir / "a.csv", "1,2\r\n3,4\r\n");
  text::write_file(dir / "b.csv", "5,6\r\n7,8\r\n");
  text::write_file(dir / "seq.manifest", "width = 2\nheight = 2\nfps = 15\nframe = a.csv\nframe = b.csv\n");
  const auto seq = load_sequence(dir / "seq.manifest");
  EXPECT_DOUBLE_EQ(seq.timestamps()[0], 1.0 / 15.0);
  EXPECT_DOUBLE_EQ(seq.timestamps()[1], 2.0 / 15.0);
  EXPECT_DOUBLE_EQ(seq.at(1, 1, 1), 8.0);
  EXPECT_TRUE(std::isinf(seq.saturation_value()));
}

TEST(LoadSequence, FrameShapeMismatch) {
  testutil::TempDir dir;
  write_frame(dir / "a.csv", {{1, 2}, {3, 4}});
  write_frame(dir / "b.csv", {{1, 2, 3}, {4, 5, 6}});
  text::write_file(dir / "seq.manifest", "width = 2\nheight = 2\nframe = a.csv 0.1\nframe = b.csv 0.2\n");
  EXPECT_ERRC(load_sequence(dir / "seq.manifest"), Errc::dimension_mismatch);
}

TEST(LoadSequence, RepeatedTimestamp) {
  testutil::TempDir dir;
  write_frame(dir / "a.csv", {{1}});
  write_frame(dir / "b.csv", {{1}});
  text::write_file(dir / "seq.manifest", "width = 1\nheight = 1\nframe = a.csv 0.1\nframe = b.csv 0.1\n");
  EXPECT_ERRC(load_sequence(dir / "seq.manifest"), Errc::non_increasing_timestamps);
}

TEST(LoadSequence, MissingFrameFile) {
  testutil::TempDir dir;
  text::write_file(dir / "seq.manifest", "width = 1\nheight = 1\nframe = nope.csv 0.1\n");
  EXPECT_ERRC(load_sequence(dir / "seq.manifest"), Errc::missing_file);
}

TEST(LoadSequence, NonNumericCell) {
  testutil::TempDir dir;
  text::write_file(dir / "a.csv", "1,x\n");
  text::write_file(dir / "seq.manifest", "width = 2\nheight = 1\nframe = a.csv 0.1\n");
  EXPECT_ERRC(load_sequence(dir / "seq.manifest"), Errc::parse_error);
}

TEST(FrameSequence, ConstructorInvariants) {
  EXPECT_ERRC(FrameSequence(2, 2, {0.1}, std::vector<double>(3)), Errc::dimension_mismatch);
  EXPECT_ERRC(FrameSequence(1, 1, {0.0}, {1.0}), Errc::non_increasing_timestamps);
  EXPECT_ERRC(FrameSequence(1, 1, {0.2, 0.1}, {1.0, 1.0}), Errc::non_increasing_timestamps);
  EXPECT_ERRC(FrameSequence(0, 1, {0.1}, {}), Errc::invalid_argument);
}

TEST(WriteSequence, RoundTripIsIdentity) {
  testutil::TempDir dir;
  const auto seq = ramp_sequence(5, 3, 4);
  const auto manifest = write_sequence(seq, dir.path(), "rt");
  const auto back = load_sequence(manifest);
  ASSERT_EQ(back.frame_count(), seq.frame_count());
  EXPECT_EQ(back.width(), seq.width());
  EXPECT_EQ(back.height(), seq.height());
  EXPECT_DOUBLE_EQ(back.saturation_value(), seq.saturation_value());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(back.timestamps()[k], seq.timestamps()[k]);
  for (std::size_t i = 0; i < seq.data().size(); ++i) ASSERT_EQ(back.data()[i], seq.data()[i]);
}

TEST(Crop, PaperCropDimensions) {
  std::vector<double> data(640 * 512 * 2, 1.0);
  const FrameSequence seq(640, 512, {0.1, 0.2}, std::move(data));
  const auto c = crop(seq, {10, 10, 236, 182});
  EXPECT_EQ(c.width(), 236u);
  EXPECT_EQ(c.height(), 182u);
  EXPECT_EQ(c.frame_count(), 2u);
}

TEST(Crop, FullFrameIsIdentity) {
  const auto seq = ramp_sequence(6, 4, 3);
  const auto c = crop(seq, {0, 0, 6, 4});
  EXPECT_TRUE(std::equal(c.data().begin(), c.data().end(), seq.data().begin(), seq.data().end()));
}

TEST(Crop, OutOfBounds) {
  std::vector<double> data(640 * 4, 0.0);
  const FrameSequence seq(640, 4, {0.1}, std::move(data));
  EXPECT_ERRC(crop(seq, {630, 0, 20, 20}), Errc::out_of_bounds);
}

TEST(Crop, NestedComposes) {
  const auto seq = ramp_sequence(12, 10, 2);
  const Rect r1{2, 1, 8, 7};
  const Rect r2{3, 2, 4, 3};
  const auto twice = crop(crop(seq, r1), r2);
  const auto once = crop(seq, {r1.x0 + r2.x0, r1.y0 + r2.y0, r2.width, r2.height});
  EXPECT_TRUE(std::equal(twice.data().begin(), twice.data().end(), once.data().begin(), once.data().end()));
}

TEST(TrimMask, UniformInterior) {
  const LabelMask m(20, 20, 1);
  const auto t = trim_mask(m, 5);
  EXPECT_EQ(t.valid_count(), 100u);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 0; c < 20; ++c)
      EXPECT_EQ(t.valid[t.index(r, c)], (r >= 5 && r < 15 && c >= 5 && c < 15) ? 1 : 0);
  EXPECT_EQ(t, trim_oracle(m, 5));
}

TEST(TrimMask, ZeroMarginIsIdentity) {
  LabelMask m(7, 5, 2);
  m.labels[3] = 1;
  EXPECT_EQ(trim_mask(m, 0), m);
}

TEST(TrimMask, HalfAndHalf) {
  LabelMask m(20, 20, 2);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t c = 10; c < 20; ++c) m.labels[m.index(r, c)] = 1;
  const auto t = trim_mask(m, 5);
  EXPECT_EQ(t, trim_oracle(m, 5));
  // columns 5..14 straddle the boundary, plus the 5-pixel edge band
  for (std::size_t r = 5; r < 15; ++r) {
    for (std::size_t c = 0; c < 20; ++c) EXPECT_EQ(t.valid[t.index(r, c)], 0) << r << "," << c;
  }
  EXPECT_EQ(t.valid_count(), 0u);
  const auto t2 = trim_mask(m, 2);
  EXPECT_EQ(t2, trim_oracle(m, 2));
  EXPECT_EQ(t2.valid_count(), 2u * 16u * 6u);
}

TEST(TrimMask, RandomMasksMatchOracleAndAreIdempotent) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t w = 5 + rng() % 30, h = 5 + rng() % 30, k = rng() % 5;
    LabelMask m(w, h, 3);
    // blocky labels so that some interiors survive
    const std::size_t bw = 1 + rng() % 10, bh = 1 + rng() % 10;
    std::vector<std::uint8_t> block((w / bw + 1) * (h / bh + 1));
    for (auto& b : block) b = static_cast<std::uint8_t>(rng() % 3);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) m.labels[m.index(r, c)] = block[(r / bh) * (w / bw + 1) + c / bw];
    for (std::size_t i = 0; i < m.size(); ++i)
      if (rng() % 17 == 0) m.valid[i] = 0;
    const auto t = trim_mask(m, k);
    auto oracle = trim_oracle(m, k);
    ASSERT_EQ(t, oracle) << "trial " << trial;
    EXPECT_EQ(trim_mask(t, k), t);
    for (std::size_t i = 0; i < m.size(); ++i)
      if (!m.valid[i]) {
        EXPECT_EQ(t.valid[i], 0);
      }
  }
}

TEST(FirstUnsaturatedFrame, Examples) {
  const std::vector<double> a{254, 254, 200, 150};
  EXPECT_EQ(first_unsaturated_frame(a, 254.0), 2u);
  const std::vector<double> b{100, 90, 80};
  EXPECT_EQ(first_unsaturated_frame(b, 254.0), 0u);
  const std::vector<double> c{254, 254, 254};
  EXPECT_ERRC(first_unsaturated_frame(c, 254.0), Errc::all_saturated);
}

TEST(FirstUnsaturatedFrame, SequenceOverload) {
  const FrameSequence seq(2, 1, {0.1, 0.2, 0.3}, {254, 10, 254, 9, 100, 8}, 254.0);
  EXPECT_EQ(first_unsaturated_frame(seq, 0, 0), 2u);
  EXPECT_EQ(first_unsaturated_frame(seq, 0, 1), 0u);
  EXPECT_ERRC(first_unsaturated_frame(seq, 1, 0), Errc::out_of_bounds);
}

TEST(Pgm, RoundTrip) {
  GreyImage img{3, 2, {0, 1, 2, 85, 170, 255}};
  EXPECT_EQ(decode_pgm(encode_pgm(img)), img);
  const std::string bytes = encode_pgm(img);
  EXPECT_EQ(bytes.substr(0, 2), "P5");
}

TEST(Pgm, CommentsAndRejects) {
  const std::string with_comment = std::string("P5\n# hello\n2 1\n255\n") + '\x03' + '\x04';
  const auto img = decode_pgm(with_comment);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{3, 4}));
  EXPECT_ERRC(decode_pgm("P2\n1 1\n255\n0\n"), Errc::corrupt_file);
  EXPECT_ERRC(decode_pgm(std::string("P5\n2 2\n255\n") + '\x01'), Errc::corrupt_file);
}

TEST(Mask, PgmRoundTrip) {
  testutil::TempDir dir;
  LabelMask m(4, 3, 4);
  for (std::size_t i = 0; i < m.size(); ++i) m.labels[i] = static_cast<std::uint8_t>(i % 4);
  m.valid[5] = 0;
  save_mask(dir / "m.pgm", m);
  const auto back = load_mask(dir / "m.pgm");
  EXPECT_EQ(back.class_count, 4u);
  EXPECT_EQ(back.valid, m.valid);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.valid[i]) {
      EXPECT_EQ(back.labels[i], m.labels[i]);
    }
}
