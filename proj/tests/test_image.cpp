#include <random>

#include <gtest/gtest.h>

#include "flatbench/image.hpp"
#include "flatbench/png_io.hpp"

using namespace flatbench;

namespace {

const Rgb kCloth{40, 90, 200};
const Rgb kBackground{60, 60, 60};

// Independent reference: per-pixel HSV test without any component filtering.
bool in_bounds_reference(Rgb c, const HsvBounds& b) {
  const double r = c.r / 255.0, g = c.g / 255.0, bl = c.b / 255.0;
  const double mx = std::max({r, g, bl}), mn = std::min({r, g, bl});
  double h = 0.0;
  if (mx > mn) {
    if (mx == r)
      h = 60.0 * (g - bl) / (mx - mn);
    else if (mx == g)
      h = 120.0 + 60.0 * (bl - r) / (mx - mn);
    else
      h = 240.0 + 60.0 * (r - g) / (mx - mn);
    if (h < 0) h += 360.0;
  }
  const double s = mx > 0 ? (mx - mn) / mx : 0.0;
  const bool hue = b.h_lo <= b.h_hi ? (h >= b.h_lo && h <= b.h_hi) : (h >= b.h_lo || h <= b.h_hi);
  return hue && s >= b.s_lo && s <= b.s_hi && mx >= b.v_lo && mx <= b.v_hi;
}

}  // namespace

TEST(RgbImage, RejectsBadDimensions) {
  EXPECT_THROW(RgbImage(0, 5), Error);
  EXPECT_THROW(RgbImage(3, 2, std::vector<std::uint8_t>(17)), Error);
  EXPECT_NO_THROW(RgbImage(3, 2, std::vector<std::uint8_t>(18)));
}

TEST(Segment, UniformBackgroundGivesEmptyMask) {
  RgbImage img(32, 24, kBackground);
  EXPECT_EQ(segment_cloth(img, {}).count(), 0u);
}

TEST(Segment, UniformClothGivesFullMask) {
  RgbImage img(32, 24, kCloth);
  EXPECT_EQ(segment_cloth(img, {}).count(), 32u * 24u);
}

TEST(Segment, SpecklesAreDropped) {
  RgbImage img(200, 200, kBackground);
  for (int y = 50; y < 150; ++y)
    for (int x = 40; x < 140; ++x) img.set(x, y, kCloth);
  for (auto [x, y] : {std::pair{2, 2}, {190, 5}, {5, 190}, {180, 180}, {170, 20}}) img.set(x, y, kCloth);

  // reference: raw per-pixel count includes the speckles, the component does not
  int raw = 0;
  for (int y = 0; y < 200; ++y)
    for (int x = 0; x < 200; ++x) raw += in_bounds_reference(img.at(x, y), {});
  EXPECT_EQ(raw, 10005);
  const Mask m = segment_cloth(img, {});
  EXPECT_EQ(m.count(), 10000u);
  EXPECT_FALSE(m.at(2, 2));
  EXPECT_TRUE(m.at(40, 50));
}

TEST(Segment, HueThresholdMatchesReferenceOnRandomColors) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> byte(0, 255);
  HsvBounds wrap{330.0, 40.0, 0.2, 1.0, 0.1, 1.0};
  for (const HsvBounds& b : {HsvBounds{}, wrap}) {
    for (int i = 0; i < 20000; ++i) {
      const Rgb c{static_cast<std::uint8_t>(byte(rng)), static_cast<std::uint8_t>(byte(rng)),
                  static_cast<std::uint8_t>(byte(rng))};
      const Hsv h = rgb_to_hsv(c);
      auto near = [](double v, double edge) { return std::abs(v - edge) < 1e-9; };
      if (near(h.h, b.h_lo) || near(h.h, b.h_hi)) continue;  // rounding may land either side of a bound
      ASSERT_EQ(b.contains(h.h, h.s, h.v), in_bounds_reference(c, b))
          << int(c.r) << "," << int(c.g) << "," << int(c.b);
    }
  }
}

TEST(Segment, IdempotentUnderReapplication) {
  std::mt19937 rng(3);
  RgbImage img(64, 64, kBackground);
  for (int y = 10; y < 50; ++y)
    for (int x = 8; x < 44 + (y % 7); ++x) img.set(x, y, Rgb{static_cast<std::uint8_t>(30 + rng() % 30), 90, 200});
  const Mask m1 = segment_cloth(img, {});
  RgbImage masked(64, 64, kBackground);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (m1.at(x, y)) masked.set(x, y, img.at(x, y));
  EXPECT_EQ(segment_cloth(masked, {}), m1);
}

TEST(HsvBounds, Validation) {
  HsvBounds b;
  b.s_lo = 0.9;
  b.s_hi = 0.1;
  EXPECT_THROW(b.validate(), Error);
  HsvBounds c;
  c.h_hi = 360.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(CenterOfMass, Examples) {
  Mask single(10, 10);
  single.set(7, 3, true);
  EXPECT_EQ(center_of_mass(single), Point2(7.0, 3.0));

  Mask full(10, 10, true);
  EXPECT_EQ(center_of_mass(full), Point2(4.5, 4.5));

  Mask three(5, 5);
  three.set(0, 0, true);
  three.set(2, 0, true);
  three.set(0, 4, true);
  const Point2 c = center_of_mass(three);
  EXPECT_NEAR(c.x(), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c.y(), 4.0 / 3.0, 1e-15);

  EXPECT_THROW(center_of_mass(Mask(4, 4)), Error);
}

TEST(CenterOfMass, TranslationEquivariant) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Mask a(40, 40), b(40, 40);
    const int dx = static_cast<int>(rng() % 10), dy = static_cast<int>(rng() % 10);
    for (int k = 0; k < 60; ++k) {
      const int x = static_cast<int>(rng() % 30), y = static_cast<int>(rng() % 30);
      a.set(x, y, true);
      b.set(x + dx, y + dy, true);
    }
    const Point2 d = center_of_mass(b) - center_of_mass(a);
    EXPECT_NEAR(d.x(), dx, 1e-12);
    EXPECT_NEAR(d.y(), dy, 1e-12);
  }
}

TEST(SplitBlocks, Examples) {
  const BlockGrid g = split_blocks(720, 720, 9, 9);
  ASSERT_EQ(g.n_b(), 81);
  for (const auto& b : g.blocks) {
    EXPECT_EQ(b.w, 80);
    EXPECT_EQ(b.h, 80);
  }

  const BlockGrid one = split_blocks(10, 10, 1, 1);
  ASSERT_EQ(one.n_b(), 1);
  EXPECT_EQ(one.blocks[0], (BlockRect{0, 0, 10, 10}));

  const BlockGrid odd = split_blocks(10, 10, 3, 3);
  int area = 0;
  for (int c = 0; c < 3; ++c) EXPECT_EQ(odd.blocks[c].w, c == 2 ? 4 : 3);
  for (int r = 0; r < 3; ++r) EXPECT_EQ(odd.blocks[odd.index(r, 0)].h, r == 2 ? 4 : 3);
  for (const auto& b : odd.blocks) area += b.area();
  EXPECT_EQ(area, 100);
}

TEST(SplitBlocks, BadGrid) {
  for (auto [w, h, r, c] : {std::array{10, 10, 0, 1}, {10, 10, 1, 0}, {10, 10, 11, 1}, {10, 10, 1, 11}, {0, 10, 1, 1}}) {
    try {
      split_blocks(w, h, r, c);
      FAIL() << "expected BadGrid";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::BadGrid);
    }
  }
}

TEST(SplitBlocks, EveryPixelInExactlyOneBlock) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 97), h = 1 + static_cast<int>(rng() % 97);
    const int rows = 1 + static_cast<int>(rng() % h), cols = 1 + static_cast<int>(rng() % w);
    const BlockGrid g = split_blocks(w, h, rows, cols);
    int area = 0;
    for (const auto& b : g.blocks) area += b.area();
    ASSERT_EQ(area, w * h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int owners = 0;
        for (const auto& b : g.blocks) owners += b.contains(x, y);
        ASSERT_EQ(owners, 1);
        ASSERT_TRUE(g.blocks[g.block_of(x, y)].contains(x, y));
      }
    }
  }
}

TEST(Coverage, Examples) {
  EXPECT_EQ(coverage(Mask(8, 8)), 0.0);
  EXPECT_EQ(coverage(Mask(8, 8, true)), 1.0);
  Mask half(720, 720);
  for (int y = 0; y < 360; ++y)
    for (int x = 0; x < 720; ++x) half.set(x, y, true);
  EXPECT_EQ(half.count(), 259200u);
  EXPECT_EQ(coverage(half), 0.5);
}

TEST(Coverage, DependsOnlyOnCount) {
  std::mt19937 rng(9);
  Mask a(50, 40);
  for (int k = 0; k < 700; ++k) a.set(static_cast<int>(rng() % 50), static_cast<int>(rng() % 40), true);
  std::vector<std::uint8_t> bits(a.bits().begin(), a.bits().end());
  std::shuffle(bits.begin(), bits.end(), rng);
  Mask b(50, 40);
  for (int i = 0; i < 2000; ++i) b.set(i % 50, i / 50, bits[static_cast<std::size_t>(i)] != 0);
  EXPECT_EQ(coverage(a), coverage(b));
}

TEST(Png, RoundTrip) {
  RgbImage img(13, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 13; ++x) img.set(x, y, Rgb{static_cast<std::uint8_t>(x * 19), static_cast<std::uint8_t>(y * 31), 7});
  EXPECT_EQ(decode_png_rgb(encode_png(img)), img);

  Mask m(9, 5);
  m.set(1, 1, true);
  m.set(8, 4, true);
  EXPECT_EQ(decode_png_mask(encode_png(m)), m);
  EXPECT_THROW(decode_png_rgb("not a png"), Error);
}

TEST(Png, MaskIsGrayWith255ForCloth) {
  Mask m(2, 1);
  m.set(1, 0, true);
  const std::string png = encode_png(m);
  const RgbImage rgb = decode_png_rgb(png);
  EXPECT_EQ(rgb.at(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(rgb.at(1, 0), (Rgb{255, 255, 255}));
}
