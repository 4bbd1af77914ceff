#include <gtest/gtest.h>

#include "stagelab/image.hpp"
#include "stagelab/rng.hpp"
#include "support.hpp"

namespace stagelab {
namespace {

RgbImage filled(int w, int h, Rgb c) { return RgbImage(w, h, c); }

TEST(Png, RoundTrip) {
  testing::TempDir dir;
  RgbImage img(7, 5);
  Rng rng(1);
  for (auto& p : img.pixels())
    p = {static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
         static_cast<std::uint8_t>(rng.below(256))};
  write_png(img, dir / "a.png");
  EXPECT_EQ(read_png(dir / "a.png"), img);
  EXPECT_TRUE(check_png_file(dir / "a.png", 7, 5).empty());
  EXPECT_FALSE(check_png_file(dir / "a.png", 8, 5).empty());
  EXPECT_FALSE(check_png_file(dir / "missing.png", 7, 5).empty());
}

TEST(Png, GarbageIsIoError) {
  testing::TempDir dir;
  write_text_atomic(dir / "bad.png", "not a png");
  EXPECT_THROW(read_png(dir / "bad.png"), IoError);
}

TEST(Crop, CoveringRectRoundsOutwardAndClamps) {
  EXPECT_EQ(covering_rect(1.2, 2.7, 5.1, 6.0, 100, 100), (PixelRect{1, 2, 6, 6}));
  EXPECT_EQ(covering_rect(90, 90, 120, 130, 100, 100), (PixelRect{90, 90, 100, 100}));
}

TEST(Crop, ExtractsPixels) {
  RgbImage img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y) = {static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 0};
  const auto c = crop(img, {1, 2, 3, 4});
  ASSERT_EQ(c.width(), 2);
  ASSERT_EQ(c.height(), 2);
  EXPECT_EQ(c.at(0, 0), (Rgb{1, 2, 0}));
  EXPECT_EQ(c.at(1, 1), (Rgb{2, 3, 0}));
  EXPECT_THROW(crop(img, {0, 0, 5, 2}), DataError);
  EXPECT_THROW(crop(img, {2, 2, 2, 3}), DataError);
}

TEST(Resize, ConstantImageStaysConstant) {
  const auto r = resize_bilinear(filled(13, 7, {10, 20, 30}), 32, 32);
  for (const auto& p : r.pixels()) EXPECT_EQ(p, (Rgb{10, 20, 30}));
}

TEST(Equalize, SingleLevelUnchanged) {
  const auto img = filled(8, 8, {90, 90, 90});
  EXPECT_EQ(equalize_luminance(img), img);
}

TEST(Equalize, TwoGreyLevelsStretchToFullRange) {
  RgbImage img(4, 1, {50, 50, 50});
  img.at(2, 0) = img.at(3, 0) = {100, 100, 100};
  const auto e = equalize_luminance(img);
  EXPECT_EQ(e.at(0, 0), (Rgb{0, 0, 0}));
  EXPECT_EQ(e.at(3, 0), (Rgb{255, 255, 255}));
}

TEST(Equalize, PreservesLuminanceOrder) {
  RgbImage img(16, 16);
  Rng rng(3);
  for (auto& p : img.pixels()) {
    const auto v = static_cast<std::uint8_t>(40 + rng.below(60));
    p = {v, v, v};
  }
  const auto e = equalize_luminance(img);
  for (std::size_t i = 0; i < img.pixel_count(); ++i)
    for (std::size_t j = 0; j < img.pixel_count(); j += 17)
      if (img.pixels()[i].r < img.pixels()[j].r) {
        EXPECT_LE(e.pixels()[i].r, e.pixels()[j].r);
      }
}

TEST(CutMix, QuarterRegionGivesLambdaThreeQuarters) {
  const auto a = filled(32, 32, {255, 0, 0});
  const auto b = filled(32, 32, {0, 0, 255});
  const auto m = cutmix_region(a, 1.0, b, 0.0, {8, 8, 24, 24});
  EXPECT_DOUBLE_EQ(m.lambda, 0.75);
  EXPECT_DOUBLE_EQ(m.label, 0.75);
  int from_b = 0;
  for (const auto& p : m.image.pixels()) from_b += p.b == 255;
  EXPECT_EQ(from_b, 256);
  EXPECT_EQ(m.image.at(8, 8), (Rgb{0, 0, 255}));
  EXPECT_EQ(m.image.at(7, 8), (Rgb{255, 0, 0}));
}

TEST(CutMix, RandomBoxLabelMatchesPixelShare) {
  const auto a = filled(20, 20, {255, 0, 0});
  const auto b = filled(20, 20, {0, 0, 255});
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto m = cutmix(a, 0.0, b, 1.0, rng);
    double share = 0;
    for (const auto& p : m.image.pixels()) share += p.b == 255;
    share /= 400.0;
    EXPECT_NEAR(1.0 - m.lambda, share, 1e-12);
    EXPECT_NEAR(m.label, share, 1e-12);
  }
}

TEST(CutMix, SizeMismatchThrows) {
  EXPECT_THROW(cutmix_region(filled(4, 4, {}), 0, filled(5, 4, {}), 1, {0, 0, 1, 1}), DataError);
}

}  // namespace
}  // namespace stagelab
