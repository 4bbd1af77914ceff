#pragma once

// 8-bit RGB rasters: PNG I/O, cropping, bilinear resize, luminance histogram
// equalization and CutMix.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "stagelab/error.hpp"
#include "stagelab/rng.hpp"

namespace stagelab {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

class RgbImage {
 public:
  RgbImage() = default;
  RgbImage(int width, int height, Rgb fill = {}) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw DataError("image dimensions must be positive");
    pixels_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return pixels_.size(); }
  bool empty() const noexcept { return pixels_.empty(); }

  Rgb& at(int x, int y) { return pixels_[index(x, y)]; }
  const Rgb& at(int x, int y) const { return pixels_[index(x, y)]; }

  const std::vector<Rgb>& pixels() const noexcept { return pixels_; }
  std::vector<Rgb>& pixels() noexcept { return pixels_; }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

// ---------------------------------------------------------------------------
// PNG

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

inline void write_png(const RgbImage& image, const std::filesystem::path& path) {
  if (image.empty()) throw DataError("cannot write an empty image");
  detail::FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoError("cannot open '" + path.string() + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                            detail::png_warning_fn);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info) throw IoError("png: out of memory");

  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  static_assert(sizeof(Rgb) == 3);
  for (int y = 0; y < image.height(); ++y) {
    auto* row = reinterpret_cast<png_bytep>(const_cast<Rgb*>(&image.at(0, y)));
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
}

// Reads an 8-bit RGB PNG. Other colour types are rejected rather than converted.
inline RgbImage read_png(const std::filesystem::path& path) {
  detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("'" + path.string() + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn,
                                           detail::png_warning_fn);
  if (!png) throw IoError("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info) throw IoError("png: out of memory");

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto width = png_get_image_width(png, info);
  const auto height = png_get_image_height(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8)
    throw IoError("'" + path.string() + "' is not a 24-bit RGB PNG");
  if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE)
    throw IoError("'" + path.string() + "' is interlaced");

  RgbImage image(static_cast<int>(width), static_cast<int>(height));
  for (int y = 0; y < image.height(); ++y) png_read_row(png, reinterpret_cast<png_bytep>(&image.at(0, y)), nullptr);
  png_read_end(png, nullptr);
  return image;
}

// Empty string when the file is an RGB PNG of the given size, otherwise a
// description of the problem.
inline std::string check_png_file(const std::filesystem::path& path, int width, int height) {
  try {
    const RgbImage img = read_png(path);
    if (img.width() != width || img.height() != height)
      return "image file is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
             ", declared " + std::to_string(width) + "x" + std::to_string(height);
    return {};
  } catch (const Error& e) {
    return e.what();
  }
}

// ---------------------------------------------------------------------------
// Geometry

// Pixel-aligned half-open rectangle.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const noexcept { return std::max(0, x1 - x0); }
  int height() const noexcept { return std::max(0, y1 - y0); }
  long long area() const noexcept { return static_cast<long long>(width()) * height(); }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

// Covers every pixel the (possibly fractional) box touches, clipped to the image.
inline PixelRect covering_rect(double x_min, double y_min, double x_max, double y_max, int width, int height) {
  PixelRect r;
  r.x0 = std::clamp(static_cast<int>(std::floor(x_min)), 0, width);
  r.y0 = std::clamp(static_cast<int>(std::floor(y_min)), 0, height);
  r.x1 = std::clamp(static_cast<int>(std::ceil(x_max)), 0, width);
  r.y1 = std::clamp(static_cast<int>(std::ceil(y_max)), 0, height);
  return r;
}

inline RgbImage crop(const RgbImage& image, const PixelRect& rect) {
  if (rect.area() <= 0) throw DataError("crop region has zero area");
  if (rect.x0 < 0 || rect.y0 < 0 || rect.x1 > image.width() || rect.y1 > image.height())
    throw DataError("crop region exceeds image bounds");
  RgbImage out(rect.width(), rect.height());
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) out.at(x, y) = image.at(rect.x0 + x, rect.y0 + y);
  return out;
}

inline std::uint8_t clamp_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Bilinear resampling with pixel-centre alignment; identity when sizes match.
inline RgbImage resize_bilinear(const RgbImage& src, int width, int height) {
  if (src.empty()) throw DataError("cannot resize an empty image");
  if (width <= 0 || height <= 0) throw DataError("target size must be positive");
  if (src.width() == width && src.height() == height) return src;

  RgbImage out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      auto lerp = [&](auto channel) {
        const double top = (1 - wx) * channel(src.at(x0, y0)) + wx * channel(src.at(x1, y0));
        const double bottom = (1 - wx) * channel(src.at(x0, y1)) + wx * channel(src.at(x1, y1));
        return clamp_byte((1 - wy) * top + wy * bottom);
      };
      out.at(x, y) = {lerp([](const Rgb& p) { return p.r; }), lerp([](const Rgb& p) { return p.g; }),
                      lerp([](const Rgb& p) { return p.b; })};
    }
  }
  return out;
}

// ITU-R BT.601 luma.
inline double luminance(const Rgb& p) noexcept { return 0.299 * p.r + 0.587 * p.g + 0.114 * p.b; }

// Histogram equalization of the luminance channel. Each pixel's RGB is scaled
// by the luminance gain so chromaticity is preserved. A single-level image has
// a degenerate CDF and is returned unchanged.
inline RgbImage equalize_luminance(const RgbImage& src) {
  if (src.empty()) throw DataError("cannot equalize an empty image");
  std::array<std::size_t, 256> hist{};
  std::vector<std::uint8_t> levels(src.pixel_count());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    levels[i] = clamp_byte(luminance(src.pixels()[i]));
    ++hist[levels[i]];
  }
  std::array<std::size_t, 256> cdf{};
  std::size_t running = 0;
  for (std::size_t v = 0; v < 256; ++v) cdf[v] = running += hist[v];
  std::size_t cdf_min = 0;
  for (std::size_t v = 0; v < 256; ++v)
    if (hist[v] != 0) {
      cdf_min = cdf[v];
      break;
    }
  const std::size_t n = src.pixel_count();
  if (n == cdf_min) return src;

  std::array<double, 256> mapped{};
  for (std::size_t v = 0; v < 256; ++v)
    mapped[v] = cdf[v] < cdf_min ? 0.0
                                 : std::round(static_cast<double>(cdf[v] - cdf_min) /
                                              static_cast<double>(n - cdf_min) * 255.0);

  RgbImage out = src;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const Rgb& p = src.pixels()[i];
    const double target = mapped[levels[i]];
    const double y = luminance(p);
    if (y <= 0.0) {
      const auto t = clamp_byte(target);
      out.pixels()[i] = {t, t, t};
      continue;
    }
    const double gain = target / y;
    out.pixels()[i] = {clamp_byte(p.r * gain), clamp_byte(p.g * gain), clamp_byte(p.b * gain)};
  }
  return out;
}

// ---------------------------------------------------------------------------
// CutMix

struct MixedPatch {
  RgbImage image;
  double label = 0.0;
  double lambda = 1.0;  // fraction of pixels kept from the first patch
  PixelRect pasted;
};

// Pastes `region` of `b` into `a`. lambda = 1 - pasted / total pixels and the
// label mixes linearly: lambda * label_a + (1 - lambda) * label_b.
inline MixedPatch cutmix_region(const RgbImage& a, double label_a, const RgbImage& b, double label_b,
                                PixelRect region) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DataError("cutmix requires patches of identical dimensions");
  region.x0 = std::clamp(region.x0, 0, a.width());
  region.x1 = std::clamp(region.x1, region.x0, a.width());
  region.y0 = std::clamp(region.y0, 0, a.height());
  region.y1 = std::clamp(region.y1, region.y0, a.height());

  MixedPatch out{a, label_a, 1.0, region};
  for (int y = region.y0; y < region.y1; ++y)
    for (int x = region.x0; x < region.x1; ++x) out.image.at(x, y) = b.at(x, y);
  const double total = static_cast<double>(a.pixel_count());
  out.lambda = 1.0 - static_cast<double>(region.area()) / total;
  out.label = out.lambda * label_a + (1.0 - out.lambda) * label_b;
  return out;
}

// Random box: side lengths scale with sqrt(1 - u), u ~ U(0,1), centre uniform,
// clipped to the patch.
inline MixedPatch cutmix(const RgbImage& a, double label_a, const RgbImage& b, double label_b, Rng& rng) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DataError("cutmix requires patches of identical dimensions");
  const double cut = std::sqrt(1.0 - rng.uniform());
  const int cut_w = static_cast<int>(a.width() * cut);
  const int cut_h = static_cast<int>(a.height() * cut);
  const int cx = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.width())));
  const int cy = static_cast<int>(rng.below(static_cast<std::uint64_t>(a.height())));
  PixelRect region{cx - cut_w / 2, cy - cut_h / 2, cx + (cut_w + 1) / 2, cy + (cut_h + 1) / 2};
  return cutmix_region(a, label_a, b, label_b, region);
}

}  // namespace stagelab
