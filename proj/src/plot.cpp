// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/plot.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include "dbt/error.hpp"

namespace dbt {

namespace {

// Dark purple -> red -> pale yellow.
constexpr std::array<std::array<double, 3>, 5> kStops = {{
    {0.0, 0.0, 4.0},
    {81.0, 18.0, 124.0},
    {183.0, 55.0, 121.0},
    {252.0, 137.0, 97.0},
    {252.0, 253.0, 191.0},
}};

std::array<std::uint8_t, 3> colour(double v) {
  v = std::clamp(v, 0.0, 1.0) * (kStops.size() - 1);
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(v), kStops.size() - 2);
  const double t = v - static_cast<double>(i);
  std::array<std::uint8_t, 3> c{};
  for (int k = 0; k < 3; ++k)
    c[k] = static_cast<std::uint8_t>(
        std::lround(kStops[i][k] + t * (kStops[i + 1][k] - kStops[i][k])));
  return c;
}

}  // namespace

Image render_spectrograms(const std::vector<Waveform>& panels,
                          const StftConfig& stft_cfg, const PlotOptions& opts) {
  require(!panels.empty(), ErrorCode::kInvalidArgument, "plot: nothing to draw");
  require(opts.range_db > 0.0 && opts.row_scale >= 1, ErrorCode::kInvalidArgument,
          "plot: invalid options");
  std::vector<Tensor> db;
  double peak = -std::numeric_limits<double>::infinity();
  for (const auto& w : panels) {
    Tensor m = stft(w, stft_cfg).magnitude();
    for (double& v : m.values()) {
      v = 20.0 * std::log10(v + 1e-8);
      peak = std::max(peak, v);
    }
    db.push_back(std::move(m));
  }
  const std::size_t bins = stft_cfg.bins();
  Image img;
  img.height = bins * opts.row_scale;
  for (const auto& m : db) img.width += m.dim(0);
  img.width += opts.gap * (db.size() - 1);
  img.rgb.assign(img.width * img.height * 3, 255);
  std::size_t x0 = 0;
  for (const auto& m : db) {
    const std::size_t frames = m.dim(0);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t f = 0; f < bins; ++f) {
        const auto c = colour((m[t * bins + f] - (peak - opts.range_db)) / opts.range_db);
        for (std::size_t r = 0; r < opts.row_scale; ++r) {
          const std::size_t y = img.height - 1 - (f * opts.row_scale + r);
          std::uint8_t* px = &img.rgb[(y * img.width + x0 + t) * 3];
          std::copy(c.begin(), c.end(), px);
        }
      }
    x0 += frames + opts.gap;
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  require(img.width > 0 && img.height > 0 && img.rgb.size() == img.width * img.height * 3,
          ErrorCode::kInvalidArgument, "png: malformed image");
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  require(fp != nullptr, ErrorCode::kIo, "cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::kIo, "png: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::kIo, "png: write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(&img.rgb[y * img.width * 3]));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace dbt
