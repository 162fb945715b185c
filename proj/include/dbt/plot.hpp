// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dbt/signal.hpp"

namespace dbt {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, top row first
};

struct PlotOptions {
  double range_db = 80.0;  // dynamic range below the loudest bin
  std::size_t row_scale = 2;
  std::size_t gap = 8;
};

// Log-magnitude spectrograms side by side, low frequencies at the bottom,
// sharing one colour scale.
Image render_spectrograms(const std::vector<Waveform>& panels,
                          const StftConfig& stft_cfg = {},
                          const PlotOptions& opts = {});

void write_png(const std::filesystem::path& path, const Image& img);

}  // namespace dbt
