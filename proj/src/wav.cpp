// Copyright 2026 The dbtnet Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "dbt/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dbt/error.hpp"

namespace dbt {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV IO assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void put_le(std::string& out, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.append(b, sizeof(T));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  require(buf.size() >= 12 && std::memcmp(buf.data(), "RIFF", 4) == 0 &&
              std::memcmp(buf.data() + 8, "WAVE", 4) == 0,
          ErrorCode::kFormat, where + "not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint8_t* hdr = buf.data() + pos;
    const std::uint32_t len = read_le<std::uint32_t>(hdr + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, buf.size() - body);
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(avail >= 16, ErrorCode::kFormat, where + "short fmt chunk");
      format = read_le<std::uint16_t>(hdr + 8);
      channels = read_le<std::uint16_t>(hdr + 10);
      rate = read_le<std::uint32_t>(hdr + 12);
      bits = read_le<std::uint16_t>(hdr + 22);
      if (format == kFormatExtensible && avail >= 26)
        format = read_le<std::uint16_t>(hdr + 32);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = hdr + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1u);
  }
  require(format != 0, ErrorCode::kFormat, where + "missing fmt chunk");
  require(data != nullptr, ErrorCode::kFormat, where + "missing data chunk");
  require(channels == 1, ErrorCode::kUnsupported,
          where + "only mono audio is supported, got " +
              std::to_string(channels) + " channels");

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    w.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] = read_le<std::int16_t>(data + 2 * i) / 32768.0;
  } else if (format == kFormatFloat && bits == 32) {
    w.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      const float v = read_le<float>(data + 4 * i);
      require(std::isfinite(v), ErrorCode::kFormat,
              where + "non-finite sample");
      w.samples[i] = v;
    }
  } else {
    fail(ErrorCode::kUnsupported,
         where + "unsupported sample format " + std::to_string(format) + "/" +
             std::to_string(bits) + " bit (need PCM16 or float32)");
  }
  return w;
}

Waveform read_wav(const std::filesystem::path& path, int expected_rate) {
  Waveform w = read_wav(path);
  require(w.sample_rate == expected_rate, ErrorCode::kUnsupported,
          path.string() + ": sample rate " + std::to_string(w.sample_rate) +
              " Hz, expected " + std::to_string(expected_rate) +
              " Hz (resampling is not supported)");
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavFormat format) {
  const bool pcm = format == WavFormat::kPcm16;
  const std::uint16_t bytes = pcm ? 2 : 4;
  const auto data_len = static_cast<std::uint32_t>(w.size() * bytes);
  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_le<std::uint32_t>(out, 36 + data_len);
  out += "WAVEfmt ";
  put_le<std::uint32_t>(out, 16);
  put_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  put_le<std::uint16_t>(out, 1);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * bytes);
  put_le<std::uint16_t>(out, bytes);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(bytes * 8));
  out += "data";
  put_le<std::uint32_t>(out, data_len);
  for (double v : w.samples) {
    if (pcm) {
      const double q = std::clamp(std::nearbyint(v * 32768.0), -32768.0, 32767.0);
      put_le<std::int16_t>(out, static_cast<std::int16_t>(q));
    } else {
      put_le<float>(out, static_cast<float>(v));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), ErrorCode::kIo, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace dbt
