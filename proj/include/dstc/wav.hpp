#pragma once

// Minimal RIFF/WAVE reader and writer for single-channel 16-bit PCM and
// 32-bit IEEE float audio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dstc/error.hpp"

namespace dstc {

struct Wav {
  int rate_hz = 0;
  std::vector<float> samples;

  double duration_s() const { return static_cast<double>(samples.size()) / rate_hz; }
};

enum class WavEncoding { pcm16, float32 };

namespace detail {

inline std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}
inline std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

inline void put_le(std::vector<unsigned char>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

}  // namespace detail

inline Wav read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file");
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const std::uint32_t len = detail::le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > buf.size()) throw FormatError(where + "truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (len < 16) throw FormatError(where + "short fmt chunk");
      format = detail::le16(chunk + 8);
      channels = detail::le16(chunk + 10);
      rate = detail::le32(chunk + 12);
      bits = detail::le16(chunk + 22);
      if (format == 0xFFFE && len >= 40) format = detail::le16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_len = len;
    }
    pos = body + len + (len & 1u);
  }
  if (format == 0 || data == nullptr) throw FormatError(where + "missing fmt or data chunk");
  if (channels != 1) {
    throw FormatError(where + "expected mono audio, found " + std::to_string(channels) +
                      " channels");
  }
  if (rate == 0) throw FormatError(where + "sample rate is zero");

  Wav wav;
  wav.rate_hz = static_cast<int>(rate);
  if (format == 1 && bits == 16) {
    wav.samples.resize(data_len / 2);
    for (std::size_t i = 0; i < wav.samples.size(); ++i) {
      const auto v = static_cast<std::int16_t>(detail::le16(data + 2 * i));
      wav.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == 3 && bits == 32) {
    wav.samples.resize(data_len / 4);
    for (std::size_t i = 0; i < wav.samples.size(); ++i) {
      const std::uint32_t u = detail::le32(data + 4 * i);
      std::memcpy(&wav.samples[i], &u, 4);
    }
  } else {
    throw FormatError(where + "unsupported encoding (format " + std::to_string(format) +
                      ", " + std::to_string(bits) + " bits); need 16-bit PCM or 32-bit float");
  }
  return wav;
}

inline void write_wav(const std::filesystem::path& path, const Wav& wav,
                      WavEncoding encoding = WavEncoding::pcm16) {
  const bool pcm = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_len = static_cast<std::uint32_t>(wav.samples.size() * bits / 8);
  std::vector<unsigned char> out;
  out.reserve(44 + data_len);
  auto tag = [&](const char* s) { out.insert(out.end(), s, s + 4); };
  tag("RIFF");
  detail::put_le(out, 36 + data_len, 4);
  tag("WAVE");
  tag("fmt ");
  detail::put_le(out, 16, 4);
  detail::put_le(out, pcm ? 1 : 3, 2);
  detail::put_le(out, 1, 2);
  detail::put_le(out, static_cast<std::uint32_t>(wav.rate_hz), 4);
  detail::put_le(out, static_cast<std::uint32_t>(wav.rate_hz) * bits / 8, 4);
  detail::put_le(out, bits / 8, 2);
  detail::put_le(out, bits, 2);
  tag("data");
  detail::put_le(out, data_len, 4);
  for (float s : wav.samples) {
    if (pcm) {
      const float c = std::max(-1.0f, std::min(1.0f, s));
      const auto v = static_cast<std::int16_t>(std::lround(c * 32767.0f));
      detail::put_le(out, static_cast<std::uint16_t>(v), 2);
    } else {
      std::uint32_t u;
      std::memcpy(&u, &s, 4);
      detail::put_le(out, u, 4);
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

}  // namespace dstc
