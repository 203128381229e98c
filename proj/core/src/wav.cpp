#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>

#include <fmt/format.h>

#include "s2g/audio.hpp"

namespace s2g {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
         (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

struct Format {
  std::uint16_t tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

WavData parse_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw WavError(WavErrorKind::kEmptyFile, "wav: file is empty");
  if (bytes.size() < 12) throw WavError(WavErrorKind::kTruncatedHeader, "wav: file shorter than RIFF header");
  if (!tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
    throw WavError(WavErrorKind::kNotRiffWave, "wav: missing RIFF/WAVE signature");
  }

  std::optional<Format> fmt_chunk;
  std::size_t pos = 12;
  while (true) {
    if (pos + 8 > bytes.size()) {
      throw WavError(WavErrorKind::kTruncatedHeader, fmt_chunk ? "wav: no data chunk before end of file"
                                                               : "wav: no fmt chunk before end of file");
    }
    const std::uint32_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (tag_is(bytes, pos, "fmt ")) {
      if (size < 16 || body + size > bytes.size()) throw WavError(WavErrorKind::kTruncatedHeader, "wav: fmt chunk truncated");
      Format f;
      f.tag = read_u16(bytes, body);
      f.channels = read_u16(bytes, body + 2);
      f.sample_rate = read_u32(bytes, body + 4);
      f.bits = read_u16(bytes, body + 14);
      if (f.tag == kFormatExtensible) {
        if (size < 40) throw WavError(WavErrorKind::kTruncatedHeader, "wav: extensible fmt chunk truncated");
        f.tag = read_u16(bytes, body + 24);
      }
      fmt_chunk = f;
    } else if (tag_is(bytes, pos, "data")) {
      if (!fmt_chunk) throw WavError(WavErrorKind::kTruncatedHeader, "wav: data chunk before fmt chunk");
      const Format f = *fmt_chunk;
      const bool pcm16 = f.tag == kFormatPcm && f.bits == 16;
      const bool float32 = f.tag == kFormatFloat && f.bits == 32;
      if (!pcm16 && !float32) {
        throw WavError(WavErrorKind::kUnsupportedCodec,
                       fmt::format("wav: unsupported codec (format tag {}, {} bits)", f.tag, f.bits));
      }
      if (f.channels != 1 && f.channels != 2) {
        throw WavError(WavErrorKind::kUnsupportedCodec, fmt::format("wav: {} channels not supported", f.channels));
      }
      if (f.sample_rate == 0) throw WavError(WavErrorKind::kTruncatedHeader, "wav: sample rate is zero");
      if (body + size > bytes.size()) {
        throw WavError(WavErrorKind::kTruncatedData,
                       fmt::format("wav: data chunk declares {} bytes, {} present", size, bytes.size() - body));
      }
      const std::size_t sample_bytes = pcm16 ? 2 : 4;
      const std::size_t frame_bytes = sample_bytes * f.channels;
      const std::size_t n_frames = size / frame_bytes;
      if (n_frames == 0) throw WavError(WavErrorKind::kNoSamples, "wav: data chunk holds no samples");

      WavData out;
      out.sample_rate = f.sample_rate;
      out.samples.resize(n_frames);
      for (std::size_t i = 0; i < n_frames; ++i) {
        float acc = 0.0f;
        for (std::size_t c = 0; c < f.channels; ++c) {
          const std::size_t at = body + i * frame_bytes + c * sample_bytes;
          float v;
          if (pcm16) {
            v = static_cast<float>(static_cast<std::int16_t>(read_u16(bytes, at))) / 32768.0f;
          } else {
            v = std::bit_cast<float>(read_u32(bytes, at));
            if (!std::isfinite(v)) v = 0.0f;
          }
          acc += v;
        }
        out.samples[i] = std::clamp(acc / static_cast<float>(f.channels), -1.0f, 1.0f);
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
}

WavData load_wav(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open wav file {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const WavError& e) {
    throw WavError(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, std::uint32_t sample_rate,
               WavEncoding encoding, std::uint16_t channels) {
  if (channels == 0 || samples.size() % channels != 0) throw InvalidArgument("write_wav: samples not a whole number of frames");
  const bool pcm = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, pcm ? kFormatPcm : kFormatFloat);
  put_u16(out, channels);
  put_u32(out, sample_rate);
  put_u32(out, sample_rate * channels * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(channels * (bits / 8)));
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (float s : samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    if (pcm) {
      const long q = std::lround(c * 32768.0f);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L))));
    } else {
      put_u32(out, std::bit_cast<std::uint32_t>(c));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(fmt::format("write to {} failed", path.string()));
}

}  // namespace s2g
