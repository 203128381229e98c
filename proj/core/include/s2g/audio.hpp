#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "s2g/error.hpp"
#include "s2g/tensor.hpp"

namespace s2g {

inline constexpr std::uint32_t kDefaultSampleRate = 16000;
inline constexpr double kChunkSeconds = 2.0;

// ---- WAV ---------------------------------------------------------------------

enum class WavErrorKind {
  kEmptyFile,
  kNotRiffWave,
  kTruncatedHeader,
  kUnsupportedCodec,
  kTruncatedData,
  kNoSamples,
};

class WavError : public IoError {
 public:
  WavError(WavErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  WavErrorKind kind() const noexcept { return kind_; }

 private:
  WavErrorKind kind_;
};

enum class WavEncoding { kPcm16, kFloat32 };

struct WavData {
  std::vector<float> samples;  // mono, [-1, 1]
  std::uint32_t sample_rate = 0;
};

// Reads 16-bit PCM or 32-bit float WAV, mono or stereo; stereo is averaged.
WavData load_wav(const std::filesystem::path& path);
WavData parse_wav(std::span<const std::uint8_t> bytes);
void write_wav(const std::filesystem::path& path, std::span<const float> samples, std::uint32_t sample_rate,
               WavEncoding encoding = WavEncoding::kFloat32, std::uint16_t channels = 1);

// Linear-interpolation resampler; identity when the rates match.
std::vector<float> resample_linear(std::span<const float> samples, std::uint32_t from_rate, std::uint32_t to_rate);

// ---- chunking ------------------------------------------------------------------

struct AudioChunk {
  std::vector<float> samples;
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::uint64_t id = 0;  // 1-based sequence number
  bool padded = false;
  std::size_t valid_samples = 0;

  double start_seconds() const noexcept { return static_cast<double>(id - 1) * kChunkSeconds; }
};

std::size_t chunk_sample_count(std::uint32_t sample_rate) noexcept;

// Splits into consecutive non-overlapping 2 s chunks. A short tail is
// zero-padded and flagged.
std::vector<AudioChunk> chunk_stream(std::span<const float> samples, std::uint32_t sample_rate,
                                     std::uint32_t expected_rate = kDefaultSampleRate);

// ---- features ------------------------------------------------------------------

struct MelConfig {
  std::uint32_t sample_rate = kDefaultSampleRate;
  std::size_t window = 400;
  std::size_t hop = 160;
  std::size_t bands = 64;
  std::size_t fft_size = 512;
  float f_min = 0.0f;
  float f_max = 8000.0f;
  float log_floor = 1e-10f;
};

// F frames x M bands of log mel energies.
struct FeatureSequence {
  Tensor values;
  double frame_hop = 0.01;
  std::uint64_t chunk_id = 0;

  std::size_t frames() const { return values.dim(0); }
  std::size_t bands() const { return values.dim(1); }
};

std::size_t feature_frame_count(std::size_t samples, const MelConfig& config);

double hz_to_mel(double hz) noexcept;
double mel_to_hz(double mel) noexcept;

// Log-mel front end. Holds the FFT plan, window and filterbank; safe to call
// from several threads once constructed.
class MelExtractor {
 public:
  explicit MelExtractor(MelConfig config = {});
  ~MelExtractor();
  MelExtractor(const MelExtractor&) = delete;
  MelExtractor& operator=(const MelExtractor&) = delete;

  FeatureSequence operator()(const AudioChunk& chunk) const;
  FeatureSequence extract(std::span<const float> samples, std::uint64_t chunk_id = 0) const;

  const MelConfig& config() const noexcept { return config_; }
  const std::vector<float>& window() const noexcept { return window_; }
  // bands x (fft_size / 2 + 1) triangular weights.
  const std::vector<float>& filterbank() const noexcept { return filterbank_; }
  std::size_t bins() const noexcept { return config_.fft_size / 2 + 1; }

 private:
  MelConfig config_;
  std::vector<float> window_;
  std::vector<float> filterbank_;
  struct Plan;
  std::unique_ptr<Plan> plan_;
};

FeatureSequence mel_features(const AudioChunk& chunk, const MelConfig& config = {});

}  // namespace s2g
