#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "s2g/audio.hpp"
#include "support/fixtures.hpp"

namespace s2g {
namespace {

std::vector<float> tone(double hz, double seconds, std::uint32_t rate, double amp = 0.5) {
  std::vector<float> s(static_cast<std::size_t>(seconds * rate));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(amp * std::sin(2.0 * std::numbers::pi * hz * static_cast<double>(i) / rate));
  }
  return s;
}

TEST(Wav, FloatRoundTripIsExact) {
  testing::TempDir tmp;
  const auto samples = tone(440.0, 0.25, 22050);
  write_wav(tmp / "a.wav", samples, 22050, WavEncoding::kFloat32);
  const WavData back = load_wav(tmp / "a.wav");
  EXPECT_EQ(back.sample_rate, 22050u);
  EXPECT_EQ(back.samples, samples);
}

TEST(Wav, Pcm16RoundTripWithinQuantization) {
  testing::TempDir tmp;
  const auto samples = tone(440.0, 0.1, 16000);
  write_wav(tmp / "a.wav", samples, 16000, WavEncoding::kPcm16);
  const WavData back = load_wav(tmp / "a.wav");
  ASSERT_EQ(back.samples.size(), samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) EXPECT_NEAR(back.samples[i], samples[i], 1.0 / 32767.0);
}

TEST(Wav, StereoIsAveraged) {
  testing::TempDir tmp;
  const std::vector<float> interleaved = {0.5f, -0.5f, 0.25f, 0.75f};
  write_wav(tmp / "s.wav", interleaved, 8000, WavEncoding::kFloat32, 2);
  const WavData back = load_wav(tmp / "s.wav");
  EXPECT_EQ(back.samples, (std::vector<float>{0.0f, 0.5f}));
}

TEST(Wav, DistinctErrors) {
  auto kind_of = [](std::vector<std::uint8_t> bytes) {
    try {
      parse_wav(bytes);
    } catch (const WavError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error";
    return WavErrorKind::kEmptyFile;
  };
  EXPECT_EQ(kind_of({}), WavErrorKind::kEmptyFile);
  EXPECT_EQ(kind_of({'R', 'I', 'F', 'F'}), WavErrorKind::kTruncatedHeader);
  EXPECT_EQ(kind_of({'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'}), WavErrorKind::kNotRiffWave);

  testing::TempDir tmp;
  write_wav(tmp / "a.wav", tone(100.0, 0.01, 8000), 8000);
  const std::string text = testing::read_file(tmp / "a.wav");
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  auto truncated = bytes;
  truncated.resize(bytes.size() - 6);
  EXPECT_EQ(kind_of(truncated), WavErrorKind::kTruncatedData);
  auto codec = bytes;
  codec[20] = 7;  // format tag
  EXPECT_EQ(kind_of(codec), WavErrorKind::kUnsupportedCodec);
  EXPECT_THROW(load_wav(tmp / "missing.wav"), IoError);
}

TEST(Resample, IdentityAndLength) {
  const auto s = tone(200.0, 0.5, 8000);
  EXPECT_EQ(resample_linear(s, 8000, 8000), s);
  const auto up = resample_linear(s, 8000, 16000);
  EXPECT_NEAR(static_cast<double>(up.size()), 8000.0, 2.0);
  EXPECT_THROW(resample_linear(s, 0, 16000), InvalidArgument);
}

TEST(Chunking, SplitsIntoTwoSecondChunks) {
  const std::vector<float> s(5 * kDefaultSampleRate, 0.1f);
  const auto chunks = chunk_stream(s, kDefaultSampleRate);
  ASSERT_EQ(chunks.size(), 3u);
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    EXPECT_EQ(chunks[i].id, i + 1);
    EXPECT_EQ(chunks[i].samples.size(), 32000u);
    EXPECT_DOUBLE_EQ(chunks[i].start_seconds(), 2.0 * static_cast<double>(i));
  }
  EXPECT_FALSE(chunks[1].padded);
  EXPECT_TRUE(chunks[2].padded);
  EXPECT_EQ(chunks[2].valid_samples, 16000u);
  EXPECT_EQ(chunks[2].samples.back(), 0.0f);
}

TEST(Chunking, ExactMultipleHasNoPadding) {
  const std::vector<float> s(4 * kDefaultSampleRate, 0.0f);
  const auto chunks = chunk_stream(s, kDefaultSampleRate);
  ASSERT_EQ(chunks.size(), 2u);
  EXPECT_FALSE(chunks[1].padded);
}

TEST(Chunking, ClipsAndChecksRate) {
  const std::vector<float> s = {2.0f, -3.0f};
  const auto chunks = chunk_stream(s, kDefaultSampleRate);
  EXPECT_EQ(chunks[0].samples[0], 1.0f);
  EXPECT_EQ(chunks[0].samples[1], -1.0f);
  EXPECT_THROW(chunk_stream(s, 44100), InvalidArgument);
}

TEST(Mel, ShapeOfATwoSecondChunk) {
  const auto chunks = chunk_stream(tone(300.0, 2.0, kDefaultSampleRate), kDefaultSampleRate);
  const FeatureSequence f = mel_features(chunks[0]);
  EXPECT_EQ(f.frames(), 198u);
  EXPECT_EQ(f.bands(), 64u);
  EXPECT_DOUBLE_EQ(f.frame_hop, 0.01);
  EXPECT_EQ(f.chunk_id, 1u);
}

TEST(Mel, MatchesNaiveDft) {
  const MelExtractor mel;
  const auto samples = tone(523.0, 0.1, kDefaultSampleRate, 0.3);
  const FeatureSequence f = mel.extract(samples);
  const auto& cfg = mel.config();
  const std::size_t bins = mel.bins();
  for (std::size_t frame : {0u, 3u}) {
    std::vector<double> power(bins);
    for (std::size_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      for (std::size_t n = 0; n < cfg.window; ++n) {
        const double x = static_cast<double>(samples[frame * cfg.hop + n]) * mel.window()[n];
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k * n) / static_cast<double>(cfg.fft_size);
        re += x * std::cos(a);
        im += x * std::sin(a);
      }
      power[k] = re * re + im * im;
    }
    // Float FFT roundoff dominates bands far below the peak, so compare
    // linear energies against the frame's peak.
    std::vector<double> energy(cfg.bands, 0.0);
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      for (std::size_t k = 0; k < bins; ++k) energy[b] += mel.filterbank()[b * bins + k] * power[k];
    }
    const double peak = *std::max_element(energy.begin(), energy.end());
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      const double expected = std::max(energy[b], static_cast<double>(cfg.log_floor));
      const double got = std::exp(static_cast<double>(f.values[frame * cfg.bands + b]));
      EXPECT_NEAR(got, expected, 1e-3 * expected + 1e-6 * peak) << "band " << b;
    }
  }
}

TEST(Mel, PeakBandFollowsTone) {
  const MelExtractor mel;
  auto peak_hz = [&](double hz) {
    const FeatureSequence f = mel.extract(tone(hz, 0.2, kDefaultSampleRate));
    std::size_t best = 0;
    for (std::size_t b = 1; b < f.bands(); ++b) {
      if (f.values[5 * f.bands() + b] > f.values[5 * f.bands() + best]) best = b;
    }
    const double lo = hz_to_mel(mel.config().f_min), hi = hz_to_mel(mel.config().f_max);
    return mel_to_hz(lo + (hi - lo) * static_cast<double>(best + 1) / static_cast<double>(f.bands() + 1));
  };
  for (double hz : {250.0, 1000.0, 3000.0}) EXPECT_NEAR(peak_hz(hz) / hz, 1.0, 0.15) << hz;
}

TEST(Mel, SilenceHitsTheFloor) {
  const MelExtractor mel;
  const FeatureSequence f = mel.extract(std::vector<float>(4000, 0.0f));
  for (float v : f.values.data()) EXPECT_FLOAT_EQ(v, std::log(mel.config().log_floor));
}

TEST(Mel, ConfigValidation) {
  MelConfig c;
  c.hop = 0;
  EXPECT_THROW(MelExtractor{c}, InvalidArgument);
  c = {};
  c.fft_size = 256;
  EXPECT_THROW(MelExtractor{c}, InvalidArgument);
  EXPECT_THROW(MelExtractor{}.extract(std::vector<float>(100, 0.0f)), InvalidArgument);
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
}

}  // namespace
}  // namespace s2g
