#include <cmath>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

#include "s2g/audio.hpp"

namespace s2g {

std::vector<float> resample_linear(std::span<const float> samples, std::uint32_t from_rate, std::uint32_t to_rate) {
  if (from_rate == 0 || to_rate == 0) throw InvalidArgument("resample_linear: sample rates must be positive");
  if (from_rate == to_rate || samples.empty()) return {samples.begin(), samples.end()};
  const std::size_t n_out = samples.size() * to_rate / from_rate;
  std::vector<float> out(n_out);
  const double step = static_cast<double>(from_rate) / static_cast<double>(to_rate);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double pos = static_cast<double>(j) * step;
    const auto i0 = static_cast<std::size_t>(pos);
    const std::size_t i1 = std::min(i0 + 1, samples.size() - 1);
    const auto frac = static_cast<float>(pos - static_cast<double>(i0));
    out[j] = (1.0f - frac) * samples[i0] + frac * samples[i1];
  }
  return out;
}

std::size_t chunk_sample_count(std::uint32_t sample_rate) noexcept {
  return static_cast<std::size_t>(std::llround(kChunkSeconds * static_cast<double>(sample_rate)));
}

std::vector<AudioChunk> chunk_stream(std::span<const float> samples, std::uint32_t sample_rate,
                                     std::uint32_t expected_rate) {
  if (sample_rate != expected_rate) {
    throw InvalidArgument(fmt::format("chunk_stream: sample rate {} Hz, configured for {} Hz", sample_rate, expected_rate));
  }
  const std::size_t n = chunk_sample_count(sample_rate);
  std::vector<AudioChunk> chunks;
  for (std::size_t start = 0; start < samples.size(); start += n) {
    AudioChunk c;
    c.sample_rate = sample_rate;
    c.id = chunks.size() + 1;
    c.valid_samples = std::min(n, samples.size() - start);
    c.padded = c.valid_samples < n;
    c.samples.assign(n, 0.0f);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(start), c.valid_samples, c.samples.begin());
    for (auto& v : c.samples) v = std::clamp(v, -1.0f, 1.0f);
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::size_t feature_frame_count(std::size_t samples, const MelConfig& config) {
  if (config.window > samples) {
    throw InvalidArgument(fmt::format("mel_features: window of {} samples longer than the {}-sample chunk",
                                      config.window, samples));
  }
  return (samples - config.window) / config.hop + 1;
}

double hz_to_mel(double hz) noexcept { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) noexcept { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

struct MelExtractor::Plan {
  fftwf_plan plan = nullptr;
};

MelExtractor::MelExtractor(MelConfig config) : config_(config), plan_(std::make_unique<Plan>()) {
  if (config_.bands == 0) throw InvalidArgument("mel config: need at least one band");
  if (config_.hop == 0) throw InvalidArgument("mel config: hop must be positive");
  if (config_.window < config_.hop) throw InvalidArgument("mel config: window must be at least the hop");
  if (config_.fft_size < config_.window) throw InvalidArgument("mel config: fft size smaller than window");
  if (!(config_.f_max > config_.f_min)) throw InvalidArgument("mel config: f_max must exceed f_min");

  window_.resize(config_.window);
  for (std::size_t i = 0; i < config_.window; ++i) {
    window_[i] = static_cast<float>(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                         static_cast<double>(config_.window)));
  }

  const std::size_t n_bins = bins();
  filterbank_.assign(config_.bands * n_bins, 0.0f);
  const double mel_lo = hz_to_mel(config_.f_min), mel_hi = hz_to_mel(config_.f_max);
  std::vector<double> edges(config_.bands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(config_.bands + 1));
  }
  for (std::size_t b = 0; b < config_.bands; ++b) {
    const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * config_.sample_rate / static_cast<double>(config_.fft_size);
      const double w = std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid));
      if (w > 0.0) filterbank_[b * n_bins + k] = static_cast<float>(w);
    }
  }

  std::lock_guard lock(planner_mutex());
  auto* in = fftwf_alloc_real(config_.fft_size);
  auto* out = fftwf_alloc_complex(n_bins);
  plan_->plan = fftwf_plan_dft_r2c_1d(static_cast<int>(config_.fft_size), in, out, FFTW_ESTIMATE);
  fftwf_free(in);
  fftwf_free(out);
  if (plan_->plan == nullptr) throw Error("fftw: could not create r2c plan");
}

MelExtractor::~MelExtractor() {
  if (plan_ && plan_->plan != nullptr) {
    std::lock_guard lock(planner_mutex());
    fftwf_destroy_plan(plan_->plan);
  }
}

FeatureSequence MelExtractor::operator()(const AudioChunk& chunk) const {
  if (chunk.sample_rate != config_.sample_rate) {
    throw InvalidArgument(fmt::format("mel_features: chunk at {} Hz, extractor configured for {} Hz",
                                      chunk.sample_rate, config_.sample_rate));
  }
  return extract(chunk.samples, chunk.id);
}

FeatureSequence MelExtractor::extract(std::span<const float> samples, std::uint64_t chunk_id) const {
  const std::size_t n_frames = feature_frame_count(samples.size(), config_);
  const std::size_t n_bins = bins();
  const float log_floor = std::log(config_.log_floor);

  FeatureSequence out;
  out.values = Tensor({n_frames, config_.bands}, log_floor);
  out.frame_hop = static_cast<double>(config_.hop) / config_.sample_rate;
  out.chunk_id = chunk_id;

  float* in = fftwf_alloc_real(config_.fft_size);
  fftwf_complex* spec = fftwf_alloc_complex(n_bins);
  std::vector<float> power(n_bins);
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::size_t start = f * config_.hop;
    for (std::size_t i = 0; i < config_.fft_size; ++i) in[i] = i < config_.window ? samples[start + i] * window_[i] : 0.0f;
    fftwf_execute_dft_r2c(plan_->plan, in, spec);
    for (std::size_t k = 0; k < n_bins; ++k) power[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    for (std::size_t b = 0; b < config_.bands; ++b) {
      const float* w = filterbank_.data() + b * n_bins;
      float e = 0.0f;
      for (std::size_t k = 0; k < n_bins; ++k) e += w[k] * power[k];
      out.values[f * config_.bands + b] = std::log(std::max(e, config_.log_floor));
    }
  }
  fftwf_free(in);
  fftwf_free(spec);
  return out;
}

FeatureSequence mel_features(const AudioChunk& chunk, const MelConfig& config) { return MelExtractor(config)(chunk); }

}  // namespace s2g
