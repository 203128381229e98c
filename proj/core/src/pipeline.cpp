#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include <fmt/format.h>

#include "s2g/animate.hpp"
#include "s2g/stream.hpp"

namespace s2g {

namespace {

using SteadyClock = std::chrono::steady_clock;

double seconds(Nanos n) { return std::chrono::duration<double>(n).count(); }

Nanos frame_offset(std::size_t j) {
  return Nanos(static_cast<std::int64_t>(std::llround(static_cast<double>(j) * 1e9 / kPoseFps)));
}

Nanos samples_to_time(std::size_t samples, std::uint32_t rate) {
  return Nanos(static_cast<std::int64_t>(std::llround(static_cast<double>(samples) * 1e9 / rate)));
}

struct CapturedChunk {
  AudioChunk chunk;
  Nanos capture_complete{0};
};

struct PredictedChunk {
  std::uint64_t id = 0;
  PoseSequence poses;
  Nanos capture_complete{0};
  Nanos inference{0};
  Nanos ready{0};
};

}  // namespace

// ---- sources ------------------------------------------------------------------------

ReplaySource::ReplaySource(std::vector<float> samples, std::uint32_t sample_rate, ClockMode clock)
    : samples_(std::move(samples)), rate_(sample_rate), clock_(clock) {
  if (rate_ == 0) throw InvalidArgument("replay source needs a positive sample rate");
}

void ReplaySource::start(SteadyClock::time_point origin) {
  origin_ = origin;
  position_ = 0;
}

std::size_t ReplaySource::read(std::span<float> out) {
  const std::size_t n = std::min(out.size(), samples_.size() - position_);
  if (n == 0) return 0;
  if (clock_ == ClockMode::kReal) {
    // The block is complete once its last sample has been "spoken".
    std::this_thread::sleep_until(origin_ + samples_to_time(position_ + n, rate_));
  }
  std::copy_n(samples_.begin() + static_cast<std::ptrdiff_t>(position_), n, out.begin());
  position_ += n;
  return n;
}

std::unique_ptr<ReplaySource> replay_source(const std::filesystem::path& wav, ClockMode clock) {
  const WavData data = load_wav(wav);
  return std::make_unique<ReplaySource>(resample_linear(data.samples, data.sample_rate, kDefaultSampleRate),
                                        kDefaultSampleRate, clock);
}

// ---- predictors -----------------------------------------------------------------------

StubPredictor::StubPredictor(Nanos cost, std::shared_ptr<const Skeleton> skeleton)
    : cost_(cost), skeleton_(std::move(skeleton)) {
  if (cost_ < Nanos::zero()) throw InvalidArgument("stub inference cost must be non-negative");
  if (!skeleton_) throw InvalidArgument("stub predictor needs a skeleton");
}

PoseSequence StubPredictor::predict(const AudioChunk& chunk) {
  PoseSequence out(kPosesPerChunk, kPoseFps, skeleton_);
  const double base = static_cast<double>(chunk.id - 1) * kPosesPerChunk;
  for (std::size_t t = 0; t < kPosesPerChunk; ++t) {
    const double phase = 2.0 * std::numbers::pi * (base + static_cast<double>(t)) / 45.0;
    auto f = out.frame(t);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(0.05 * std::sin(phase + 0.37 * static_cast<double>(i)));
  }
  return out;
}

ModelPredictor::ModelPredictor(GeneratorParams params, std::shared_ptr<const Skeleton> skeleton, MelConfig mel)
    : params_(std::move(params)), skeleton_(std::move(skeleton)), mel_(mel) {
  params_.config.validate();
}

PoseSequence ModelPredictor::predict(const AudioChunk& chunk) {
  return generator_forward(mel_(chunk), params_, skeleton_, kPoseFps);
}

// ---- pipeline ---------------------------------------------------------------------------

LatencyReport run_pipeline(SampleSource& source, Predictor& predictor, FrameSink& sink, const PipelineConfig& config) {
  if (config.read_block == 0) throw InvalidArgument("read_block must be positive");
  const bool real = config.clock == ClockMode::kReal;
  const std::uint32_t rate = source.sample_rate();
  const std::size_t chunk_len = chunk_sample_count(rate);
  const Nanos chunk_duration = std::chrono::duration_cast<Nanos>(std::chrono::duration<double>(kChunkSeconds));

  BoundedQueue<CapturedChunk> captured(config.queue_capacity);
  BoundedQueue<PredictedChunk> predicted(config.queue_capacity);
  std::mutex error_mutex;
  std::exception_ptr error;
  auto fail = [&](std::exception_ptr e) {
    {
      std::lock_guard lock(error_mutex);
      if (!error) error = e;
    }
    captured.close();
    predicted.close();
  };
  auto log = [&](const std::string& msg) {
    if (config.log) config.log(msg);
  };

  const SteadyClock::time_point origin = SteadyClock::now();
  auto now = [&] { return std::chrono::duration_cast<Nanos>(SteadyClock::now() - origin); };
  source.start(origin);

  LatencyReport report;

  std::thread capture([&] {
    try {
      std::vector<float> pending;
      std::vector<float> block(config.read_block);
      std::size_t consumed = 0;
      std::uint64_t id = 1;
      auto emit = [&](std::vector<float> samples, bool padded, std::size_t valid, std::size_t end_sample) {
        CapturedChunk c;
        c.chunk.samples = std::move(samples);
        c.chunk.sample_rate = rate;
        c.chunk.id = id++;
        c.chunk.padded = padded;
        c.chunk.valid_samples = valid;
        c.capture_complete = real ? now() : samples_to_time(end_sample, rate);
        return captured.push(std::move(c));
      };
      for (;;) {
        const std::size_t n = source.read(block);
        if (n == 0) break;
        pending.insert(pending.end(), block.begin(), block.begin() + static_cast<std::ptrdiff_t>(n));
        consumed += n;
        while (pending.size() >= chunk_len) {
          std::vector<float> samples(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(chunk_len));
          pending.erase(pending.begin(), pending.begin() + static_cast<std::ptrdiff_t>(chunk_len));
          if (!emit(std::move(samples), false, chunk_len, consumed - pending.size())) return;
        }
      }
      if (!pending.empty()) {
        const std::size_t valid = pending.size();
        pending.resize(chunk_len, 0.0f);
        emit(std::move(pending), true, valid, consumed);
      }
      captured.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  std::thread inference([&] {
    try {
      Nanos free_at{0};
      while (auto c = captured.pop()) {
        PredictedChunk p;
        p.id = c->chunk.id;
        p.capture_complete = c->capture_complete;
        const auto cost = predictor.simulated_cost();
        if (real) {
          const Nanos t0 = now();
          p.poses = predictor.predict(c->chunk);
          if (cost) std::this_thread::sleep_until(origin + t0 + *cost);
          p.ready = now();
          p.inference = p.ready - t0;
        } else {
          const Nanos start = std::max(c->capture_complete, free_at);
          const auto w0 = SteadyClock::now();
          p.poses = predictor.predict(c->chunk);
          p.inference = cost ? *cost : std::chrono::duration_cast<Nanos>(SteadyClock::now() - w0);
          p.ready = start + p.inference;
          free_at = p.ready;
        }
        if (p.inference > config.overrun_budget) {
          throw OverrunError(p.id, fmt::format("chunk {} inference took {:.3f} s, over the {:.3f} s budget", p.id,
                                               seconds(p.inference), seconds(config.overrun_budget)));
        }
        if (p.poses.frames != kPosesPerChunk || p.poses.keypoints != predictor.keypoints()) {
          throw ShapeError(fmt::format("predictor returned {}x{} poses for chunk {}", p.poses.frames,
                                       p.poses.keypoints, p.id));
        }
        if (!predicted.push(std::move(p))) return;
      }
      predicted.close();
    } catch (...) {
      fail(std::current_exception());
    }
  });

  std::thread playback([&] {
    try {
      std::optional<Nanos> previous_start;
      std::vector<float> last;
      while (auto p = predicted.pop()) {
        const Nanos grid = previous_start ? *previous_start + chunk_duration : p->ready;
        if (previous_start && p->ready > grid) {
          ++report.stalls;
          log(fmt::format("stall: chunk {} ready {:.3f} s after its playback slot; holding the last pose", p->id,
                          seconds(p->ready - grid)));
        }
        const Nanos start = std::max(grid, p->ready);
        ChunkLatency lat;
        lat.id = p->id;
        lat.chunk_start = static_cast<double>(p->id - 1) * kChunkSeconds;
        lat.capture_complete = seconds(p->capture_complete);
        lat.inference = seconds(p->inference);
        for (std::size_t j = 0; j < kPosesPerChunk; ++j) {
          const auto raw = p->poses.frame(j);
          std::vector<float> frame(raw.begin(), raw.end());
          if (!last.empty() && j < config.blend_frames) {
            const double t = static_cast<double>(j + 1) / static_cast<double>(config.blend_frames + 1);
            frame = interpolate_frames(last, frame, t, InterpolationMode::kBetween);
          }
          const Nanos due = start + frame_offset(j);
          Nanos emitted = due;
          if (real) {
            std::this_thread::sleep_until(origin + due);
            emitted = now();
          }
          PoseFrameMessage m;
          m.sequence = static_cast<std::uint32_t>(p->id);
          m.frame_index = static_cast<std::uint8_t>(j);
          m.timestamp_ms = static_cast<std::uint64_t>(
              std::llround(lat.chunk_start * 1000.0 + static_cast<double>(j) * 1000.0 / kPoseFps));
          m.coords = frame;
          sink.send(m);
          report.emission_times.push_back(seconds(emitted));
          ++report.frames_emitted;
          if (j == 0) lat.first_playback = seconds(emitted);
          if (j + 1 == kPosesPerChunk) last = std::move(frame);
        }
        lat.total_delay = lat.first_playback - lat.chunk_start;
        report.chunks.push_back(lat);
        previous_start = start;
      }
    } catch (...) {
      fail(std::current_exception());
    }
  });

  capture.join();
  inference.join();
  playback.join();
  sink.close();
  if (error) std::rethrow_exception(error);

  for (const auto& c : report.chunks) {
    report.mean_delay += c.total_delay;
    report.max_delay = std::max(report.max_delay, c.total_delay);
  }
  if (!report.chunks.empty()) report.mean_delay /= static_cast<double>(report.chunks.size());
  return report;
}

}  // namespace s2g
