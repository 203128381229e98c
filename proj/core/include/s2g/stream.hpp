#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2g/audio.hpp"
#include "s2g/error.hpp"
#include "s2g/model.hpp"
#include "s2g/pose.hpp"

namespace s2g {

// ---- wire protocol -------------------------------------------------------------

inline constexpr std::uint8_t kProtocolVersion = 1;

struct PoseFrameMessage {
  std::uint32_t sequence = 0;      // chunk id
  std::uint8_t frame_index = 0;    // 0..29 within the chunk
  std::uint64_t timestamp_ms = 0;  // capture time since stream start
  std::vector<float> coords;       // K x 3

  std::size_t keypoints() const noexcept { return coords.size() / 3; }
  friend bool operator==(const PoseFrameMessage&, const PoseFrameMessage&) = default;
};

enum class FrameErrorKind { kLengthMismatch, kUnknownVersion, kShortBuffer, kInvalidMessage };

class FrameError : public IoError {
 public:
  FrameError(FrameErrorKind kind, const std::string& what) : IoError(what), kind_(kind) {}
  FrameErrorKind kind() const noexcept { return kind_; }

 private:
  FrameErrorKind kind_;
};

// Payload bytes for K keypoints, excluding the 4-byte length prefix.
constexpr std::size_t frame_payload_size(std::size_t keypoints) noexcept { return 16 + keypoints * 12; }

// 4-byte LE payload length | version u8 | sequence u32 | frame index u8 |
// timestamp ms u64 | K u16 | K*3 f32, all little-endian.
std::vector<std::uint8_t> encode_frame(const PoseFrameMessage& message);
// Decodes exactly one length-prefixed frame occupying the whole buffer.
PoseFrameMessage decode_frame(std::span<const std::uint8_t> bytes);

// Splits a byte stream into frames as data arrives.
class FrameReader {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<PoseFrameMessage> next();
  std::size_t buffered() const noexcept { return buffer_.size(); }

 private:
  std::vector<std::uint8_t> buffer_;
};

// ---- sinks -----------------------------------------------------------------------

class FrameSink {
 public:
  virtual ~FrameSink() = default;
  virtual void send(const PoseFrameMessage& message) = 0;
  virtual void close() {}
};

class CallbackSink : public FrameSink {
 public:
  explicit CallbackSink(std::function<void(const PoseFrameMessage&)> fn) : fn_(std::move(fn)) {}
  void send(const PoseFrameMessage& message) override { fn_(message); }

 private:
  std::function<void(const PoseFrameMessage&)> fn_;
};

class FileSink : public FrameSink {
 public:
  explicit FileSink(const std::filesystem::path& path);
  void send(const PoseFrameMessage& message) override;
  void close() override;

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

std::vector<PoseFrameMessage> read_frame_file(const std::filesystem::path& path);

class TcpSink : public FrameSink {
 public:
  TcpSink(const std::string& host, std::uint16_t port);
  ~TcpSink() override;
  TcpSink(const TcpSink&) = delete;
  TcpSink& operator=(const TcpSink&) = delete;
  void send(const PoseFrameMessage& message) override;
  void close() override;

 private:
  int fd_ = -1;
};

// Accepts one connection and decodes frames until the peer closes.
class TcpFrameListener {
 public:
  // Port 0 picks a free port; see port().
  explicit TcpFrameListener(std::uint16_t port, const std::string& bind_address = "127.0.0.1");
  ~TcpFrameListener();
  TcpFrameListener(const TcpFrameListener&) = delete;
  TcpFrameListener& operator=(const TcpFrameListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  std::vector<PoseFrameMessage> receive_all();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// ---- clocks and sources ------------------------------------------------------------

using Nanos = std::chrono::nanoseconds;

enum class ClockMode {
  kReal,     // wall-clock pacing, measured durations
  kVirtual,  // simulated time, no sleeping
};

class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::uint32_t sample_rate() const = 0;
  // Called once by the pipeline with the stream's wall-clock origin.
  virtual void start(std::chrono::steady_clock::time_point origin) = 0;
  // Fills up to out.size() samples, blocking in real mode until they are due.
  // Returns 0 at end of stream.
  virtual std::size_t read(std::span<float> out) = 0;
};

// Replays a recording as if captured live.
class ReplaySource : public SampleSource {
 public:
  ReplaySource(std::vector<float> samples, std::uint32_t sample_rate, ClockMode clock);
  std::uint32_t sample_rate() const override { return rate_; }
  void start(std::chrono::steady_clock::time_point origin) override;
  std::size_t read(std::span<float> out) override;
  std::size_t total_samples() const noexcept { return samples_.size(); }

 private:
  std::vector<float> samples_;
  std::uint32_t rate_;
  ClockMode clock_;
  std::size_t position_ = 0;
  std::chrono::steady_clock::time_point origin_{};
};

// Loads the file and resamples to 16 kHz.
std::unique_ptr<ReplaySource> replay_source(const std::filesystem::path& wav, ClockMode clock);

// ---- predictors ------------------------------------------------------------------

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::size_t keypoints() const = 0;
  virtual PoseSequence predict(const AudioChunk& chunk) = 0;
  // A fixed cost replaces measurement: slept in real mode, charged exactly in
  // virtual mode. Predictors without one are timed.
  virtual std::optional<Nanos> simulated_cost() const { return std::nullopt; }
};

// Deterministic placeholder poses with an injected inference cost.
class StubPredictor : public Predictor {
 public:
  explicit StubPredictor(Nanos cost, std::shared_ptr<const Skeleton> skeleton = Skeleton::upper_body());
  std::size_t keypoints() const override { return skeleton_->keypoint_count(); }
  PoseSequence predict(const AudioChunk& chunk) override;
  std::optional<Nanos> simulated_cost() const override { return cost_; }

 private:
  Nanos cost_;
  std::shared_ptr<const Skeleton> skeleton_;
};

class ModelPredictor : public Predictor {
 public:
  ModelPredictor(GeneratorParams params, std::shared_ptr<const Skeleton> skeleton, MelConfig mel = {});
  std::size_t keypoints() const override { return params_.config.keypoints; }
  PoseSequence predict(const AudioChunk& chunk) override;

 private:
  GeneratorParams params_;
  std::shared_ptr<const Skeleton> skeleton_;
  MelExtractor mel_;
};

// ---- pipeline ----------------------------------------------------------------------

class OverrunError : public Error {
 public:
  OverrunError(std::uint64_t chunk_id, const std::string& what) : Error(what), chunk_id_(chunk_id) {}
  std::uint64_t chunk_id() const noexcept { return chunk_id_; }

 private:
  std::uint64_t chunk_id_;
};

struct PipelineConfig {
  ClockMode clock = ClockMode::kVirtual;
  std::size_t queue_capacity = 2;
  std::size_t blend_frames = 3;
  Nanos overrun_budget = std::chrono::seconds(2);
  std::size_t read_block = 160;  // samples per source read
  std::function<void(const std::string&)> log;
};

// Seconds since stream start.
struct ChunkLatency {
  std::uint64_t id = 0;
  double chunk_start = 0.0;
  double capture_complete = 0.0;
  double inference = 0.0;
  double first_playback = 0.0;
  double total_delay = 0.0;  // first_playback - chunk_start

  friend bool operator==(const ChunkLatency&, const ChunkLatency&) = default;
};

struct LatencyReport {
  std::vector<ChunkLatency> chunks;
  double mean_delay = 0.0;
  double max_delay = 0.0;
  std::size_t frames_emitted = 0;
  std::size_t stalls = 0;
  std::vector<double> emission_times;  // per emitted frame

  friend bool operator==(const LatencyReport&, const LatencyReport&) = default;
};

// Capture, inference and playback run on three threads joined by bounded
// queues. Playback starts each chunk at max(previous start + 2 s, ready time)
// and emits its 30 frames every 1/15 s; the first blend_frames frames ease in
// from the previous chunk's last frame.
LatencyReport run_pipeline(SampleSource& source, Predictor& predictor, FrameSink& sink, const PipelineConfig& config);

// Bounded FIFO shared between pipeline stages. close() wakes all waiters;
// push then fails and pop drains what is left.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  bool push(T value) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(value));
    not_empty_.notify_one();
    return true;
  }

  std::optional<T> pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T value = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return value;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
    not_empty_.notify_all();
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::condition_variable not_full_;
  std::condition_variable not_empty_;
  std::deque<T> items_;
  bool closed_ = false;
};

}  // namespace s2g
