#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "s2g/train.hpp"

namespace s2g {

namespace {

// Linear interpolation of the track at a fractional frame position. Returns
// false when a needed frame is missing.
bool sample_track(const PoseTrack& track, double position, std::span<float> out) {
  const auto i0 = static_cast<std::size_t>(std::floor(position));
  const double frac = position - static_cast<double>(i0);
  if (i0 >= track.frames.size() || !track.frames[i0]) return false;
  const auto& a = *track.frames[i0];
  if (frac < 1e-9) {
    std::copy(a.begin(), a.end(), out.begin());
    return true;
  }
  if (i0 + 1 >= track.frames.size() || !track.frames[i0 + 1]) return false;
  const auto& b = *track.frames[i0 + 1];
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(a[i] + frac * (static_cast<double>(b[i]) - a[i]));
  }
  return true;
}

}  // namespace

Dataset build_dataset(const WavData& audio, const PoseTrack& poses, std::shared_ptr<const Skeleton> skeleton,
                      const MelExtractor& mel, const std::string& speaker, const std::string& source) {
  if (!skeleton) throw InvalidArgument("build_dataset needs a skeleton");
  if (poses.frames.empty()) throw InvalidArgument(fmt::format("{}: pose track is empty", source));
  if (!(poses.fps >= kPoseFps)) {
    throw InvalidArgument(fmt::format("{}: pose frame rate {} is below {} fps", source, poses.fps, kPoseFps));
  }
  if (!poses.names.empty() && poses.names != skeleton->names()) {
    throw InvalidArgument(fmt::format("{}: pose keypoint names do not match the skeleton", source));
  }
  if (audio.sample_rate == 0 || audio.samples.empty()) {
    throw InvalidArgument(fmt::format("{}: audio is empty", source));
  }
  const std::size_t width = skeleton->keypoint_count() * 3;
  for (const auto& f : poses.frames) {
    if (f && f->size() != width) {
      throw ShapeError(fmt::format("{}: pose frame has {} values, expected {}", source, f->size(), width));
    }
  }

  const std::uint32_t rate = mel.config().sample_rate;
  const std::vector<float> samples = resample_linear(audio.samples, audio.sample_rate, rate);
  const double audio_seconds = static_cast<double>(samples.size()) / rate;
  const double pose_seconds = static_cast<double>(poses.frames.size()) / poses.fps;
  const double overlap = std::min(audio_seconds, pose_seconds);
  const auto pairs = static_cast<std::size_t>(std::floor(overlap / kChunkSeconds + 1e-9));
  if (pairs == 0) {
    throw InvalidArgument(fmt::format("{}: audio and poses overlap by {:.3f} s, less than one 2 s chunk", source,
                                      overlap));
  }

  const std::vector<AudioChunk> chunks = chunk_stream(samples, rate, rate);
  Dataset out;
  for (std::size_t c = 0; c < pairs && c < chunks.size(); ++c) {
    if (chunks[c].padded) break;
    // Any missing source frame inside the chunk's span drops the chunk, even
    // one the resampling would skip over.
    const auto first = static_cast<std::size_t>(std::floor(static_cast<double>(c) * kChunkSeconds * poses.fps + 1e-9));
    const auto last = std::min(poses.frames.size(),
                               static_cast<std::size_t>(std::ceil(static_cast<double>(c + 1) * kChunkSeconds * poses.fps - 1e-9)));
    bool complete = std::all_of(poses.frames.begin() + static_cast<std::ptrdiff_t>(first),
                                poses.frames.begin() + static_cast<std::ptrdiff_t>(last),
                                [](const auto& f) { return f.has_value(); });
    PoseSequence raw(kPosesPerChunk, kPoseFps, skeleton);
    for (std::size_t j = 0; j < kPosesPerChunk && complete; ++j) {
      const double position = static_cast<double>(c * kPosesPerChunk + j) * poses.fps / kPoseFps;
      complete = sample_track(poses, position, raw.frame(j));
    }
    if (!complete) continue;
    TrainingPair pair;
    pair.features = mel(chunks[c]);
    pair.target = normalize_pose(raw);
    pair.speaker = speaker;
    pair.source = source;
    pair.index = c;
    out.push_back(std::move(pair));
  }
  return out;
}

Dataset build_dataset(const std::vector<SourceFiles>& sources, std::shared_ptr<const Skeleton> skeleton,
                      const MelConfig& mel) {
  const MelExtractor extractor(mel);
  Dataset out;
  for (const auto& s : sources) {
    const WavData audio = load_wav(s.audio);
    const PoseTrack poses = read_pose_file(s.poses);
    const std::string source = s.source.empty() ? s.audio.stem().string() : s.source;
    Dataset part = build_dataset(audio, poses, skeleton, extractor, s.speaker, source);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

DatasetSplit split_validation(const Dataset& data, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("split_validation: fraction must be in [0, 1)");
  std::map<std::string, std::size_t> per_source;
  for (const auto& p : data) ++per_source[p.source];
  std::map<std::string, std::size_t> held;
  for (const auto& [source, n] : per_source) {
    auto k = static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction));
    if (k == 0 && n >= 2 && fraction > 0.0) k = 1;
    held[source] = k;
  }
  DatasetSplit split;
  std::map<std::string, std::size_t> seen;
  for (const auto& p : data) {
    const std::size_t i = seen[p.source]++;
    if (i + held[p.source] >= per_source[p.source]) {
      split.validation.push_back(p);
    } else {
      split.train.push_back(p);
    }
  }
  return split;
}

}  // namespace s2g
