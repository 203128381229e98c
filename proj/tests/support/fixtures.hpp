#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <numbers>
#include <string>
#include <unistd.h>
#include <vector>

#include "s2g/animate.hpp"
#include "s2g/random.hpp"
#include "s2g/train.hpp"

namespace s2g::testing {

// Removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("s2g-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Four keypoints: a root, a neck and two shoulders hanging off the neck.
inline std::shared_ptr<const Skeleton> micro_skeleton() {
  static const auto sk = std::make_shared<const Skeleton>(
      std::vector<std::string>{"root", "neck", "l_shoulder", "r_shoulder"},
      std::vector<Bone>{{0, 1}, {1, 2}, {1, 3}}, 0, 2, 3);
  return sk;
}

inline GeneratorConfig micro_generator_config() {
  GeneratorConfig c;
  c.bands = 3;
  c.feature_frames = 8;
  c.widths = {3};
  c.bottleneck_convs = 1;
  c.out_frames = 4;
  c.keypoints = 4;
  return c;
}

inline DiscriminatorConfig micro_discriminator_config() {
  DiscriminatorConfig c;
  c.keypoints = 4;
  c.motion_frames = 3;
  c.widths = {3, 3};
  return c;
}

// The reduced model and data used for the held-out PCK run and the latency
// measurement.
struct PinnedRun {
  static constexpr std::uint64_t kTrainSeed = 11;
  static constexpr std::uint64_t kValidationSeed = 12;
  static constexpr std::size_t kTrainPairs = 200;
  static constexpr std::size_t kValidationPairs = 20;

  static GeneratorConfig generator() {
    GeneratorConfig c;
    c.widths = {32, 64};
    return c;
  }
  static DiscriminatorConfig discriminator() {
    DiscriminatorConfig c;
    c.widths = {16};
    return c;
  }
  static TrainConfig config() {
    TrainConfig c;
    c.lr_g = 0.05f;
    c.lr_d = 0.01f;
    c.batch_size = 8;
    c.epochs = 30;
    c.seed = 3;
    return c;
  }
};

// A smoothly varying pose for the upper-body skeleton: random sinusoidal
// local rotations applied to the avatar, then every bone rescaled by its own
// random factor so the input proportions differ from the avatar's.
inline PoseSequence random_smooth_sequence(std::uint64_t seed, std::size_t frames) {
  Rng rng(seed);
  const auto rest = std::make_shared<const RestPose>(RestPose::avatar());
  const Skeleton& sk = *rest->skeleton;
  const std::size_t bones = sk.bone_count();
  struct Wave {
    Vec3d amp, freq, phase;
  };
  std::vector<Wave> waves(bones);
  std::vector<double> scale(bones);
  for (std::size_t b = 0; b < bones; ++b) {
    for (int i = 0; i < 3; ++i) {
      waves[b].amp[i] = rng.uniform(0.0, 0.9);
      waves[b].freq[i] = rng.uniform(0.1, 0.8);
      waves[b].phase[i] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    scale[b] = rng.uniform(0.7, 1.4);
  }
  const Vec3d drift(rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05), rng.uniform(-0.2, 0.2));

  PoseSequence seq(frames, 15.0, rest->skeleton);
  for (std::size_t t = 0; t < frames; ++t) {
    const double time = static_cast<double>(t) / 15.0;
    std::vector<Quat> local(bones);
    for (std::size_t b = 0; b < bones; ++b) {
      Vec3d aa;
      for (int i = 0; i < 3; ++i) aa[i] = waves[b].amp[i] * std::sin(2.0 * std::numbers::pi * waves[b].freq[i] * time + waves[b].phase[i]);
      const double angle = aa.norm();
      local[b] = angle < 1e-12 ? Quat::Identity() : Quat(Eigen::AngleAxisd(angle, aa / angle));
    }
    const auto global = global_rotations(*rest, local);
    std::vector<Vec3d> pos(sk.keypoint_count());
    pos[sk.root()] = rest->positions[sk.root()] + drift * time;
    for (std::size_t b = 0; b < bones; ++b) {
      const Bone& bone = sk.bones()[b];
      pos[bone.child] = pos[bone.parent] + scale[b] * (global[b] * rest->offset(b));
    }
    for (std::size_t k = 0; k < pos.size(); ++k) {
      seq.set(t, k, {static_cast<float>(pos[k].x()), static_cast<float>(pos[k].y()), static_cast<float>(pos[k].z())});
    }
  }
  return seq;
}

}  // namespace s2g::testing
