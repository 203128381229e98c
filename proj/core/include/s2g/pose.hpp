#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace s2g {

using Vec3f = std::array<float, 3>;

// Output rate of the generator and the animation: 30 poses per 2 s chunk.
inline constexpr double kPoseFps = 15.0;
inline constexpr std::size_t kPosesPerChunk = 30;

struct Bone {
  std::size_t parent = 0;
  std::size_t child = 0;
  friend bool operator==(const Bone&, const Bone&) = default;
};

// Keypoint tree. Bones are stored parent-before-child (every bone's parent
// keypoint is either the root or the child of an earlier bone).
class Skeleton {
 public:
  Skeleton(std::vector<std::string> names, std::vector<Bone> bones, std::size_t root,
           std::size_t left_shoulder, std::size_t right_shoulder);

  // 9 torso/arm keypoints plus 4 keypoints per finger on both hands (K = 49).
  static std::shared_ptr<const Skeleton> upper_body();

  std::size_t keypoint_count() const noexcept { return names_.size(); }
  std::size_t bone_count() const noexcept { return bones_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Bone>& bones() const noexcept { return bones_; }
  std::size_t root() const noexcept { return root_; }
  std::size_t left_shoulder() const noexcept { return left_shoulder_; }
  std::size_t right_shoulder() const noexcept { return right_shoulder_; }

  std::optional<std::size_t> find(const std::string& name) const;
  // Index of the bone whose child is `keypoint`, if any.
  std::optional<std::size_t> bone_ending_at(std::size_t keypoint) const;
  std::vector<std::size_t> child_bones(std::size_t keypoint) const;

  friend bool operator==(const Skeleton&, const Skeleton&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Bone> bones_;
  std::size_t root_;
  std::size_t left_shoulder_;
  std::size_t right_shoulder_;
};

// T frames x K keypoints x 3 coordinates, stored row-major.
struct PoseSequence {
  std::size_t frames = 0;
  std::size_t keypoints = 0;
  double fps = 15.0;
  std::vector<float> coords;
  std::shared_ptr<const Skeleton> skeleton;

  PoseSequence() = default;
  PoseSequence(std::size_t frames, std::size_t keypoints, double fps, std::shared_ptr<const Skeleton> skeleton);
  PoseSequence(std::size_t frames, double fps, std::shared_ptr<const Skeleton> skeleton);

  Vec3f at(std::size_t t, std::size_t k) const;
  void set(std::size_t t, std::size_t k, const Vec3f& v);
  std::span<const float> frame(std::size_t t) const;
  std::span<float> frame(std::size_t t);
};

// (T-1) x K x 3 displacements between consecutive frames.
struct MotionSequence {
  std::size_t frames = 0;
  std::size_t keypoints = 0;
  std::vector<float> deltas;
};

// Per-bone Euclidean lengths of one K x 3 frame, in bone order.
std::vector<float> bone_lengths(std::span<const float> frame, const Skeleton& skeleton);

MotionSequence motion(const PoseSequence& seq);

// Percentage of (frame, keypoint) pairs whose error is within
// alpha * ground-truth shoulder width of that frame.
double pck(const PoseSequence& pred, const PoseSequence& gt, double alpha);

// Root-relative coordinates divided by the mean shoulder width over the sequence.
PoseSequence normalize_pose(const PoseSequence& raw);

// ---- pose files ----
//
// Line 1:  # s2g-pose K=<K> fps=<fps> names=<name0>,<name1>,...
// Then one record per frame: <frame index> followed by K*3 decimals.
// Missing frame indices or non-finite values mark gaps.
struct PoseTrack {
  std::vector<std::string> names;
  double fps = 0.0;
  // Indexed by frame number; absent or non-finite frames are nullopt.
  std::vector<std::optional<std::vector<float>>> frames;
};

PoseTrack read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, const PoseSequence& seq);
void write_pose_track(const std::filesystem::path& path, const PoseTrack& track);

}  // namespace s2g
