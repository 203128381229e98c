#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "s2g/error.hpp"
#include "s2g/pose.hpp"

namespace s2g {

using Quat = Eigen::Quaterniond;
using Vec3d = Eigen::Vector3d;

// ---- rest pose -----------------------------------------------------------------

// Avatar geometry in its bind pose. Local joint rotations are measured
// relative to this pose: all-identity rotations reproduce it exactly.
struct RestPose {
  std::shared_ptr<const Skeleton> skeleton;
  std::vector<Vec3d> positions;  // K keypoints
  // Per bone: rotation axis of a hinge joint at the bone's parent keypoint,
  // expressed in the rest frame, or zero when the bone is not a hinge.
  std::vector<Vec3d> hinge_axes;

  // Built-in upper-body avatar, arms hanging at the sides.
  static RestPose avatar();
  static RestPose from_frame(std::span<const float> frame, std::shared_ptr<const Skeleton> skeleton);

  Vec3d offset(std::size_t bone) const;
  double length(std::size_t bone) const;
};

// ---- animation -----------------------------------------------------------------

struct Animation {
  std::shared_ptr<const RestPose> rest;
  double fps = 15.0;
  std::vector<Vec3d> root_positions;          // per frame
  std::vector<std::vector<Quat>> rotations;   // per frame, per bone; local to the parent bone

  std::size_t frames() const noexcept { return rotations.size(); }
};

// World rotation of every bone given local rotations.
std::vector<Quat> global_rotations(const RestPose& rest, std::span<const Quat> local);
// Keypoint positions from a root position and local rotations, in double
// precision and flattened to float K x 3.
std::vector<Vec3d> forward_kinematics_world(const RestPose& rest, const Vec3d& root, std::span<const Quat> local);
std::vector<float> forward_kinematics(const RestPose& rest, const Vec3d& root, std::span<const Quat> local);
PoseSequence forward_kinematics(const Animation& animation);

// Bone names used for joints, constraints and BVH output. A bone takes its
// parent keypoint's name, or "parent.child" when that keypoint is the root or
// starts several bones.
std::vector<std::string> joint_names(const Skeleton& skeleton);

// ---- Euler angles --------------------------------------------------------------

// Degrees; rotation = Rz(z) * Rx(x) * Ry(y), the BVH "Zrotation Xrotation
// Yrotation" channel order.
struct EulerZxy {
  double z = 0.0;
  double x = 0.0;
  double y = 0.0;
};

// Both decompositions of a rotation, each angle wrapped to (-180, 180]. The
// first has x in [-90, 90].
std::array<EulerZxy, 2> euler_zxy_branches(const Quat& q);
EulerZxy to_euler_zxy(const Quat& q);  // branch with the smaller |z| + |y|
Quat from_euler_zxy(const EulerZxy& e);

// ---- joint limits ----------------------------------------------------------------

struct AxisRange {
  double min = -180.0;
  double max = 180.0;
};

struct JointLimit {
  AxisRange x;
  AxisRange y;
  AxisRange z;

  bool contains(const EulerZxy& e, double tolerance = 1e-6) const;
};

class JointLimits {
 public:
  // Anatomical defaults for the upper-body skeleton; joints without an entry
  // are unconstrained.
  static JointLimits defaults(const Skeleton& skeleton);
  // Lines of "<joint> <x|y|z> <min deg> <max deg>"; '#' starts a comment.
  static JointLimits parse(std::string_view text);
  static JointLimits load(const std::filesystem::path& path);

  void set(const std::string& joint, char axis, double min_deg, double max_deg);
  const JointLimit* find(const std::string& joint) const;
  const std::map<std::string, JointLimit>& entries() const noexcept { return limits_; }

 private:
  std::map<std::string, JointLimit> limits_;
};

// True when some Euler decomposition of q lies inside the limits, including
// the whole family of equivalent angles at gimbal lock.
bool within_limits(const Quat& q, const JointLimit& limit, double tolerance = 1e-6);
// Leaves rotations inside the limits unchanged; otherwise clamps the Euler
// decomposition that needs the least correction. Idempotent.
Quat constrain(const Quat& q, const JointLimit& limit);
void apply_limits(Animation& animation, const JointLimits& limits);

// ---- retargeting -----------------------------------------------------------------

struct RetargetOptions {
  // Bones shorter than this in the input keep the previous frame's rotation.
  double degenerate_length = 1e-6;
};

// Swing-only rotations per bone, plus a twist on bones whose child is a hinge
// so the hinge bends in the observed plane. Bone lengths come from the rest
// pose; the input only contributes directions and the root trajectory.
Animation retarget(const PoseSequence& poses, std::shared_ptr<const RestPose> rest,
                   const JointLimits* limits = nullptr, const RetargetOptions& options = {});
inline Animation keypoints_to_rotations(const PoseSequence& poses, std::shared_ptr<const RestPose> rest,
                                        const JointLimits* limits = nullptr, const RetargetOptions& options = {}) {
  return retarget(poses, std::move(rest), limits, options);
}

// ---- smoothing and interpolation ---------------------------------------------------

// Centred moving average over an odd window, edges clamped. Quaternions are
// sign-aligned to the centre frame before averaging and renormalized.
Animation smooth(const Animation& animation, std::size_t window = 5);

enum class InterpolationMode {
  kWithin,   // linear weight, for frames inside one chunk
  kBetween,  // smoothstep weight, for transitions across chunk boundaries
};

double interpolation_weight(double t, InterpolationMode mode);
Quat interpolate(const Quat& a, const Quat& b, double t, InterpolationMode mode);
std::vector<float> interpolate_frames(std::span<const float> a, std::span<const float> b, double t,
                                      InterpolationMode mode);

// ---- BVH -------------------------------------------------------------------------

struct BvhJoint {
  std::string name;
  int parent = -1;
  Vec3d offset = Vec3d::Zero();
  std::vector<std::string> channels;
  std::optional<Vec3d> end_site;
};

struct BvhDocument {
  std::vector<BvhJoint> joints;  // depth-first order
  double frame_time = 0.0;
  std::vector<std::vector<double>> frames;

  std::size_t channel_count() const noexcept;
};

class BvhError : public IoError {
 public:
  using IoError::IoError;
};

BvhDocument to_bvh(const Animation& animation);
std::string format_bvh(const BvhDocument& doc);
std::string write_bvh(const Animation& animation);
void save_bvh(const Animation& animation, const std::filesystem::path& path);
BvhDocument parse_bvh(std::string_view text);

}  // namespace s2g
