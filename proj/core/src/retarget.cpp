#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "s2g/animate.hpp"

namespace s2g {

namespace {

void set_hinges(RestPose& rest) {
  const Skeleton& sk = *rest.skeleton;
  rest.hinge_axes.assign(sk.bone_count(), Vec3d::Zero());
  for (std::size_t b = 0; b < sk.bone_count(); ++b) {
    const std::string& parent = sk.names()[sk.bones()[b].parent];
    if (parent == "l_elbow" || parent == "r_elbow") rest.hinge_axes[b] = Vec3d::UnitX();
  }
}

Vec3d point(std::span<const float> frame, std::size_t k) {
  return {frame[k * 3], frame[k * 3 + 1], frame[k * 3 + 2]};
}

}  // namespace

RestPose RestPose::avatar() {
  RestPose rest;
  rest.skeleton = Skeleton::upper_body();
  const Skeleton& sk = *rest.skeleton;
  rest.positions.assign(sk.keypoint_count(), Vec3d::Zero());
  auto at = [&](const char* name) -> Vec3d& { return rest.positions[*sk.find(name)]; };
  at("root") = {0.0, 1.0, 0.0};
  at("neck") = {0.0, 1.48, 0.0};
  at("head") = {0.0, 1.70, 0.0};
  for (const auto& [side, x] : {std::pair{"l", -0.19}, std::pair{"r", 0.19}}) {
    const std::string s = side;
    at((s + "_shoulder").c_str()) = {x, 1.44, 0.0};
    at((s + "_elbow").c_str()) = {x, 1.14, 0.0};
    at((s + "_wrist").c_str()) = {x, 0.89, 0.0};
    const double medial = x < 0.0 ? 1.0 : -1.0;
    const std::array<const char*, 5> fingers = {"thumb", "index", "middle", "ring", "pinky"};
    const std::array<double, 5> spread = {-0.035, -0.022, -0.004, 0.014, 0.030};
    const std::array<double, 5> segment = {0.026, 0.028, 0.031, 0.028, 0.022};
    for (std::size_t f = 0; f < fingers.size(); ++f) {
      Vec3d p = at((s + "_wrist").c_str()) + Vec3d(f == 0 ? medial * 0.015 : 0.0, f == 0 ? -0.03 : -0.07, spread[f]);
      for (int j = 1; j <= 4; ++j) {
        at(fmt::format("{}_{}{}", s, fingers[f], j).c_str()) = p;
        p.y() -= segment[f];
      }
    }
  }
  set_hinges(rest);
  return rest;
}

RestPose RestPose::from_frame(std::span<const float> frame, std::shared_ptr<const Skeleton> skeleton) {
  if (!skeleton) throw InvalidArgument("rest pose needs a skeleton");
  if (frame.size() != skeleton->keypoint_count() * 3) {
    throw ShapeError(fmt::format("rest frame has {} values, expected {}", frame.size(), skeleton->keypoint_count() * 3));
  }
  RestPose rest;
  rest.skeleton = std::move(skeleton);
  for (std::size_t k = 0; k < rest.skeleton->keypoint_count(); ++k) {
    const Vec3d p = point(frame, k);
    if (!p.allFinite()) throw InvalidArgument("rest frame has non-finite coordinates");
    rest.positions.push_back(p);
  }
  for (std::size_t b = 0; b < rest.skeleton->bone_count(); ++b) {
    if (!(rest.length(b) > 0.0)) {
      throw InvalidArgument(fmt::format("rest pose bone {} has zero length", b));
    }
  }
  set_hinges(rest);
  return rest;
}

Vec3d RestPose::offset(std::size_t bone) const {
  const Bone& b = skeleton->bones().at(bone);
  return positions[b.child] - positions[b.parent];
}

double RestPose::length(std::size_t bone) const { return offset(bone).norm(); }

Animation retarget(const PoseSequence& poses, std::shared_ptr<const RestPose> rest, const JointLimits* limits,
                   const RetargetOptions& options) {
  if (!rest || !rest->skeleton) throw InvalidArgument("retarget needs a rest pose");
  const Skeleton& sk = *rest->skeleton;
  if (poses.keypoints != sk.keypoint_count()) {
    throw ShapeError(fmt::format("pose has {} keypoints, avatar has {}", poses.keypoints, sk.keypoint_count()));
  }
  for (float v : poses.coords) {
    if (!std::isfinite(v)) throw InvalidArgument("retarget: pose has non-finite coordinates");
  }
  const std::size_t nb = sk.bone_count();
  std::vector<std::size_t> parent_bone(nb);
  for (std::size_t b = 0; b < nb; ++b) parent_bone[b] = sk.bone_ending_at(sk.bones()[b].parent).value_or(nb);

  // Root motion is rescaled so the input's shoulder width matches the avatar's.
  double input_width = 0.0;
  for (std::size_t t = 0; t < poses.frames; ++t) {
    input_width += (point(poses.frame(t), sk.left_shoulder()) - point(poses.frame(t), sk.right_shoulder())).norm();
  }
  input_width /= std::max<double>(1.0, static_cast<double>(poses.frames));
  const double rest_width = (rest->positions[sk.left_shoulder()] - rest->positions[sk.right_shoulder()]).norm();
  const double scale = input_width > 0.0 ? rest_width / input_width : 1.0;

  Animation anim;
  anim.rest = rest;
  anim.fps = poses.fps;
  std::vector<Quat> previous(nb, Quat::Identity());
  std::vector<double> previous_twist(nb, 0.0);
  const Vec3d first_root = poses.frames > 0 ? point(poses.frame(0), sk.root()) : Vec3d::Zero();

  for (std::size_t t = 0; t < poses.frames; ++t) {
    const auto frame = poses.frame(t);
    std::vector<Quat> global(nb, Quat::Identity());
    std::vector<Quat> local(nb, Quat::Identity());
    for (std::size_t b = 0; b < nb; ++b) {
      const Bone& bone = sk.bones()[b];
      const Quat parent = parent_bone[b] < nb ? global[parent_bone[b]] : Quat::Identity();
      const Vec3d d = point(frame, bone.child) - point(frame, bone.parent);
      if (d.norm() < options.degenerate_length) {
        local[b] = previous[b];
        global[b] = (parent * local[b]).normalized();
        continue;
      }
      const Vec3d r = d.normalized();
      const Vec3d target_local = parent.conjugate() * r;
      Quat g = (parent * Quat::FromTwoVectors(rest->offset(b).normalized(), target_local)).normalized();

      // Twist about the bone so a hinge at its child bends in the observed plane.
      for (std::size_t cb : sk.child_bones(bone.child)) {
        if (rest->hinge_axes[cb].isZero()) continue;
        double psi = previous_twist[b];
        const Vec3d f = point(frame, sk.bones()[cb].child) - point(frame, bone.child);
        const Vec3d v = f - f.dot(r) * r;
        const Vec3d q = (g * rest->hinge_axes[cb]).cross(r);
        if (v.norm() > 1e-6 * std::max(1.0, f.norm()) && q.norm() > 1e-9) {
          const Vec3d qn = q.normalized();
          const Vec3d vn = v.normalized();
          psi = std::atan2(qn.cross(vn).dot(r), qn.dot(vn));
        }
        previous_twist[b] = psi;
        g = (Quat(Eigen::AngleAxisd(psi, r)) * g).normalized();
        break;
      }
      global[b] = g;
      local[b] = (parent.conjugate() * g).normalized();
    }
    previous = local;
    anim.rotations.push_back(std::move(local));
    anim.root_positions.push_back(rest->positions[sk.root()] + scale * (point(frame, sk.root()) - first_root));
  }
  if (limits != nullptr) apply_limits(anim, *limits);
  return anim;
}

}  // namespace s2g
