#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "s2g/animate.hpp"

namespace s2g {

namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

double wrap_degrees(double a) {
  a = std::fmod(a, 360.0);
  if (a <= -180.0) a += 360.0;
  if (a > 180.0) a -= 360.0;
  return a;
}

bool in_range(double v, const AxisRange& r, double tol) { return v >= r.min - tol && v <= r.max + tol; }

double clamp_cost(const EulerZxy& e, const JointLimit& l, EulerZxy& out) {
  out.x = std::clamp(e.x, l.x.min, l.x.max);
  out.y = std::clamp(e.y, l.y.min, l.y.max);
  out.z = std::clamp(e.z, l.z.min, l.z.max);
  return std::abs(out.x - e.x) + std::abs(out.y - e.y) + std::abs(out.z - e.z);
}

std::vector<std::size_t> parent_bones(const Skeleton& sk) {
  std::vector<std::size_t> out(sk.bone_count());
  for (std::size_t b = 0; b < sk.bone_count(); ++b) {
    out[b] = sk.bone_ending_at(sk.bones()[b].parent).value_or(sk.bone_count());
  }
  return out;
}

}  // namespace

// ---- Euler ----------------------------------------------------------------------

std::array<EulerZxy, 2> euler_zxy_branches(const Quat& q) {
  const Eigen::Matrix3d r = q.normalized().toRotationMatrix();
  const double sx = std::clamp(r(2, 1), -1.0, 1.0);
  EulerZxy a;
  a.x = std::asin(sx) * kDeg;
  if (std::abs(sx) > 1.0 - 1e-12) {
    // Gimbal lock: z and y rotate about the same axis; put it all in y.
    a.z = 0.0;
    a.y = std::atan2(r(0, 2), r(0, 0)) * kDeg;
  } else {
    a.z = std::atan2(-r(0, 1), r(1, 1)) * kDeg;
    a.y = std::atan2(-r(2, 0), r(2, 2)) * kDeg;
  }
  a = {wrap_degrees(a.z), wrap_degrees(a.x), wrap_degrees(a.y)};
  const EulerZxy b{wrap_degrees(a.z + 180.0), wrap_degrees(180.0 - a.x), wrap_degrees(a.y + 180.0)};
  return {a, b};
}

EulerZxy to_euler_zxy(const Quat& q) {
  const auto br = euler_zxy_branches(q);
  const double ca = std::abs(br[0].z) + std::abs(br[0].y);
  const double cb = std::abs(br[1].z) + std::abs(br[1].y);
  return cb < ca ? br[1] : br[0];
}

Quat from_euler_zxy(const EulerZxy& e) {
  const Quat q = Eigen::AngleAxisd(e.z / kDeg, Vec3d::UnitZ()) * Eigen::AngleAxisd(e.x / kDeg, Vec3d::UnitX()) *
                 Eigen::AngleAxisd(e.y / kDeg, Vec3d::UnitY());
  return q.normalized();
}

// ---- limits ---------------------------------------------------------------------

bool JointLimit::contains(const EulerZxy& e, double tolerance) const {
  return in_range(e.x, x, tolerance) && in_range(e.y, y, tolerance) && in_range(e.z, z, tolerance);
}

void JointLimits::set(const std::string& joint, char axis, double min_deg, double max_deg) {
  if (!(min_deg <= max_deg) || min_deg < -180.0 || max_deg > 180.0) {
    throw InvalidArgument(fmt::format("joint limit for {} must satisfy -180 <= min <= max <= 180", joint));
  }
  JointLimit& l = limits_[joint];
  switch (axis) {
    case 'x': l.x = {min_deg, max_deg}; break;
    case 'y': l.y = {min_deg, max_deg}; break;
    case 'z': l.z = {min_deg, max_deg}; break;
    default: throw InvalidArgument(fmt::format("unknown joint limit axis '{}' for {}", axis, joint));
  }
}

const JointLimit* JointLimits::find(const std::string& joint) const {
  const auto it = limits_.find(joint);
  return it == limits_.end() ? nullptr : &it->second;
}

JointLimits JointLimits::defaults(const Skeleton& skeleton) {
  JointLimits out;
  const auto names = joint_names(skeleton);
  auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  for (const char* side : {"l", "r"}) {
    const std::string s = side;
    if (has(s + "_shoulder")) {
      for (char a : {'x', 'y', 'z'}) out.set(s + "_shoulder", a, -120.0, 120.0);
    }
    if (has(s + "_elbow")) {
      out.set(s + "_elbow", 'x', 0.0, 150.0);
      out.set(s + "_elbow", 'y', -90.0, 90.0);
      out.set(s + "_elbow", 'z', -30.0, 30.0);
    }
  }
  const auto& kp = skeleton.names();
  for (std::size_t b = 0; b < skeleton.bone_count(); ++b) {
    const std::string& parent = kp[skeleton.bones()[b].parent];
    const bool left = parent.starts_with("l_");
    const bool right = parent.starts_with("r_");
    if (!left && !right) continue;
    if (parent.ends_with("_wrist")) {
      for (char a : {'x', 'y', 'z'}) out.set(names[b], a, -80.0, 80.0);
    } else if (parent.find("thumb") != std::string::npos || parent.find("index") != std::string::npos ||
               parent.find("middle") != std::string::npos || parent.find("ring") != std::string::npos ||
               parent.find("pinky") != std::string::npos) {
      out.set(names[b], 'x', -10.0, 10.0);
      out.set(names[b], 'y', -10.0, 10.0);
      if (left) {
        out.set(names[b], 'z', 0.0, 100.0);
      } else {
        out.set(names[b], 'z', -100.0, 0.0);
      }
    }
  }
  return out;
}

JointLimits JointLimits::parse(std::string_view text) {
  JointLimits out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string joint, axis;
    double lo = 0.0, hi = 0.0;
    if (!(ls >> joint)) continue;
    if (!(ls >> axis >> lo >> hi) || axis.size() != 1) {
      throw InvalidArgument(fmt::format("joint limits line {}: expected '<joint> <x|y|z> <min> <max>'", line_no));
    }
    std::string extra;
    if (ls >> extra) throw InvalidArgument(fmt::format("joint limits line {}: unexpected '{}'", line_no, extra));
    out.set(joint, axis[0], lo, hi);
  }
  return out;
}

JointLimits JointLimits::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open joint limits {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool within_limits(const Quat& q, const JointLimit& limit, double tolerance) {
  const auto br = euler_zxy_branches(q);
  if (limit.contains(br[0], tolerance) || limit.contains(br[1], tolerance)) return true;
  if (std::abs(std::abs(br[0].x) - 90.0) > 1e-6 || !in_range(br[0].x, limit.x, tolerance)) return false;
  // At x = +-90 only y + z (or y - z) is determined; any split of it that fits
  // the box represents the same rotation.
  const double sign = br[0].x > 0.0 ? 1.0 : -1.0;
  const double combined = br[0].y + sign * br[0].z;
  const double lo = limit.y.min + std::min(sign * limit.z.min, sign * limit.z.max);
  const double hi = limit.y.max + std::max(sign * limit.z.min, sign * limit.z.max);
  for (int k = -2; k <= 2; ++k) {
    const double c = combined + 360.0 * k;
    if (c >= lo - tolerance && c <= hi + tolerance) return true;
  }
  return false;
}

Quat constrain(const Quat& q, const JointLimit& limit) {
  if (within_limits(q, limit)) return q;
  const auto br = euler_zxy_branches(q);
  EulerZxy ca, cb;
  const double cost_a = clamp_cost(br[0], limit, ca);
  const double cost_b = clamp_cost(br[1], limit, cb);
  return from_euler_zxy(cost_b < cost_a ? cb : ca);
}

void apply_limits(Animation& animation, const JointLimits& limits) {
  if (!animation.rest) throw InvalidArgument("apply_limits: animation has no rest pose");
  const auto names = joint_names(*animation.rest->skeleton);
  for (auto& frame : animation.rotations) {
    for (std::size_t b = 0; b < frame.size(); ++b) {
      if (const JointLimit* l = limits.find(names[b])) frame[b] = constrain(frame[b], *l);
    }
  }
}

// ---- hierarchy --------------------------------------------------------------------

std::vector<std::string> joint_names(const Skeleton& skeleton) {
  std::vector<std::string> out;
  const auto& kp = skeleton.names();
  for (const auto& b : skeleton.bones()) {
    if (b.parent == skeleton.root() || skeleton.child_bones(b.parent).size() > 1) {
      out.push_back(kp[b.parent] + "." + kp[b.child]);
    } else {
      out.push_back(kp[b.parent]);
    }
  }
  return out;
}

std::vector<Quat> global_rotations(const RestPose& rest, std::span<const Quat> local) {
  const Skeleton& sk = *rest.skeleton;
  if (local.size() != sk.bone_count()) {
    throw ShapeError(fmt::format("{} rotations for {} bones", local.size(), sk.bone_count()));
  }
  const auto parents = parent_bones(sk);
  std::vector<Quat> global(sk.bone_count(), Quat::Identity());
  for (std::size_t b = 0; b < sk.bone_count(); ++b) {
    const Quat parent = parents[b] < sk.bone_count() ? global[parents[b]] : Quat::Identity();
    global[b] = (parent * local[b]).normalized();
  }
  return global;
}

std::vector<Vec3d> forward_kinematics_world(const RestPose& rest, const Vec3d& root, std::span<const Quat> local) {
  const Skeleton& sk = *rest.skeleton;
  const auto global = global_rotations(rest, local);
  std::vector<Vec3d> pos(sk.keypoint_count(), Vec3d::Zero());
  pos[sk.root()] = root;
  for (std::size_t b = 0; b < sk.bone_count(); ++b) {
    const Bone& bone = sk.bones()[b];
    pos[bone.child] = pos[bone.parent] + global[b] * rest.offset(b);
  }
  return pos;
}

std::vector<float> forward_kinematics(const RestPose& rest, const Vec3d& root, std::span<const Quat> local) {
  const auto pos = forward_kinematics_world(rest, root, local);
  std::vector<float> out(pos.size() * 3);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    for (int i = 0; i < 3; ++i) out[k * 3 + i] = static_cast<float>(pos[k][i]);
  }
  return out;
}

PoseSequence forward_kinematics(const Animation& animation) {
  if (!animation.rest) throw InvalidArgument("forward_kinematics: animation has no rest pose");
  const auto& rest = *animation.rest;
  PoseSequence out(animation.frames(), rest.skeleton->keypoint_count(), animation.fps, rest.skeleton);
  for (std::size_t t = 0; t < animation.frames(); ++t) {
    const auto f = forward_kinematics(rest, animation.root_positions[t], animation.rotations[t]);
    std::copy(f.begin(), f.end(), out.frame(t).begin());
  }
  return out;
}

// ---- smoothing and interpolation -----------------------------------------------------

Animation smooth(const Animation& animation, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw InvalidArgument(fmt::format("smoothing window must be odd, got {}", window));
  Animation out = animation;
  const std::size_t n = animation.frames();
  if (n == 0 || window == 1) return out;
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  for (std::size_t t = 0; t < n; ++t) {
    Vec3d root = Vec3d::Zero();
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      root += animation.root_positions[std::clamp(static_cast<std::ptrdiff_t>(t) + k, std::ptrdiff_t{0}, last)];
    }
    out.root_positions[t] = root / static_cast<double>(window);
    for (std::size_t b = 0; b < animation.rotations[t].size(); ++b) {
      const Quat& centre = animation.rotations[t][b];
      Eigen::Vector4d acc = Eigen::Vector4d::Zero();
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const Quat& q = animation.rotations[std::clamp(static_cast<std::ptrdiff_t>(t) + k, std::ptrdiff_t{0}, last)][b];
        acc += (q.coeffs().dot(centre.coeffs()) < 0.0 ? -1.0 : 1.0) * q.coeffs();
      }
      Quat avg;
      avg.coeffs() = acc;
      out.rotations[t][b] = avg.normalized();
    }
  }
  return out;
}

double interpolation_weight(double t, InterpolationMode mode) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument(fmt::format("interpolation parameter {} is outside [0, 1]", t));
  return mode == InterpolationMode::kWithin ? t : t * t * (3.0 - 2.0 * t);
}

Quat interpolate(const Quat& a, const Quat& b, double t, InterpolationMode mode) {
  const double w = interpolation_weight(t, mode);
  const double sign = a.coeffs().dot(b.coeffs()) < 0.0 ? -1.0 : 1.0;
  Quat q;
  q.coeffs() = (1.0 - w) * a.coeffs() + w * sign * b.coeffs();
  return q.normalized();
}

std::vector<float> interpolate_frames(std::span<const float> a, std::span<const float> b, double t,
                                      InterpolationMode mode) {
  if (a.size() != b.size()) throw ShapeError(fmt::format("cannot interpolate frames of {} and {} values", a.size(), b.size()));
  const double w = interpolation_weight(t, mode);
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = static_cast<float>(a[i] + w * (static_cast<double>(b[i]) - a[i]));
  return out;
}

}  // namespace s2g
