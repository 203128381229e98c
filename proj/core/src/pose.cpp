#include "s2g/pose.hpp"

#include <cmath>

#include <fmt/format.h>

#include "s2g/error.hpp"

namespace s2g {

Skeleton::Skeleton(std::vector<std::string> names, std::vector<Bone> bones, std::size_t root,
                   std::size_t left_shoulder, std::size_t right_shoulder)
    : names_(std::move(names)),
      bones_(std::move(bones)),
      root_(root),
      left_shoulder_(left_shoulder),
      right_shoulder_(right_shoulder) {
  const std::size_t k = names_.size();
  if (k < 2) throw InvalidArgument("skeleton needs at least two keypoints");
  if (bones_.size() != k - 1) {
    throw InvalidArgument(fmt::format("skeleton with {} keypoints needs {} bones, got {}", k, k - 1, bones_.size()));
  }
  if (root_ >= k || left_shoulder_ >= k || right_shoulder_ >= k) {
    throw InvalidArgument("skeleton root or shoulder index out of range");
  }
  if (left_shoulder_ == right_shoulder_) throw InvalidArgument("skeleton shoulders must be distinct keypoints");
  std::vector<bool> attached(k, false);
  attached[root_] = true;
  for (const auto& b : bones_) {
    if (b.parent >= k || b.child >= k) {
      throw InvalidArgument(fmt::format("bone ({}, {}) outside {} keypoints", b.parent, b.child, k));
    }
    if (!attached[b.parent]) {
      throw InvalidArgument(fmt::format("bone ({}, {}) appears before its parent is attached", b.parent, b.child));
    }
    if (attached[b.child]) {
      throw InvalidArgument(fmt::format("keypoint {} is attached twice (cycle or duplicate)", b.child));
    }
    attached[b.child] = true;
  }
}

std::shared_ptr<const Skeleton> Skeleton::upper_body() {
  static const std::shared_ptr<const Skeleton> instance = [] {
    std::vector<std::string> names = {"root",    "neck",       "head",    "l_shoulder", "l_elbow",
                                      "l_wrist", "r_shoulder", "r_elbow", "r_wrist"};
    std::vector<Bone> bones = {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {4, 5}, {1, 6}, {6, 7}, {7, 8}};
    const std::array<const char*, 5> fingers = {"thumb", "index", "middle", "ring", "pinky"};
    for (const auto& [side, wrist] : {std::pair{"l", std::size_t{5}}, std::pair{"r", std::size_t{8}}}) {
      for (const char* finger : fingers) {
        std::size_t parent = wrist;
        for (int j = 1; j <= 4; ++j) {
          names.push_back(fmt::format("{}_{}{}", side, finger, j));
          bones.push_back({parent, names.size() - 1});
          parent = names.size() - 1;
        }
      }
    }
    return std::make_shared<const Skeleton>(std::move(names), std::move(bones), 0, 3, 6);
  }();
  return instance;
}

std::optional<std::size_t> Skeleton::find(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Skeleton::bone_ending_at(std::size_t keypoint) const {
  for (std::size_t b = 0; b < bones_.size(); ++b) {
    if (bones_[b].child == keypoint) return b;
  }
  return std::nullopt;
}

std::vector<std::size_t> Skeleton::child_bones(std::size_t keypoint) const {
  std::vector<std::size_t> out;
  for (std::size_t b = 0; b < bones_.size(); ++b) {
    if (bones_[b].parent == keypoint) out.push_back(b);
  }
  return out;
}

PoseSequence::PoseSequence(std::size_t frames_, std::size_t keypoints_, double fps_,
                           std::shared_ptr<const Skeleton> skeleton_)
    : frames(frames_), keypoints(keypoints_), fps(fps_), coords(frames_ * keypoints_ * 3, 0.0f),
      skeleton(std::move(skeleton_)) {
  if (skeleton && skeleton->keypoint_count() != keypoints) {
    throw ShapeError(fmt::format("pose has {} keypoints, skeleton has {}", keypoints, skeleton->keypoint_count()));
  }
}

PoseSequence::PoseSequence(std::size_t frames_, double fps_, std::shared_ptr<const Skeleton> skeleton_)
    : PoseSequence(frames_, skeleton_ ? skeleton_->keypoint_count() : 0, fps_, skeleton_) {}

Vec3f PoseSequence::at(std::size_t t, std::size_t k) const {
  const std::size_t i = (t * keypoints + k) * 3;
  return {coords[i], coords[i + 1], coords[i + 2]};
}

void PoseSequence::set(std::size_t t, std::size_t k, const Vec3f& v) {
  const std::size_t i = (t * keypoints + k) * 3;
  coords[i] = v[0];
  coords[i + 1] = v[1];
  coords[i + 2] = v[2];
}

std::span<const float> PoseSequence::frame(std::size_t t) const {
  return std::span<const float>(coords).subspan(t * keypoints * 3, keypoints * 3);
}

std::span<float> PoseSequence::frame(std::size_t t) {
  return std::span<float>(coords).subspan(t * keypoints * 3, keypoints * 3);
}

namespace {

float distance(std::span<const float> frame, std::size_t a, std::size_t b) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < 3; ++i) {
    const float d = frame[b * 3 + i] - frame[a * 3 + i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

std::vector<float> bone_lengths(std::span<const float> frame, const Skeleton& skeleton) {
  if (frame.size() != skeleton.keypoint_count() * 3) {
    throw ShapeError(fmt::format("frame has {} values, skeleton needs {}", frame.size(), skeleton.keypoint_count() * 3));
  }
  std::vector<float> out;
  out.reserve(skeleton.bone_count());
  for (const auto& b : skeleton.bones()) out.push_back(distance(frame, b.parent, b.child));
  return out;
}

MotionSequence motion(const PoseSequence& seq) {
  if (seq.frames < 2) throw InvalidArgument(fmt::format("motion needs at least 2 frames, got {}", seq.frames));
  MotionSequence m;
  m.frames = seq.frames - 1;
  m.keypoints = seq.keypoints;
  const std::size_t width = seq.keypoints * 3;
  m.deltas.resize(m.frames * width);
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t i = 0; i < width; ++i) {
      m.deltas[t * width + i] = seq.coords[(t + 1) * width + i] - seq.coords[t * width + i];
    }
  }
  return m;
}

double pck(const PoseSequence& pred, const PoseSequence& gt, double alpha) {
  if (pred.frames != gt.frames || pred.keypoints != gt.keypoints || pred.coords.size() != gt.coords.size()) {
    throw ShapeError(fmt::format("pck shape mismatch: {}x{} vs {}x{}", pred.frames, pred.keypoints, gt.frames,
                                 gt.keypoints));
  }
  if (!(alpha > 0.0)) throw InvalidArgument("pck alpha must be positive");
  if (!gt.skeleton) throw InvalidArgument("pck needs a ground-truth skeleton for the reference length");
  const std::size_t ls = gt.skeleton->left_shoulder(), rs = gt.skeleton->right_shoulder();
  std::size_t hits = 0;
  for (std::size_t t = 0; t < gt.frames; ++t) {
    const auto g = gt.frame(t);
    const auto p = pred.frame(t);
    const double ref = distance(g, ls, rs);
    if (ref <= 0.0) throw InvalidArgument(fmt::format("pck reference length is zero in frame {}", t));
    const double radius = alpha * ref;
    for (std::size_t k = 0; k < gt.keypoints; ++k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < 3; ++i) {
        const double d = static_cast<double>(p[k * 3 + i]) - static_cast<double>(g[k * 3 + i]);
        acc += d * d;
      }
      if (std::sqrt(acc) <= radius) ++hits;
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(gt.frames * gt.keypoints);
}

PoseSequence normalize_pose(const PoseSequence& raw) {
  if (!raw.skeleton) throw InvalidArgument("normalize_pose needs a skeleton");
  if (raw.frames == 0) throw InvalidArgument("normalize_pose needs at least one frame");
  for (float v : raw.coords) {
    if (!std::isfinite(v)) throw InvalidArgument("normalize_pose: non-finite coordinate");
  }
  const auto& sk = *raw.skeleton;
  double shoulder_sum = 0.0;
  for (std::size_t t = 0; t < raw.frames; ++t) shoulder_sum += distance(raw.frame(t), sk.left_shoulder(), sk.right_shoulder());
  const double mean_shoulder = shoulder_sum / static_cast<double>(raw.frames);
  if (!(mean_shoulder > 0.0)) throw InvalidArgument("normalize_pose: mean shoulder distance is zero");

  PoseSequence out = raw;
  const auto inv = static_cast<float>(1.0 / mean_shoulder);
  for (std::size_t t = 0; t < raw.frames; ++t) {
    const Vec3f origin = raw.at(t, sk.root());
    auto f = out.frame(t);
    for (std::size_t k = 0; k < raw.keypoints; ++k) {
      for (std::size_t i = 0; i < 3; ++i) f[k * 3 + i] = (f[k * 3 + i] - origin[i]) * inv;
    }
  }
  return out;
}

}  // namespace s2g
