#include <charconv>
#include <fstream>
#include <functional>

#include <fmt/format.h>

#include "s2g/animate.hpp"

namespace s2g {

namespace {

const std::vector<std::string> kRootChannels = {"Xposition", "Yposition", "Zposition",
                                                "Zrotation", "Xrotation", "Yrotation"};
const std::vector<std::string> kJointChannels = {"Zrotation", "Xrotation", "Yrotation"};

std::string num(double v) {
  std::string s = fmt::format("{:.6f}", v);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

class Tokens {
 public:
  explicit Tokens(std::string_view text) : text_(text) {}

  std::string_view next() {
    skip_space();
    if (pos_ >= text_.size()) throw BvhError("unexpected end of BVH text");
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  bool done() {
    skip_space();
    return pos_ >= text_.size();
  }

  void expect(std::string_view word) {
    const auto got = next();
    if (got != word) throw BvhError(fmt::format("BVH: expected '{}', found '{}'", word, got));
  }

  double number() {
    const auto tok = next();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw BvhError(fmt::format("BVH: expected a number, found '{}'", tok));
    }
    return v;
  }

  std::size_t count() {
    const double v = number();
    if (v < 0.0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw BvhError(fmt::format("BVH: expected a count, found {}", v));
    }
    return static_cast<std::size_t>(v);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

Vec3d read_offset(Tokens& tk) {
  tk.expect("OFFSET");
  Vec3d v;
  for (int i = 0; i < 3; ++i) v[i] = tk.number();
  return v;
}

void parse_joint(Tokens& tk, BvhDocument& doc, int parent) {
  BvhJoint j;
  j.name = std::string(tk.next());
  j.parent = parent;
  tk.expect("{");
  j.offset = read_offset(tk);
  tk.expect("CHANNELS");
  const std::size_t n = tk.count();
  for (std::size_t i = 0; i < n; ++i) j.channels.emplace_back(tk.next());
  const int index = static_cast<int>(doc.joints.size());
  doc.joints.push_back(std::move(j));
  for (;;) {
    const auto word = tk.next();
    if (word == "}") return;
    if (word == "JOINT") {
      parse_joint(tk, doc, index);
    } else if (word == "End") {
      tk.expect("Site");
      tk.expect("{");
      doc.joints[index].end_site = read_offset(tk);
      tk.expect("}");
    } else {
      throw BvhError(fmt::format("BVH: unexpected '{}' in joint {}", word, doc.joints[index].name));
    }
  }
}

}  // namespace

std::size_t BvhDocument::channel_count() const noexcept {
  std::size_t n = 0;
  for (const auto& j : joints) n += j.channels.size();
  return n;
}

BvhDocument to_bvh(const Animation& animation) {
  if (!animation.rest) throw InvalidArgument("to_bvh: animation has no rest pose");
  const RestPose& rest = *animation.rest;
  const Skeleton& sk = *rest.skeleton;
  const auto names = joint_names(sk);

  BvhDocument doc;
  doc.frame_time = animation.fps > 0.0 ? 1.0 / animation.fps : 0.0;
  doc.joints.push_back({sk.names()[sk.root()], -1, rest.positions[sk.root()], kRootChannels, std::nullopt});
  std::vector<std::size_t> bone_of_joint{sk.bone_count()};

  // Joint b sits at its bone's parent keypoint; its children are the bones
  // leaving the bone's child keypoint.
  std::function<void(std::size_t, int, const Vec3d&)> visit = [&](std::size_t b, int parent, const Vec3d& offset) {
    const int index = static_cast<int>(doc.joints.size());
    doc.joints.push_back({names[b], parent, offset, kJointChannels, std::nullopt});
    bone_of_joint.push_back(b);
    const auto children = sk.child_bones(sk.bones()[b].child);
    if (children.empty()) {
      doc.joints[index].end_site = rest.offset(b);
      return;
    }
    for (std::size_t c : children) visit(c, index, rest.offset(b));
  };
  for (std::size_t b : sk.child_bones(sk.root())) visit(b, 0, Vec3d::Zero());

  for (std::size_t t = 0; t < animation.frames(); ++t) {
    std::vector<double> row;
    row.reserve(doc.channel_count());
    const Vec3d& root = animation.root_positions[t];
    row.insert(row.end(), {root.x(), root.y(), root.z(), 0.0, 0.0, 0.0});
    for (std::size_t j = 1; j < doc.joints.size(); ++j) {
      const EulerZxy e = to_euler_zxy(animation.rotations[t][bone_of_joint[j]]);
      row.insert(row.end(), {e.z, e.x, e.y});
    }
    doc.frames.push_back(std::move(row));
  }
  return doc;
}

std::string format_bvh(const BvhDocument& doc) {
  std::string out = "HIERARCHY\n";
  std::vector<std::vector<std::size_t>> children(doc.joints.size());
  for (std::size_t j = 1; j < doc.joints.size(); ++j) children[static_cast<std::size_t>(doc.joints[j].parent)].push_back(j);

  std::function<void(std::size_t, std::size_t)> emit = [&](std::size_t j, std::size_t depth) {
    const BvhJoint& joint = doc.joints[j];
    const std::string pad(depth, '\t');
    out += fmt::format("{}{} {}\n{}{{\n", pad, joint.parent < 0 ? "ROOT" : "JOINT", joint.name, pad);
    out += fmt::format("{}\tOFFSET {} {} {}\n", pad, num(joint.offset.x()), num(joint.offset.y()), num(joint.offset.z()));
    out += fmt::format("{}\tCHANNELS {}", pad, joint.channels.size());
    for (const auto& c : joint.channels) out += " " + c;
    out += "\n";
    for (std::size_t c : children[j]) emit(c, depth + 1);
    if (joint.end_site) {
      const Vec3d& e = *joint.end_site;
      out += fmt::format("{0}\tEnd Site\n{0}\t{{\n{0}\t\tOFFSET {1} {2} {3}\n{0}\t}}\n", pad, num(e.x()), num(e.y()),
                         num(e.z()));
    }
    out += pad + "}\n";
  };
  if (!doc.joints.empty()) emit(0, 0);

  out += fmt::format("MOTION\nFrames: {}\nFrame Time: {}\n", doc.frames.size(), num(doc.frame_time));
  for (const auto& row : doc.frames) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i > 0) out += ' ';
      out += num(row[i]);
    }
    out += '\n';
  }
  return out;
}

std::string write_bvh(const Animation& animation) { return format_bvh(to_bvh(animation)); }

void save_bvh(const Animation& animation, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << write_bvh(animation);
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

BvhDocument parse_bvh(std::string_view text) {
  Tokens tk(text);
  BvhDocument doc;
  tk.expect("HIERARCHY");
  tk.expect("ROOT");
  parse_joint(tk, doc, -1);
  tk.expect("MOTION");
  tk.expect("Frames:");
  const std::size_t frames = tk.count();
  tk.expect("Frame");
  tk.expect("Time:");
  doc.frame_time = tk.number();
  const std::size_t width = doc.channel_count();
  for (std::size_t f = 0; f < frames; ++f) {
    std::vector<double> row(width);
    for (auto& v : row) v = tk.number();
    doc.frames.push_back(std::move(row));
  }
  if (!tk.done()) throw BvhError("BVH: trailing data after the last frame");
  return doc;
}

}  // namespace s2g
