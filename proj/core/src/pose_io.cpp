#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "s2g/error.hpp"
#include "s2g/pose.hpp"

namespace s2g {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string header_line(const std::vector<std::string>& names, double fps) {
  return fmt::format("# s2g-pose K={} fps={} names={}\n", names.size(), fps, fmt::join(names, ","));
}

void write_record(std::string& out, std::size_t index, std::span<const float> values) {
  out += std::to_string(index);
  for (float v : values) {
    if (std::isfinite(v)) {
      out += fmt::format(" {:.6f}", v);
    } else {
      out += " nan";
    }
  }
  out += '\n';
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError(fmt::format("write to {} failed", path.string()));
}

}  // namespace

PoseTrack read_pose_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open pose file {}", path.string()));
  std::string line;
  if (!std::getline(f, line) || line.empty()) throw IoError(fmt::format("pose file {} is empty", path.string()));

  PoseTrack track;
  std::size_t k = 0;
  {
    std::istringstream hs(line);
    std::string hash, magic;
    hs >> hash >> magic;
    if (hash != "#" || magic != "s2g-pose") throw IoError(fmt::format("{}: missing s2g-pose header", path.string()));
    std::string field;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw IoError(fmt::format("{}: malformed header field '{}'", path.string(), field));
      const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
      if (key == "K") {
        k = std::stoul(value);
      } else if (key == "fps") {
        track.fps = std::stod(value);
      } else if (key == "names") {
        track.names = split(value, ',');
      } else {
        throw IoError(fmt::format("{}: unknown header field '{}'", path.string(), key));
      }
    }
  }
  if (k == 0 || track.names.size() != k) {
    throw IoError(fmt::format("{}: header declares K={} with {} names", path.string(), k, track.names.size()));
  }
  if (!(track.fps > 0.0)) throw IoError(fmt::format("{}: fps must be positive", path.string()));

  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long index = -1;
    if (!(ls >> index) || index < 0) throw IoError(fmt::format("{}:{}: bad frame index", path.string(), line_no));
    std::vector<float> values;
    values.reserve(k * 3);
    std::string tok;
    bool finite = true;
    while (ls >> tok) {
      float v = std::strtof(tok.c_str(), nullptr);
      if (tok == "nan" || tok == "NaN" || !std::isfinite(v)) finite = false;
      values.push_back(v);
    }
    if (values.size() != k * 3) {
      throw IoError(fmt::format("{}:{}: expected {} values, got {}", path.string(), line_no, k * 3, values.size()));
    }
    const auto idx = static_cast<std::size_t>(index);
    if (idx < track.frames.size() && track.frames[idx]) {
      throw IoError(fmt::format("{}:{}: duplicate frame {}", path.string(), line_no, idx));
    }
    if (track.frames.size() <= idx) track.frames.resize(idx + 1);
    if (finite) track.frames[idx] = std::move(values);
  }
  return track;
}

void write_pose_track(const std::filesystem::path& path, const PoseTrack& track) {
  std::string out = header_line(track.names, track.fps);
  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    if (track.frames[i]) write_record(out, i, *track.frames[i]);
  }
  write_text(path, out);
}

void write_pose_file(const std::filesystem::path& path, const PoseSequence& seq) {
  if (!seq.skeleton) throw InvalidArgument("write_pose_file needs a skeleton for keypoint names");
  std::string out = header_line(seq.skeleton->names(), seq.fps);
  for (std::size_t t = 0; t < seq.frames; ++t) write_record(out, t, seq.frame(t));
  write_text(path, out);
}

}  // namespace s2g
