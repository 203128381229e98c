#include <bit>
#include <cstring>
#include <iterator>

#include <fmt/format.h>

#include "s2g/stream.hpp"

namespace s2g {

static_assert(std::endian::native == std::endian::little, "frame codec assumes a little-endian host");

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get(std::span<const std::uint8_t> bytes, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes[offset + i]) << (8 * i));
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(const PoseFrameMessage& m) {
  if (m.coords.size() % 3 != 0) {
    throw FrameError(FrameErrorKind::kInvalidMessage, fmt::format("frame has {} coordinates, not a multiple of 3", m.coords.size()));
  }
  const std::size_t k = m.keypoints();
  if (k > 0xFFFF) throw FrameError(FrameErrorKind::kInvalidMessage, fmt::format("frame has {} keypoints", k));
  const std::size_t payload = frame_payload_size(k);
  std::vector<std::uint8_t> out;
  out.reserve(4 + payload);
  put(out, static_cast<std::uint32_t>(payload));
  put(out, kProtocolVersion);
  put(out, m.sequence);
  put(out, m.frame_index);
  put(out, m.timestamp_ms);
  put(out, static_cast<std::uint16_t>(k));
  const std::size_t at = out.size();
  out.resize(at + m.coords.size() * 4);
  std::memcpy(out.data() + at, m.coords.data(), m.coords.size() * 4);
  return out;
}

PoseFrameMessage decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw FrameError(FrameErrorKind::kShortBuffer, fmt::format("frame buffer of {} bytes has no length prefix", bytes.size()));
  }
  const auto length = get<std::uint32_t>(bytes, 0);
  const std::size_t available = bytes.size() - 4;
  if (available < length) {
    throw FrameError(FrameErrorKind::kShortBuffer,
                     fmt::format("frame declares {} payload bytes but only {} are present", length, available));
  }
  if (available > length) {
    throw FrameError(FrameErrorKind::kLengthMismatch,
                     fmt::format("frame declares {} payload bytes but the buffer holds {}", length, available));
  }
  if (length < 1) throw FrameError(FrameErrorKind::kShortBuffer, "frame payload is empty");
  const auto payload = bytes.subspan(4);
  if (payload[0] != kProtocolVersion) {
    throw FrameError(FrameErrorKind::kUnknownVersion, fmt::format("unknown frame protocol version {}", payload[0]));
  }
  if (payload.size() < frame_payload_size(0)) {
    throw FrameError(FrameErrorKind::kShortBuffer, fmt::format("frame payload of {} bytes is shorter than its header", payload.size()));
  }
  PoseFrameMessage m;
  m.sequence = get<std::uint32_t>(payload, 1);
  m.frame_index = payload[5];
  m.timestamp_ms = get<std::uint64_t>(payload, 6);
  const auto k = get<std::uint16_t>(payload, 14);
  if (payload.size() != frame_payload_size(k)) {
    throw FrameError(FrameErrorKind::kLengthMismatch,
                     fmt::format("frame with {} keypoints needs {} payload bytes, got {}", k, frame_payload_size(k),
                                 payload.size()));
  }
  m.coords.resize(static_cast<std::size_t>(k) * 3);
  std::memcpy(m.coords.data(), payload.data() + 16, m.coords.size() * 4);
  return m;
}

void FrameReader::feed(std::span<const std::uint8_t> bytes) { buffer_.insert(buffer_.end(), bytes.begin(), bytes.end()); }

std::optional<PoseFrameMessage> FrameReader::next() {
  if (buffer_.size() < 4) return std::nullopt;
  const auto length = get<std::uint32_t>(buffer_, 0);
  if (buffer_.size() - 4 < length) return std::nullopt;
  const std::size_t total = 4 + static_cast<std::size_t>(length);
  PoseFrameMessage m = decode_frame(std::span(buffer_).first(total));
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(total));
  return m;
}

FileSink::FileSink(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw IoError(fmt::format("cannot open {} for writing", path.string()));
}

void FileSink::send(const PoseFrameMessage& message) {
  const auto bytes = encode_frame(message);
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw IoError(fmt::format("failed writing {}", path_.string()));
}

void FileSink::close() {
  if (out_.is_open()) out_.close();
}

std::vector<PoseFrameMessage> read_frame_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open frame file {}", path.string()));
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  FrameReader reader;
  reader.feed(bytes);
  std::vector<PoseFrameMessage> out;
  while (auto m = reader.next()) out.push_back(std::move(*m));
  if (reader.buffered() != 0) {
    throw FrameError(FrameErrorKind::kShortBuffer, fmt::format("{} ends with a partial frame", path.string()));
  }
  return out;
}

}  // namespace s2g
