#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include <fmt/format.h>
#include <json.hpp>
#include <zlib.h>

#include "s2g/train.hpp"

namespace s2g {

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

namespace {

using nlohmann::json;

constexpr std::array<std::uint8_t, 4> kMagic = {'G', '2', 'P', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_bytes(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > limit_ - pos_) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, fmt::format("checkpoint truncated while reading {}", what));
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    const auto s = take(4, what);
    return static_cast<std::uint32_t>(s[0]) | (static_cast<std::uint32_t>(s[1]) << 8) |
           (static_cast<std::uint32_t>(s[2]) << 16) | (static_cast<std::uint32_t>(s[3]) << 24);
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

json generator_json(const GeneratorConfig& c) {
  return {{"bands", c.bands},
          {"feature_frames", c.feature_frames},
          {"widths", c.widths},
          {"kernel", c.kernel},
          {"bottleneck_convs", c.bottleneck_convs},
          {"slope", c.slope},
          {"out_frames", c.out_frames},
          {"keypoints", c.keypoints},
          {"feature_offset", c.feature_offset},
          {"feature_scale", c.feature_scale}};
}

GeneratorConfig generator_from(const json& j) {
  GeneratorConfig c;
  c.bands = j.at("bands").get<std::size_t>();
  c.feature_frames = j.at("feature_frames").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.bottleneck_convs = j.at("bottleneck_convs").get<std::size_t>();
  c.slope = j.at("slope").get<float>();
  c.out_frames = j.at("out_frames").get<std::size_t>();
  c.keypoints = j.at("keypoints").get<std::size_t>();
  c.feature_offset = j.at("feature_offset").get<float>();
  c.feature_scale = j.at("feature_scale").get<float>();
  return c;
}

json discriminator_json(const DiscriminatorConfig& c) {
  return {{"keypoints", c.keypoints},
          {"motion_frames", c.motion_frames},
          {"widths", c.widths},
          {"kernel", c.kernel},
          {"slope", c.slope}};
}

DiscriminatorConfig discriminator_from(const json& j) {
  DiscriminatorConfig c;
  c.keypoints = j.at("keypoints").get<std::size_t>();
  c.motion_frames = j.at("motion_frames").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.slope = j.at("slope").get<float>();
  return c;
}

json train_json(const TrainConfig& c) {
  return {{"lambda_bone", c.lambda_bone}, {"lr_g", c.lr_g},           {"lr_d", c.lr_d},
          {"momentum", c.momentum},       {"adv_weight", c.adv_weight}, {"batch_size", c.batch_size},
          {"epochs", c.epochs},           {"seed", c.seed},           {"pck_alpha", c.pck_alpha}};
}

TrainConfig train_from(const json& j) {
  TrainConfig c;
  c.lambda_bone = j.at("lambda_bone").get<float>();
  c.lr_g = j.at("lr_g").get<float>();
  c.lr_d = j.at("lr_d").get<float>();
  c.momentum = j.at("momentum").get<float>();
  c.adv_weight = j.at("adv_weight").get<float>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.pck_alpha = j.at("pck_alpha").get<double>();
  return c;
}

// NaN has no JSON form; it is written as null and read back as NaN.
json number(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double number_from(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json history_json(const std::vector<EpochMetrics>& history) {
  json arr = json::array();
  for (const auto& m : history) {
    arr.push_back({{"epoch", m.epoch},
                   {"d_loss", number(m.d_loss)},
                   {"g_l1", number(m.g_l1)},
                   {"g_bone", number(m.g_bone)},
                   {"g_adv", number(m.g_adv)},
                   {"gan_objective", number(m.gan_objective)},
                   {"val_pck", number(m.val_pck)}});
  }
  return arr;
}

std::vector<EpochMetrics> history_from(const json& arr) {
  std::vector<EpochMetrics> out;
  for (const auto& j : arr) {
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.d_loss = number_from(j.at("d_loss"));
    m.g_l1 = number_from(j.at("g_l1"));
    m.g_bone = number_from(j.at("g_bone"));
    m.g_adv = number_from(j.at("g_adv"));
    m.gan_objective = number_from(j.at("gan_objective"));
    m.val_pck = number_from(j.at("val_pck"));
    out.push_back(m);
  }
  return out;
}

void put_tensors(std::vector<std::uint8_t>& out, const std::string& prefix, const ParamSet& set) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::string name = prefix + set.name(i);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    const Tensor& t = set[i];
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    put_bytes(out, t.data().data(), t.size() * sizeof(float));
  }
}

struct RawTensor {
  std::string name;
  Tensor value;
};

void fill_params(ParamSet& set, const std::string& prefix, std::vector<RawTensor>& raw, std::size_t& cursor) {
  for (std::size_t i = 0; i < set.size(); ++i, ++cursor) {
    if (cursor >= raw.size()) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint has too few tensors for its config");
    }
    auto& r = raw[cursor];
    if (r.name != prefix + set.name(i) || r.value.shape() != set[i].shape()) {
      throw CheckpointError(CheckpointErrorKind::kMalformed,
                            fmt::format("checkpoint tensor {} {} does not match expected {}{} {}", r.name,
                                        shape_string(r.value.shape()), prefix, set.name(i),
                                        shape_string(set[i].shape())));
    }
    set[i] = std::move(r.value);
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
  const json meta = {{"generator", generator_json(ck.generator.config)},
                     {"discriminator", discriminator_json(ck.discriminator.config)},
                     {"train", train_json(ck.config)},
                     {"epoch", ck.epoch},
                     {"history", history_json(ck.history)}};
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, ck.format_version);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  put_bytes(out, text.data(), text.size());
  put_u32(out, static_cast<std::uint32_t>(ck.generator.params.size() + ck.discriminator.params.size()));
  put_tensors(out, "generator.", ck.generator.params);
  put_tensors(out, "discriminator.", ck.discriminator.params);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data(), static_cast<uInt>(out.size()));
  put_u32(out, static_cast<std::uint32_t>(crc));
  return out;
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) {
    throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint is shorter than its magic number");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw CheckpointError(CheckpointErrorKind::kBadMagic, "not a checkpoint (bad magic)");
  }
  Reader header(bytes, bytes.size());
  header.take(4, "magic");
  const std::uint32_t version = header.u32("version");
  if (version != Checkpoint::kFormatVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersionMismatch,
                          fmt::format("checkpoint format version {} is not supported (expected {})", version,
                                      Checkpoint::kFormatVersion));
  }
  if (bytes.size() < 16) throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint truncated");

  // Walk the structure before verifying the checksum so a short file is
  // reported as truncated rather than corrupt.
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  r.take(8, "header");
  const std::uint32_t meta_len = r.u32("metadata length");
  const auto meta_bytes = r.take(meta_len, "metadata");
  const std::uint32_t count = r.u32("tensor count");
  std::vector<RawTensor> raw;
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    const auto name = r.take(r.u32("tensor name length"), "tensor name");
    t.name.assign(name.begin(), name.end());
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) {
      throw CheckpointError(CheckpointErrorKind::kMalformed, fmt::format("tensor {} has rank {}", t.name, rank));
    }
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t dim = r.u32("tensor shape");
      if (dim == 0) throw CheckpointError(CheckpointErrorKind::kMalformed, fmt::format("tensor {} has a zero dimension", t.name));
      shape.push_back(dim);
    }
    const std::size_t n = shape_numel(shape);
    if (n > body / sizeof(float)) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, fmt::format("checkpoint truncated in tensor {}", t.name));
    }
    const auto data = r.take(n * sizeof(float), "tensor data");
    std::vector<float> values(n);
    std::memcpy(values.data(), data.data(), data.size());
    t.value = Tensor(std::move(shape), std::move(values));
    raw.push_back(std::move(t));
  }
  if (r.position() != body) {
    throw CheckpointError(CheckpointErrorKind::kMalformed,
                          fmt::format("checkpoint has {} unexpected trailing bytes", body - r.position()));
  }
  Reader tail(bytes, bytes.size());
  tail.take(body, "body");
  const std::uint32_t stored = tail.u32("checksum");
  const uLong crc = crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(body));
  if (static_cast<std::uint32_t>(crc) != stored) {
    throw CheckpointError(CheckpointErrorKind::kChecksum,
                          fmt::format("checkpoint checksum mismatch: stored {:08x}, computed {:08x}", stored,
                                      static_cast<std::uint32_t>(crc)));
  }

  Checkpoint ck;
  try {
    const json meta = json::parse(meta_bytes.begin(), meta_bytes.end());
    ck.generator = GeneratorParams::zeros(generator_from(meta.at("generator")));
    ck.discriminator = DiscriminatorParams::zeros(discriminator_from(meta.at("discriminator")));
    ck.config = train_from(meta.at("train"));
    ck.epoch = meta.at("epoch").get<std::size_t>();
    ck.history = history_from(meta.at("history"));
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, fmt::format("checkpoint metadata: {}", e.what()));
  } catch (const InvalidArgument& e) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, fmt::format("checkpoint metadata: {}", e.what()));
  }
  ck.format_version = version;
  std::size_t cursor = 0;
  fill_params(ck.generator.params, "generator.", raw, cursor);
  fill_params(ck.discriminator.params, "discriminator.", raw, cursor);
  if (cursor != raw.size()) {
    throw CheckpointError(CheckpointErrorKind::kMalformed, "checkpoint has more tensors than its config needs");
  }
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint {}", path.string()));
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace s2g
