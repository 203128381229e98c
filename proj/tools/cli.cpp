#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <json.hpp>

#include "s2g/animate.hpp"
#include "s2g/stream.hpp"
#include "s2g/train.hpp"

namespace s2g::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

void emit(std::ostream& out, const json& record) { out << record.dump() << '\n'; }

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Settings {
  // common
  std::string config;
  std::uint64_t seed = 1;
  bool json_lines = false;
  // synth-data
  std::size_t pairs = 20;
  std::string out;
  // train / eval
  std::string data;
  std::string val_data;
  std::string log;
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  float lr_g = 1e-4f;
  float lr_d = 4e-4f;
  float momentum = 0.9f;
  float lambda_bone = 0.5f;
  float adv_weight = 1.0f;
  std::string widths = "64,128,256,512";
  std::size_t bottleneck_convs = 1;
  std::string disc_widths = "64,128";
  std::string skeleton = "upper-body";
  std::string checkpoint;
  double alpha = 0.2;
  // retarget
  std::string poses;
  std::string limits;
  std::size_t smooth = 5;
  std::string rest = "avatar";
  // stream
  std::string audio;
  double stub_ms = 70.0;
  std::string clock = "virtual";
  std::string sink = "none";
};

const std::set<std::string> kFlags = {"json-lines"};

struct Commands {
  std::unique_ptr<CLI::App> app;
  CLI::App* synth = nullptr;
  CLI::App* train = nullptr;
  CLI::App* eval = nullptr;
  CLI::App* retarget = nullptr;
  CLI::App* stream = nullptr;
};

void add_common(CLI::App* sub, Settings& s) {
  sub->add_option("--config", s.config, "Settings file of 'key = value' lines; flags override it");
  sub->add_option("--seed", s.seed, "Seed for every random choice");
  sub->add_flag("--json-lines", s.json_lines, "Emit one JSON record per reporting event");
}

void add_model_options(CLI::App* sub, Settings& s) {
  sub->add_option("--widths", s.widths, "Generator encoder widths, comma separated");
  sub->add_option("--bottleneck-convs", s.bottleneck_convs, "Generator bottleneck conv count");
  sub->add_option("--disc-widths", s.disc_widths, "Discriminator conv widths, comma separated");
  sub->add_option("--skeleton", s.skeleton, "Keypoint skeleton (upper-body)");
}

Commands make_commands(Settings& s) {
  Commands c;
  c.app = std::make_unique<CLI::App>("Speech-to-gesture engine", "s2g");
  c.app->require_subcommand(1);
  c.app->option_defaults()->take_last()->always_capture_default();

  c.synth = c.app->add_subcommand("synth-data", "Write a synthetic audio/pose corpus");
  add_common(c.synth, s);
  c.synth->add_option("--pairs", s.pairs, "Number of 2 s pairs")->check(CLI::PositiveNumber);
  c.synth->add_option("--out", s.out, "Output directory")->required();

  c.train = c.app->add_subcommand("train", "Train generator and discriminator");
  add_common(c.train, s);
  add_model_options(c.train, s);
  c.train->add_option("--data", s.data, "Data directories (audio.wav + poses.pose), comma separated")->required();
  c.train->add_option("--val-data", s.val_data, "Validation directories; default holds out 10% of --data");
  c.train->add_option("--out", s.out, "Checkpoint path")->required();
  c.train->add_option("--log", s.log, "Metric log path (one JSON record per epoch)");
  c.train->add_option("--epochs", s.epochs, "Training epochs");
  c.train->add_option("--batch-size", s.batch_size, "Pairs per batch")->check(CLI::PositiveNumber);
  c.train->add_option("--lr-g", s.lr_g, "Generator learning rate");
  c.train->add_option("--lr-d", s.lr_d, "Discriminator learning rate");
  c.train->add_option("--momentum", s.momentum, "SGD momentum");
  c.train->add_option("--lambda-bone", s.lambda_bone, "Bone-length loss weight");
  c.train->add_option("--adv-weight", s.adv_weight, "Adversarial loss weight in the generator objective");
  c.train->add_option("--alpha", s.alpha, "PCK radius for validation");

  c.eval = c.app->add_subcommand("eval", "Report PCK of a checkpoint on a dataset");
  add_common(c.eval, s);
  c.eval->add_option("--checkpoint", s.checkpoint, "Checkpoint path")->required();
  c.eval->add_option("--data", s.data, "Data directories, comma separated")->required();
  c.eval->add_option("--alpha", s.alpha, "PCK radius as a fraction of shoulder width");
  c.eval->add_option("--skeleton", s.skeleton, "Keypoint skeleton (upper-body)");

  c.retarget = c.app->add_subcommand("retarget", "Convert a pose file to BVH animation");
  add_common(c.retarget, s);
  c.retarget->add_option("--poses", s.poses, "Pose file")->required();
  c.retarget->add_option("--out", s.out, "BVH output path")->required();
  c.retarget->add_option("--limits", s.limits, "Joint limits file; default uses built-in limits");
  c.retarget->add_option("--smooth", s.smooth, "Smoothing window in frames (odd; 1 disables)");
  c.retarget->add_option("--rest", s.rest, "Rest pose: avatar | first-frame");
  c.retarget->add_option("--skeleton", s.skeleton, "Keypoint skeleton (upper-body)");

  c.stream = c.app->add_subcommand("stream", "Run the real-time pipeline on a recording");
  add_common(c.stream, s);
  c.stream->add_option("--audio", s.audio, "WAV file replayed as live capture")->required();
  c.stream->add_option("--checkpoint", s.checkpoint, "Checkpoint; without one a stub predictor is used");
  c.stream->add_option("--stub-ms", s.stub_ms, "Stub inference cost in milliseconds");
  c.stream->add_option("--clock", s.clock, "real | virtual")->check(CLI::IsMember({"real", "virtual"}));
  c.stream->add_option("--sink", s.sink, "none | file:<path> | tcp:<host>:<port>");
  c.stream->add_option("--skeleton", s.skeleton, "Keypoint skeleton (upper-body)");
  return c;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Config-file values go in front of the user's flags; options keep the last
// value given, so flags win.
std::vector<std::string> merged_args(const Commands& c, const std::vector<std::string>& args) {
  if (args.empty() || args[0].starts_with("-")) return args;
  CLI::App* sub = nullptr;
  for (CLI::App* candidate : {c.synth, c.train, c.eval, c.retarget, c.stream}) {
    if (candidate->get_name() == args[0]) sub = candidate;
  }
  if (sub == nullptr) return args;
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--help" || args[i] == "-h") return args;
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
  }
  if (config_path.empty()) return args;

  std::vector<std::string> out = {args[0]};
  for (const auto& [key, value] : parse_config(read_text(config_path))) {
    if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
      throw UsageError(fmt::format("unknown key '{}' in {} for {}", key, config_path, sub->get_name()));
    }
    if (kFlags.contains(key)) {
      out.push_back(fmt::format("--{}={}", key, value));
    } else {
      out.push_back("--" + key);
      out.push_back(value);
    }
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

void parse(Commands& c, const std::vector<std::string>& args) {
  std::vector<std::string> reversed = merged_args(c, args);
  std::reverse(reversed.begin(), reversed.end());
  c.app->parse(reversed);
}

std::vector<std::size_t> parse_widths(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t v = 0;
    try {
      std::size_t used = 0;
      v = std::stoul(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(fmt::format("--{} expects comma-separated positive integers, got '{}'", what, text));
    }
    if (v == 0) throw UsageError(fmt::format("--{} widths must be positive", what));
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(fmt::format("--{} is empty", what));
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::shared_ptr<const Skeleton> skeleton_for(const Settings& s) {
  if (s.skeleton != "upper-body") throw UsageError(fmt::format("unknown skeleton '{}'", s.skeleton));
  return Skeleton::upper_body();
}

Dataset load_dirs(const std::string& list, const Settings& s) {
  std::vector<SourceFiles> sources;
  for (const auto& dir : split_list(list)) {
    const fs::path p(dir);
    const std::string name = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
    sources.push_back({p / "audio.wav", p / "poses.pose", name, name});
  }
  if (sources.empty()) throw UsageError("no data directories given");
  return build_dataset(sources, skeleton_for(s));
}

// ---- subcommands ------------------------------------------------------------------

int run_synth(const Settings& s, std::ostream& out) {
  const fs::path dir(s.out);
  fs::create_directories(dir);
  const SynthCorpus corpus = synth_corpus(s.seed, s.pairs);
  write_wav(dir / "audio.wav", corpus.audio.samples, corpus.audio.sample_rate, WavEncoding::kFloat32);
  write_pose_track(dir / "poses.pose", corpus.poses);
  if (s.json_lines) {
    emit(out, {{"event", "synth"}, {"seed", s.seed}, {"pairs", s.pairs}, {"out", dir.generic_string()}});
  } else {
    fmt::print(out, "wrote {} synthetic pairs to {}\n", s.pairs, dir.string());
  }
  return kOk;
}

int run_train(const Settings& s, std::ostream& out) {
  Dataset train_set;
  Dataset validation;
  const Dataset data = load_dirs(s.data, s);
  if (s.val_data.empty()) {
    auto split = split_validation(data);
    train_set = std::move(split.train);
    validation = std::move(split.validation);
  } else {
    train_set = data;
    validation = load_dirs(s.val_data, s);
  }

  GeneratorConfig gc;
  gc.widths = parse_widths(s.widths, "widths");
  gc.bottleneck_convs = s.bottleneck_convs;
  gc.keypoints = skeleton_for(s)->keypoint_count();
  DiscriminatorConfig dc;
  dc.widths = parse_widths(s.disc_widths, "disc-widths");
  dc.keypoints = gc.keypoints;
  dc.motion_frames = gc.out_frames - 1;

  TrainConfig tc;
  tc.lambda_bone = s.lambda_bone;
  tc.lr_g = s.lr_g;
  tc.lr_d = s.lr_d;
  tc.momentum = s.momentum;
  tc.adv_weight = s.adv_weight;
  tc.batch_size = s.batch_size;
  tc.epochs = s.epochs;
  tc.seed = s.seed;
  tc.pck_alpha = s.alpha;

  std::ofstream log;
  if (!s.log.empty()) {
    log.open(s.log, std::ios::trunc);
    if (!log) throw IoError(fmt::format("cannot open metric log {}", s.log));
  }
  const auto on_epoch = [&](const EpochMetrics& m) {
    const std::string line = format_metrics_line(m);
    if (log.is_open()) log << line << '\n' << std::flush;
    if (s.json_lines) {
      out << line << '\n';
    } else {
      fmt::print(out, "epoch {}: d_loss={:.5f} g_l1={:.5f} g_bone={:.5f} g_adv={:.5f} val_pck={:.2f}\n", m.epoch,
                 m.d_loss, m.g_l1, m.g_bone, m.g_adv, m.val_pck);
    }
  };
  const Checkpoint ck = train(train_set, validation, tc, gc, dc, on_epoch);
  save_checkpoint(ck, s.out);
  if (s.json_lines) {
    emit(out, {{"event", "checkpoint"},
               {"path", fs::path(s.out).generic_string()},
               {"epoch", ck.epoch},
               {"train_pairs", train_set.size()},
               {"val_pairs", validation.size()}});
  } else {
    fmt::print(out, "saved {} after {} epochs ({} train / {} validation pairs)\n", s.out, ck.epoch, train_set.size(),
               validation.size());
  }
  return kOk;
}

int run_eval(const Settings& s, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(s.checkpoint);
  const Dataset data = load_dirs(s.data, s);
  const PckReport report = evaluate(ck, data, s.alpha);
  if (s.json_lines) {
    for (const auto& [speaker, value] : report.per_speaker) {
      emit(out, {{"event", "speaker"}, {"speaker", speaker}, {"alpha", s.alpha}, {"pck", value}});
    }
    emit(out, {{"event", "eval"}, {"alpha", s.alpha}, {"pairs", report.pairs.size()}, {"pck", report.mean}});
  } else {
    fmt::print(out, "pck@{:.2f} = {:.4f}\n", s.alpha, report.mean);
  }
  return kOk;
}

int run_retarget(const Settings& s, std::ostream& out) {
  const auto skeleton = skeleton_for(s);
  const PoseTrack track = read_pose_file(s.poses);
  if (track.names != skeleton->names()) throw InvalidArgument("pose file keypoints do not match the skeleton");
  PoseSequence seq(track.frames.size(), skeleton->keypoint_count(), track.fps, skeleton);
  for (std::size_t t = 0; t < track.frames.size(); ++t) {
    if (!track.frames[t]) throw InvalidArgument(fmt::format("pose file has a gap at frame {}", t));
    std::copy(track.frames[t]->begin(), track.frames[t]->end(), seq.frame(t).begin());
  }
  if (seq.frames == 0) throw InvalidArgument("pose file has no frames");

  std::shared_ptr<const RestPose> rest;
  if (s.rest == "avatar") {
    rest = std::make_shared<const RestPose>(RestPose::avatar());
  } else if (s.rest == "first-frame") {
    rest = std::make_shared<const RestPose>(RestPose::from_frame(seq.frame(0), skeleton));
  } else {
    throw UsageError(fmt::format("--rest must be avatar or first-frame, got '{}'", s.rest));
  }
  const JointLimits limits = s.limits.empty() ? JointLimits::defaults(*skeleton) : JointLimits::load(s.limits);
  Animation anim = retarget(seq, rest, &limits);
  if (s.smooth > 1) {
    anim = smooth(anim, s.smooth);
    apply_limits(anim, limits);
  }
  save_bvh(anim, s.out);
  if (s.json_lines) {
    emit(out, {{"event", "retarget"}, {"frames", anim.frames()}, {"fps", anim.fps}, {"out", fs::path(s.out).generic_string()}});
  } else {
    fmt::print(out, "wrote {} frames at {} fps to {}\n", anim.frames(), anim.fps, s.out);
  }
  return kOk;
}

std::unique_ptr<FrameSink> make_sink(const std::string& where) {
  if (where == "none") return std::make_unique<CallbackSink>([](const PoseFrameMessage&) {});
  if (where.starts_with("file:")) return std::make_unique<FileSink>(where.substr(5));
  if (where.starts_with("tcp:")) {
    const std::string rest = where.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw UsageError("--sink tcp:<host>:<port> needs a port");
    int port = 0;
    try {
      port = std::stoi(rest.substr(colon + 1));
    } catch (const std::exception&) {
      port = -1;
    }
    if (port <= 0 || port > 65535) throw UsageError(fmt::format("invalid port in --sink {}", where));
    return std::make_unique<TcpSink>(rest.substr(0, colon), static_cast<std::uint16_t>(port));
  }
  throw UsageError(fmt::format("unknown --sink '{}'", where));
}

int run_stream(const Settings& s, std::ostream& out) {
  const auto skeleton = skeleton_for(s);
  const ClockMode clock = s.clock == "real" ? ClockMode::kReal : ClockMode::kVirtual;
  auto source = replay_source(s.audio, clock);
  std::unique_ptr<Predictor> predictor;
  if (s.checkpoint.empty()) {
    if (!(s.stub_ms >= 0.0)) throw UsageError("--stub-ms must be non-negative");
    predictor = std::make_unique<StubPredictor>(Nanos(static_cast<std::int64_t>(s.stub_ms * 1e6)), skeleton);
  } else {
    predictor = std::make_unique<ModelPredictor>(load_checkpoint(s.checkpoint).generator, skeleton);
  }
  auto sink = make_sink(s.sink);
  PipelineConfig config;
  config.clock = clock;
  config.log = [&](const std::string& msg) {
    if (s.json_lines) {
      emit(out, {{"event", "stall"}, {"message", msg}});
    } else {
      fmt::print(out, "{}\n", msg);
    }
  };
  const LatencyReport report = run_pipeline(*source, *predictor, *sink, config);
  for (const auto& c : report.chunks) {
    if (s.json_lines) {
      emit(out, {{"event", "chunk"},
                 {"id", c.id},
                 {"capture_complete", c.capture_complete},
                 {"inference", c.inference},
                 {"first_playback", c.first_playback},
                 {"total_delay", c.total_delay}});
    } else {
      fmt::print(out, "chunk {}: captured {:.3f} s, inference {:.1f} ms, playback {:.3f} s, delay {:.3f} s\n", c.id,
                 c.capture_complete, c.inference * 1e3, c.first_playback, c.total_delay);
    }
  }
  if (s.json_lines) {
    emit(out, {{"event", "latency"},
               {"chunks", report.chunks.size()},
               {"frames", report.frames_emitted},
               {"mean_delay", report.mean_delay},
               {"max_delay", report.max_delay}});
  } else {
    fmt::print(out, "{} chunks, {} frames, mean delay {:.3f} s, max delay {:.3f} s\n", report.chunks.size(),
               report.frames_emitted, report.mean_delay, report.max_delay);
  }
  return kOk;
}

}  // namespace

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(fmt::format("config line {}: expected 'key = value'", line_no));
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw UsageError(fmt::format("config line {}: empty key", line_no));
    out[key] = trim(t.substr(eq + 1));
  }
  return out;
}

std::map<std::string, std::string> resolve_settings(const std::vector<std::string>& args) {
  Settings s;
  Commands c = make_commands(s);
  parse(c, args);
  std::map<std::string, std::string> out;
  for (CLI::App* sub : c.app->get_subcommands()) {
    for (const CLI::Option* opt : sub->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string key = opt->get_lnames().front();
      if (key == "help" || key == "config") continue;
      if (kFlags.contains(key)) {
        out[key] = opt->count() > 0 && opt->as<bool>() ? "true" : "false";
      } else {
        out[key] = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
      }
    }
  }
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Settings s;
  Commands c = make_commands(s);
  try {
    parse(c, args);
  } catch (const CLI::Success&) {
    const CLI::App* target = c.app.get();
    for (const CLI::App* sub : c.app->get_subcommands()) target = sub;
    out << target->help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << c.app->help();
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }

  try {
    if (c.synth->parsed()) return run_synth(s, out);
    if (c.train->parsed()) return run_train(s, out);
    if (c.eval->parsed()) return run_eval(s, out);
    if (c.retarget->parsed()) return run_retarget(s, out);
    if (c.stream->parsed()) return run_stream(s, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
  err << c.app->help();
  return kUsage;
}

}  // namespace s2g::cli
