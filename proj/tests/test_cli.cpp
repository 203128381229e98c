#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cli.hpp"
#include "s2g/animate.hpp"
#include "s2g/random.hpp"
#include "s2g/stream.hpp"
#include "support/fixtures.hpp"

namespace s2g {
namespace {

using nlohmann::json;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

// Every non-empty stdout line parses as a JSON object with an event or epoch.
void expect_json_lines(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++n;
    const json j = json::parse(line);
    EXPECT_TRUE(j.is_object());
    EXPECT_TRUE(j.contains("event") || j.contains("epoch")) << line;
  }
  EXPECT_GT(n, 0u);
}

// A tiny corpus and checkpoint shared by the slower command tests.
class CliCorpus : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    ASSERT_EQ(run({"synth-data", "--seed", "4", "--pairs", "6", "--out", (*dir_ / "data").string()}).code, 0);
    const Result r = run({"train", "--data", (*dir_ / "data").string(), "--out", (*dir_ / "model.ckpt").string(),
                          "--epochs", "1", "--widths", "8", "--disc-widths", "4", "--batch-size", "4"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static testing::TempDir* dir_;
};

testing::TempDir* CliCorpus::dir_ = nullptr;

TEST(Cli, ExitCodesAndUsage) {
  const Result none = run({});
  EXPECT_EQ(none.code, cli::kUsage);
  EXPECT_NE(none.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(none.out.empty());

  const Result unknown = run({"dance"});
  EXPECT_EQ(unknown.code, cli::kUsage);
  EXPECT_FALSE(unknown.err.empty());

  const Result missing = run({"eval", "--data", "x"});
  EXPECT_EQ(missing.code, cli::kUsage);
  EXPECT_NE(missing.err.find("checkpoint"), std::string::npos);

  const Result bad_value = run({"synth-data", "--out", "x", "--pairs", "many"});
  EXPECT_EQ(bad_value.code, cli::kUsage);

  testing::TempDir tmp;
  const Result runtime = run({"eval", "--checkpoint", (tmp / "nope.ckpt").string(), "--data", tmp.path().string()});
  EXPECT_EQ(runtime.code, cli::kRuntime);
  EXPECT_NE(runtime.err.find("error:"), std::string::npos);
}

TEST(Cli, HelpExitsZero) {
  for (const char* cmd : {"synth-data", "train", "eval", "retarget", "stream"}) {
    const Result r = run({cmd, "--help"});
    EXPECT_EQ(r.code, cli::kOk) << cmd;
    EXPECT_NE(r.out.find("--seed"), std::string::npos) << cmd;
  }
  EXPECT_NE(run({"train", "--help"}).out.find("--lambda-bone"), std::string::npos);
}

TEST(Cli, SynthDataIsByteIdentical) {
  testing::TempDir tmp;
  ASSERT_EQ(run({"synth-data", "--seed", "9", "--pairs", "3", "--out", (tmp / "a").string()}).code, 0);
  ASSERT_EQ(run({"synth-data", "--seed", "9", "--pairs", "3", "--out", (tmp / "b").string()}).code, 0);
  ASSERT_EQ(run({"synth-data", "--seed", "10", "--pairs", "3", "--out", (tmp / "c").string()}).code, 0);
  for (const char* f : {"audio.wav", "poses.pose"}) {
    EXPECT_EQ(testing::read_file(tmp / "a" / f), testing::read_file(tmp / "b" / f)) << f;
  }
  EXPECT_NE(testing::read_file(tmp / "a" / "poses.pose"), testing::read_file(tmp / "c" / "poses.pose"));
}

TEST(Config, ParsesKeyValueLines) {
  const auto c = cli::parse_config("# comment\n  epochs = 3\n\nlr-g=0.5  \n");
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.at("epochs"), "3");
  EXPECT_EQ(c.at("lr-g"), "0.5");
  EXPECT_ANY_THROW(cli::parse_config("epochs 3\n"));
  EXPECT_ANY_THROW(cli::parse_config("= 3\n"));
}

TEST(Config, UnknownKeyIsAUsageError) {
  testing::TempDir tmp;
  write(tmp / "bad.cfg", "epochs = 2\nlearning-rate = 0.1\n");
  const Result r = run({"train", "--config", (tmp / "bad.cfg").string(), "--data", "x", "--out", "y"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_NE(r.err.find("learning-rate"), std::string::npos);
  // Keys belong to a subcommand: --pairs is not a train option.
  write(tmp / "other.cfg", "pairs = 3\n");
  EXPECT_EQ(run({"train", "--config", (tmp / "other.cfg").string(), "--data", "x", "--out", "y"}).code, cli::kUsage);
  EXPECT_EQ(run({"train", "--config", (tmp / "absent.cfg").string(), "--data", "x", "--out", "y"}).code, cli::kUsage);
}

TEST(Config, FlagsOverrideConfigForRandomKeySubsets) {
  // key -> (config value, flag value)
  const std::vector<std::pair<std::string, std::pair<std::string, std::string>>> keys = {
      {"epochs", {"3", "7"}},          {"batch-size", {"2", "5"}},      {"lr-g", {"0.25", "0.125"}},
      {"lr-d", {"0.5", "0.0625"}},     {"momentum", {"0.5", "0.75"}},   {"lambda-bone", {"0", "2"}},
      {"seed", {"11", "12"}},          {"widths", {"8,16", "4"}},       {"disc-widths", {"8", "2,2"}},
      {"log", {"a.log", "b.log"}},     {"alpha", {"0.1", "0.3"}},       {"adv-weight", {"0.5", "3"}},
      {"json-lines", {"true", "false"}}};
  testing::TempDir tmp;
  const auto defaults = cli::resolve_settings({"train", "--data", "d", "--out", "o"});
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    std::string config;
    std::vector<std::string> args = {"train", "--data", "d", "--out", "o", "--config", (tmp / "t.cfg").string()};
    std::map<std::string, std::string> expected = defaults;
    for (const auto& [key, values] : keys) {
      const bool in_config = rng.uniform(0.0, 1.0) < 0.5;
      const bool on_command_line = rng.uniform(0.0, 1.0) < 0.5;
      if (in_config) {
        config += key + " = " + values.first + "\n";
        expected[key] = values.first;
      }
      if (on_command_line) {
        args.push_back("--" + key + "=" + values.second);
        expected[key] = values.second;
      }
    }
    write(tmp / "t.cfg", config);
    auto got = cli::resolve_settings(args);
    for (const auto& [key, values] : keys) EXPECT_EQ(got.at(key), expected.at(key)) << "trial " << trial << " key " << key;
  }
}

TEST(Config, DefaultsAreReported) {
  const auto s = cli::resolve_settings({"train", "--data", "d", "--out", "o"});
  EXPECT_EQ(s.at("epochs"), "10");
  EXPECT_EQ(s.at("lambda-bone"), "0.5");
  EXPECT_EQ(s.at("widths"), "64,128,256,512");
  EXPECT_EQ(s.at("json-lines"), "false");
}

TEST_F(CliCorpus, EvalPrintsPck) {
  const Result r = run({"eval", "--checkpoint", path("model.ckpt"), "--data", path("data")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("pck@0.20 = ", 0), 0u) << r.out;
  const double v = std::stod(r.out.substr(11));
  EXPECT_GE(v, 0.0);
  EXPECT_LE(v, 100.0);
}

TEST_F(CliCorpus, TrainWritesMetricLog) {
  testing::TempDir tmp;
  const Result r = run({"train", "--data", path("data"), "--out", (tmp / "m.ckpt").string(), "--log",
                        (tmp / "m.log").string(), "--epochs", "2", "--widths", "8", "--disc-widths", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream log(testing::read_file(tmp / "m.log"));
  std::string line;
  int epochs = 0;
  while (std::getline(log, line)) {
    const json j = json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++epochs);
    EXPECT_TRUE(j.contains("gan_objective"));
  }
  EXPECT_EQ(epochs, 2);
}

TEST_F(CliCorpus, RetargetWritesBvh) {
  testing::TempDir tmp;
  const Result r = run({"retarget", "--poses", path("data/poses.pose"), "--out", (tmp / "a.bvh").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const BvhDocument doc = parse_bvh(testing::read_file(tmp / "a.bvh"));
  EXPECT_EQ(doc.frames.size(), 6u * kPosesPerChunk);
  EXPECT_EQ(run({"retarget", "--poses", path("data/poses.pose"), "--out", (tmp / "b.bvh").string(), "--smooth", "4"})
                .code,
            cli::kRuntime);
  EXPECT_EQ(run({"retarget", "--poses", path("data/poses.pose"), "--out", (tmp / "c.bvh").string(), "--rest", "tpose"})
                .code,
            cli::kUsage);
}

TEST_F(CliCorpus, StreamToFileSink) {
  testing::TempDir tmp;
  const Result r = run({"stream", "--audio", path("data/audio.wav"), "--sink", "file:" + (tmp / "f.bin").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto frames = read_frame_file(tmp / "f.bin");
  EXPECT_EQ(frames.size(), 6u * kPosesPerChunk);
  EXPECT_NE(r.out.find("mean delay 2.070 s"), std::string::npos) << r.out;
  EXPECT_EQ(run({"stream", "--audio", path("data/audio.wav"), "--clock", "wall"}).code, cli::kUsage);
  EXPECT_EQ(run({"stream", "--audio", path("data/audio.wav"), "--sink", "tcp:localhost"}).code, cli::kUsage);
}

TEST_F(CliCorpus, JsonLinesOnEveryCommand) {
  testing::TempDir tmp;
  const std::vector<std::vector<std::string>> commands = {
      {"synth-data", "--pairs", "1", "--out", (tmp / "s").string()},
      {"train", "--data", path("data"), "--out", (tmp / "t.ckpt").string(), "--epochs", "1", "--widths", "8",
       "--disc-widths", "4"},
      {"eval", "--checkpoint", path("model.ckpt"), "--data", path("data")},
      {"retarget", "--poses", path("data/poses.pose"), "--out", (tmp / "r.bvh").string()},
      {"stream", "--audio", path("data/audio.wav"), "--checkpoint", path("model.ckpt")}};
  for (auto args : commands) {
    args.push_back("--json-lines");
    const Result r = run(args);
    ASSERT_EQ(r.code, 0) << args[0] << ": " << r.err;
    expect_json_lines(r.out);
  }
}

}  // namespace
}  // namespace s2g
