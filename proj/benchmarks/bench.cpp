#include <cmath>
#include <numbers>

#include <benchmark/benchmark.h>

#include "s2g/animate.hpp"
#include "s2g/audio.hpp"
#include "s2g/model.hpp"
#include "s2g/random.hpp"
#include "s2g/stream.hpp"

namespace s2g {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

AudioChunk tone_chunk() {
  std::vector<float> s(chunk_sample_count(kDefaultSampleRate));
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * 180.0 * static_cast<double>(i) / kDefaultSampleRate));
  }
  return chunk_stream(s, kDefaultSampleRate).front();
}

// Channels in and out, 198 frames, kernel 3, stride 2.
void BM_Conv1d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = random_tensor({c, 198}, rng);
  const Tensor w = random_tensor({c, c, 3}, rng);
  for (auto _ : state) {
    Graph g;
    const Var out = conv1d(g, g.parameter(x), g.parameter(w), 2, 1);
    benchmark::DoNotOptimize(g.value(out).data().data());
  }
}
BENCHMARK(BM_Conv1d)->Arg(64)->Arg(128)->Arg(256);

void BM_MelChunk(benchmark::State& state) {
  const AudioChunk chunk = tone_chunk();
  const MelExtractor mel;
  for (auto _ : state) benchmark::DoNotOptimize(mel(chunk).values.data().data());
}
BENCHMARK(BM_MelChunk);

// One 2 s chunk through the default generator; the real-time budget is 2 s.
void BM_GeneratorForward(benchmark::State& state) {
  GeneratorConfig config;
  const auto params = GeneratorParams::init(config, 1);
  const auto skeleton = Skeleton::upper_body();
  const FeatureSequence features = MelExtractor{}(tone_chunk());
  for (auto _ : state) benchmark::DoNotOptimize(generator_forward(features, params, skeleton).coords.data());
}
BENCHMARK(BM_GeneratorForward)->Unit(benchmark::kMillisecond);

void BM_GeneratorBackward(benchmark::State& state) {
  GeneratorConfig config;
  config.widths = {32, 64};
  const auto params = GeneratorParams::init(config, 1);
  const Tensor input = prepare_features(MelExtractor{}(tone_chunk()), config);
  Rng rng(2);
  const Tensor target = random_tensor({config.out_frames, 3 * config.keypoints}, rng);
  for (auto _ : state) {
    Graph g;
    const auto vars = params.params.bind(g);
    const Var pred = generator_graph(g, g.constant(input), config, vars);
    const Var loss = l1_loss(g, pred, g.constant(target));
    benchmark::DoNotOptimize(g.backward(loss).of(vars.front()).data().data());
  }
}
BENCHMARK(BM_GeneratorBackward)->Unit(benchmark::kMillisecond);

void BM_Retarget(benchmark::State& state) {
  const auto rest = std::make_shared<const RestPose>(RestPose::avatar());
  StubPredictor stub(Nanos::zero());
  AudioChunk chunk;
  chunk.id = 1;
  PoseSequence poses = stub.predict(chunk);
  for (std::size_t t = 0; t < poses.frames; ++t) {
    for (std::size_t k = 0; k < poses.keypoints; ++k) {
      const auto p = poses.at(t, k);
      const Vec3d& r = rest->positions[k];
      poses.set(t, k, {p[0] + static_cast<float>(r.x()), p[1] + static_cast<float>(r.y()), p[2] + static_cast<float>(r.z())});
    }
  }
  const JointLimits limits = JointLimits::defaults(*rest->skeleton);
  for (auto _ : state) benchmark::DoNotOptimize(retarget(poses, rest, &limits).rotations.data());
}
BENCHMARK(BM_Retarget);

void BM_FrameCodec(benchmark::State& state) {
  PoseFrameMessage m;
  m.sequence = 3;
  m.coords.assign(49 * 3, 0.5f);
  for (auto _ : state) {
    const auto bytes = encode_frame(m);
    benchmark::DoNotOptimize(decode_frame(bytes).coords.data());
  }
}
BENCHMARK(BM_FrameCodec);

}  // namespace
}  // namespace s2g

BENCHMARK_MAIN();
