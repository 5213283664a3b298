#include <benchmark/benchmark.h>

#include "protood/batch_scoring.hpp"
#include "protood/prototypes.hpp"
#include "protood/synth.hpp"
#include "protood/tuner.hpp"

using namespace protood;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) == 0 ? Exec::serial : Exec::parallel; }

const World& world() {
  static const World w = [] {
    SynthConfig cfg;
    return generate_world(cfg);
  }();
  return w;
}

void BM_ScoreRecords(benchmark::State& state) {
  const World& w = world();
  std::vector<Vec> mapped = w.test.vectors();
  ScoringInputs in;
  in.kind = ScoreKind::gmp;
  in.text = &w.text_protos;
  in.image = &w.image_protos;
  in.mapped = &mapped;
  for (auto _ : state) benchmark::DoNotOptimize(score_records(w.test, in, exec_of(state)));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(w.test.size()));
}

void BM_ForwardBackward(benchmark::State& state) {
  const FrozenTextEncoder encoder(EncoderSpec{1, 64, 64, 32});
  TuningTaskConfig t;
  const World w = generate_tuning_task(t, encoder, 2);
  TrainConfig cfg;
  const TrainedModel model = initial_model(w.train, encoder, 2, cfg);
  const auto samples = labeled_samples(w.train);
  const std::span<const TrainSample> batch(samples.data(), cfg.batch_size);
  const auto tokens = model.class_tokens();
  const Vec noise(encoder.token_dim(), 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(forward_backward(batch, model.params, encoder, tokens, cfg, noise, exec_of(state)));
}

void BM_VerifyTheorem(benchmark::State& state) {
  SynthConfig cfg;
  cfg.n_per_class_test = 50;
  cfg.n_ood = 500;
  for (auto _ : state) benchmark::DoNotOptimize(verify_theorem(cfg, 10, ScoreConfig{1.0}, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_ScoreRecords)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardBackward)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_VerifyTheorem)->Arg(0)->Arg(1)->ArgName("parallel")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
