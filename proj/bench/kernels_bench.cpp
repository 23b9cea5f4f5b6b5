// Copyright 2026 The cdrift Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <benchmark/benchmark.h>

#include <algorithm>

#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/kernels.hpp"
#include "cdrift/synthetic_world.hpp"

using namespace cdrift;

namespace {

struct Data {
  std::vector<TraceRecord> records;
  std::vector<VisualContext> visuals;
  std::vector<PreferencePair> pairs;
  std::vector<RefLogprobs> ref;
  std::vector<std::size_t> indices;
  PolicyParams params;

  Data() {
    WorldConfig cfg;
    cfg.seed = 1;
    cfg.records = 512;
    cfg.entities = 8;
    const auto gen = generate(cfg);
    for (const auto& g : gen.records) {
      records.push_back(g.record);
      visuals.push_back(g.record.visual);
    }
    FeatureMapConfig fm;
    fm.window = 2;
    fm.vocab_size = gen.world.vocab.size();
    fm.markers = gen.world.vocab.markers();
    for (const auto& a : gen.world.graph.attributes()) fm.attribute_ids.push_back(a.id);
    std::sort(fm.attribute_ids.begin(), fm.attribute_ids.end());
    std::vector<std::string> labels;
    for (const auto& e : gen.world.graph.entities()) labels.push_back(e.id);
    params = PolicyParams::zeros(fm, labels);
    Rng rng(7);
    for (double& w : params.token_weights.data) w = rng.uniform() - 0.5;

    const MentionMatcher matcher(gen.world.graph, gen.world.vocab);
    pairs = build_thinking_pairs(records, matcher, {});
    for (const auto& p : pairs) ref.push_back(reference_logprobs(params, p));
    for (std::size_t i = 0; i < pairs.size(); ++i) indices.push_back(i);
  }
};

const Data& data() {
  static const Data d;
  return d;
}

void BM_ScoreVisualsSerial(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::score_visuals_serial(d.params, d.records[0].trace, d.records[0].prompt, d.visuals));
}

void BM_ScoreVisualsParallel(benchmark::State& state) {
  const auto& d = data();
  for (auto _ : state)
    benchmark::DoNotOptimize(kernels::score_visuals_parallel(d.params, d.records[0].trace, d.records[0].prompt, d.visuals));
}

void BM_BatchLossGradSerial(benchmark::State& state) {
  const auto& d = data();
  const std::span<const std::size_t> idx(d.indices.data(), static_cast<std::size_t>(state.range(0)));
  Matrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::batch_loss_grad_serial(d.params, d.pairs, d.ref, idx, 0.1, grad));
}

void BM_BatchLossGradParallel(benchmark::State& state) {
  const auto& d = data();
  const std::span<const std::size_t> idx(d.indices.data(), static_cast<std::size_t>(state.range(0)));
  Matrix grad;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::batch_loss_grad_parallel(d.params, d.pairs, d.ref, idx, 0.1, grad));
}

}  // namespace

BENCHMARK(BM_ScoreVisualsSerial);
BENCHMARK(BM_ScoreVisualsParallel);
BENCHMARK(BM_BatchLossGradSerial)->Arg(8)->Arg(64)->Arg(512);
BENCHMARK(BM_BatchLossGradParallel)->Arg(8)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
