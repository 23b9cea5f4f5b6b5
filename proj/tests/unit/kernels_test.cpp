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


#include "cdrift/kernels.hpp"

#include <omp.h>

#include "cdrift/synthetic_world.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cdrift;
namespace t = cdrift::testing;

namespace {

struct Fixture {
  GeneratedWorld gen;
  std::vector<TraceRecord> records;
  FeatureMapConfig fm;
  std::vector<PreferencePair> pairs;

  explicit Fixture(std::uint64_t seed) {
    WorldConfig cfg;
    cfg.seed = seed;
    cfg.records = 60;
    gen = generate(cfg);
    for (const auto& g : gen.records) records.push_back(g.record);
    fm = t::small_map(gen.world.vocab.size(), 0, 2);
    for (const auto& a : gen.world.graph.attributes()) fm.attribute_ids.push_back(a.id);
    std::sort(fm.attribute_ids.begin(), fm.attribute_ids.end());
    const MentionMatcher matcher(gen.world.graph, gen.world.vocab);
    pairs = build_thinking_pairs(records, matcher, {});
    const auto random = build_random_pairs(records, matcher, 1, seed);
    pairs.insert(pairs.end(), random.begin(), random.end());
  }
};

}  // namespace

TEST_CASE("visual scoring: serial and parallel agree bit for bit") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Fixture f(seed);
    Rng rng(seed);
    const auto p = t::random_params(f.fm, 3, rng);
    std::vector<VisualContext> visuals;
    for (const auto& r : f.records) visuals.push_back(r.visual);
    for (const auto& r : f.records) {
      const auto a = kernels::score_visuals_serial(p, r.trace, r.prompt, visuals);
      for (int threads : {1, 2, 4}) {
        omp_set_num_threads(threads);
        CHECK(kernels::score_visuals_parallel(p, r.trace, r.prompt, visuals) == a);
      }
      CHECK(a[0] == doctest::Approx(t::oracle_logprob(p, visuals[0], r.prompt, r.trace)).epsilon(1e-12));
    }
  }
}

TEST_CASE("batch loss and gradient: serial and parallel agree bit for bit") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Fixture f(seed);
    Rng rng(seed + 50);
    const auto ref = t::random_params(f.fm, 3, rng);
    const auto p = t::random_params(f.fm, 3, rng);
    std::vector<RefLogprobs> lp;
    for (const auto& pair : f.pairs) lp.push_back(reference_logprobs(ref, pair));
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < f.pairs.size(); i += 1 + rng.below(3)) idx.push_back(i);

    Matrix gs, gp;
    const auto s = kernels::batch_loss_grad_serial(p, f.pairs, lp, idx, 0.1, gs);
    for (int threads : {1, 2, 3, 8}) {
      omp_set_num_threads(threads);
      const auto q = kernels::batch_loss_grad_parallel(p, f.pairs, lp, idx, 0.1, gp);
      CHECK(q.loss == s.loss);
      CHECK(q.mean_margin == s.mean_margin);
      CHECK(q.reward_accuracy == s.reward_accuracy);
      CHECK(gp == gs);
    }
  }
}
