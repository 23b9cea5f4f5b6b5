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


// Acceptance suite: one PASS/FAIL line per criterion. Tolerances, sizes and
// seeds are pinned here. Exits nonzero when any criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/cpo_optimizer.hpp"
#include "cdrift/drift_detector.hpp"
#include "cdrift/error.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/robustness.hpp"
#include "cdrift/synthetic_world.hpp"
#include "support/oracles.hpp"

using namespace cdrift;
namespace t = cdrift::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

FeatureMapConfig world_map(const World& world, std::size_t window, HeadMode head, bool head_visual) {
  FeatureMapConfig fm;
  fm.window = window;
  fm.vocab_size = world.vocab.size();
  fm.markers = world.vocab.markers();
  for (const auto& a : world.graph.attributes()) fm.attribute_ids.push_back(a.id);
  std::sort(fm.attribute_ids.begin(), fm.attribute_ids.end());
  fm.head = head;
  fm.head_visual = head_visual;
  return fm;
}

std::vector<std::string> entity_labels(const World& world) {
  std::vector<std::string> out;
  for (const auto& e : world.graph.entities()) out.push_back(e.id);
  return out;
}

// A random toy pair set mixing all three kinds.
std::vector<PreferencePair> random_pairs(const FeatureMapConfig& fm, std::size_t n, Rng& rng) {
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    TraceRecord rec;
    rec.record_id = "r" + std::to_string(i);
    rec.visual = t::random_visual(fm, rng, "v" + std::to_string(i));
    rec.trace = t::random_trace(fm.vocab_size, 1 + rng.below(6), rng);
    rec.gold_label = "y0";
    switch (i % 3) {
      case 0:
      case 2: {
        auto rejected = rec.trace;
        while (rejected == rec.trace) rejected = t::random_trace(fm.vocab_size, 1 + rng.below(6), rng);
        pairs.push_back(thinking_pair(rec, rejected, i % 3 ? PairKind::RandomNegative : PairKind::ThinkingCf));
        break;
      }
      case 1:
        pairs.push_back(perception_pair(rec, {t::random_visual(fm, rng, "d" + std::to_string(i)), 1.0}));
        break;
    }
  }
  return pairs;
}

FeatureMapConfig random_map(Rng& rng) {
  // |vocab| <= 12, feature size <= 64
  for (;;) {
    auto fm = t::small_map(3 + rng.below(10), rng.below(7), 1 + rng.below(4));
    fm.bias = rng.bernoulli(0.8);
    if (fm.feature_size() <= 64) return fm;
  }
}

// ---- 1 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance:gradient");
    const auto fm = random_map(rng);
    const auto pairs = random_pairs(fm, 1 + rng.below(8), rng);
    const auto ref = t::random_params(fm, 2, rng);
    auto p = t::random_params(fm, 2, rng);
    const double beta = 0.05 + rng.uniform();
    Matrix g;
    cpo_loss_and_grad(p, ref, pairs, beta, g);
    auto loss = [&] {
      Matrix unused;
      return cpo_loss_and_grad(p, ref, pairs, beta, unused).loss;
    };
    const auto fd = t::finite_difference(loss, p.token_weights.data, 1e-5);
    worst = std::max(worst, t::relative_error(g.data, fd));
  }
  const double elapsed = seconds_since(start);
  return {worst <= 1e-6 && elapsed < 5.0,
          "max relative error " + fmt("%.3g", worst) + " (limit 1e-6), " + fmt("%.2f", elapsed) + " s (limit 5)"};
}

// ---- 2 -------------------------------------------------------------------------

Outcome zero_margin_identity() {
  double worst = 0.0;
  bool exact = true;
  std::map<PairKind, std::size_t> kinds;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance:identity");
    const auto fm = random_map(rng);
    const auto pairs = random_pairs(fm, 3 + rng.below(6), rng);
    const auto ref = t::random_params(fm, 2, rng, 3.0);
    const auto same = ref;
    for (const auto& pair : pairs) {
      ++kinds[pair.kind];
      exact &= reward_margin(same, ref, pair, 0.1) == 0.0;
    }
    Matrix g;
    worst = std::max(worst, std::abs(cpo_loss_and_grad(same, ref, pairs, 0.1, g).loss - std::log(2.0)));
  }
  const bool all_kinds = kinds.size() == 3;
  return {exact && worst <= 1e-12 && all_kinds,
          "|loss - ln 2| max " + fmt("%.3g", worst) + " (limit 1e-12), margins exactly 0: " +
              (exact ? "yes" : "no") + ", pair kinds covered: " + std::to_string(kinds.size())};
}

// ---- 3 -------------------------------------------------------------------------

Outcome margin_recomposition() {
  std::size_t checked = 0, mismatched = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance:recompose");
    const auto fm = random_map(rng);
    const auto pairs = random_pairs(fm, 6, rng);
    const auto ref = t::random_params(fm, 2, rng);
    const auto p = t::random_params(fm, 2, rng);
    const double beta = 0.01 + rng.uniform();
    for (const auto& pair : pairs) {
      const double pc = sequence_logprob(p, pair.visual, pair.prompt, pair.chosen);
      const double rc = sequence_logprob(ref, pair.visual, pair.prompt, pair.chosen);
      const double pr = sequence_logprob(p, pair.rejected_visual(), pair.prompt, pair.rejected);
      const double rr = sequence_logprob(ref, pair.rejected_visual(), pair.prompt, pair.rejected);
      const double want = beta * ((pc - rc) - (pr - rr));
      ++checked;
      mismatched += reward_margin(p, ref, pair, beta) != want;
    }
  }
  return {mismatched == 0, std::to_string(checked - mismatched) + "/" + std::to_string(checked) + " margins bit-exact"};
}

// ---- 4 -------------------------------------------------------------------------

Outcome psi_sanity() {
  std::size_t violations = 0, cases = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance:psi");
    auto fm = random_map(rng);
    fm.head = rng.bernoulli(0.5) ? HeadMode::Window : HeadMode::Bag;
    const std::size_t labels = 2 + rng.below(5);
    const auto p = t::random_params(fm, labels, rng, 2.0);
    const auto v = t::random_visual(fm, rng, "v");
    const auto a = t::random_trace(fm.vocab_size, 1 + rng.below(6), rng);
    const auto b = t::random_trace(fm.vocab_size, 1 + rng.below(6), rng);
    ++cases;
    const auto self = estimate_psi(p, v, {}, a, a, 0).psi;
    const auto ab = estimate_psi(p, v, {}, a, b, 0).psi;
    const auto ba = estimate_psi(p, v, {}, b, a, 0).psi;
    auto zero_head = p;
    zero_head.head_weights.set_zero();
    const auto flat = estimate_psi(zero_head, v, {}, a, b, 0).psi;
    for (std::size_t i = 0; i < labels; ++i) {
      violations += self[i] != 0.0;
      violations += ab[i] != -ba[i];
      violations += flat[i] != 0.0;
    }
  }
  return {violations == 0, std::to_string(cases) + " instances, " + std::to_string(violations) + " violations"};
}

// ---- 5 -------------------------------------------------------------------------

std::vector<std::vector<double>> state_stream(const PolicyParams& p, const TraceRecord& r, const ThinkingTrace& trace) {
  std::vector<std::vector<double>> z;
  for (std::size_t j = trace.span_begin(); j < trace.span_end(); ++j) {
    const std::vector<TokenId> prefix(trace.tokens().begin(), trace.tokens().begin() + static_cast<std::ptrdiff_t>(j + 1));
    z.push_back(predict_label(p, r.visual, r.prompt, prefix));
  }
  return z;
}

Outcome drift_localization() {
  const auto start = std::chrono::steady_clock::now();
  WorldConfig wc;
  wc.entities = 6;
  wc.rho = 0.0;
  wc.noise_attributes = 0;
  wc.records = 700;
  wc.seed = 1;
  const auto gen = generate(wc);
  const auto& graph = gen.world.graph;

  // z_j read from the trace alone at every step
  const auto fm = world_map(gen.world, 1, HeadMode::Window, false);
  std::vector<TraceRecord> train, calibration, clean, pool;
  for (std::size_t i = 0; i < gen.records.size(); ++i) {
    const auto& r = gen.records[i].record;
    auto& dst = i < 200 ? train : i < 300 ? calibration : i < 400 ? clean : pool;
    dst.push_back(r);
  }
  SftConfig sft;
  sft.epochs = 20;
  sft.head_every_prefix = true;
  const auto policy = train_sft(PolicyParams::zeros(fm, entity_labels(gen.world)), train, sft);

  DriftConfig dc;
  dc.window = 3;
  std::vector<std::vector<double>> clean_series;
  for (const auto& r : calibration) clean_series.push_back(divergence_series(state_stream(policy, r, r.trace), dc));
  dc.threshold = calibrate_threshold(clean_series);

  std::size_t false_events = 0;
  for (const auto& r : clean)
    false_events += detect_events(divergence_series(state_stream(policy, r, r.trace), dc), dc, Channel::Thinking).size();

  // one substitution per stream: an attribute of the gold entity swapped for
  // one it Excludes
  const MentionMatcher matcher(graph, gen.world.vocab);
  Rng rng = Rng::stream(wc.seed, "acceptance:localization");
  std::size_t located = 0, streams = 0;
  for (const auto& r : pool) {
    if (streams == 200) break;
    const auto mentions = matcher.extract(r.trace);
    const std::size_t gold = graph.require_entity(r.gold_label);
    std::vector<Substitution> options;
    for (std::size_t i = 0; i < mentions.size(); ++i)
      for (std::size_t b : graph.substitution_indices(mentions[i].attribute, gold))
        if (graph.relation_at(gold, mentions[i].attribute) == RelationKind::Association &&
            graph.relation_at(gold, b) == RelationKind::Exclusion)
          options.push_back({i, b});
    if (options.empty()) continue;
    const auto edit = options[rng.below(options.size())];
    const auto injected = apply_substitutions(r.trace, matcher, mentions, {edit});
    // the first series entry touching the substituted step
    const std::size_t step = mentions[edit.mention].start - injected.span_begin();
    const std::size_t j = step ? step - 1 : 0;
    const auto events = detect_events(divergence_series(state_stream(policy, r, injected), dc), dc, Channel::Thinking);
    ++streams;
    located += events.size() == 1 && events[0].position >= j && events[0].position <= j + dc.window;
  }
  const double rate = streams ? static_cast<double>(located) / static_cast<double>(streams) : 0.0;
  const double elapsed = seconds_since(start);
  return {streams == 200 && rate >= 0.95 && false_events == 0 && elapsed < 10.0,
          "located " + std::to_string(located) + "/" + std::to_string(streams) + " (need 95%), threshold " +
              fmt("%.4f", dc.threshold) + ", false events on 100 clean streams " + std::to_string(false_events) +
              ", " + fmt("%.2f", elapsed) + " s (limit 10)"};
}

// ---- 6 -------------------------------------------------------------------------

Outcome mining_equivalence() {
  std::size_t mismatched = 0, pools = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = Rng::stream(seed, "acceptance:mining");
    auto fm = random_map(rng);
    while (fm.attribute_ids.empty()) fm = random_map(rng);
    ++pools;
    const auto p = t::random_params(fm, 2, rng, 2.0);
    const auto trace = t::random_trace(fm.vocab_size, 1 + rng.below(8), rng);
    const auto v_init = t::random_visual(fm, rng, "init");
    std::vector<VisualContext> distractors;
    const std::size_t n = 1 + rng.below(15);  // pool of at most 16 with v_init
    for (std::size_t i = 0; i < n; ++i) distractors.push_back(t::random_visual(fm, rng, "c" + std::to_string(100 + i)));
    const auto got = inverse_match(p, trace, {}, v_init, distractors);

    std::vector<ScoredVisual> want{{v_init.id, sequence_logprob(p, v_init, {}, trace)}};
    for (const auto& d : distractors) want.push_back({d.id, sequence_logprob(p, d, {}, trace)});
    std::sort(want.begin(), want.end(), [](const ScoredVisual& a, const ScoredVisual& b) {
      return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    bool same = got.ranking.size() == want.size();
    for (std::size_t i = 0; same && i < want.size(); ++i)
      same = got.ranking[i].id == want[i].id && got.ranking[i].score == want[i].score;
    const double init_score = sequence_logprob(p, v_init, {}, trace);
    const bool want_negative = want[0].id != v_init.id && want[0].score - init_score > 0.0;
    same = same && got.hard_negative.has_value() == want_negative;
    if (same && want_negative)
      same = got.hard_negative->distractor.id == want[0].id && got.hard_negative->margin == want[0].score - init_score;
    mismatched += !same;
  }
  return {pools == 100 && mismatched == 0,
          std::to_string(pools - mismatched) + "/" + std::to_string(pools) + " pools float-exact"};
}

// ---- 7 -------------------------------------------------------------------------

bool oracle_exclusive(const ConceptGraph& g, std::size_t x, std::size_t y) {
  if (g.attributes()[x].category != g.attributes()[y].category) return false;
  bool xy = false, yx = false;
  for (const auto& e : g.entities()) {
    const auto rx = g.relation_of(e.id, g.attributes()[x].id);
    const auto ry = g.relation_of(e.id, g.attributes()[y].id);
    xy |= rx == RelationKind::Association && ry == RelationKind::Exclusion;
    yx |= ry == RelationKind::Association && rx == RelationKind::Exclusion;
  }
  return xy && yx;
}

bool oracle_valid(const ConceptGraph& g, const std::vector<std::size_t>& attrs, const std::string& gold) {
  for (std::size_t i = 0; i < attrs.size(); ++i)
    for (std::size_t j = i + 1; j < attrs.size(); ++j)
      if (attrs[i] != attrs[j] && oracle_exclusive(g, attrs[i], attrs[j])) return false;
  bool excluded = false, supported = false;
  for (std::size_t a : attrs) {
    const auto r = g.relation_of(gold, g.attributes()[a].id);
    excluded |= r == RelationKind::Exclusion;
    supported |= r == RelationKind::Association;
  }
  return excluded || !supported;
}

Outcome counterfactual_validity() {
  WorldConfig wc;
  wc.entities = 6;
  wc.rho = 0.3;
  wc.records = 400;
  wc.seed = 1;
  const auto gen = generate(wc);
  const MentionMatcher matcher(gen.world.graph, gen.world.vocab);
  CounterfactualSpec spec;
  spec.count = 4;
  spec.max_substitutions = 2;
  spec.seed = 3;
  std::size_t produced = 0, valid = 0;
  for (const auto& g : gen.records) {
    if (produced == 1000) break;
    for (const auto& c : synthesize_thinking_cf(g.record, matcher, spec).candidates) {
      if (produced == 1000) break;
      ++produced;
      std::vector<std::size_t> attrs;
      for (const auto& m : matcher.extract(c.trace)) attrs.push_back(m.attribute);
      valid += oracle_valid(gen.world.graph, attrs, g.record.gold_label) &&
               plausible(gen.world.graph, attrs) &&
               label_flip_check(gen.world.graph, attrs, gen.world.graph.require_entity(g.record.gold_label));
    }
  }

  // enumeration on the two-entity world
  const auto graph = t::two_entity_graph();
  const auto vocab = t::two_entity_vocab();
  const MentionMatcher small(graph, vocab);
  std::size_t enum_checked = 0, enum_bad = 0;
  const std::vector<std::string> bodies{"w0 w1 filler w3", "w0", "w3 w4", "filler w2 w5", "w1 w3 w0", "w2 w0 w5"};
  for (const auto& body : bodies)
    for (const std::string gold : {"e0", "e1"}) {
      TraceRecord rec;
      rec.record_id = body;
      rec.trace = ThinkingTrace::wrap(vocab.tokenize(body), vocab.markers());
      rec.gold_label = gold;
      CounterfactualSpec one;
      one.count = 64;
      one.max_substitutions = 1;
      std::set<std::vector<TokenId>> got;
      for (const auto& c : synthesize_thinking_cf(rec, small, one).candidates) got.insert(c.trace.tokens());
      const auto mentions = small.extract(rec.trace);
      std::set<std::vector<TokenId>> want;
      for (std::size_t i = 0; i < mentions.size(); ++i)
        for (std::size_t r = 0; r < graph.attributes().size(); ++r) {
          const auto& from = graph.attributes()[mentions[i].attribute];
          const auto& to = graph.attributes()[r];
          if (to.category != from.category || graph.relation_of(gold, to.id) == graph.relation_of(gold, from.id)) continue;
          std::vector<std::size_t> attrs;
          for (const auto& m : mentions) attrs.push_back(m.attribute);
          attrs[i] = r;
          if (!oracle_valid(graph, attrs, gold)) continue;
          auto tokens = rec.trace.tokens();
          tokens[mentions[i].start] = *vocab.find(to.name);
          want.insert(tokens);
        }
      ++enum_checked;
      enum_bad += got != want;
    }
  return {produced == 1000 && valid == produced && enum_bad == 0,
          std::to_string(valid) + "/" + std::to_string(produced) + " counterfactuals valid (need 1000/1000), " +
              std::to_string(enum_checked - enum_bad) + "/" + std::to_string(enum_checked) +
              " two-entity enumerations equal"};
}

// ---- 8 and 9 -------------------------------------------------------------------

struct RobustnessRun {
  std::map<std::string, double> drop;
  bool checkpoints_differ = false;
  std::size_t thinking_pairs = 0, perception_pairs = 0, random_pairs = 0;
  double seconds = 0.0;
};

// One world (E = 6, rho = 0.3); every policy starts from the same
// supervised base and gets the same number of updates.
RobustnessRun robustness_protocol() {
  const auto start = std::chrono::steady_clock::now();
  constexpr std::size_t kSteps = 200;
  WorldConfig wc;
  wc.entities = 6;
  wc.rho = 0.3;
  wc.records = 400;
  wc.seed = 1;
  const auto gen = generate(wc);
  std::vector<TraceRecord> train, test;
  for (std::size_t i = 0; i < gen.records.size(); ++i) (i < 250 ? train : test).push_back(gen.records[i].record);
  const MentionMatcher matcher(gen.world.graph, gen.world.vocab);

  const auto fm = world_map(gen.world, 1, HeadMode::Bag, false);
  SftConfig sft;
  sft.epochs = 20;
  sft.lr = 0.5;
  const auto base = train_sft(PolicyParams::zeros(fm, entity_labels(gen.world)), train, sft);
  const PolicySnapshot ref(base);

  SftConfig more = sft;
  more.epochs = 1000;
  more.max_steps = kSteps;
  more.train_head = false;
  more.seed = 7;
  const auto ml = train_sft(base, train, more);

  CounterfactualSpec spec;
  spec.count = 4;
  spec.max_substitutions = 2;
  spec.seed = 3;
  auto pairs = build_thinking_pairs(train, matcher, spec);
  const auto mined = mine_perception_pairs(base, train, 8);
  const auto random = build_random_pairs(train, matcher, 4, 5);
  RobustnessRun out;
  out.thinking_pairs = pairs.size();
  out.perception_pairs = mined.size();
  out.random_pairs = random.size();
  pairs.insert(pairs.end(), mined.begin(), mined.end());

  TrainConfig tc;
  tc.beta = 0.1;
  tc.lr = 0.5;
  tc.epochs = 1000;
  tc.max_steps = kSteps;
  tc.seed = 11;
  tc.ablation = Ablation::None;
  const auto rnd = train_cpo(base, ref, random, tc).params;
  tc.ablation = Ablation::Both;
  const auto both = train_cpo(base, ref, pairs, tc).params;
  tc.ablation = Ablation::ThinkingOnly;
  const auto thinking = train_cpo(base, ref, pairs, tc).params;
  tc.ablation = Ablation::PerceptionOnly;
  const auto perception = train_cpo(base, ref, pairs, tc).params;
  out.checkpoints_differ = !(both == thinking) && !(both == perception) && !(thinking == perception);

  RobustnessConfig rc;  // ratios {0, .2, .4, .6, .8}, seeds 0..4
  rc.continuation = 4;
  const auto cells = eval_robustness({{"ml", ml}, {"random", rnd}, {"both", both}, {"thinking", thinking},
                                      {"perception", perception}},
                                     test, matcher, rc);
  for (const char* name : {"ml", "random", "both", "thinking", "perception"})
    out.drop[name] = accuracy_drop(cells, name, 0.0, 0.8);
  out.seconds = seconds_since(start);
  return out;
}

std::string drops(const RobustnessRun& run, std::initializer_list<const char*> names) {
  std::string s;
  for (const char* n : names) s += std::string(s.empty() ? "" : ", ") + n + " " + fmt("%.4f", run.drop.at(n));
  return s;
}

Outcome robustness_direction(const RobustnessRun& run) {
  return {run.drop.at("both") < run.drop.at("random") && run.seconds < 300.0,
          "accuracy drop 0 -> 0.8: " + drops(run, {"ml", "random", "both"}) + ", " + fmt("%.1f", run.seconds) +
              " s (limit 300)"};
}

Outcome ablation_separation(const RobustnessRun& run) {
  const bool both_kinds = run.thinking_pairs > 0 && run.perception_pairs > 0;
  const double best_single = std::min(run.drop.at("thinking"), run.drop.at("perception"));
  return {both_kinds && run.checkpoints_differ && run.drop.at("both") <= best_single,
          std::string("checkpoints pairwise different: ") + (run.checkpoints_differ ? "yes" : "no") + ", " +
              drops(run, {"both", "thinking", "perception"}) + " (need both <= min), pairs thinking " +
              std::to_string(run.thinking_pairs) + " perception " + std::to_string(run.perception_pairs)};
}

// ---- 10 ------------------------------------------------------------------------

int cli(const std::string& args) {
  const std::string cmd = std::string(CDRIFT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "cdrift_acceptance_determinism";
  const std::string d = "'" + dir.string() + "'";
  const std::string data = " --graph " + d + "/world/graph.json --vocab " + d + "/world/vocab.txt --records " + d +
                           "/world/records.jsonl";
  const std::string ckpt = d + "/sft/checkpoint.ckpt";
  const std::vector<std::string> commands{
      "gen-world --seed 4 --count 80 --out " + d + "/world",
      "graph-validate --graph " + d + "/world/graph.json --out " + d + "/graph",
      "train --objective sft --epochs 3 --seed 4 --out " + d + "/sft" + data,
      "synth-cf --n 3 --max-substitutions 2 --seed 4 --out " + d + "/pairs" + data,
      "synth-cf --kind random --n 2 --seed 4 --out " + d + "/random" + data,
      "mine-visual --k 6 --checkpoint " + ckpt + " --out " + d + "/mined" + data,
      "train --objective cpo --epochs 2 --seed 4 --pairs " + d + "/pairs/pairs.jsonl --checkpoint " + ckpt + " --out " +
          d + "/cpo" + data,
      "drift-report --checkpoint " + ckpt + " --out " + d + "/drift" + data,
      "eval-robustness --checkpoint base=" + ckpt + " --checkpoint cpo=" + d +
          "/cpo/checkpoint.ckpt --seed 4 --out " + d + "/eval" + data,
  };
  std::size_t failures = 0;
  std::vector<std::map<std::string, std::string>> runs;
  for (int round = 0; round < 2; ++round) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& c : commands) failures += cli(c) != 0;
    runs.push_back(snapshot(dir));
  }
  std::size_t differing = 0;
  for (const auto& [path, bytes] : runs[0]) {
    const auto it = runs[1].find(path);
    differing += it == runs[1].end() || it->second != bytes;
  }
  differing += runs[1].size() != runs[0].size();
  std::size_t manifests = 0, unverified = 0;
  for (const auto& [path, bytes] : runs[1])
    if (path.ends_with(".manifest.json")) {
      ++manifests;
      unverified += !RunManifest::load(dir / path).verify().empty();
    }
  fs::remove_all(dir);
  return {failures == 0 && differing == 0 && unverified == 0 && manifests == commands.size(),
          std::to_string(commands.size()) + " commands run twice, " + std::to_string(runs[0].size()) + " files, " +
              std::to_string(differing) + " differing, " + std::to_string(failures) + " command failures, " +
              std::to_string(manifests - unverified) + "/" + std::to_string(manifests) + " manifests verify"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  RobustnessRun robustness;
  bool robustness_done = false;
  auto shared = [&]() -> const RobustnessRun& {
    if (!robustness_done) {
      robustness = robustness_protocol();
      robustness_done = true;
    }
    return robustness;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", gradient_correctness},
      {2, "zero-margin identity", zero_margin_identity},
      {3, "reward-margin recomposition", margin_recomposition},
      {4, "psi sanity", psi_sanity},
      {5, "drift localization", drift_localization},
      {6, "mining oracle equivalence", mining_equivalence},
      {7, "counterfactual validity", counterfactual_validity},
      {8, "robustness direction", [&] { return robustness_direction(shared()); }},
      {9, "ablation separation", [&] { return ablation_separation(shared()); }},
      {10, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
