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


#include "cdrift/trace_model.hpp"

#include <numeric>

#include "cdrift/error.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/synthetic_world.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace cdrift;
using nlohmann::json;

namespace {

struct Medical {
  ConceptGraph graph = ConceptGraph::load(testing::fixture("medical_graph.json"));
  Vocabulary vocab = Vocabulary::load(testing::fixture("medical_vocab.txt"));
};

json base_record() {
  return {{"record_id", "r1"},
          {"visual", {{"id", "v1"}, {"attributes", json::array()}}},
          {"prompt", json::array()},
          {"tokens", {0, 2, 3, 1}},
          {"gold_label", "y"}};
}

ErrorCode parse_error(const json& doc, const Vocabulary& vocab, std::size_t* line = nullptr) {
  try {
    parse_records("\n" + doc.dump() + "\n", vocab);
  } catch (const Error& e) {
    if (line) *line = e.line();
    return e.code();
  }
  FAIL("record was accepted");
  return ErrorCode::Io;
}

ThinkingTrace trace_of(const Vocabulary& vocab, const std::string& body) {
  return ThinkingTrace::wrap(vocab.tokenize(body), vocab.markers());
}

}  // namespace

TEST_CASE("fixture records carry 256-token attention frames") {
  Medical m;
  const auto records = parse_records(read_file(testing::fixture("medical_records.jsonl")), m.vocab, &m.graph);
  REQUIRE(records.size() == 3);
  for (const auto& r : records) {
    REQUIRE(r.attention);
    CHECK(r.attention->size() == r.trace.span_size());
    for (const auto& row : *r.attention) CHECK(row.size() == 256);
    const auto states = cognitive_states(r);
    REQUIRE(states.size() == r.trace.span_size());
    CHECK(states.front().position == 2);
    CHECK(states.back().position == r.trace.span_end());
  }
}

TEST_CASE("record validation") {
  const Vocabulary vocab({"<think>", "</think>", "a", "b"}, {0, 1});
  auto doc = base_record();
  std::size_t line = 0;

  SUBCASE("z row summing to one half") {
    doc["z"] = {{0.25, 0.25}, {0.5, 0.5}};
    CHECK(parse_error(doc, vocab, &line) == ErrorCode::NotNormalized);
    CHECK(line == 2);
  }
  SUBCASE("missing think-close") {
    doc["tokens"] = {0, 2, 3};
    CHECK(parse_error(doc, vocab) == ErrorCode::UnterminatedThinkSpan);
  }
  SUBCASE("nested think-open") {
    doc["tokens"] = {0, 2, 0, 1};
    CHECK(parse_error(doc, vocab) == ErrorCode::ParseError);
  }
  SUBCASE("states misaligned with the span") {
    doc["z"] = {{1.0, 0.0}};
    CHECK(parse_error(doc, vocab) == ErrorCode::LengthMismatch);
  }
  SUBCASE("frames misaligned with the span") {
    doc["attention"] = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
    CHECK(parse_error(doc, vocab) == ErrorCode::LengthMismatch);
  }
  SUBCASE("token outside the vocabulary") {
    doc["tokens"] = {0, 9, 1};
    CHECK(parse_error(doc, vocab) == ErrorCode::UnknownToken);
  }
  SUBCASE("malformed line") {
    CHECK_THROWS_AS(parse_records("{\"record_id\": ", vocab), Error);
  }
}

TEST_CASE("record stream round trips bit-exactly") {
  Medical m;
  const auto text = read_file(testing::fixture("medical_records.jsonl"));
  CHECK(serialize_records(parse_records(text, m.vocab, &m.graph)) == text);

  WorldConfig cfg;
  cfg.records = 50;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    cfg.seed = seed;
    const auto gen = generate(cfg);
    std::vector<TraceRecord> plain;
    for (const auto& g : gen.records) plain.push_back(g.record);
    const auto once = serialize_records(plain);
    const auto parsed = parse_records(once, gen.world.vocab, &gen.world.graph);
    CHECK(parsed == plain);
    CHECK(serialize_records(parsed) == once);
  }
}

TEST_CASE("longest match wins for lung opacity") {
  Medical m;
  const auto trace = trace_of(m.vocab, "there is lung opacity in the apex");
  const auto mentions = extract_attribute_mentions(trace, m.graph, m.vocab);
  REQUIRE(mentions.size() == 2);
  CHECK(m.graph.attributes()[mentions[0].attribute].id == "lung_opacity");
  CHECK(mentions[0].start == 3);
  CHECK(mentions[0].length == 2);
  CHECK(m.graph.attributes()[mentions[1].attribute].id == "apex");
}

TEST_CASE("no shared tokens yields no mentions") {
  Medical m;
  CHECK(extract_attribute_mentions(trace_of(m.vocab, "there is the"), m.graph, m.vocab).empty());
}

TEST_CASE("mention extraction equals brute-force selection") {
  // names that overlap and nest: p, p q, q, q r, r p q
  std::vector<Attribute> attrs{{"m0", "p", "c"}, {"m1", "p q", "c"}, {"m2", "q", "c"},
                               {"m3", "q r", "c"}, {"m4", "r p q", "c"}};
  const auto graph = ConceptGraph::build({{"e", "e"}}, attrs, {}, {"c"});
  const Vocabulary vocab({"<think>", "</think>", "p", "q", "r", "s"}, {0, 1});
  const MentionMatcher matcher(graph, vocab);
  std::vector<std::vector<TokenId>> names;
  for (std::size_t a = 0; a < attrs.size(); ++a) names.push_back(matcher.name_tokens(a));

  Rng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto trace = testing::random_trace(vocab.size(), rng.below(12), rng);
    const auto got = matcher.extract(trace);
    CHECK(got == testing::brute_force_mentions(trace, names));
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].start >= trace.span_begin());
      CHECK(got[i].start + got[i].length <= trace.span_end());
      if (i) CHECK(got[i - 1].start + got[i - 1].length <= got[i].start);
    }
  }
}

TEST_CASE("sink mask") {
  Rng rng(3);
  AttentionFrame frame;
  for (int i = 0; i < 256; ++i) frame.weights.push_back(rng.uniform());

  SUBCASE("first ten masked, tail renormalized, order kept") {
    const auto out = normalize_attention(frame, 10);
    for (int i = 0; i < 10; ++i) CHECK(out.weights[i] == 0.0);
    CHECK(std::accumulate(out.weights.begin(), out.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(is_distribution(out.weights));
    for (int i = 10; i < 255; ++i)
      CHECK((frame.weights[i] < frame.weights[i + 1]) == (out.weights[i] < out.weights[i + 1]));
  }
  SUBCASE("zero mask leaves a normalized frame untouched") {
    const auto normalized = normalize_attention(frame, 10);
    CHECK(normalize_attention(normalized, 0) == normalized);
  }
  SUBCASE("all mass inside the mask") {
    AttentionFrame sink;
    sink.weights.assign(256, 0.0);
    for (int i = 0; i < 10; ++i) sink.weights[i] = 0.1;
    CHECK_THROWS_WITH_AS(normalize_attention(sink, 10), doctest::Contains("DegenerateFrame"), Error);
  }
  SUBCASE("mask as long as the frame") {
    CHECK_THROWS_WITH_AS(normalize_attention(frame, 256), doctest::Contains("BadMask"), Error);
  }
}

TEST_CASE("vocabulary file round trips") {
  Medical m;
  const auto text = read_file(testing::fixture("medical_vocab.txt"));
  CHECK(m.vocab.serialize() == text);
  CHECK(Vocabulary::parse(text) == m.vocab);
  CHECK(m.vocab.detokenize(m.vocab.tokenize("lung opacity")) == "lung opacity");
  CHECK_THROWS_AS(m.vocab.tokenize("lung nodule"), Error);
}
