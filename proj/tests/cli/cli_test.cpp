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


#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cdrift/concept_graph.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/trace_model.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CDRIFT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("cdrift_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string data(const fs::path& world) {
  return " --graph " + q(world / "graph.json") + " --vocab " + q(world / "vocab.txt") + " --records " +
         q(world / "records.jsonl");
}

void check_manifest(const fs::path& path) {
  REQUIRE(fs::exists(path));
  const auto m = cdrift::RunManifest::load(path);
  CHECK(m.verify().empty());
  CHECK_FALSE(m.outputs.empty());
}

}  // namespace

TEST_CASE("graph-validate on the fixture") {
  const auto out = fresh_dir("graph");
  CHECK(run("graph-validate --graph " + q(cdrift::testing::fixture("medical_graph.json")) + " --out " + q(out)) == 0);
  const auto report = json::parse(cdrift::read_file(out / "graph_report.json"));
  CHECK(report["entities"] == 12);
  CHECK(report["attributes"] == 53);
  check_manifest(out / "graph-validate.manifest.json");
}

TEST_CASE("exit codes") {
  const auto out = fresh_dir("codes");
  CHECK(run("--help") == 0);
  CHECK(run("graph-validate --bogus") == 1);
  CHECK(run("gen-world --entities 0 --out " + q(out)) == 1);
  cdrift::write_file_atomic(out / "bad.json", "{\"entities\": [");
  CHECK(run("graph-validate --graph " + q(out / "bad.json") + " --out " + q(out)) == 2);
  CHECK(run("graph-validate --graph " + q(out / "missing.json") + " --out " + q(out)) == 2);
}

TEST_CASE("full pipeline") {
  const auto world = fresh_dir("world");
  REQUIRE(run("gen-world --seed 3 --count 60 --out " + q(world)) == 0);
  for (const char* f : {"graph.json", "vocab.txt", "records.jsonl", "world.json"}) CHECK(fs::exists(world / f));
  check_manifest(world / "gen-world.manifest.json");

  const auto sft = fresh_dir("sft");
  REQUIRE(run("train --objective sft --epochs 2 --out " + q(sft) + data(world)) == 0);
  check_manifest(sft / "train.manifest.json");
  const auto ckpt = sft / "checkpoint.ckpt";

  const auto pairs = fresh_dir("pairs");
  REQUIRE(run("synth-cf --n 2 --out " + q(pairs) + data(world)) == 0);
  check_manifest(pairs / "synth-cf.manifest.json");

  SUBCASE("zero epochs return the checkpoint bit for bit") {
    const auto out = fresh_dir("cpo0");
    REQUIRE(run("train --objective cpo --epochs 0 --pairs " + q(pairs / "pairs.jsonl") + " --checkpoint " + q(ckpt) +
                " --out " + q(out) + data(world)) == 0);
    CHECK(cdrift::read_file(out / "checkpoint.ckpt") == cdrift::read_file(ckpt));
  }
  SUBCASE("one epoch of preference training") {
    const auto out = fresh_dir("cpo1");
    REQUIRE(run("train --objective cpo --epochs 1 --pairs " + q(pairs / "pairs.jsonl") + " --checkpoint " + q(ckpt) +
                " --out " + q(out) + data(world)) == 0);
    CHECK(cdrift::read_file(out / "checkpoint.ckpt") != cdrift::read_file(ckpt));
    std::istringstream log(cdrift::read_file(out / "train_log.jsonl"));
    std::string header, epoch;
    std::getline(log, header);
    std::getline(log, epoch);
    CHECK(json::parse(header).contains("config"));
    CHECK(json::parse(epoch).contains("loss"));
  }
  SUBCASE("mining, drift report, probe and robustness") {
    const auto out = fresh_dir("rest");
    CHECK(run("mine-visual --k 4 --checkpoint " + q(ckpt) + " --out " + q(out) + data(world)) == 0);
    check_manifest(out / "mine-visual.manifest.json");
    CHECK(run("drift-report --checkpoint " + q(ckpt) + " --out " + q(out) + data(world)) == 0);
    check_manifest(out / "drift-report.manifest.json");
    CHECK(run("eval-robustness --checkpoint base=" + q(ckpt) + " --ratios 0,0.4 --seeds 0,1 --out " + q(out) +
              data(world)) == 0);
    check_manifest(out / "eval-robustness.manifest.json");

    const auto graph = cdrift::ConceptGraph::load(world / "graph.json");
    const auto vocab = cdrift::Vocabulary::load(world / "vocab.txt");
    const auto records = cdrift::parse_records(cdrift::read_file(world / "records.jsonl"), vocab, &graph);
    const cdrift::MentionMatcher matcher(graph, vocab);
    const auto mentions = matcher.extract(records[0].trace);
    REQUIRE_FALSE(mentions.empty());
    const auto subs = graph.substitution_set(graph.attributes()[mentions[0].attribute].id, records[0].gold_label);
    REQUIRE_FALSE(subs.empty());
    CHECK(run("probe --record " + records[0].record_id + " --mention 0 --replacement " + subs[0] + " --checkpoint " +
              q(ckpt) + " --out " + q(out) + data(world)) == 0);
    check_manifest(out / "probe.manifest.json");
    CHECK(fs::exists(out / "probe_delta.tsv"));
  }
  SUBCASE("no candidates requested gives a header-only pair file") {
    const auto out = fresh_dir("n0");
    REQUIRE(run("synth-cf --n 0 --out " + q(out) + data(world)) == 0);
    CHECK(cdrift::read_file(out / "pairs.jsonl") == "{\"format\":\"cdrift-pairs\",\"version\":1}\n");
  }
}

TEST_CASE("identical inputs give identical bytes") {
  std::vector<fs::path> dirs;
  for (const char* name : {"det_a", "det_b"}) {
    const auto dir = fresh_dir(name);
    REQUIRE(run("gen-world --seed 5 --count 40 --out " + q(dir)) == 0);
    REQUIRE(run("synth-cf --n 3 --max-substitutions 2 --seed 5 --out " + q(dir) + data(dir)) == 0);
    dirs.push_back(dir);
  }
  for (const char* f : {"graph.json", "vocab.txt", "records.jsonl", "world.json", "pairs.jsonl"})
    CHECK(cdrift::read_file(dirs[0] / f) == cdrift::read_file(dirs[1] / f));
}
