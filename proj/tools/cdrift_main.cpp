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


#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cdrift/concept_graph.hpp"
#include "cdrift/counterfactual_engine.hpp"
#include "cdrift/cpo_optimizer.hpp"
#include "cdrift/drift_detector.hpp"
#include "cdrift/error.hpp"
#include "cdrift/manifest.hpp"
#include "cdrift/robustness.hpp"
#include "cdrift/synthetic_world.hpp"
#include "cdrift/toy_policy.hpp"
#include "cdrift/trace_model.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cdrift;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitInput = 2;
constexpr int kExitInternal = 3;

constexpr const char* kOutDirEnv = "CDRIFT_OUT_DIR";

int exit_code(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InfeasibleConfig:
      return kExitUsage;
    case ErrorCode::InvariantViolation:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

struct Options {
  std::uint64_t seed = 0;
  std::string out;
  std::string graph;
  std::string vocab;
  std::string records;
  std::string pairs;
  std::string checkpoint;
  std::string ref_checkpoint;
  std::vector<std::string> checkpoints;

  // gen-world
  std::string world_config;
  std::size_t entities = 6;
  std::size_t attributes_per_entity = 4;
  std::size_t categories = 3;
  std::size_t count = 200;
  std::size_t drift_states = 2;
  std::size_t max_length = 16;
  double rho = 0.3;

  // synth-cf / mine-visual
  std::size_t n = 4;
  std::size_t max_substitutions = 1;
  std::string category;
  std::string kind = "thinking";
  std::size_t k = 8;

  // drift-report / probe
  std::string divergence = "tv";
  std::string threshold = "0.1";
  std::size_t drift_window = 3;
  std::size_t sink_mask = kDefaultSinkMask;
  double smoothing = 1e-9;
  std::string record_id;
  std::size_t mention = 0;
  std::string replacement;

  // train
  std::string objective = "cpo";
  double beta = 0.1;
  double lr = 0.5;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::size_t window = 16;
  std::string ablation = "both";
  std::size_t max_steps = 0;
  std::size_t context_window = 1;
  std::string head = "bag";
  bool head_visual = true;
  bool head_every_prefix = false;

  // eval-robustness
  std::vector<double> ratios{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<std::uint64_t> seeds;
  std::size_t continuation = 4;
  std::string target = "prefix";
};

fs::path output_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) return env;
  return ".";
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw Error(ErrorCode::InvalidConfig, std::string(flag) + " is required");
}

/// Manifest lifecycle for one command: written with inputs before any output
/// exists, rewritten with output digests at the end.
class Run {
 public:
  Run(std::string command, json config, const Options& o)
      : dir_(output_dir(o)), path_(dir_ / (command + ".manifest.json")) {
    manifest_.command = std::move(command);
    manifest_.config = std::move(config);
    manifest_.seed = o.seed;
  }

  void input(const fs::path& path) { manifest_.add_input(path); }
  void begin() {
    fs::create_directories(dir_);
    manifest_.write(path_);
  }
  fs::path output(const std::string& name, std::string_view contents) {
    const fs::path path = dir_ / name;
    write_file_atomic(path, contents);
    manifest_.add_output(path);
    return path;
  }
  void adopt(const fs::path& path) { manifest_.add_output(path); }
  void finish() { manifest_.write(path_); }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  fs::path path_;
  RunManifest manifest_;
};

struct Inputs {
  std::optional<ConceptGraph> graph;
  Vocabulary vocab;
  std::vector<TraceRecord> records;
};

Inputs load_inputs(const Options& o, Run& run, bool need_graph) {
  Inputs in;
  if (need_graph) require(o.graph, "--graph");
  require(o.vocab, "--vocab");
  require(o.records, "--records");
  if (!o.graph.empty()) {
    run.input(o.graph);
    in.graph = ConceptGraph::load(o.graph);
  }
  run.input(o.vocab);
  in.vocab = Vocabulary::load(o.vocab);
  run.input(o.records);
  in.records = parse_records(read_file(o.records), in.vocab, in.graph ? &*in.graph : nullptr);
  return in;
}

const TraceRecord& find_record(const std::vector<TraceRecord>& records, const std::string& id) {
  for (const auto& r : records)
    if (r.record_id == id) return r;
  throw Error(ErrorCode::MissingReference, "no record '" + id + "'");
}

double parse_threshold(const std::string& text) {
  if (text == "inf" || text == "+inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw Error(ErrorCode::InvalidConfig, "bad threshold '" + text + "'");
  return value;
}

DriftConfig drift_config(const Options& o) {
  DriftConfig c;
  c.divergence = divergence_from_string(o.divergence);
  c.threshold = parse_threshold(o.threshold);
  c.window = o.drift_window;
  c.sink_mask = o.sink_mask;
  c.smoothing = o.smoothing;
  c.validate();
  return c;
}

// ---- commands ----------------------------------------------------------------

int graph_validate(const Options& o) {
  require(o.graph, "--graph");
  Run run("graph-validate", {{"graph", o.graph}}, o);
  run.input(o.graph);
  run.begin();
  const auto graph = ConceptGraph::load(o.graph);
  const auto counts = graph.counts();
  json report = {{"valid", true},
                 {"entities", counts.entities},
                 {"attributes", counts.attributes},
                 {"relations", counts.relations},
                 {"categories", graph.categories()},
                 {"warnings", graph.warnings()}};
  run.output("graph_report.json", report.dump(2) + "\n");
  run.finish();
  for (const auto& w : graph.warnings()) std::cerr << "warning: " << w << "\n";
  std::cout << "graph ok: " << counts.entities << " entities, " << counts.attributes
            << " attributes, " << counts.relations << " relations\n";
  return 0;
}

int gen_world(const Options& o, const CLI::App& cmd) {
  WorldConfig cfg;
  if (!o.world_config.empty()) cfg = world_config_from_json(json::parse(read_file(o.world_config)));
  if (cmd.count("--entities")) cfg.entities = o.entities;
  if (cmd.count("--attributes-per-entity")) cfg.attributes_per_entity = o.attributes_per_entity;
  if (cmd.count("--categories")) cfg.categories = o.categories;
  if (cmd.count("--count")) cfg.records = o.count;
  if (cmd.count("--drift-states")) cfg.drift_states = o.drift_states;
  if (cmd.count("--max-length")) cfg.max_length = o.max_length;
  if (cmd.count("--rho")) cfg.rho = o.rho;
  if (cmd.count("--seed") || o.world_config.empty()) cfg.seed = o.seed;
  cfg.validate();

  Run run("gen-world", to_json(cfg), o);
  if (!o.world_config.empty()) run.input(o.world_config);
  run.begin();
  const auto generated = generate(cfg);
  for (const auto& path : write_world(run.dir(), cfg, generated.world, generated.records))
    run.adopt(path);
  run.finish();
  std::cout << "world: " << generated.world.graph.entities().size() << " entities, "
            << generated.world.graph.attributes().size() << " attributes, "
            << generated.records.size() << " records\n";
  return 0;
}

int synth_cf(const Options& o) {
  CounterfactualSpec spec;
  spec.count = o.n;
  spec.max_substitutions = o.max_substitutions;
  if (!o.category.empty()) spec.category = o.category;
  spec.seed = o.seed;
  spec.validate();
  if (o.kind != "thinking" && o.kind != "random")
    throw Error(ErrorCode::InvalidConfig, "--kind must be thinking or random");

  json config = {{"n", o.n}, {"max_substitutions", o.max_substitutions}, {"kind", o.kind}};
  if (spec.category) config["category"] = *spec.category;
  Run run("synth-cf", config, o);
  auto in = load_inputs(o, run, true);
  run.begin();
  const MentionMatcher matcher(*in.graph, in.vocab);
  std::vector<PreferencePair> pairs;
  SynthesisSummary summary;
  if (o.kind == "thinking") {
    pairs = build_thinking_pairs(in.records, matcher, spec, &summary);
  } else {
    pairs = build_random_pairs(in.records, matcher, o.n, o.seed);
    summary.pairs = pairs.size();
  }
  run.output("pairs.jsonl", serialize_pairs(pairs));
  run.finish();
  std::cout << "pairs: " << pairs.size() << " from " << in.records.size() << " records";
  if (summary.exhausted) std::cout << " (" << summary.exhausted << " records exhausted)";
  std::cout << "\n";
  if (summary.exhausted)
    std::cerr << "warning: fewer than " << o.n << " valid candidates for " << summary.exhausted
              << " records\n";
  return 0;
}

int mine_visual(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  Run run("mine-visual", {{"k", o.k}}, o);
  auto in = load_inputs(o, run, false);
  run.input(o.checkpoint);
  run.begin();
  const auto params = load_checkpoint(o.checkpoint);
  std::vector<MiningEntry> report;
  const auto pairs = mine_perception_pairs(params, in.records, o.k, &report);
  std::string lines;
  for (const auto& entry : report) {
    json ranking = json::array();
    for (const auto& s : entry.match.ranking) ranking.push_back({{"id", s.id}, {"score", s.score}});
    json doc = {{"record_id", entry.record_id}, {"ranking", ranking}};
    if (entry.match.hard_negative)
      doc["hard_negative"] = {{"distractor", entry.match.hard_negative->distractor.id},
                              {"margin", entry.match.hard_negative->margin}};
    lines += doc.dump() + "\n";
  }
  run.output("pairs.jsonl", serialize_pairs(pairs));
  run.output("mining_report.jsonl", lines);
  run.finish();
  std::cout << "hard negatives: " << pairs.size() << " of " << report.size() << " records\n";
  return 0;
}

/// Fills missing states and frames from a policy.
void fill_from_policy(TraceRecord& r, const PolicyParams& params) {
  const auto& tokens = r.trace.tokens();
  if (!r.z) {
    std::vector<std::vector<double>> z;
    for (std::size_t j = r.trace.span_begin(); j < r.trace.span_end(); ++j)
      z.push_back(predict_label(params, r.visual, r.prompt,
                                std::span<const TokenId>(tokens.data(), j + 1)));
    r.z = std::move(z);
  }
  if (!r.attention && !r.visual.attributes.empty())
    r.attention = policy_attention_frames(params, r.visual, r.prompt, r.trace);
}

int drift_report_cmd(const Options& o) {
  const auto base = drift_config(o);
  json config = to_json(base);
  if (!o.checkpoint.empty()) config["checkpoint"] = o.checkpoint;
  Run run("drift-report", config, o);
  auto in = load_inputs(o, run, false);
  std::optional<PolicyParams> params;
  if (!o.checkpoint.empty()) {
    run.input(o.checkpoint);
    params = load_checkpoint(o.checkpoint);
  }
  run.begin();
  std::string lines;
  std::size_t events = 0;
  for (auto& r : in.records) {
    DriftConfig cfg = base;
    if (params) {
      // policy frames span attribute slots, there is no sink to mask
      if (!r.attention) cfg.sink_mask = 0;
      fill_from_policy(r, *params);
    }
    const auto report = drift_report(r, cfg);
    events += report.events.size();
    lines += report.to_json().dump() + "\n";
  }
  run.output("drift_report.jsonl", lines);
  run.finish();
  std::cout << "drift events: " << events << " over " << in.records.size() << " records\n";
  return 0;
}

int probe(const Options& o) {
  require(o.checkpoint, "--checkpoint");
  require(o.record_id, "--record");
  require(o.replacement, "--replacement");
  const auto cfg = drift_config(o);
  json config = to_json(cfg);
  config["record"] = o.record_id;
  config["mention"] = o.mention;
  config["replacement"] = o.replacement;
  Run run("probe", config, o);
  auto in = load_inputs(o, run, true);
  run.input(o.checkpoint);
  run.begin();
  const auto params = load_checkpoint(o.checkpoint);
  const MentionMatcher matcher(*in.graph, in.vocab);
  const auto& record = find_record(in.records, o.record_id);
  const auto mentions = matcher.extract(record.trace);
  if (o.mention >= mentions.size())
    throw Error(ErrorCode::SpanMismatch, "record " + o.record_id + " has " +
                                             std::to_string(mentions.size()) + " mentions");
  const ProbeSubstitution sub{mentions[o.mention], in.graph->require_attribute(o.replacement)};
  const auto report =
      counterfactual_probe(params, record.visual, record.prompt, record.trace, matcher, sub, cfg);
  run.output("probe.json", report.to_json().dump(2) + "\n");
  run.output("probe_delta.tsv", report.delta_table());
  run.finish();
  std::cout << report.delta_table();
  return 0;
}

PolicyParams initial_policy(const Options& o, const Inputs& in) {
  if (!o.checkpoint.empty()) return load_checkpoint(o.checkpoint);
  if (!in.graph) throw Error(ErrorCode::InvalidConfig, "--graph or --checkpoint is required");
  FeatureMapConfig fm;
  fm.window = o.context_window;
  fm.vocab_size = in.vocab.size();
  for (const auto& a : in.graph->attributes()) fm.attribute_ids.push_back(a.id);
  if (o.head == "window") fm.head = HeadMode::Window;
  else if (o.head != "bag") throw Error(ErrorCode::InvalidConfig, "--head must be bag or window");
  fm.head_visual = o.head_visual;
  fm.markers = in.vocab.markers();
  std::vector<std::string> labels;
  for (const auto& e : in.graph->entities()) labels.push_back(e.id);
  return PolicyParams::zeros(fm, labels);
}

int train(const Options& o) {
  std::string log;
  if (o.objective == "sft") {
    SftConfig cfg;
    cfg.lr = o.lr;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch_size;
    cfg.seed = o.seed;
    cfg.head_every_prefix = o.head_every_prefix;
    cfg.max_steps = o.max_steps;
    cfg.validate();
    json config = {{"objective", "sft"},     {"lr", cfg.lr},
                   {"epochs", cfg.epochs},   {"batch_size", cfg.batch_size},
                   {"seed", cfg.seed},       {"head_every_prefix", cfg.head_every_prefix},
                   {"max_steps", cfg.max_steps}};
    if (o.checkpoint.empty())
      config["init"] = {{"context_window", o.context_window}, {"head", o.head}, {"head_visual", o.head_visual}};
    Run run("train", config, o);
    auto in = load_inputs(o, run, o.checkpoint.empty());
    if (!o.checkpoint.empty()) run.input(o.checkpoint);
    run.begin();
    std::vector<SftLog> epochs;
    const auto params = train_sft(initial_policy(o, in), in.records, cfg, &epochs);
    log = json{{"config", config}}.dump() + "\n";
    for (const auto& e : epochs)
      log += json{{"epoch", e.epoch}, {"token_nll", e.token_nll}, {"label_nll", e.label_nll}}.dump() + "\n";
    run.output("checkpoint.ckpt", encode_checkpoint(params));
    run.output("train_log.jsonl", log);
    run.finish();
    std::cout << "sft: " << epochs.size() << " epochs\n";
    return 0;
  }
  if (o.objective != "cpo") throw Error(ErrorCode::InvalidConfig, "--objective must be cpo or sft");

  require(o.checkpoint, "--checkpoint");
  require(o.pairs, "--pairs");
  TrainConfig cfg;
  cfg.beta = o.beta;
  cfg.lr = o.lr;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.window = o.window;
  cfg.seed = o.seed;
  cfg.ablation = ablation_from_string(o.ablation);
  cfg.max_steps = o.max_steps;
  cfg.validate();
  const std::string ref_path = o.ref_checkpoint.empty() ? o.checkpoint : o.ref_checkpoint;
  json config = to_json(cfg);
  config["objective"] = "cpo";
  Run run("train", config, o);
  auto in = load_inputs(o, run, false);
  run.input(o.checkpoint);
  if (ref_path != o.checkpoint) run.input(ref_path);
  run.input(o.pairs);
  run.begin();
  const auto init = load_checkpoint(o.checkpoint);
  const PolicySnapshot ref(load_checkpoint(ref_path));
  const auto pairs = parse_pairs(read_file(o.pairs), in.records, in.vocab);
  const auto result = train_cpo(init, ref, pairs, cfg);
  log = json{{"config", config}}.dump() + "\n";
  for (const auto& e : result.log) log += to_json(e).dump() + "\n";
  run.output("checkpoint.ckpt", encode_checkpoint(result.params));
  run.output("train_log.jsonl", log);
  run.finish();
  std::cout << "cpo: " << result.log.size() << " epochs over " << pairs.size() << " pairs\n";
  return 0;
}

int eval_robustness_cmd(const Options& o) {
  if (o.checkpoints.empty()) throw Error(ErrorCode::InvalidConfig, "--checkpoint is required");
  RobustnessConfig cfg;
  cfg.ratios = o.ratios;
  if (!o.seeds.empty()) {
    cfg.seeds = o.seeds;
  } else {
    cfg.seeds.clear();
    for (std::uint64_t s = 0; s < 5; ++s) cfg.seeds.push_back(o.seed + s);
  }
  cfg.continuation = o.continuation;
  if (o.target == "prompt") cfg.target = InterferenceTarget::Prompt;
  else if (o.target != "prefix") throw Error(ErrorCode::InvalidConfig, "--target must be prefix or prompt");
  cfg.validate();

  json config = {{"ratios", cfg.ratios},
                 {"seeds", cfg.seeds},
                 {"continuation", cfg.continuation},
                 {"target", o.target},
                 {"checkpoints", o.checkpoints}};
  Run run("eval-robustness", config, o);
  auto in = load_inputs(o, run, true);
  std::vector<NamedPolicy> policies;
  for (const auto& spec : o.checkpoints) {
    const auto eq = spec.find('=');
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    const std::string name = eq == std::string::npos ? fs::path(path).stem().string() : spec.substr(0, eq);
    run.input(path);
    policies.push_back({name, load_checkpoint(path)});
  }
  run.begin();
  const MentionMatcher matcher(*in.graph, in.vocab);
  std::vector<Prediction> predictions;
  const auto cells = eval_robustness(policies, in.records, matcher, cfg, &predictions);
  std::ostringstream dump;
  dump.precision(17);
  dump << "policy\tratio\tseed\trecord_id\tpredicted\tgold\n";
  for (const auto& p : predictions)
    dump << p.policy << '\t' << p.ratio << '\t' << p.seed << '\t' << p.record_id << '\t'
         << p.predicted << '\t' << p.gold << '\n';
  run.output("robustness.tsv", robustness_table(cells));
  run.output("predictions.tsv", dump.str());
  run.finish();
  for (const auto& p : policies) {
    std::cout << p.name;
    for (double r : cfg.ratios) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& c : cells)
        if (c.policy == p.name && c.ratio == r) sum += c.accuracy(), ++n;
      std::cout << '\t' << sum / static_cast<double>(n);
    }
    std::cout << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-drift analysis and counterfactual preference training toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Root seed");
    cmd->add_option("--out", o.out, std::string("Output directory (default $") + kOutDirEnv + " or .)");
  };
  auto data = [&](CLI::App* cmd) {
    cmd->add_option("--graph", o.graph, "Concept graph document");
    cmd->add_option("--vocab", o.vocab, "Token vocabulary file");
    cmd->add_option("--records", o.records, "Record stream");
  };
  auto drift = [&](CLI::App* cmd) {
    cmd->add_option("--divergence", o.divergence, "tv or symmetric_kl");
    cmd->add_option("--threshold", o.threshold, "Event threshold (inf allowed)");
    cmd->add_option("--window", o.drift_window, "Localization window");
    cmd->add_option("--sink-mask", o.sink_mask, "Leading visual tokens to mask");
    cmd->add_option("--smoothing", o.smoothing, "KL smoothing");
  };

  auto* gv = app.add_subcommand("graph-validate", "Validate a concept graph and report counts");
  common(gv);
  gv->add_option("--graph", o.graph, "Concept graph document");

  auto* gw = app.add_subcommand("gen-world", "Generate a synthetic world and its records");
  common(gw);
  gw->add_option("--config", o.world_config, "World config JSON");
  gw->add_option("--entities", o.entities);
  gw->add_option("--attributes-per-entity", o.attributes_per_entity);
  gw->add_option("--categories", o.categories);
  gw->add_option("--count", o.count, "Number of records");
  gw->add_option("--drift-states", o.drift_states);
  gw->add_option("--max-length", o.max_length);
  gw->add_option("--rho", o.rho, "Spurious-correlation strength");

  auto* sc = app.add_subcommand("synth-cf", "Synthesize counterfactual thinking pairs");
  common(sc);
  data(sc);
  sc->add_option("--n", o.n, "Candidates per record");
  sc->add_option("--max-substitutions", o.max_substitutions);
  sc->add_option("--category", o.category, "Restrict substitutions to one category");
  sc->add_option("--kind", o.kind, "thinking or random");

  auto* mv = app.add_subcommand("mine-visual", "Mine perception hard negatives by inverse matching");
  common(mv);
  data(mv);
  mv->add_option("--checkpoint", o.checkpoint, "Policy checkpoint");
  mv->add_option("--k", o.k, "Retrieved candidates per record");

  auto* dr = app.add_subcommand("drift-report", "Divergence series and drift events per record");
  common(dr);
  data(dr);
  drift(dr);
  dr->add_option("--checkpoint", o.checkpoint, "Fill missing states and frames from this policy");

  auto* pr = app.add_subcommand("probe", "Counterfactual substitution probe");
  common(pr);
  data(pr);
  drift(pr);
  pr->add_option("--checkpoint", o.checkpoint, "Policy checkpoint");
  pr->add_option("--record", o.record_id, "Record id");
  pr->add_option("--mention", o.mention, "Mention index within the trace");
  pr->add_option("--replacement", o.replacement, "Replacement attribute id");

  auto* tr = app.add_subcommand("train", "Preference or maximum-likelihood training");
  common(tr);
  data(tr);
  tr->add_option("--objective", o.objective, "cpo or sft");
  tr->add_option("--pairs", o.pairs, "Preference pair file");
  tr->add_option("--checkpoint", o.checkpoint, "Initial policy");
  tr->add_option("--ref-checkpoint", o.ref_checkpoint, "Frozen reference (default: --checkpoint)");
  tr->add_option("--beta", o.beta);
  tr->add_option("--lr", o.lr);
  tr->add_option("--epochs", o.epochs);
  tr->add_option("--batch-size", o.batch_size);
  tr->add_option("--window", o.window, "Records per shuffling window");
  tr->add_option("--ablation", o.ablation, "both|thinking|perception|none");
  tr->add_option("--max-steps", o.max_steps, "Update cap, 0 for none");
  tr->add_option("--context-window", o.context_window, "Token window of a fresh policy");
  tr->add_option("--head", o.head, "bag or window head for a fresh policy");
  tr->add_option("--head-visual", o.head_visual, "Whether a fresh policy's head reads v");
  tr->add_flag("--head-every-prefix", o.head_every_prefix, "Fit the head at every prefix");

  auto* er = app.add_subcommand("eval-robustness", "Accuracy under interference ratios");
  common(er);
  data(er);
  er->add_option("--checkpoint", o.checkpoints, "Checkpoint, optionally name=path; repeatable");
  er->add_option("--ratios", o.ratios, "Interference ratios")->delimiter(',');
  er->add_option("--seeds", o.seeds, "Interference seeds (default: --seed .. --seed+4)")->delimiter(',');
  er->add_option("--continuation", o.continuation, "Greedy tokens after the prefix");
  er->add_option("--target", o.target, "prefix or prompt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gv) return graph_validate(o);
    if (*gw) return gen_world(o, *gw);
    if (*sc) return synth_cf(o);
    if (*mv) return mine_visual(o);
    if (*dr) return drift_report_cmd(o);
    if (*pr) return probe(o);
    if (*tr) return train(o);
    if (*er) return eval_robustness_cmd(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
