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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

ThinkingTrace ThinkingTrace::from_tokens(std::vector<TokenId> tokens, ThinkMarkers markers,
                                         bool allow_truncated) {
  if (tokens.empty() || tokens.front() != markers.open)
    throw Error(ErrorCode::ParseError, "trace must begin with the think-open marker");
  std::size_t closes = 0;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i] == markers.open)
      throw Error(ErrorCode::ParseError, "nested or repeated think-open marker");
    if (tokens[i] == markers.close) {
      ++closes;
      if (i + 1 != tokens.size())
        throw Error(ErrorCode::ParseError, "tokens after the think-close marker");
    }
  }
  if (closes == 0 && !allow_truncated)
    throw Error(ErrorCode::UnterminatedThinkSpan, "think-open without a matching think-close");
  ThinkingTrace t;
  t.tokens_ = std::move(tokens);
  t.terminated_ = closes == 1;
  return t;
}

ThinkingTrace ThinkingTrace::wrap(std::span<const TokenId> body, ThinkMarkers markers) {
  std::vector<TokenId> tokens;
  tokens.reserve(body.size() + 2);
  tokens.push_back(markers.open);
  tokens.insert(tokens.end(), body.begin(), body.end());
  tokens.push_back(markers.close);
  return from_tokens(std::move(tokens), markers);
}

std::vector<CognitiveState> cognitive_states(const TraceRecord& record) {
  std::vector<CognitiveState> out;
  if (!record.z) return out;
  const auto& tokens = record.trace.tokens();
  for (std::size_t k = 0; k < record.z->size(); ++k) {
    std::size_t position = record.trace.span_begin() + k + 1;
    out.push_back({position, std::span<const TokenId>(tokens.data(), position),
                   std::span<const double>((*record.z)[k])});
  }
  return out;
}

bool is_distribution(std::span<const double> values) {
  if (values.empty()) return false;
  double sum = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= kUnitSumTolerance;
}

// ---- parsing ----------------------------------------------------------------

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg, std::size_t line) {
  throw Error(code, msg, line);
}

std::vector<TokenId> token_list(const json& arr, const Vocabulary& vocab, const char* what,
                                std::size_t line) {
  if (!arr.is_array()) fail(ErrorCode::ParseError, std::string(what) + " must be an array", line);
  std::vector<TokenId> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
      fail(ErrorCode::ParseError, std::string(what) + " entries must be non-negative integers", line);
    auto id = v.get<unsigned long long>();
    if (id >= vocab.size())
      fail(ErrorCode::UnknownToken, std::string(what) + " token id " + std::to_string(id) +
                                        " is outside the vocabulary",
           line);
    out.push_back(static_cast<TokenId>(id));
  }
  return out;
}

std::vector<std::vector<double>> matrix_rows(const json& arr, const char* what, std::size_t line) {
  if (!arr.is_array()) fail(ErrorCode::ParseError, std::string(what) + " must be an array", line);
  std::vector<std::vector<double>> rows;
  rows.reserve(arr.size());
  for (const auto& row : arr) {
    if (!row.is_array()) fail(ErrorCode::ParseError, std::string(what) + " rows must be arrays", line);
    std::vector<double> values;
    values.reserve(row.size());
    for (const auto& v : row) {
      if (!v.is_number()) fail(ErrorCode::ParseError, std::string(what) + " entries must be numbers", line);
      values.push_back(v.get<double>());
    }
    rows.push_back(std::move(values));
  }
  return rows;
}

void check_rows(const std::vector<std::vector<double>>& rows, std::size_t expected, const char* what,
                std::size_t line) {
  if (rows.size() != expected)
    fail(ErrorCode::LengthMismatch,
         std::string(what) + " has " + std::to_string(rows.size()) + " rows but the think span has " +
             std::to_string(expected) + " tokens",
         line);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size())
      fail(ErrorCode::LengthMismatch, std::string(what) + " rows differ in length", line);
    if (!is_distribution(rows[i]))
      fail(ErrorCode::NotNormalized, std::string(what) + " row " + std::to_string(i) +
                                         " is not a unit-sum non-negative distribution",
           line);
  }
}

}  // namespace

TraceRecord parse_record(std::string_view text, const Vocabulary& vocab, const ConceptGraph* graph,
                         std::size_t line) {
  json doc = json::parse(text.begin(), text.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) fail(ErrorCode::ParseError, "not a JSON object", line);

  auto get = [&](const char* key) -> const json& {
    auto it = doc.find(key);
    if (it == doc.end()) fail(ErrorCode::ParseError, std::string("missing field '") + key + "'", line);
    return *it;
  };

  TraceRecord r;
  const json& id = get("record_id");
  if (!id.is_string()) fail(ErrorCode::ParseError, "record_id must be a string", line);
  r.record_id = id.get<std::string>();

  const json& visual = get("visual");
  if (!visual.is_object() || !visual.contains("id") || !visual["id"].is_string() ||
      !visual.contains("attributes") || !visual["attributes"].is_array())
    fail(ErrorCode::ParseError, "visual must carry string id and attributes array", line);
  r.visual.id = visual["id"].get<std::string>();
  for (const auto& a : visual["attributes"]) {
    if (!a.is_string()) fail(ErrorCode::ParseError, "visual attributes must be strings", line);
    r.visual.attributes.push_back(a.get<std::string>());
  }
  if (visual.contains("feature") && !visual["feature"].is_null()) {
    if (!visual["feature"].is_array()) fail(ErrorCode::ParseError, "feature must be an array", line);
    std::vector<double> f;
    for (const auto& v : visual["feature"]) {
      if (!v.is_number()) fail(ErrorCode::ParseError, "feature entries must be numbers", line);
      f.push_back(v.get<double>());
    }
    r.visual.feature = std::move(f);
  }

  r.prompt = token_list(get("prompt"), vocab, "prompt", line);
  try {
    r.trace = ThinkingTrace::from_tokens(token_list(get("tokens"), vocab, "tokens", line),
                                         vocab.markers());
  } catch (const Error& e) {
    if (e.line() != 0) throw;
    throw e.at_line(line);
  }

  const json& gold = get("gold_label");
  if (!gold.is_string()) fail(ErrorCode::ParseError, "gold_label must be a string", line);
  r.gold_label = gold.get<std::string>();

  if (doc.contains("z") && !doc["z"].is_null()) {
    auto rows = matrix_rows(doc["z"], "z", line);
    check_rows(rows, r.trace.span_size(), "z", line);
    r.z = std::move(rows);
  }
  if (doc.contains("attention") && !doc["attention"].is_null()) {
    auto rows = matrix_rows(doc["attention"], "attention", line);
    check_rows(rows, r.trace.span_size(), "attention", line);
    r.attention = std::move(rows);
  }

  if (graph) {
    for (const auto& a : r.visual.attributes)
      if (!graph->attribute_index(a))
        fail(ErrorCode::UnknownAttribute, "visual attribute '" + a + "' is not in the graph", line);
    if (!graph->entity_index(r.gold_label))
      fail(ErrorCode::UnknownEntity, "gold_label '" + r.gold_label + "' is not a graph entity", line);
  }
  return r;
}

std::vector<TraceRecord> parse_records(std::istream& in, const Vocabulary& vocab,
                                       const ConceptGraph* graph) {
  std::vector<std::string> lines;
  std::vector<std::size_t> numbers;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(std::move(line));
    numbers.push_back(n);
  }

  const auto count = static_cast<std::ptrdiff_t>(lines.size());
  std::vector<TraceRecord> out(lines.size());
  std::vector<std::optional<Error>> errors(lines.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      out[i] = parse_record(lines[i], vocab, graph, numbers[i]);
    } catch (const Error& e) {
      errors[i] = e;
    }
  }
  for (auto& e : errors)
    if (e) throw *e;
  return out;
}

std::vector<TraceRecord> parse_records(std::string_view text, const Vocabulary& vocab,
                                       const ConceptGraph* graph) {
  std::istringstream in{std::string(text)};
  return parse_records(in, vocab, graph);
}

json record_to_json(const TraceRecord& r) {
  json visual = {{"id", r.visual.id}, {"attributes", r.visual.attributes}};
  if (r.visual.feature) visual["feature"] = *r.visual.feature;
  json doc = {{"record_id", r.record_id},
              {"visual", std::move(visual)},
              {"prompt", r.prompt},
              {"tokens", r.trace.tokens()},
              {"gold_label", r.gold_label}};
  if (r.z) doc["z"] = *r.z;
  if (r.attention) doc["attention"] = *r.attention;
  return doc;
}

std::string serialize_record(const TraceRecord& record) { return record_to_json(record).dump(); }

std::string serialize_records(const std::vector<TraceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += serialize_record(r);
    out += '\n';
  }
  return out;
}

// ---- mentions ---------------------------------------------------------------

MentionMatcher::MentionMatcher(const ConceptGraph& graph, const Vocabulary& vocab)
    : graph_(&graph), vocab_(&vocab) {
  const auto& attrs = graph.attributes();
  names_.resize(attrs.size());
  for (std::size_t a = 0; a < attrs.size(); ++a) {
    try {
      names_[a] = vocab.tokenize(attrs[a].name);
    } catch (const Error&) {
      names_[a].clear();
    }
  }
  std::vector<std::size_t> order;
  for (std::size_t a = 0; a < attrs.size(); ++a)
    if (!names_[a].empty()) order.push_back(a);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (names_[x].front() != names_[y].front()) return names_[x].front() < names_[y].front();
    if (names_[x].size() != names_[y].size()) return names_[x].size() > names_[y].size();
    return x < y;
  });
  by_first_token_ = std::move(order);
  first_token_offset_.assign(vocab.size() + 1, 0);
  for (std::size_t a : by_first_token_) ++first_token_offset_[names_[a].front() + 1];
  std::partial_sum(first_token_offset_.begin(), first_token_offset_.end(),
                   first_token_offset_.begin());
}

std::vector<Mention> MentionMatcher::extract(const ThinkingTrace& trace) const {
  std::vector<Mention> out;
  const auto& tokens = trace.tokens();
  const std::size_t end = trace.span_end();
  std::size_t i = trace.span_begin();
  while (i < end) {
    const TokenId t = tokens[i];
    bool matched = false;
    if (t < vocab_->size()) {
      for (std::size_t k = first_token_offset_[t]; k < first_token_offset_[t + 1]; ++k) {
        const std::size_t a = by_first_token_[k];
        const auto& name = names_[a];
        if (i + name.size() > end) continue;
        if (std::equal(name.begin(), name.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) {
          out.push_back({a, i, name.size()});
          i += name.size();
          matched = true;
          break;
        }
      }
    }
    if (!matched) ++i;
  }
  return out;
}

std::vector<Mention> extract_attribute_mentions(const ThinkingTrace& trace,
                                                const ConceptGraph& graph,
                                                const Vocabulary& vocab) {
  return MentionMatcher(graph, vocab).extract(trace);
}

// ---- attention --------------------------------------------------------------

AttentionFrame normalize_attention(const AttentionFrame& frame, std::size_t sink_mask) {
  const std::size_t n = frame.weights.size();
  if (sink_mask >= n)
    throw Error(ErrorCode::BadMask, "sink mask " + std::to_string(sink_mask) +
                                        " must be smaller than the frame length " +
                                        std::to_string(n));
  double tail = 0.0;
  for (std::size_t i = sink_mask; i < n; ++i) {
    if (!std::isfinite(frame.weights[i]) || frame.weights[i] < 0.0)
      throw Error(ErrorCode::NotNormalized, "attention weights must be finite and non-negative");
    tail += frame.weights[i];
  }
  if (!(tail > 0.0))
    throw Error(ErrorCode::DegenerateFrame, "all attention mass lies inside the masked prefix");
  if (sink_mask == 0 && std::abs(tail - 1.0) <= kUnitSumTolerance) return frame;
  AttentionFrame out;
  out.weights.assign(n, 0.0);
  for (std::size_t i = sink_mask; i < n; ++i) out.weights[i] = frame.weights[i] / tail;
  return out;
}

}  // namespace cdrift
