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


#include "cdrift/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cdrift/error.hpp"

namespace cdrift {

using nlohmann::json;

void FeatureMapConfig::validate() const {
  if (window < 1) throw Error(ErrorCode::InvalidConfig, "feature window must be at least 1");
  if (vocab_size < 2) throw Error(ErrorCode::InvalidConfig, "vocabulary needs at least two tokens");
  if (markers.open >= vocab_size || markers.close >= vocab_size || markers.open == markers.close)
    throw Error(ErrorCode::InvalidConfig, "think markers out of range");
  for (std::size_t i = 1; i < attribute_ids.size(); ++i)
    if (!(attribute_ids[i - 1] < attribute_ids[i]))
      throw Error(ErrorCode::InvalidConfig, "attribute ids must be sorted and unique");
}

json to_json(const FeatureMapConfig& c) {
  return {{"window", c.window},
          {"vocab_size", c.vocab_size},
          {"attribute_ids", c.attribute_ids},
          {"bias", c.bias},
          {"prompt_in_window", c.prompt_in_window},
          {"head", c.head == HeadMode::Bag ? "bag" : "window"},
          {"head_visual", c.head_visual},
          {"think_open", c.markers.open},
          {"think_close", c.markers.close}};
}

FeatureMapConfig feature_map_from_json(const json& doc) {
  FeatureMapConfig c;
  try {
    c.window = doc.at("window").get<std::size_t>();
    c.vocab_size = doc.at("vocab_size").get<std::size_t>();
    c.attribute_ids = doc.at("attribute_ids").get<std::vector<std::string>>();
    c.bias = doc.at("bias").get<bool>();
    c.prompt_in_window = doc.at("prompt_in_window").get<bool>();
    const auto head = doc.at("head").get<std::string>();
    if (head == "bag") c.head = HeadMode::Bag;
    else if (head == "window") c.head = HeadMode::Window;
    else throw Error(ErrorCode::ParseError, "unknown head mode '" + head + "'");
    c.head_visual = doc.value("head_visual", true);
    c.markers.open = doc.at("think_open").get<TokenId>();
    c.markers.close = doc.at("think_close").get<TokenId>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("feature map: ") + e.what());
  }
  c.validate();
  return c;
}

PolicyParams PolicyParams::zeros(FeatureMapConfig features, std::vector<std::string> labels) {
  features.validate();
  if (labels.empty()) throw Error(ErrorCode::InvalidConfig, "policy needs at least one label");
  PolicyParams p;
  p.token_weights = Matrix(features.vocab_size, features.feature_size());
  p.head_weights = Matrix(labels.size(), features.head_feature_size());
  p.features = std::move(features);
  p.labels = std::move(labels);
  return p;
}

void PolicyParams::validate() const {
  features.validate();
  if (labels.empty()) throw Error(ErrorCode::InvalidConfig, "policy needs at least one label");
  if (token_weights.rows != features.vocab_size || token_weights.cols != features.feature_size() ||
      token_weights.data.size() != token_weights.rows * token_weights.cols)
    throw Error(ErrorCode::InvalidConfig, "token_weights dimensions do not match the feature map");
  if (head_weights.rows != labels.size() || head_weights.cols != features.head_feature_size() ||
      head_weights.data.size() != head_weights.rows * head_weights.cols)
    throw Error(ErrorCode::InvalidConfig, "head_weights dimensions do not match the feature map");
  for (double w : token_weights.data)
    if (!std::isfinite(w)) throw Error(ErrorCode::InvalidConfig, "non-finite token weight");
  for (double w : head_weights.data)
    if (!std::isfinite(w)) throw Error(ErrorCode::InvalidConfig, "non-finite head weight");
}

std::size_t PolicyParams::label_index(std::string_view label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw Error(ErrorCode::UnknownEntity, "label '" + std::string(label) + "' is not in the policy");
}

// ---- features ---------------------------------------------------------------

std::vector<std::uint32_t> encode_visual(const FeatureMapConfig& config, const VisualContext& v) {
  std::vector<std::uint32_t> out;
  out.reserve(v.attributes.size());
  for (const auto& a : v.attributes) {
    auto it = std::lower_bound(config.attribute_ids.begin(), config.attribute_ids.end(), a);
    if (it == config.attribute_ids.end() || *it != a)
      throw Error(ErrorCode::UnknownAttribute, "visual attribute '" + a + "' is not in the feature map");
    out.push_back(static_cast<std::uint32_t>(it - config.attribute_ids.begin()));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

namespace {

void check_token(const FeatureMapConfig& config, TokenId t) {
  if (t >= config.vocab_size)
    throw Error(ErrorCode::UnknownToken, "token id " + std::to_string(t) + " is outside the vocabulary");
}

}  // namespace

void context_features(const FeatureMapConfig& config, std::span<const std::uint32_t> visual,
                      std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                      SparseFeatures& out) {
  out.clear();
  const std::size_t vocab = config.vocab_size;
  const std::size_t lead = config.prompt_in_window ? prompt.size() : 0;
  const std::size_t len = lead + prefix.size();
  for (std::size_t k = 1; k <= config.window && k <= len; ++k) {
    const std::size_t pos = len - k;
    const TokenId t = pos < lead ? prompt[pos] : prefix[pos - lead];
    check_token(config, t);
    out.push(static_cast<std::uint32_t>((k - 1) * vocab + t), 1.0);
  }
  const std::size_t attr_base = config.window * vocab;
  for (std::uint32_t a : visual) out.push(static_cast<std::uint32_t>(attr_base + a), 1.0);
  if (config.bias) out.push(static_cast<std::uint32_t>(attr_base + config.attribute_ids.size()), 1.0);
}

void head_features(const FeatureMapConfig& config, std::span<const std::uint32_t> visual,
                   std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                   SparseFeatures& out) {
  if (config.head == HeadMode::Window) {
    context_features(config, config.head_visual ? visual : std::span<const std::uint32_t>{}, prompt,
                     prefix, out);
    return;
  }
  out.clear();
  std::vector<std::uint32_t> counts;
  std::size_t total = 0;
  for (TokenId t : prefix) {
    check_token(config, t);
    if (t == config.markers.open || t == config.markers.close) continue;
    counts.push_back(t);
    ++total;
  }
  std::sort(counts.begin(), counts.end());
  for (std::size_t i = 0; i < counts.size();) {
    std::size_t j = i;
    while (j < counts.size() && counts[j] == counts[i]) ++j;
    out.push(counts[i], static_cast<double>(j - i) / static_cast<double>(total));
    i = j;
  }
  const std::size_t attr_base = config.vocab_size;
  if (config.head_visual)
    for (std::uint32_t a : visual) out.push(static_cast<std::uint32_t>(attr_base + a), 1.0);
  if (config.bias) out.push(static_cast<std::uint32_t>(attr_base + config.attribute_ids.size()), 1.0);
}

double softmax_inplace(std::span<double> logits) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double x : logits) peak = std::max(peak, x);
  double sum = 0.0;
  for (double& x : logits) {
    x = std::exp(x - peak);
    sum += x;
  }
  for (double& x : logits) x /= sum;
  return peak + std::log(sum);
}

namespace {

void linear_logits(const Matrix& weights, const SparseFeatures& phi, std::vector<double>& logits) {
  logits.assign(weights.rows, 0.0);
  const std::size_t nnz = phi.index.size();
  for (std::size_t w = 0; w < weights.rows; ++w) {
    const double* row = weights.data.data() + w * weights.cols;
    double acc = 0.0;
    for (std::size_t k = 0; k < nnz; ++k) acc += row[phi.index[k]] * phi.value[k];
    logits[w] = acc;
  }
}

void add_outer(Matrix& grad, std::span<const double> coef, const SparseFeatures& phi) {
  const std::size_t nnz = phi.index.size();
  for (std::size_t w = 0; w < grad.rows; ++w) {
    if (coef[w] == 0.0) continue;
    double* row = grad.data.data() + w * grad.cols;
    for (std::size_t k = 0; k < nnz; ++k) row[phi.index[k]] += coef[w] * phi.value[k];
  }
}

}  // namespace

std::vector<double> next_token_probs(const PolicyParams& params, const VisualContext& v,
                                     std::span<const TokenId> prompt,
                                     std::span<const TokenId> prefix) {
  const auto visual = encode_visual(params.features, v);
  SparseFeatures phi;
  context_features(params.features, visual, prompt, prefix, phi);
  std::vector<double> logits;
  linear_logits(params.token_weights, phi, logits);
  softmax_inplace(logits);
  return logits;
}

namespace {

double sequence_pass(const PolicyParams& params, const VisualContext& v,
                     std::span<const TokenId> prompt, const ThinkingTrace& trace, double scale,
                     Matrix* grad) {
  const auto visual = encode_visual(params.features, v);
  const auto& tokens = trace.tokens();
  SparseFeatures phi;
  std::vector<double> logits;
  double total = 0.0;
  for (std::size_t j = trace.span_begin(); j < trace.span_end(); ++j) {
    const TokenId target = tokens[j];
    check_token(params.features, target);
    context_features(params.features, visual, prompt,
                     std::span<const TokenId>(tokens.data(), j), phi);
    linear_logits(params.token_weights, phi, logits);
    const double target_logit = logits[target];
    const double lse = softmax_inplace(logits);
    total += target_logit - lse;
    if (grad) {
      for (double& p : logits) p = -scale * p;
      logits[target] += scale;
      add_outer(*grad, logits, phi);
    }
  }
  return total;
}

}  // namespace

double sequence_logprob(const PolicyParams& params, const VisualContext& v,
                        std::span<const TokenId> prompt, const ThinkingTrace& trace) {
  return sequence_pass(params, v, prompt, trace, 0.0, nullptr);
}

double accumulate_sequence_logprob_grad(const PolicyParams& params, const VisualContext& v,
                                        std::span<const TokenId> prompt,
                                        const ThinkingTrace& trace, double scale, Matrix& grad) {
  return sequence_pass(params, v, prompt, trace, scale, &grad);
}

Matrix grad_sequence_logprob(const PolicyParams& params, const VisualContext& v,
                             std::span<const TokenId> prompt, const ThinkingTrace& trace) {
  Matrix grad(params.token_weights.rows, params.token_weights.cols);
  accumulate_sequence_logprob_grad(params, v, prompt, trace, 1.0, grad);
  return grad;
}

std::vector<double> predict_label(const PolicyParams& params, const VisualContext& v,
                                  std::span<const TokenId> prompt, std::span<const TokenId> prefix) {
  const auto visual = encode_visual(params.features, v);
  SparseFeatures psi;
  head_features(params.features, visual, prompt, prefix, psi);
  std::vector<double> logits;
  linear_logits(params.head_weights, psi, logits);
  softmax_inplace(logits);
  return logits;
}

double accumulate_label_nll_grad(const PolicyParams& params, const VisualContext& v,
                                 std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                                 std::size_t label, double scale, Matrix& grad) {
  const auto visual = encode_visual(params.features, v);
  SparseFeatures psi;
  head_features(params.features, visual, prompt, prefix, psi);
  std::vector<double> logits;
  linear_logits(params.head_weights, psi, logits);
  const double label_logit = logits[label];
  const double lse = softmax_inplace(logits);
  for (double& p : logits) p *= scale;
  logits[label] -= scale;
  add_outer(grad, logits, psi);
  return lse - label_logit;
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t draw_categorical(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    cumulative += probs[i];
    if (u < cumulative) return i;
  }
  return last_positive;
}

ThinkingTrace sample_trace(const PolicyParams& params, const VisualContext& v,
                           std::span<const TokenId> prompt, std::size_t max_length,
                           double temperature, Rng& rng) {
  const auto& fm = params.features;
  if (max_length < 2) throw Error(ErrorCode::InvalidConfig, "max length must leave room for both markers");
  if (!(temperature >= 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be non-negative");
  const auto visual = encode_visual(fm, v);
  std::vector<TokenId> tokens{fm.markers.open};
  SparseFeatures phi;
  std::vector<double> logits;
  while (tokens.size() < max_length) {
    context_features(fm, visual, prompt, tokens, phi);
    linear_logits(params.token_weights, phi, logits);
    // think-open never appears inside a trace
    logits[fm.markers.open] = -std::numeric_limits<double>::infinity();
    TokenId next;
    if (temperature == 0.0) {
      next = static_cast<TokenId>(argmax_lowest(logits));
    } else {
      for (double& x : logits) x /= temperature;
      softmax_inplace(logits);
      next = static_cast<TokenId>(draw_categorical(logits, rng));
    }
    tokens.push_back(next);
    if (next == fm.markers.close) break;
  }
  return ThinkingTrace::from_tokens(std::move(tokens), fm.markers, /*allow_truncated=*/true);
}

}  // namespace cdrift
