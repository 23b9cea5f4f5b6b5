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


#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cdrift/rng.hpp"
#include "cdrift/trace_model.hpp"
#include "cdrift/vocabulary.hpp"
#include "json.hpp"

namespace cdrift {

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }

  bool operator==(const Matrix&) const = default;
};

/// What the prediction head reads.
enum class HeadMode : std::uint8_t {
  /// Normalized token frequencies over the non-marker prefix, plus the
  /// attribute indicators of v and the bias.
  Bag,
  /// The policy's own context features at the current step.
  Window,
};

/// Feature map phi(v, l, t_<j) = [one-hot of each of the last `window`
/// tokens || attribute indicators of v || bias].
struct FeatureMapConfig {
  std::size_t window = 1;
  std::size_t vocab_size = 0;
  std::vector<std::string> attribute_ids;  // sorted, unique; indicator order
  bool bias = true;
  /// Prepend the prompt to the trace when filling the token window.
  bool prompt_in_window = false;
  HeadMode head = HeadMode::Bag;
  /// Whether the head sees v's attribute indicators. Without them the label
  /// is read from the trace alone. Column layout is the same either way.
  bool head_visual = true;
  ThinkMarkers markers;

  std::size_t feature_size() const {
    return window * vocab_size + attribute_ids.size() + (bias ? 1 : 0);
  }
  std::size_t head_feature_size() const {
    return head == HeadMode::Window ? feature_size()
                                    : vocab_size + attribute_ids.size() + (bias ? 1 : 0);
  }
  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const FeatureMapConfig&) const = default;
};

nlohmann::json to_json(const FeatureMapConfig& config);
FeatureMapConfig feature_map_from_json(const nlohmann::json& doc);

struct PolicyParams {
  FeatureMapConfig features;
  std::vector<std::string> labels;
  Matrix token_weights;  // vocab_size x feature_size
  Matrix head_weights;   // labels x head_feature_size

  static PolicyParams zeros(FeatureMapConfig features, std::vector<std::string> labels);
  /// Dimension and finiteness check; throws InvalidConfig.
  void validate() const;
  std::size_t label_index(std::string_view label) const;

  bool operator==(const PolicyParams&) const = default;
};

/// Frozen reference copy of a policy.
class PolicySnapshot {
 public:
  explicit PolicySnapshot(PolicyParams params)
      : params_(std::make_shared<const PolicyParams>(std::move(params))) {}
  const PolicyParams& params() const { return *params_; }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

/// A sparse, binary-or-weighted feature vector.
struct SparseFeatures {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
  void clear() {
    index.clear();
    value.clear();
  }
  void push(std::uint32_t i, double v) {
    index.push_back(i);
    value.push_back(v);
  }
};

/// Attribute indicator positions of v under this feature map. Throws
/// UnknownAttribute for attributes the map does not know.
std::vector<std::uint32_t> encode_visual(const FeatureMapConfig& config, const VisualContext& v);

/// phi for predicting the token at `prefix.size()` given the prefix.
void context_features(const FeatureMapConfig& config, std::span<const std::uint32_t> visual,
                      std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                      SparseFeatures& out);
void head_features(const FeatureMapConfig& config, std::span<const std::uint32_t> visual,
                   std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                   SparseFeatures& out);

/// Softmax over the vocabulary for the next token after `prefix`.
std::vector<double> next_token_probs(const PolicyParams& params, const VisualContext& v,
                                     std::span<const TokenId> prompt,
                                     std::span<const TokenId> prefix);

/// Sum of log pi(t_j | v, l, t_<j) over the think span. Throws UnknownToken.
double sequence_logprob(const PolicyParams& params, const VisualContext& v,
                        std::span<const TokenId> prompt, const ThinkingTrace& trace);

/// Gradient of sequence_logprob with respect to token_weights.
Matrix grad_sequence_logprob(const PolicyParams& params, const VisualContext& v,
                             std::span<const TokenId> prompt, const ThinkingTrace& trace);

/// Adds `scale` times the gradient into `grad`; returns the log-probability.
double accumulate_sequence_logprob_grad(const PolicyParams& params, const VisualContext& v,
                                        std::span<const TokenId> prompt,
                                        const ThinkingTrace& trace, double scale, Matrix& grad);

/// Label distribution z read off the prefix. Throws UnknownToken.
std::vector<double> predict_label(const PolicyParams& params, const VisualContext& v,
                                  std::span<const TokenId> prompt, std::span<const TokenId> prefix);

/// Adds `scale` times d(-log z[label]) / d(head_weights) into `grad`; returns
/// -log z[label].
double accumulate_label_nll_grad(const PolicyParams& params, const VisualContext& v,
                                 std::span<const TokenId> prompt, std::span<const TokenId> prefix,
                                 std::size_t label, double scale, Matrix& grad);

/// Autoregressive sampling from think-open. Temperature 0 is argmax decoding
/// with ties going to the lowest token id. Stops after think-close or when
/// the trace reaches max_length tokens.
ThinkingTrace sample_trace(const PolicyParams& params, const VisualContext& v,
                           std::span<const TokenId> prompt, std::size_t max_length,
                           double temperature, Rng& rng);

/// Index drawn from a discrete distribution with one uniform variate.
std::size_t draw_categorical(std::span<const double> probs, Rng& rng);
std::size_t argmax_lowest(std::span<const double> values);

/// Numerically stable softmax in place; returns log-sum-exp.
double softmax_inplace(std::span<double> logits);

// ---- checkpoints ------------------------------------------------------------

/// Binary checkpoint: magic "CDRIFTCK", u32 version, u64 header length, a
/// JSON header (feature map, labels, dimensions), then token_weights and
/// head_weights as little-endian IEEE-754 doubles, row-major.
std::string encode_checkpoint(const PolicyParams& params);
PolicyParams decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cdrift
