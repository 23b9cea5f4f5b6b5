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

#include <cmath>
#include <optional>

#include "cdrift/error.hpp"

namespace cdrift {

RefLogprobs reference_logprobs(const PolicyParams& ref, const PreferencePair& pair) {
  return {sequence_logprob(ref, pair.visual, pair.prompt, pair.chosen),
          sequence_logprob(ref, pair.rejected_visual(), pair.prompt, pair.rejected)};
}

namespace kernels {

namespace {

// -log sigmoid(m)
double softplus_neg(double m) {
  return m > 0.0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct PairTerm {
  double margin;
  double coef;
};

// Fills `buf` with grad logp(chosen) - grad logp(rejected) and returns the
// margin and the loss-gradient coefficient for the pair.
PairTerm pair_term(const PolicyParams& params, const PreferencePair& pair, const RefLogprobs& ref,
                   double beta, std::size_t batch, Matrix& buf) {
  buf.set_zero();
  const double lc = accumulate_sequence_logprob_grad(params, pair.visual, pair.prompt, pair.chosen,
                                                     1.0, buf);
  const double lr = accumulate_sequence_logprob_grad(params, pair.rejected_visual(), pair.prompt,
                                                     pair.rejected, -1.0, buf);
  const double margin = beta * ((lc - ref.chosen) - (lr - ref.rejected));
  const double coef = -beta * sigmoid(-margin) / static_cast<double>(batch);
  return {margin, coef};
}

LossStats finish(std::span<const PairTerm> terms) {
  LossStats s;
  s.pairs = terms.size();
  for (const auto& t : terms) {
    s.loss += softplus_neg(t.margin);
    s.mean_margin += t.margin;
    if (t.margin > 0.0) s.reward_accuracy += 1.0;
  }
  const double n = static_cast<double>(terms.size());
  s.loss /= n;
  s.mean_margin /= n;
  s.reward_accuracy /= n;
  return s;
}

void check_batch(std::span<const PreferencePair> pairs, std::span<const RefLogprobs> ref,
                 std::span<const std::size_t> indices) {
  if (indices.empty()) throw Error(ErrorCode::EmptyBatch, "preference batch is empty");
  if (ref.size() != pairs.size())
    throw Error(ErrorCode::LengthMismatch, "one reference entry is needed per pair");
  for (std::size_t i : indices)
    if (i >= pairs.size()) throw Error(ErrorCode::InvariantViolation, "pair index out of range");
}

}  // namespace

std::vector<double> score_visuals_serial(const PolicyParams& params, const ThinkingTrace& trace,
                                         std::span<const TokenId> prompt,
                                         std::span<const VisualContext> visuals) {
  std::vector<double> out(visuals.size());
  for (std::size_t i = 0; i < visuals.size(); ++i)
    out[i] = sequence_logprob(params, visuals[i], prompt, trace);
  return out;
}

std::vector<double> score_visuals_parallel(const PolicyParams& params, const ThinkingTrace& trace,
                                           std::span<const TokenId> prompt,
                                           std::span<const VisualContext> visuals) {
  std::vector<double> out(visuals.size());
  std::vector<std::optional<Error>> errors(visuals.size());
  const auto n = static_cast<std::ptrdiff_t>(visuals.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = sequence_logprob(params, visuals[i], prompt, trace);
    } catch (const Error& e) {
      errors[i] = e;
    }
  }
  for (auto& e : errors)
    if (e) throw *e;
  return out;
}

LossStats batch_loss_grad_serial(const PolicyParams& params, std::span<const PreferencePair> pairs,
                                 std::span<const RefLogprobs> ref, std::span<const std::size_t> indices,
                                 double beta, Matrix& grad) {
  check_batch(pairs, ref, indices);
  grad = Matrix(params.token_weights.rows, params.token_weights.cols);
  Matrix buf(grad.rows, grad.cols);
  std::vector<PairTerm> terms;
  for (std::size_t i : indices) {
    terms.push_back(pair_term(params, pairs[i], ref[i], beta, indices.size(), buf));
    const double c = terms.back().coef;
    for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += c * buf.data[k];
  }
  return finish(terms);
}

LossStats batch_loss_grad_parallel(const PolicyParams& params,
                                   std::span<const PreferencePair> pairs,
                                   std::span<const RefLogprobs> ref,
                                   std::span<const std::size_t> indices, double beta, Matrix& grad) {
  check_batch(pairs, ref, indices);
  const std::size_t b = indices.size();
  grad = Matrix(params.token_weights.rows, params.token_weights.cols);
  std::vector<Matrix> bufs(b, Matrix(grad.rows, grad.cols));
  std::vector<PairTerm> terms(b);
  std::vector<std::optional<Error>> errors(b);
  const auto n = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    try {
      terms[j] = pair_term(params, pairs[indices[j]], ref[indices[j]], beta, b, bufs[j]);
    } catch (const Error& e) {
      errors[j] = e;
    }
  }
  for (auto& e : errors)
    if (e) throw *e;
  for (std::size_t j = 0; j < b; ++j) {
    const double c = terms[j].coef;
    const auto& buf = bufs[j].data;
    for (std::size_t k = 0; k < grad.data.size(); ++k) grad.data[k] += c * buf[k];
  }
  return finish(terms);
}

}  // namespace kernels
}  // namespace cdrift
