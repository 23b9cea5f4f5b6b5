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

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cdrift/synthetic_world.hpp"
#include "cdrift/toy_policy.hpp"

namespace cdrift {

struct RobustnessConfig {
  std::vector<double> ratios{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  /// Greedy tokens the policy may add after the interfered prefix.
  std::size_t continuation = 4;
  InterferenceTarget target = InterferenceTarget::ThinkPrefix;

  void validate() const;
};

struct NamedPolicy {
  std::string name;
  PolicyParams params;
};

struct RobustnessCell {
  std::string policy;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct Prediction {
  std::string policy;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::string record_id;
  std::string predicted;
  std::string gold;
};

/// The interfered input for one (seed, ratio, record); identical for every
/// policy evaluated under the same seed.
Interference interfered_input(const TraceRecord& record, const MentionMatcher& matcher,
                              double ratio, std::uint64_t seed, InterferenceTarget target);

/// Label predicted after greedy continuation of the interfered input.
std::size_t robust_prediction(const PolicyParams& params, const TraceRecord& input,
                              std::size_t continuation, InterferenceTarget target);

/// Accuracy of every policy on every (ratio, seed) cell. Cells are ordered
/// policy-major, then ratio, then seed. Records without mentions are
/// skipped.
std::vector<RobustnessCell> eval_robustness(const std::vector<NamedPolicy>& policies,
                                            const std::vector<TraceRecord>& records,
                                            const MentionMatcher& matcher,
                                            const RobustnessConfig& config,
                                            std::vector<Prediction>* predictions = nullptr);

/// Tab separated: policy, ratio, seed, correct, total, accuracy.
std::string robustness_table(const std::vector<RobustnessCell>& cells);

/// Mean over seeds of accuracy(from) - accuracy(to) for one policy.
double accuracy_drop(const std::vector<RobustnessCell>& cells, const std::string& policy,
                     double from, double to);

}  // namespace cdrift
