// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Slimmable training (sandwich rule with inplace distillation), fixed-width
// training, and BN-recalibrated evaluation.

#ifndef AUTOSLIM_SLIMTRAIN_HPP_
#define AUTOSLIM_SLIMTRAIN_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "autoslim/dataset.hpp"
#include "autoslim/engine.hpp"
#include "autoslim/netspec.hpp"
#include "json.hpp"

namespace autoslim {

enum class LrSchedule {
  kLinearDecay,     // lr0 * (1 - t / T)
  kStep,            // lr0 * gamma^floor(epoch / step_size)
  kSqueezedLinear,  // lr0 -> lr_floor linearly, reaching the floor at the last step
};

std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view name);

struct TrainSchedule {
  int epochs = 5;
  int batch_size = 128;
  LrSchedule lr_schedule = LrSchedule::kSqueezedLinear;
  double lr = 0.1;
  double lr_floor = 0.0;
  int step_size = 30;
  double step_gamma = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int n_random_widths = 2;
  std::uint64_t seed = 0;
  bool augment = true;  // CIFAR only
};

nlohmann::json to_json(const TrainSchedule& s);
TrainSchedule schedule_from_json(const nlohmann::json& doc, TrainSchedule defaults = {});
void validate(const TrainSchedule& s);

// Learning rate for global step t of `total_steps` (epoch = t / steps_per_epoch).
double learning_rate(const TrainSchedule& s, std::int64_t step, std::int64_t steps_per_epoch);

struct EvalOptions {
  int calibration_samples = 2048;
  int batch_size = 2048;
  std::uint64_t calibration_seed = 0;
};

// Recalibrates BN for `config` on a fixed sample of the training split, then
// returns top-1 accuracy over `split` in eval mode.
double evaluate_accuracy(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& weights,
                         const ChannelConfig& config, const DatasetHandle& data, const Split& split,
                         const EvalOptions& options);

struct SandwichSummary {
  int passes = 0;
  double max_loss = 0.0;               // hard loss of the widest network
  std::vector<double> student_losses;  // min width, then random widths
  Tensor teacher;                      // detached softmax of the widest network
};

// One step: max width (hard labels, yields the teacher), min width and
// n_random_widths sampled widths (soft targets), gradients summed, one SGD
// update. `observer`, if set, sees each config before its pass.
SandwichSummary sandwich_step(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& weights,
                              SgdState<float>& sgd, const Tensor& images, const std::vector<int>& labels,
                              const TrainSchedule& schedule, double lr, std::mt19937_64& rng,
                              const std::function<void(const ChannelConfig&)>& observer = {});

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double acc_min = 0.0;
  double acc_1x = 0.0;  // NaN when 1.0x lies outside the bounds
  double acc_max = 0.0;
  double wallclock_s = 0.0;
};

std::string training_log_csv(const std::vector<EpochLog>& log);

struct TrainOptions {
  EvalOptions eval;
  bool evaluate_each_epoch = true;
  // Called after every epoch with the weights (e.g. to write a checkpoint).
  std::function<void(int epoch, const SlimmableWeights&)> on_epoch;
};

std::vector<EpochLog> train_slimmable(const NetworkSpec& spec, const WidthBounds& bounds,
                                      SlimmableWeights& weights, const DatasetHandle& data,
                                      const TrainSchedule& schedule, const TrainOptions& options = {});

struct FixedResult {
  SlimmableWeights weights;  // max-width store; only the config's slices are trained
  std::vector<EpochLog> log;  // acc_min = acc_1x = acc_max = holdout accuracy
  double holdout_accuracy = 0.0;
};

// Standard training of one fixed configuration from a fresh initialization
// (fan-scaled for the configuration's widths).
FixedResult train_from_scratch(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config,
                               const DatasetHandle& data, const TrainSchedule& schedule,
                               const TrainOptions& options = {});

}  // namespace autoslim

#endif  // AUTOSLIM_SLIMTRAIN_HPP_
