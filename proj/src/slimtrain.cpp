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

#include "autoslim/slimtrain.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace autoslim {
namespace {

// Independent streams derived from the schedule seed.
constexpr std::uint64_t kShuffleStream = 0x5348554646ULL;
constexpr std::uint64_t kWidthStream = 0x5749445448ULL;
constexpr std::uint64_t kAugmentStream = 0x4155474dULL;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

std::vector<std::int64_t> calibration_indices(const DatasetHandle& data, const EvalOptions& options) {
  std::vector<std::int64_t> idx(static_cast<size_t>(data.train().size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(options.calibration_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min<size_t>(idx.size(), static_cast<size_t>(options.calibration_samples)));
  return idx;
}

int argmax_row(const Tensor& logits, int row) {
  const int classes = logits.dim(1);
  const float* z = logits.data() + static_cast<std::int64_t>(row) * classes;
  return static_cast<int>(std::max_element(z, z + classes) - z);
}

double holdout_accuracy_at(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& w,
                           const std::optional<ChannelConfig>& config, const DatasetHandle& data,
                           const EvalOptions& eval) {
  if (!config) return std::numeric_limits<double>::quiet_NaN();
  return evaluate_accuracy(spec, bounds, w, *config, data, data.holdout(), eval);
}

std::optional<ChannelConfig> one_x(const NetworkSpec& spec, const WidthBounds& bounds) {
  if (1.0 < bounds.lower || 1.0 > bounds.upper) return std::nullopt;
  return apply_width_multiplier(spec, bounds, 1.0);
}

template <typename StepFn>
std::vector<EpochLog> run_epochs(const DatasetHandle& data, const TrainSchedule& s, const TrainOptions& options,
                                 SlimmableWeights& weights, StepFn step,
                                 const std::function<void(EpochLog&)>& evaluate) {
  validate(s);
  const std::int64_t n = data.train().size();
  if (n == 0) throw std::invalid_argument("training split is empty");
  const int batch = static_cast<int>(std::min<std::int64_t>(s.batch_size, n));
  const std::int64_t steps_per_epoch = n / batch;
  auto shuffle_rng = stream(s.seed, kShuffleStream);
  auto augment_rng = stream(s.seed, kAugmentStream);
  std::vector<std::int64_t> order(static_cast<size_t>(n));
  std::vector<EpochLog> log;
  const auto start = std::chrono::steady_clock::now();
  std::int64_t global = 0;
  for (int epoch = 0; epoch < s.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::int64_t k = 0; k < steps_per_epoch; ++k, ++global) {
      lr = learning_rate(s, global, steps_per_epoch);
      const std::span<const std::int64_t> idx(order.data() + k * batch, static_cast<size_t>(batch));
      const Tensor images = data.batch(data.train(), idx, s.augment, &augment_rng);
      std::vector<int> labels(static_cast<size_t>(batch));
      for (int b = 0; b < batch; ++b) labels[b] = data.train().labels[idx[b]];
      loss_sum += step(images, labels, lr);
    }
    EpochLog e;
    e.epoch = epoch + 1;
    e.lr = lr;
    e.train_loss = loss_sum / static_cast<double>(steps_per_epoch);
    if (options.evaluate_each_epoch || epoch + 1 == s.epochs) evaluate(e);
    else e.acc_min = e.acc_1x = e.acc_max = std::numeric_limits<double>::quiet_NaN();
    e.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(e);
    if (options.on_epoch) options.on_epoch(epoch + 1, weights);
  }
  return log;
}

}  // namespace

std::string_view to_string(LrSchedule s) {
  switch (s) {
    case LrSchedule::kLinearDecay: return "linear_decay";
    case LrSchedule::kStep: return "step";
    case LrSchedule::kSqueezedLinear: return "squeezed_linear";
  }
  return "unknown";
}

LrSchedule parse_lr_schedule(std::string_view name) {
  for (auto s : {LrSchedule::kLinearDecay, LrSchedule::kStep, LrSchedule::kSqueezedLinear})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown lr schedule '" + std::string(name) + "'");
}

nlohmann::json to_json(const TrainSchedule& s) {
  return {{"epochs", s.epochs},
          {"batch_size", s.batch_size},
          {"lr_schedule", to_string(s.lr_schedule)},
          {"lr", s.lr},
          {"lr_floor", s.lr_floor},
          {"step_size", s.step_size},
          {"step_gamma", s.step_gamma},
          {"momentum", s.momentum},
          {"weight_decay", s.weight_decay},
          {"n_random_widths", s.n_random_widths},
          {"seed", s.seed},
          {"augment", s.augment}};
}

TrainSchedule schedule_from_json(const nlohmann::json& doc, TrainSchedule s) {
  s.epochs = doc.value("epochs", s.epochs);
  s.batch_size = doc.value("batch_size", s.batch_size);
  if (doc.contains("lr_schedule")) s.lr_schedule = parse_lr_schedule(doc["lr_schedule"].get<std::string>());
  s.lr = doc.value("lr", s.lr);
  s.lr_floor = doc.value("lr_floor", s.lr_floor);
  s.step_size = doc.value("step_size", s.step_size);
  s.step_gamma = doc.value("step_gamma", s.step_gamma);
  s.momentum = doc.value("momentum", s.momentum);
  s.weight_decay = doc.value("weight_decay", s.weight_decay);
  s.n_random_widths = doc.value("n_random_widths", s.n_random_widths);
  s.seed = doc.value("seed", s.seed);
  s.augment = doc.value("augment", s.augment);
  validate(s);
  return s;
}

void validate(const TrainSchedule& s) {
  if (s.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (s.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (s.n_random_widths < 0) throw std::invalid_argument("n_random_widths must be >= 0");
  if (!(s.lr > 0)) throw std::invalid_argument("initial lr must be > 0");
  if (s.lr_floor < 0 || s.lr_floor > s.lr) throw std::invalid_argument("lr_floor must lie in [0, lr]");
  if (s.step_size < 1) throw std::invalid_argument("step_size must be >= 1");
}

double learning_rate(const TrainSchedule& s, std::int64_t step, std::int64_t steps_per_epoch) {
  const double total = static_cast<double>(s.epochs) * static_cast<double>(steps_per_epoch);
  const double t = static_cast<double>(step);
  switch (s.lr_schedule) {
    case LrSchedule::kLinearDecay:
      return s.lr * (1.0 - t / total);
    case LrSchedule::kStep:
      return s.lr * std::pow(s.step_gamma, static_cast<double>((step / steps_per_epoch) / s.step_size));
    case LrSchedule::kSqueezedLinear: {
      if (total <= 1) return s.lr_floor;
      const double frac = std::min(1.0, t / (total - 1.0));
      return s.lr + (s.lr_floor - s.lr) * frac;
    }
  }
  return s.lr;
}

double evaluate_accuracy(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& weights,
                         const ChannelConfig& config, const DatasetHandle& data, const Split& split,
                         const EvalOptions& options) {
  if (split.size() == 0) throw std::invalid_argument("evaluation split is empty");
  const auto channels = resolve_channels(spec, bounds, config);
  const auto calib = calibration_indices(data, options);
  size_t pos = 0;
  recalibrate_bn<float>(spec, weights, channels, [&](Tensor& out) {
    if (pos >= calib.size()) return false;
    const size_t n = std::min<size_t>(options.batch_size, calib.size() - pos);
    out = data.batch(data.train(), std::span(calib).subspan(pos, n));
    pos += n;
    return true;
  });
  std::int64_t correct = 0;
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < split.size(); start += options.batch_size) {
    const std::int64_t n = std::min<std::int64_t>(options.batch_size, split.size() - start);
    idx.resize(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = forward(spec, weights, channels, data.batch(split, idx), BnMode::kEval);
    for (int b = 0; b < n; ++b) correct += argmax_row(logits, b) == split.labels[start + b];
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

SandwichSummary sandwich_step(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& weights,
                              SgdState<float>& sgd, const Tensor& images, const std::vector<int>& labels,
                              const TrainSchedule& schedule, double lr, std::mt19937_64& rng,
                              const std::function<void(const ChannelConfig&)>& observer) {
  SandwichSummary out;
  auto grads = zero_gradients(weights);

  const ChannelConfig widest = max_config(spec, bounds);
  if (observer) observer(widest);
  Targets<float> hard;
  hard.labels = labels;
  auto teacher = backward(spec, weights, resolve_channels(spec, bounds, widest), images, hard,
                          LossKind::kHardXent, grads);
  ++out.passes;
  out.max_loss = teacher.loss;

  Targets<float> soft;
  soft.soft = std::move(teacher.probabilities);
  auto student = [&](const ChannelConfig& c) {
    if (observer) observer(c);
    const auto r = backward(spec, weights, resolve_channels(spec, bounds, c), images, soft,
                            LossKind::kSoftXent, grads);
    ++out.passes;
    out.student_losses.push_back(r.loss);
  };
  student(min_config(spec, bounds));
  for (int i = 0; i < schedule.n_random_widths; ++i) student(sample_random_config(spec, bounds, rng));

  sgd_step(weights, grads, sgd, {lr, schedule.momentum, schedule.weight_decay});
  out.teacher = std::move(soft.soft);
  return out;
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
  std::string out = "epoch,lr,train_loss,acc_min,acc_1x,acc_max,wallclock_s\n";
  for (const auto& e : log)
    out += fmt::format("{},{:.6g},{:.6f},{:.4f},{:.4f},{:.4f},{:.2f}\n", e.epoch, e.lr, e.train_loss, e.acc_min,
                       e.acc_1x, e.acc_max, e.wallclock_s);
  return out;
}

std::vector<EpochLog> train_slimmable(const NetworkSpec& spec, const WidthBounds& bounds,
                                      SlimmableWeights& weights, const DatasetHandle& data,
                                      const TrainSchedule& schedule, const TrainOptions& options) {
  validate_bounds(spec, bounds);
  SgdState<float> sgd;
  auto width_rng = stream(schedule.seed, kWidthStream);
  const auto lo = min_config(spec, bounds);
  const auto hi = max_config(spec, bounds);
  const auto mid = one_x(spec, bounds);
  return run_epochs(
      data, schedule, options, weights,
      [&](const Tensor& images, const std::vector<int>& labels, double lr) {
        return sandwich_step(spec, bounds, weights, sgd, images, labels, schedule, lr, width_rng).max_loss;
      },
      [&](EpochLog& e) {
        e.acc_min = holdout_accuracy_at(spec, bounds, weights, lo, data, options.eval);
        e.acc_1x = holdout_accuracy_at(spec, bounds, weights, mid, data, options.eval);
        e.acc_max = holdout_accuracy_at(spec, bounds, weights, hi, data, options.eval);
      });
}

FixedResult train_from_scratch(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config,
                               const DatasetHandle& data, const TrainSchedule& schedule,
                               const TrainOptions& options) {
  check_config(spec, bounds, config);
  const auto widths = active_channels(spec, bounds, config);
  FixedResult r;
  r.weights = init_weights<float>(spec, bounds, schedule.seed, &widths);
  const auto channels = resolve_channels(spec, bounds, config);
  SgdState<float> sgd;
  r.log = run_epochs(
      data, schedule, options, r.weights,
      [&](const Tensor& images, const std::vector<int>& labels, double lr) {
        auto grads = zero_gradients(r.weights);
        Targets<float> t;
        t.labels = labels;
        const auto pass = backward(spec, r.weights, channels, images, t, LossKind::kHardXent, grads);
        sgd_step(r.weights, grads, sgd, {lr, schedule.momentum, schedule.weight_decay});
        return pass.loss;
      },
      [&](EpochLog& e) {
        e.acc_min = e.acc_1x = e.acc_max =
            evaluate_accuracy(spec, bounds, r.weights, config, data, data.holdout(), options.eval);
      });
  r.holdout_accuracy = schedule.epochs > 0 && !r.log.empty()
                           ? r.log.back().acc_max
                           : evaluate_accuracy(spec, bounds, r.weights, config, data, data.holdout(), options.eval);
  return r;
}

}  // namespace autoslim
