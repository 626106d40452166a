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

// Greedy channel slimming over a trained slimmable network.

#ifndef AUTOSLIM_SLIMSEARCH_HPP_
#define AUTOSLIM_SLIMSEARCH_HPP_

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoslim/dataset.hpp"
#include "autoslim/engine.hpp"
#include "autoslim/netspec.hpp"
#include "autoslim/resource.hpp"
#include "autoslim/slimtrain.hpp"
#include "json.hpp"

namespace autoslim {

class AccuracyEstimator {
 public:
  virtual ~AccuracyEstimator() = default;
  // Accuracy in [0, 1] of the network at `config`.
  virtual double evaluate(const ChannelConfig& config) = 0;
  virtual std::string id() const = 0;
};

// Wraps a plain function, e.g. a synthetic accuracy table.
class FunctionEstimator : public AccuracyEstimator {
 public:
  FunctionEstimator(std::function<double(const ChannelConfig&)> fn, std::string id = "function")
      : fn_(std::move(fn)), id_(std::move(id)) {}
  double evaluate(const ChannelConfig& config) override {
    ++calls_;
    return fn_(config);
  }
  std::string id() const override { return id_; }
  std::int64_t calls() const { return calls_; }

 private:
  std::function<double(const ChannelConfig&)> fn_;
  std::string id_;
  std::int64_t calls_ = 0;
};

// BN-recalibrated single forward pass over the holdout split. Mutates only
// the BN running statistics of the evaluated slices.
class SlimmableModelEstimator : public AccuracyEstimator {
 public:
  SlimmableModelEstimator(const NetworkSpec& spec, const WidthBounds& bounds, SlimmableWeights& weights,
                          const DatasetHandle& data, EvalOptions options);
  double evaluate(const ChannelConfig& config) override;
  std::string id() const override;

 private:
  const NetworkSpec& spec_;
  WidthBounds bounds_;
  SlimmableWeights& weights_;
  const DatasetHandle& data_;
  EvalOptions options_;
};

struct TraceStep {
  int step = 0;
  std::string slimmed_set;  // empty for the starting point
  ChannelConfig config;
  ResourceReport report;
  double accuracy = 0.0;
};

struct SearchTrace {
  std::vector<TraceStep> steps;
  nlohmann::json metadata = nlohmann::json::object();
};

using CostFn = std::function<ResourceReport(const ChannelConfig&)>;

// Thrown when even the all-k_min configuration misses the budget.
class BudgetUnreachable : public std::runtime_error {
 public:
  BudgetUnreachable(ChannelConfig floor, ResourceReport floor_report, const std::string& what)
      : std::runtime_error(what), floor_(std::move(floor)), floor_report_(floor_report) {}
  const ChannelConfig& floor() const { return floor_; }
  const ResourceReport& floor_report() const { return floor_report_; }

 private:
  ChannelConfig floor_;
  ResourceReport floor_report_;
};

// Starts at max_config and repeatedly commits the one-group slimming with
// the highest accuracy (ties: larger madds reduction, then spec order) until
// `stop` is satisfied.
SearchTrace greedy_search(AccuracyEstimator& estimator, const NetworkSpec& spec, const WidthBounds& bounds,
                          const CostFn& cost_fn, const Budget& stop);

struct Selection {
  int step = 0;
  ChannelConfig config;
  ResourceReport report;
  double accuracy = 0.0;
};

class NoConfigMeetsBudget : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Earliest (largest) trace step satisfying `budget`.
Selection select_config(const SearchTrace& trace, const Budget& budget);

// CSV with columns step, slimmed_set, madds, params, memory, model_size,
// latency_proxy, accuracy, config_json.
std::string trace_csv(const SearchTrace& trace);
SearchTrace parse_trace_csv(const std::string& text);

}  // namespace autoslim

#endif  // AUTOSLIM_SLIMSEARCH_HPP_
