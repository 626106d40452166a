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

#include "autoslim/slimsearch.hpp"

#include <fmt/format.h>

#include <sstream>

#include "autoslim/util.hpp"

namespace autoslim {

SlimmableModelEstimator::SlimmableModelEstimator(const NetworkSpec& spec, const WidthBounds& bounds,
                                                 SlimmableWeights& weights, const DatasetHandle& data,
                                                 EvalOptions options)
    : spec_(spec), bounds_(bounds), weights_(weights), data_(data), options_(options) {
  if (data_.holdout().size() == 0) throw std::invalid_argument("holdout split is empty");
}

double SlimmableModelEstimator::evaluate(const ChannelConfig& config) {
  return evaluate_accuracy(spec_, bounds_, weights_, config, data_, data_.holdout(), options_);
}

std::string SlimmableModelEstimator::id() const {
  return fmt::format("slimmable-holdout(calib={},batch={})", options_.calibration_samples, options_.batch_size);
}

SearchTrace greedy_search(AccuracyEstimator& estimator, const NetworkSpec& spec, const WidthBounds& bounds,
                          const CostFn& cost_fn, const Budget& stop) {
  validate_bounds(spec, bounds);
  const ChannelConfig floor = min_config(spec, bounds);
  const ResourceReport floor_report = cost_fn(floor);
  if (!budget_satisfied(floor_report, stop))
    throw BudgetUnreachable(floor, floor_report,
                            fmt::format("budget {} is unreachable: the all-minimum config costs {}", to_string(stop),
                                        metric_value(floor_report, stop.metric)));

  SearchTrace trace;
  trace.metadata["estimator"] = estimator.id();
  trace.metadata["stop_budget"] = to_string(stop);
  TraceStep current{0, "", max_config(spec, bounds), {}, 0.0};
  current.report = cost_fn(current.config);
  current.accuracy = estimator.evaluate(current.config);
  trace.steps.push_back(current);

  while (!budget_satisfied(current.report, stop)) {
    const auto candidates = slim_candidates(spec, bounds, current.config);
    if (candidates.empty()) break;  // unreachable given the floor check
    const SlimCandidate* best = nullptr;
    double best_acc = 0.0;
    ResourceReport best_report;
    for (const auto& cand : candidates) {
      const double acc = estimator.evaluate(cand.config);
      const ResourceReport r = cost_fn(cand.config);
      // Candidates arrive in spec order, so strict comparisons keep the earliest.
      const bool better = best == nullptr || acc > best_acc || (acc == best_acc && r.madds < best_report.madds);
      if (better) {
        best = &cand;
        best_acc = acc;
        best_report = r;
      }
    }
    current = TraceStep{current.step + 1, best->channel_set, best->config, best_report, best_acc};
    trace.steps.push_back(current);
  }
  return trace;
}

Selection select_config(const SearchTrace& trace, const Budget& budget) {
  if (trace.steps.empty()) throw std::invalid_argument("trace is empty");
  for (const auto& s : trace.steps)
    if (budget_satisfied(s.report, budget)) return {s.step, s.config, s.report, s.accuracy};
  throw NoConfigMeetsBudget(fmt::format("no traced config meets {}; smallest has {}", to_string(budget),
                                        metric_value(trace.steps.back().report, budget.metric)));
}

std::string trace_csv(const SearchTrace& trace) {
  std::string out = "step,slimmed_set,madds,params,memory,model_size,latency_proxy,accuracy,config_json\n";
  for (const auto& s : trace.steps)
    out += fmt::format("{},{},{},{},{},{},{:.17g},{:.17g},{}\n", s.step, csv_escape(s.slimmed_set), s.report.madds,
                       s.report.params, s.report.memory, s.report.model_size, s.report.latency_proxy, s.accuracy,
                       csv_escape(config_to_json(s.config).dump()));
  return out;
}

SearchTrace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "step,slimmed_set,madds,params,memory,model_size,latency_proxy,accuracy,config_json")
    throw std::invalid_argument("not a search trace: unexpected header");
  SearchTrace trace;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = csv_split(line);
    if (f.size() != 9) throw std::invalid_argument(fmt::format("trace row {} has {} fields", row, f.size()));
    try {
      TraceStep s;
      s.step = std::stoi(f[0]);
      s.slimmed_set = f[1];
      s.report.madds = std::stoll(f[2]);
      s.report.params = std::stoll(f[3]);
      s.report.memory = std::stoll(f[4]);
      s.report.model_size = std::stoll(f[5]);
      s.report.latency_proxy = std::stod(f[6]);
      s.accuracy = std::stod(f[7]);
      s.config = config_from_json(nlohmann::json::parse(f[8]));
      trace.steps.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw std::invalid_argument(fmt::format("trace row {}: {}", row, e.what()));
    }
  }
  return trace;
}

}  // namespace autoslim
