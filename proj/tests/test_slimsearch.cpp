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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "autoslim/slimsearch.hpp"
#include "oracles.hpp"
#include "random_specs.hpp"
#include "specs.hpp"

using namespace autoslim;

namespace {

// Two independent conv sets feeding a classifier.
const std::string kTwoSets = R"({
  "input_shape": [1, 6, 6], "num_classes": 2,
  "bounds": {"lower": 0.3333333333333333, "upper": 1.0, "groups": 3},
  "layers": [
    {"id": "conv1", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 3, "channel_set": "c1"},
    {"id": "relu1", "kind": "relu"},
    {"id": "conv2", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 6, "channel_set": "c2"},
    {"id": "relu2", "kind": "relu"},
    {"id": "pool", "kind": "avgpool_global"},
    {"id": "fc", "kind": "fc", "base_channels": 2, "channel_set": "logits", "slimmable": false},
    {"id": "loss", "kind": "softmax_xent"}
  ]
})";

ChannelConfig cfg(std::initializer_list<std::pair<const std::string, int>> v) { return ChannelConfig{v}; }

CostFn cost_of(const NetworkSpec& spec, const WidthBounds& bounds) {
  return [&spec, bounds](const ChannelConfig& c) { return cost(spec, bounds, c); };
}

// Brute-force madds as the cost, independent of the resource module.
CostFn oracle_cost(const NetworkSpec& spec, const WidthBounds& bounds) {
  return [&spec, bounds](const ChannelConfig& c) {
    std::map<std::string, int> widths;
    for (const auto& set : spec.channel_sets()) {
      const int g = static_cast<int>(std::lround(set.base_channels * bounds.upper)) / bounds.groups;
      widths[set.name] = set.slimmable ? g * c.active_groups.at(set.name) : set.base_channels;
    }
    ResourceReport r;
    r.madds = oracle::brute_force_madds(spec, widths);
    return r;
  };
}

// Random accuracy that grows with every set's group count, quantized so that
// ties occur.
struct MonotoneAccuracy {
  std::map<std::string, std::vector<double>> gains;
  double step = 0.05;
  double operator()(const ChannelConfig& c) const {
    double acc = 0.0;
    for (const auto& [name, k] : c.active_groups) acc += gains.at(name)[k];
    return std::floor(acc / step) * step;
  }
};

MonotoneAccuracy random_accuracy(const NetworkSpec& spec, const WidthBounds& bounds, std::mt19937_64& rng) {
  MonotoneAccuracy m;
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (const auto& set : spec.channel_sets()) {
    if (!set.slimmable) continue;
    std::vector<double> g(bounds.groups + 1, 0.0);
    for (int k = 1; k <= bounds.groups; ++k) g[k] = g[k - 1] + u(rng);
    m.gains[set.name] = g;
  }
  return m;
}

// Exhaustive per-step argmax: try every one-group decrement, keep the highest
// accuracy, then the fewest madds, then the first set in spec order.
std::vector<ChannelConfig> oracle_greedy(const NetworkSpec& spec, const WidthBounds& bounds,
                                         const std::function<double(const ChannelConfig&)>& acc, const CostFn& cost_fn,
                                         double madds_limit) {
  const int k_min = std::max(1, static_cast<int>(std::ceil(bounds.groups * bounds.lower / bounds.upper - 1e-9)));
  ChannelConfig c;
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) c.active_groups[set.name] = bounds.groups;
  std::vector<ChannelConfig> path{c};
  while (static_cast<double>(cost_fn(c).madds) > madds_limit) {
    std::optional<ChannelConfig> best;
    double best_acc = -1.0;
    std::int64_t best_madds = 0;
    for (const auto& set : spec.channel_sets()) {
      if (!set.slimmable || c.active_groups[set.name] <= k_min) continue;
      ChannelConfig cand = c;
      --cand.active_groups[set.name];
      const double a = acc(cand);
      const std::int64_t m = cost_fn(cand).madds;
      if (!best || a > best_acc || (a == best_acc && m < best_madds)) {
        best = cand;
        best_acc = a;
        best_madds = m;
      }
    }
    if (!best) break;
    c = *best;
    path.push_back(c);
  }
  return path;
}

std::vector<ChannelConfig> configs_of(const SearchTrace& t) {
  std::vector<ChannelConfig> out;
  for (const auto& s : t.steps) out.push_back(s.config);
  return out;
}

}  // namespace

TEST(Greedy, TwoSetExamplePath) {
  const auto spec = parse_spec(kTwoSets);
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig& c) {
    return (0.1 * c.active_groups.at("c1") + 0.3 * c.active_groups.at("c2")) / 1.2;
  });
  const auto floor = cost(spec, bounds, cfg({{"c1", 1}, {"c2", 1}}));
  const auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds),
                                   Budget{Metric::kMadds, static_cast<double>(floor.madds)});
  const std::vector<ChannelConfig> expected = {cfg({{"c1", 3}, {"c2", 3}}), cfg({{"c1", 2}, {"c2", 3}}),
                                               cfg({{"c1", 1}, {"c2", 3}}), cfg({{"c1", 1}, {"c2", 2}}),
                                               cfg({{"c1", 1}, {"c2", 1}})};
  EXPECT_EQ(configs_of(trace), expected);
  EXPECT_DOUBLE_EQ(trace.steps[0].accuracy, 1.0);
  EXPECT_EQ(trace.steps[0].slimmed_set, "");
  EXPECT_EQ(trace.steps[1].slimmed_set, "c1");
  EXPECT_EQ(trace.steps[3].slimmed_set, "c2");
}

TEST(Greedy, SingleSetWalksDownTheLadder) {
  const auto spec = parse_spec(test_specs::kAllKinds);  // one slimmable set "a"
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig&) { return 0.5; });
  const auto floor = cost(spec, bounds, min_config(spec, bounds));
  const auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds),
                                   Budget{Metric::kMadds, static_cast<double>(floor.madds)});
  ASSERT_EQ(trace.steps.size(), 4u);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(trace.steps[i].config.active_groups.at("a"), 4 - i);
}

TEST(Greedy, StopsAsSoonAsTheBudgetHolds) {
  const auto spec = parse_spec(kTwoSets);
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig& c) { return 0.1 * c.active_groups.at("c2"); });
  const auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds),
                                   Budget{Metric::kMadds, 1e18});
  EXPECT_EQ(trace.steps.size(), 1u);
  EXPECT_EQ(est.calls(), 1);
}

TEST(Greedy, UnreachableBudgetReportsTheFloor) {
  const auto spec = parse_spec(kTwoSets);
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig&) { return 0.5; });
  const auto floor = cost(spec, bounds, min_config(spec, bounds));
  try {
    greedy_search(est, spec, bounds, cost_of(spec, bounds), Budget{Metric::kMadds, floor.madds - 1.0});
    FAIL() << "expected BudgetUnreachable";
  } catch (const BudgetUnreachable& e) {
    EXPECT_EQ(e.floor(), min_config(spec, bounds));
    EXPECT_EQ(e.floor_report().madds, floor.madds);
  }
  EXPECT_EQ(est.calls(), 0);
}

TEST(Greedy, MatchesExhaustiveArgmaxOnRandomMonotoneEstimators) {
  std::mt19937_64 rng(77);
  int with_ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = NetworkSpec::from_json(test_specs::random_spec(rng));
    const auto bounds = spec.bounds();
    const auto acc = random_accuracy(spec, bounds, rng);
    const auto cost_fn = oracle_cost(spec, bounds);
    const double floor = static_cast<double>(cost_fn(min_config(spec, bounds)).madds);
    const double top = static_cast<double>(cost_fn(max_config(spec, bounds)).madds);
    const double limit = floor + std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (top - floor);
    FunctionEstimator est(acc);
    const auto trace = greedy_search(est, spec, bounds, cost_fn, Budget{Metric::kMadds, limit});
    const auto expected = oracle_greedy(spec, bounds, acc, cost_fn, limit);
    ASSERT_EQ(configs_of(trace), expected) << "trial " << trial;
    for (size_t i = 1; i + 1 < trace.steps.size(); ++i) {
      const auto cands = slim_candidates(spec, bounds, trace.steps[i].config);
      std::set<double> accs;
      for (const auto& c : cands) accs.insert(acc(c.config));
      if (accs.size() < cands.size()) ++with_ties;
    }
  }
  EXPECT_GT(with_ties, 0) << "no ties exercised";
}

TEST(Greedy, InvariantUnderMonotoneTransformOfAccuracy) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = NetworkSpec::from_json(test_specs::random_spec(rng));
    const auto bounds = spec.bounds();
    auto acc = random_accuracy(spec, bounds, rng);
    acc.step = 1e-9;
    const auto cost_fn = cost_of(spec, bounds);
    const Budget stop{Metric::kMadds, static_cast<double>(cost_fn(min_config(spec, bounds)).madds)};
    FunctionEstimator a(acc);
    FunctionEstimator b([&](const ChannelConfig& c) { return std::exp(3.0 * acc(c)) - 7.0; });
    EXPECT_EQ(configs_of(greedy_search(a, spec, bounds, cost_fn, stop)),
              configs_of(greedy_search(b, spec, bounds, cost_fn, stop)))
        << "trial " << trial;
  }
}

TEST(Greedy, TraceInvariants) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const auto spec = NetworkSpec::from_json(test_specs::random_spec(rng));
    const auto bounds = spec.bounds();
    FunctionEstimator est(random_accuracy(spec, bounds, rng));
    const auto cost_fn = cost_of(spec, bounds);
    const Budget stop{Metric::kMadds, static_cast<double>(cost_fn(min_config(spec, bounds)).madds)};
    const auto trace = greedy_search(est, spec, bounds, cost_fn, stop);
    EXPECT_EQ(trace.steps.front().config, max_config(spec, bounds));
    EXPECT_EQ(trace.steps.back().config, min_config(spec, bounds));
    for (size_t i = 1; i < trace.steps.size(); ++i) {
      const auto& prev = trace.steps[i - 1];
      const auto& cur = trace.steps[i];
      EXPECT_EQ(cur.step, static_cast<int>(i));
      EXPECT_LT(cur.report.madds, prev.report.madds);
      int changed = 0;
      for (const auto& [name, k] : prev.config.active_groups) {
        const int d = k - cur.config.active_groups.at(name);
        EXPECT_TRUE(d == 0 || d == 1);
        if (d == 1) {
          ++changed;
          EXPECT_EQ(name, cur.slimmed_set);
        }
      }
      EXPECT_EQ(changed, 1);
    }
  }
}

TEST(Greedy, OtherMetricsStopTheSearch) {
  const auto spec = parse_spec(test_specs::kToy);
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig& c) { return 0.01 * c.active_groups.at("c1"); });
  const auto top = cost(spec, bounds, max_config(spec, bounds));
  const Budget stop{Metric::kParams, top.params * 0.5};
  const auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds), stop);
  EXPECT_LE(trace.steps.back().report.params, stop.limit);
  EXPECT_GT(trace.steps[trace.steps.size() - 2].report.params, stop.limit);
}

namespace {

SearchTrace madds_trace(std::initializer_list<std::int64_t> madds) {
  SearchTrace t;
  int i = 0;
  for (auto m : madds) {
    TraceStep s;
    s.step = i;
    s.slimmed_set = i ? "c1" : "";
    s.config = cfg({{"c1", 10 - i}});
    s.report.madds = m;
    s.accuracy = 1.0 - 0.1 * i;
    t.steps.push_back(s);
    ++i;
  }
  return t;
}

}  // namespace

TEST(Select, EarliestStepWithinBudget) {
  const auto t = madds_trace({100, 80, 60, 40});
  const auto s = select_config(t, Budget{Metric::kMadds, 75});
  EXPECT_EQ(s.step, 2);
  EXPECT_EQ(s.report.madds, 60);
  EXPECT_EQ(select_config(t, Budget{Metric::kMadds, 100}).step, 0);
  EXPECT_EQ(select_config(t, Budget{Metric::kMadds, 1e9}).step, 0);
  EXPECT_EQ(select_config(t, Budget{Metric::kMadds, 40}).step, 3);
  EXPECT_THROW(select_config(t, Budget{Metric::kMadds, 39}), NoConfigMeetsBudget);
  EXPECT_THROW(select_config(SearchTrace{}, Budget{Metric::kMadds, 39}), std::invalid_argument);
}

TEST(TraceCsv, RoundTripsExactly) {
  const auto spec = parse_spec(kTwoSets);
  const auto bounds = spec.bounds();
  FunctionEstimator est([](const ChannelConfig& c) {
    return std::sqrt(0.1 * c.active_groups.at("c1") + 0.3 * c.active_groups.at("c2")) / 7.0;
  });
  auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds),
                             Budget{Metric::kMadds, static_cast<double>(cost(spec, bounds, min_config(spec, bounds)).madds)});
  trace.steps[1].slimmed_set = "odd,\"name\"";
  const std::string csv = trace_csv(trace);
  const auto back = parse_trace_csv(csv);
  ASSERT_EQ(back.steps.size(), trace.steps.size());
  for (size_t i = 0; i < back.steps.size(); ++i) {
    EXPECT_EQ(back.steps[i].step, trace.steps[i].step);
    EXPECT_EQ(back.steps[i].slimmed_set, trace.steps[i].slimmed_set);
    EXPECT_EQ(back.steps[i].config, trace.steps[i].config);
    EXPECT_EQ(back.steps[i].report, trace.steps[i].report);
    EXPECT_EQ(back.steps[i].accuracy, trace.steps[i].accuracy);
  }
  EXPECT_EQ(trace_csv(back), csv);
}

TEST(TraceCsv, RejectsMalformedInput) {
  EXPECT_THROW(parse_trace_csv("step,madds\n0,1\n"), std::invalid_argument);
  const std::string header = "step,slimmed_set,madds,params,memory,model_size,latency_proxy,accuracy,config_json\n";
  EXPECT_THROW(parse_trace_csv(header + "0,,1,2,3\n"), std::invalid_argument);
  EXPECT_THROW(parse_trace_csv(header + "0,,x,2,3,4,5,0.5,\"{}\"\n"), std::invalid_argument);
}

namespace {

DatasetHandle small_synthetic() {
  DatasetOptions o;
  o.synthetic_train = 400;
  o.synthetic_test = 50;
  o.holdout_size = 100;
  return load_dataset(DatasetName::kSynthetic, "", 3, o);
}

}  // namespace

TEST(SlimmableEstimator, SearchLeavesTrainableWeightsUntouched) {
  const auto spec = parse_spec(test_specs::kToy);
  const auto bounds = spec.bounds();
  const auto data = small_synthetic();
  auto weights = init_weights<float>(spec, bounds, 11);
  const auto before = weights;
  EvalOptions opts;
  opts.calibration_samples = 64;
  opts.batch_size = 50;
  SlimmableModelEstimator est(spec, bounds, weights, data, opts);
  const auto stop = cost(spec, bounds, apply_width_multiplier(spec, bounds, 1.0));
  const auto trace = greedy_search(est, spec, bounds, cost_of(spec, bounds),
                                   Budget{Metric::kMadds, static_cast<double>(stop.madds)});
  EXPECT_GT(trace.steps.size(), 1u);
  bool stats_changed = false;
  for (size_t i = 0; i < weights.layers.size(); ++i) {
    EXPECT_EQ(weights.layers[i].weight, before.layers[i].weight);
    EXPECT_EQ(weights.layers[i].bias, before.layers[i].bias);
    EXPECT_EQ(weights.layers[i].gamma, before.layers[i].gamma);
    EXPECT_EQ(weights.layers[i].beta, before.layers[i].beta);
    stats_changed |= !(weights.layers[i].running_mean == before.layers[i].running_mean);
  }
  EXPECT_TRUE(stats_changed);
}

TEST(SlimmableEstimator, SameConfigSameAccuracy) {
  const auto spec = parse_spec(test_specs::kToy);
  const auto bounds = spec.bounds();
  const auto data = small_synthetic();
  auto weights = init_weights<float>(spec, bounds, 11);
  EvalOptions opts;
  opts.calibration_samples = 64;
  opts.batch_size = 30;
  SlimmableModelEstimator est(spec, bounds, weights, data, opts);
  const auto c = apply_width_multiplier(spec, bounds, 0.75);
  const double a = est.evaluate(c);
  est.evaluate(max_config(spec, bounds));
  EXPECT_EQ(est.evaluate(c), a);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
}
