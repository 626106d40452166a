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

#include <set>

#include "autoslim/netspec.hpp"
#include "autoslim/util.hpp"
#include "oracles.hpp"
#include "random_specs.hpp"
#include "specs.hpp"

namespace autoslim {
namespace {

const char* kMinimal = R"({
  "input_shape": [1, 8, 8], "num_classes": 10,
  "bounds": {"lower": 0.25, "upper": 1.0, "groups": 4},
  "layers": [
    {"id": "conv", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 8, "channel_set": "c"},
    {"id": "fc", "kind": "fc", "base_channels": 10, "channel_set": "logits", "slimmable": false}
  ]
})";

int count_kind(const NetworkSpec& spec, std::initializer_list<LayerKind> kinds) {
  int n = 0;
  for (const auto& l : spec.layers())
    for (auto k : kinds) n += l.kind == k;
  return n;
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  EXPECT_NE(pos, std::string::npos) << from;
  return s.replace(pos, from.size(), to);
}

TEST(ParseSpec, MinimalConvFc) {
  const auto spec = parse_spec(kMinimal);
  EXPECT_EQ(count_kind(spec, {LayerKind::kConv, LayerKind::kDwConv, LayerKind::kFc}), 2);
  EXPECT_EQ(spec.input_layer(), 0);
  EXPECT_EQ(spec.output_layer(), 1);
  EXPECT_EQ(spec.logits_layer(), 1);
}

TEST(ParseSpec, AddAcrossDifferentBasesNamesTheAdd) {
  const std::string doc = R"({
    "input_shape": [1, 8, 8], "num_classes": 2,
    "layers": [
      {"id": "a", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 8, "channel_set": "x"},
      {"id": "b", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 16, "channel_set": "y"},
      {"id": "join", "kind": "add"},
      {"id": "pool", "kind": "avgpool_global"},
      {"id": "fc", "kind": "fc", "base_channels": 2, "channel_set": "logits", "slimmable": false}
    ],
    "edges": [["a", "b"], ["a", "join"], ["b", "join"], ["join", "pool"], ["pool", "fc"]]
  })";
  try {
    parse_spec(doc);
    FAIL() << "expected a validation error";
  } catch (const SpecValidationError& e) {
    EXPECT_EQ(e.layer_id(), "join");
  }
}

TEST(ParseSpec, SyntaxErrors) {
  EXPECT_THROW(parse_spec("{\"layers\": ["), SpecSyntaxError);
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"kind\": \"conv\"", "\"kind\": \"deconv\"")), SpecSyntaxError);
}

TEST(ParseSpec, CycleNamesALayer) {
  const std::string doc = R"({
    "input_shape": [1, 8, 8], "num_classes": 2,
    "layers": [
      {"id": "a", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 4, "channel_set": "x"},
      {"id": "r1", "kind": "relu"},
      {"id": "r2", "kind": "relu"},
      {"id": "fc", "kind": "fc", "base_channels": 2, "channel_set": "logits", "slimmable": false}
    ],
    "edges": [["a", "r1"], ["r1", "r2"], ["r2", "r1"], ["r2", "fc"]]
  })";
  try {
    parse_spec(doc);
    FAIL();
  } catch (const SpecValidationError& e) {
    EXPECT_FALSE(e.layer_id().empty());
  }
}

TEST(ParseSpec, StructuralErrors) {
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"kernel\": 3", "\"kernel\": 0")), SpecValidationError);
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"stride\": 1", "\"stride\": 0")), SpecValidationError);
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"id\": \"fc\"", "\"id\": \"conv\"")), SpecValidationError);
  // The classifier must keep the class count and stay fixed.
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"base_channels\": 10", "\"base_channels\": 9")),
               SpecValidationError);
  EXPECT_THROW(parse_spec(replace(kMinimal, "\"slimmable\": false", "\"slimmable\": true")),
               SpecValidationError);
  // Indivisible group size names the producing layer.
  try {
    parse_spec(replace(kMinimal, "\"base_channels\": 8", "\"base_channels\": 6"));
    FAIL();
  } catch (const SpecValidationError& e) {
    EXPECT_EQ(e.layer_id(), "conv");
  }
}

TEST(ParseSpec, DepthwiseKeepsItsInputSet) {
  const auto spec = parse_spec(test_specs::kAllKinds);
  EXPECT_EQ(spec.set_of(spec.layer_index("dw")), spec.set_of(spec.layer_index("conv1")));
  const std::string bad = replace(test_specs::kAllKinds, R"("kind": "dwconv", "kernel": 3, "stride": 1})",
                                  R"("kind": "dwconv", "kernel": 3, "stride": 1, "channel_set": "zz"})");
  EXPECT_THROW(parse_spec(bad), SpecValidationError);
}

TEST(ParseSpec, JsonRoundTripPreservesHash) {
  const auto spec = parse_spec(test_specs::kToy);
  const auto again = NetworkSpec::from_json(spec.to_json());
  EXPECT_EQ(again.hash(), spec.hash());
  EXPECT_EQ(again.to_json(), spec.to_json());
  EXPECT_NE(parse_spec(test_specs::kAllKinds).hash(), spec.hash());
}

TEST(ParseSpec, ShippedMobileNetV2) {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2.json"));
  EXPECT_EQ(count_kind(spec, {LayerKind::kConv, LayerKind::kDwConv}), 52);
  EXPECT_EQ(count_kind(spec, {LayerKind::kAdd}), 10);
  // Inverted residual pattern: every add joins a block's projection with the
  // previous block output, and all projections in a stage share one set.
  for (int i = 0; i < static_cast<int>(spec.layers().size()); ++i) {
    if (spec.layer(i).kind != LayerKind::kAdd) continue;
    const auto& in = spec.inputs_of(i);
    ASSERT_EQ(in.size(), 2u);
    EXPECT_EQ(spec.set_of(in[0]), spec.set_of(in[1]));
  }
  std::set<std::string> tied;
  for (const auto& tie : spec.residual_ties()) {
    EXPECT_GE(tie.size(), 2u);
    for (const auto& id : tie) {
      EXPECT_NE(id.find("_proj"), std::string::npos) << id;
      tied.insert(spec.layer(spec.layer_index(id)).channel_set);
    }
  }
  EXPECT_EQ(spec.residual_ties().size(), 5u);  // stages 2,3,4,5,6 repeat blocks
  EXPECT_EQ(tied.size(), 5u);
}

TEST(ParseSpec, AllShippedSpecsLoad) {
  for (const char* name : {"toy_cnn.json", "mobilenet_v1.json", "mobilenet_v2.json", "mobilenet_v2_cifar.json",
                           "mobilenet_v2_cifar_reduced.json", "resnet50.json"}) {
    EXPECT_NO_THROW(validate_bounds(parse_spec(test_specs::shipped(name)),
                                    parse_spec(test_specs::shipped(name)).bounds()))
        << name;
  }
}

WidthBounds bounds(double lower, double upper, int g) { return {lower, upper, g}; }

TEST(Config, MaxConfigActiveChannels) {
  const auto spec = parse_spec(replace(kMinimal, "\"base_channels\": 8", "\"base_channels\": 64"));
  const auto b = bounds(0.15, 1.5, 12);
  const auto cfg = max_config(spec, b);
  EXPECT_EQ(cfg.active_groups.at("c"), 12);
  EXPECT_EQ(active_channels(spec, b, cfg).at("c"), 96);
  EXPECT_EQ(group_size(spec.channel_set("c"), b), 8);
  EXPECT_EQ(cfg.active_groups.count("logits"), 0u);
  EXPECT_EQ(active_channels(spec, b, cfg).at("logits"), 10);
}

TEST(Config, MaxConfigAllAtG) {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2.json"));
  const auto b = bounds(0.15, 1.5, 10);
  for (const auto& [set, k] : max_config(spec, b).active_groups) EXPECT_EQ(k, 10) << set;
}

TEST(Config, WidthMultiplier) {
  const auto spec = parse_spec(replace(kMinimal, "\"base_channels\": 8", "\"base_channels\": 64"));
  const auto b = bounds(0.15, 1.5, 12);
  EXPECT_EQ(apply_width_multiplier(spec, b, 1.5), max_config(spec, b));
  const auto one = apply_width_multiplier(spec, b, 1.0);
  EXPECT_EQ(one.active_groups.at("c"), 8);
  EXPECT_EQ(active_channels(spec, b, one).at("c"), 64);
  const auto b10 = bounds(0.15, 1.5, 10);
  const auto spec10 = parse_spec(replace(kMinimal, "\"base_channels\": 8", "\"base_channels\": 20"));
  EXPECT_EQ(min_groups(b10), 1);
  EXPECT_EQ(apply_width_multiplier(spec10, b10, 0.15).active_groups.at("c"), 1);
  EXPECT_THROW(apply_width_multiplier(spec, b, 1.6), std::invalid_argument);
  EXPECT_THROW(apply_width_multiplier(spec, b, 0.1), std::invalid_argument);
}

TEST(Config, MinGroupsRule) {
  EXPECT_EQ(min_groups(bounds(0.15, 1.5, 12)), 2);   // ceil(1.2)
  EXPECT_EQ(min_groups(bounds(0.15, 1.5, 10)), 1);   // exactly 1.0
  EXPECT_EQ(min_groups(bounds(0.01, 1.0, 4)), 1);    // floor of one group
  EXPECT_EQ(min_groups(bounds(0.5, 1.0, 8)), 4);
}

TEST(Config, WidthMultiplierAtUpperIsMaxForShippedSpecs) {
  for (const char* name : {"toy_cnn.json", "mobilenet_v2.json", "resnet50.json"}) {
    const auto spec = parse_spec(test_specs::shipped(name));
    EXPECT_EQ(apply_width_multiplier(spec, spec.bounds(), spec.bounds().upper), max_config(spec, spec.bounds()));
  }
}

TEST(Config, CheckConfigRejectsIllegalValues) {
  const auto spec = parse_spec(test_specs::kToy);
  const auto& b = spec.bounds();
  auto cfg = max_config(spec, b);
  EXPECT_NO_THROW(check_config(spec, b, cfg));
  cfg.active_groups["c1"] = b.groups + 1;
  EXPECT_THROW(check_config(spec, b, cfg), std::invalid_argument);
  cfg.active_groups["c1"] = 0;
  EXPECT_THROW(check_config(spec, b, cfg), std::invalid_argument);
  cfg = max_config(spec, b);
  cfg.active_groups.erase("c2");
  EXPECT_THROW(check_config(spec, b, cfg), std::invalid_argument);
  cfg = max_config(spec, b);
  cfg.active_groups["nope"] = 2;
  EXPECT_THROW(check_config(spec, b, cfg), std::invalid_argument);
}

TEST(Sampling, GoldenConfigForToySpec) {
  const auto spec = parse_spec(test_specs::kToy);
  std::mt19937_64 rng(2024);
  std::vector<ChannelConfig> draws;
  for (int i = 0; i < 4; ++i) draws.push_back(sample_random_config(spec, spec.bounds(), rng));
  nlohmann::json got = nlohmann::json::array();
  for (const auto& c : draws) got.push_back(config_to_json(c));
  const auto expected = nlohmann::json::parse(
      autoslim::read_file(std::string(AUTOSLIM_SOURCE_DIR) + "/tests/golden/toy_samples_seed2024.json"));
  EXPECT_EQ(got, expected) << got.dump();
}

TEST(Sampling, TiedLayersShareOneDraw) {
  const std::string doc = R"({
    "input_shape": [4, 8, 8], "num_classes": 2,
    "bounds": {"lower": 0.25, "upper": 1.0, "groups": 4},
    "layers": [
      {"id": "stem", "kind": "conv", "kernel": 3, "stride": 1, "base_channels": 8, "channel_set": "t"},
      {"id": "b1", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 8, "channel_set": "i1"},
      {"id": "p1", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 8, "channel_set": "t"},
      {"id": "a1", "kind": "add"},
      {"id": "b2", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 8, "channel_set": "i2"},
      {"id": "p2", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 8, "channel_set": "t"},
      {"id": "a2", "kind": "add"},
      {"id": "pool", "kind": "avgpool_global"},
      {"id": "fc", "kind": "fc", "base_channels": 2, "channel_set": "logits", "slimmable": false}
    ],
    "edges": [["stem", "b1"], ["b1", "p1"], ["stem", "a1"], ["p1", "a1"], ["a1", "b2"], ["b2", "p2"],
              ["a1", "a2"], ["p2", "a2"], ["a2", "pool"], ["pool", "fc"]],
    "residual_ties": [["stem", "p1", "p2"]]
  })";
  const auto spec = parse_spec(doc);
  const auto& b = spec.bounds();
  EXPECT_EQ(spec.channel_sets()[spec.sampling_order().front()].name, "t");
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto ch = layer_channels(spec, active_channels(spec, b, sample_random_config(spec, b, rng)));
    EXPECT_EQ(ch[spec.layer_index("stem")], ch[spec.layer_index("p1")]);
    EXPECT_EQ(ch[spec.layer_index("stem")], ch[spec.layer_index("p2")]);
  }
}

TEST(Sampling, UniformOverGroupRange) {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2_cifar_reduced.json"));
  const auto& b = spec.bounds();
  const int k_min = min_groups(b);
  const int bins = b.groups - k_min + 1;
  std::map<std::string, std::vector<int>> hist;
  std::mt19937_64 rng(77);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i)
    for (const auto& [set, k] : sample_random_config(spec, b, rng).active_groups) {
      auto& h = hist[set];
      h.resize(bins);
      ASSERT_GE(k, k_min);
      ASSERT_LE(k, b.groups);
      ++h[k - k_min];
    }
  // 3-sigma bound on a chi-square with (bins - 1) degrees of freedom.
  const double dof = bins - 1;
  const double limit = dof + 3.0 * std::sqrt(2.0 * dof);
  int over = 0;
  for (const auto& [set, h] : hist) over += oracle::chi_square_uniform(h) > limit;
  // About 0.3% of sets may exceed a 3-sigma bound by chance.
  EXPECT_LE(over, 1) << "of " << hist.size();
}

TEST(Candidates, TwoSetsExample) {
  const std::string doc = R"({
    "input_shape": [1, 4, 4], "num_classes": 2,
    "bounds": {"lower": 0.3, "upper": 1.0, "groups": 3},
    "layers": [
      {"id": "a", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 3, "channel_set": "k1"},
      {"id": "b", "kind": "conv", "kernel": 1, "stride": 1, "base_channels": 6, "channel_set": "k2"},
      {"id": "pool", "kind": "avgpool_global"},
      {"id": "fc", "kind": "fc", "base_channels": 2, "channel_set": "logits", "slimmable": false}
    ]
  })";
  const auto spec = parse_spec(doc);
  const auto& b = spec.bounds();
  ChannelConfig c{{{"k1", 3}, {"k2", 3}}};
  const auto cands = slim_candidates(spec, b, c);
  ASSERT_EQ(cands.size(), 2u);
  EXPECT_EQ(cands[0].channel_set, "k1");
  EXPECT_EQ(cands[0].config, (ChannelConfig{{{"k1", 2}, {"k2", 3}}}));
  EXPECT_EQ(cands[1].config, (ChannelConfig{{{"k1", 3}, {"k2", 2}}}));
  EXPECT_TRUE(slim_candidates(spec, b, min_config(spec, b)).empty());
}

TEST(Candidates, MobileNetV2OnePerSlimmableSet) {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2.json"));
  const auto& b = spec.bounds();
  int slimmable = 0;
  for (const auto& s : spec.channel_sets()) slimmable += s.slimmable;
  const auto cands = slim_candidates(spec, b, max_config(spec, b));
  EXPECT_EQ(static_cast<int>(cands.size()), slimmable);
  // Stem, 16 expansion sets, 7 stage-output sets and the head.
  EXPECT_EQ(slimmable, 25);
}

TEST(Candidates, PropertiesOnRandomSpecs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = NetworkSpec::from_json(test_specs::random_spec(rng));
    const auto& b = spec.bounds();
    const auto cfg = sample_random_config(spec, b, rng);
    const auto cands = slim_candidates(spec, b, cfg);
    int reducible = 0;
    for (const auto& [set, k] : cfg.active_groups) reducible += k > min_groups(b);
    EXPECT_EQ(static_cast<int>(cands.size()), reducible);
    for (const auto& cand : cands) {
      int changed = 0;
      for (const auto& [set, k] : cfg.active_groups) {
        const int k2 = cand.config.active_groups.at(set);
        EXPECT_GE(k2, min_groups(b));
        if (k2 != k) {
          ++changed;
          EXPECT_EQ(k2, k - 1);
          EXPECT_EQ(set, cand.channel_set);
        }
      }
      EXPECT_EQ(changed, 1);
    }
    // Group arithmetic and tie consistency.
    const auto widths = active_channels(spec, b, cfg);
    for (const auto& set : spec.channel_sets())
      if (set.slimmable)
        EXPECT_EQ(widths.at(set.name), cfg.active_groups.at(set.name) * group_size(set, b));
    const auto ch = layer_channels(spec, widths);
    for (const auto& tie : spec.residual_ties())
      for (const auto& id : tie) EXPECT_EQ(ch[spec.layer_index(id)], ch[spec.layer_index(tie[0])]);
  }
}

TEST(Config, JsonRoundTrip) {
  const ChannelConfig c{{{"a", 3}, {"b", 7}}};
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

}  // namespace
}  // namespace autoslim
