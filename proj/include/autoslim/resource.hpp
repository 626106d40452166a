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

// Deterministic resource accounting for a network at a given channel width.
//
// Conventions:
//  * madds counts multiply-adds of conv, dwconv and fc layers only; BN,
//    activations, pooling and residual adds are free.
//  * params counts weights plus biases of the same layers; BN is excluded.
//  * memory counts elements: the network input, every feature map produced
//    by conv/dwconv/fc/add/pool layers (bn and relu run in place), and all
//    params. No liveness analysis.
//  * model_size is params at 4 bytes each.
//  * latency_proxy weights depthwise madds by (1 + depthwise_weight).

#ifndef AUTOSLIM_RESOURCE_HPP_
#define AUTOSLIM_RESOURCE_HPP_

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "autoslim/netspec.hpp"

namespace autoslim {

struct ResourceReport {
  std::int64_t madds = 0;
  std::int64_t params = 0;
  std::int64_t memory = 0;
  std::int64_t model_size = 0;
  double latency_proxy = 0.0;
  friend bool operator==(const ResourceReport&, const ResourceReport&) = default;
};

struct LayerCost {
  std::string id;
  LayerKind kind;
  int c_in = 0;
  int c_out = 0;
  int h = 0;  // output spatial size
  int w = 0;
  std::int64_t madds = 0;
  std::int64_t params = 0;
};

struct CostOptions {
  double depthwise_weight = 3.0;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output shape of every layer, indexed like spec.layers(). `input` overrides
// the spatial size of the spec's input; its channel count must match.
std::vector<Shape3> infer_shapes(const NetworkSpec& spec, const ChannelWidths& widths,
                                 Shape3 input);
std::map<std::string, Shape3> shape_inference(const NetworkSpec& spec, const ChannelWidths& widths,
                                              Shape3 input);

std::vector<LayerCost> layer_costs(const NetworkSpec& spec, const ChannelWidths& widths,
                                   Shape3 input);
ResourceReport cost(const NetworkSpec& spec, const ChannelWidths& widths, Shape3 input,
                    const CostOptions& options = {});
ResourceReport cost(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config,
                    const CostOptions& options = {});

enum class Metric { kMadds, kParams, kMemory, kModelSize, kLatencyProxy };

std::string_view to_string(Metric metric);
// Throws std::invalid_argument on unknown names.
Metric parse_metric(std::string_view name);
double metric_value(const ResourceReport& report, Metric metric);

struct Budget {
  Metric metric = Metric::kMadds;
  double limit = 0.0;
};

// Parses "metric=value", e.g. "madds=2.0e7".
Budget parse_budget(std::string_view text);
std::string to_string(const Budget& budget);
bool budget_satisfied(const ResourceReport& report, const Budget& budget);

// Per-layer CSV (layer_id,C_in,C_out,H,W,madds,params) with a trailing total row.
std::string cost_report_csv(const NetworkSpec& spec, const ChannelWidths& widths, Shape3 input);

}  // namespace autoslim

#endif  // AUTOSLIM_RESOURCE_HPP_
