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

#include "autoslim/resource.hpp"

#include <fmt/format.h>

namespace autoslim {

std::vector<Shape3> infer_shapes(const NetworkSpec& spec, const ChannelWidths& widths,
                                 Shape3 input) {
  if (input.c != spec.input_shape().c)
    throw ShapeError(fmt::format("input has {} channels, spec expects {}", input.c,
                                 spec.input_shape().c));
  const std::vector<int> channels = layer_channels(spec, widths);
  std::vector<Shape3> shapes(spec.layers().size());
  for (int i : spec.topo_order()) {
    const auto& layer = spec.layer(i);
    const auto& inputs = spec.inputs_of(i);
    const Shape3 in = inputs.empty() ? input : shapes[inputs[0]];
    Shape3 out{channels[i], in.h, in.w};
    switch (layer.kind) {
      case LayerKind::kConv:
      case LayerKind::kDwConv:
        out.h = (in.h + layer.stride - 1) / layer.stride;
        out.w = (in.w + layer.stride - 1) / layer.stride;
        if (layer.kind == LayerKind::kDwConv && in.c != out.c)
          throw ShapeError(fmt::format("layer '{}': depthwise conv maps {} to {} channels",
                                       layer.id, in.c, out.c));
        break;
      case LayerKind::kFc:
      case LayerKind::kAvgPoolGlobal:
        out.h = out.w = 1;
        break;
      case LayerKind::kAdd:
        for (int other : inputs)
          if (!(shapes[other] == in))
            throw ShapeError(fmt::format("layer '{}': add inputs have mismatched shapes", layer.id));
        break;
      default:
        break;
    }
    if (!is_compute(layer.kind) && layer.kind != LayerKind::kDwConv) out.c = in.c;
    shapes[i] = out;
  }
  return shapes;
}

std::map<std::string, Shape3> shape_inference(const NetworkSpec& spec, const ChannelWidths& widths,
                                              Shape3 input) {
  auto shapes = infer_shapes(spec, widths, input);
  std::map<std::string, Shape3> out;
  for (size_t i = 0; i < shapes.size(); ++i) out[spec.layer(static_cast<int>(i)).id] = shapes[i];
  return out;
}

std::vector<LayerCost> layer_costs(const NetworkSpec& spec, const ChannelWidths& widths,
                                   Shape3 input) {
  const auto shapes = infer_shapes(spec, widths, input);
  std::vector<LayerCost> costs;
  for (int i : spec.topo_order()) {
    const auto& layer = spec.layer(i);
    if (!is_compute(layer.kind)) continue;
    const auto& inputs = spec.inputs_of(i);
    const Shape3 in = inputs.empty() ? input : shapes[inputs[0]];
    const Shape3 out = shapes[i];
    const std::int64_t k2 = std::int64_t{layer.kernel} * layer.kernel;
    const std::int64_t out_pixels = std::int64_t{out.h} * out.w;
    LayerCost c{layer.id, layer.kind, in.c, out.c, out.h, out.w, 0, 0};
    switch (layer.kind) {
      case LayerKind::kConv:
        c.madds = k2 * in.c * out.c * out_pixels;
        c.params = k2 * in.c * out.c + out.c;
        break;
      case LayerKind::kDwConv:
        c.madds = k2 * out.c * out_pixels;
        c.params = k2 * out.c + out.c;
        break;
      case LayerKind::kFc:
        c.madds = in.size() * out.c;
        c.params = in.size() * out.c + out.c;
        break;
      default:
        break;
    }
    costs.push_back(std::move(c));
  }
  return costs;
}

ResourceReport cost(const NetworkSpec& spec, const ChannelWidths& widths, Shape3 input,
                    const CostOptions& options) {
  const auto shapes = infer_shapes(spec, widths, input);
  ResourceReport report;
  std::int64_t feature_maps = input.size();
  for (const auto& c : layer_costs(spec, widths, input)) {
    report.madds += c.madds;
    report.params += c.params;
    const double weight = c.kind == LayerKind::kDwConv ? 1.0 + options.depthwise_weight : 1.0;
    report.latency_proxy += weight * static_cast<double>(c.madds);
  }
  for (size_t i = 0; i < shapes.size(); ++i) {
    switch (spec.layer(static_cast<int>(i)).kind) {
      case LayerKind::kConv:
      case LayerKind::kDwConv:
      case LayerKind::kFc:
      case LayerKind::kAdd:
      case LayerKind::kAvgPoolGlobal:
        feature_maps += shapes[i].size();
        break;
      default:
        break;
    }
  }
  report.memory = feature_maps + report.params;
  report.model_size = report.params * 4;
  return report;
}

ResourceReport cost(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config,
                    const CostOptions& options) {
  return cost(spec, active_channels(spec, bounds, config), spec.input_shape(), options);
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::kMadds: return "madds";
    case Metric::kParams: return "params";
    case Metric::kMemory: return "memory";
    case Metric::kModelSize: return "model_size";
    case Metric::kLatencyProxy: return "latency_proxy";
  }
  return "unknown";
}

Metric parse_metric(std::string_view name) {
  for (Metric m : {Metric::kMadds, Metric::kParams, Metric::kMemory, Metric::kModelSize,
                   Metric::kLatencyProxy})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "'");
}

double metric_value(const ResourceReport& report, Metric metric) {
  switch (metric) {
    case Metric::kMadds: return static_cast<double>(report.madds);
    case Metric::kParams: return static_cast<double>(report.params);
    case Metric::kMemory: return static_cast<double>(report.memory);
    case Metric::kModelSize: return static_cast<double>(report.model_size);
    case Metric::kLatencyProxy: return report.latency_proxy;
  }
  return 0.0;
}

Budget parse_budget(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos)
    throw std::invalid_argument("budget must look like metric=value, got '" + std::string(text) + "'");
  Budget budget;
  budget.metric = parse_metric(text.substr(0, eq));
  const std::string value(text.substr(eq + 1));
  size_t used = 0;
  try {
    budget.limit = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size())
    throw std::invalid_argument("bad budget value '" + value + "'");
  return budget;
}

std::string to_string(const Budget& budget) {
  return fmt::format("{}={}", to_string(budget.metric), budget.limit);
}

bool budget_satisfied(const ResourceReport& report, const Budget& budget) {
  return metric_value(report, budget.metric) <= budget.limit;
}

std::string cost_report_csv(const NetworkSpec& spec, const ChannelWidths& widths, Shape3 input) {
  std::string out = "layer_id,C_in,C_out,H,W,madds,params\n";
  std::int64_t madds = 0;
  std::int64_t params = 0;
  for (const auto& c : layer_costs(spec, widths, input)) {
    out += fmt::format("{},{},{},{},{},{},{}\n", c.id, c.c_in, c.c_out, c.h, c.w, c.madds, c.params);
    madds += c.madds;
    params += c.params;
  }
  out += fmt::format("total,,,,,{},{}\n", madds, params);
  return out;
}

}  // namespace autoslim
