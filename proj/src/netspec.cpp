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

#include "autoslim/netspec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

#include "autoslim/util.hpp"

namespace autoslim {
namespace {

using nlohmann::json;

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::kConv, "conv"},
    {LayerKind::kDwConv, "dwconv"},
    {LayerKind::kFc, "fc"},
    {LayerKind::kRelu, "relu"},
    {LayerKind::kAvgPoolGlobal, "avgpool_global"},
    {LayerKind::kBn, "bn"},
    {LayerKind::kSoftmaxXent, "softmax_xent"},
    {LayerKind::kAdd, "add"},
};

// Kahn's algorithm, always releasing the lowest spec index first.
std::vector<int> topological_order(const std::vector<std::vector<int>>& inputs,
                                   const std::vector<LayerSpec>& layers) {
  const int n = static_cast<int>(layers.size());
  std::vector<int> indegree(n, 0);
  std::vector<std::vector<int>> consumers(n);
  for (int v = 0; v < n; ++v) {
    indegree[v] = static_cast<int>(inputs[v].size());
    for (int u : inputs[v]) consumers[u].push_back(v);
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int v = 0; v < n; ++v)
    if (indegree[v] == 0) ready.push(v);
  std::vector<int> order;
  while (!ready.empty()) {
    int u = ready.top();
    ready.pop();
    order.push_back(u);
    for (int v : consumers[u])
      if (--indegree[v] == 0) ready.push(v);
  }
  if (static_cast<int>(order.size()) != n) {
    for (int v = 0; v < n; ++v)
      if (indegree[v] > 0) throw SpecValidationError(layers[v].id, "cycle in layer graph");
  }
  return order;
}

int make_divisible(double value, int divisor) {
  int rounded = std::max(divisor, static_cast<int>(value + divisor / 2.0) / divisor * divisor);
  if (rounded < 0.9 * value) rounded += divisor;
  return rounded;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames)
    if (k == kind) return name;
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames)
    if (n == name) return k;
  throw SpecSyntaxError("unknown layer kind '" + std::string(name) + "'");
}

NetworkSpec NetworkSpec::from_json(const json& doc) {
  NetworkSpec spec;
  try {
    if (!doc.is_object()) throw SpecSyntaxError("spec document must be a JSON object");
    spec.name_ = doc.value("name", std::string("network"));
    const auto& shape = doc.at("input_shape");
    if (!shape.is_array() || shape.size() != 3)
      throw SpecSyntaxError("input_shape must be [channels, height, width]");
    spec.input_shape_ = {shape[0].get<int>(), shape[1].get<int>(), shape[2].get<int>()};
    spec.num_classes_ = doc.at("num_classes").get<int>();
    if (doc.contains("bounds")) {
      const auto& b = doc["bounds"];
      spec.bounds_.lower = b.at("lower").get<double>();
      spec.bounds_.upper = b.at("upper").get<double>();
      spec.bounds_.groups = b.at("groups").get<int>();
    }
    spec.width_divisor_ = doc.value("width_divisor", 1);
    for (const auto& l : doc.at("layers")) {
      LayerSpec layer;
      layer.id = l.at("id").get<std::string>();
      layer.kind = parse_layer_kind(l.at("kind").get<std::string>());
      layer.kernel = l.value("kernel", 1);
      layer.stride = l.value("stride", 1);
      layer.base_channels = l.value("base_channels", 0);
      layer.slimmable = l.value("slimmable", true);
      layer.channel_set = l.value("channel_set", std::string());
      layer.expand_ratio = l.value("expand_ratio", 0);
      layer.reference_fixed = l.value("reference_fixed", false);
      spec.layers_.push_back(std::move(layer));
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc["edges"]) {
        if (!e.is_array() || e.size() != 2) throw SpecSyntaxError("edge must be [from, to]");
        spec.edges_.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      }
    } else {
      for (size_t i = 1; i < spec.layers_.size(); ++i)
        spec.edges_.emplace_back(spec.layers_[i - 1].id, spec.layers_[i].id);
    }
    if (doc.contains("residual_ties"))
      spec.residual_ties_ = doc["residual_ties"].get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw SpecSyntaxError(std::string("malformed spec document: ") + e.what());
  }
  spec.validate_and_derive();
  validate_bounds(spec, spec.bounds_);
  return spec;
}

json NetworkSpec::to_json() const {
  json doc;
  doc["name"] = name_;
  doc["input_shape"] = {input_shape_.c, input_shape_.h, input_shape_.w};
  doc["num_classes"] = num_classes_;
  doc["bounds"] = {{"lower", bounds_.lower}, {"upper", bounds_.upper}, {"groups", bounds_.groups}};
  doc["width_divisor"] = width_divisor_;
  json layers = json::array();
  for (const auto& l : layers_) {
    json j = {{"id", l.id}, {"kind", std::string(to_string(l.kind))}};
    if (is_compute(l.kind) || l.kind == LayerKind::kDwConv) {
      j["kernel"] = l.kernel;
      j["stride"] = l.stride;
    }
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kFc) {
      j["base_channels"] = l.base_channels;
      j["channel_set"] = l.channel_set;
    }
    if (!l.slimmable) j["slimmable"] = false;
    if (l.expand_ratio > 0) j["expand_ratio"] = l.expand_ratio;
    if (l.reference_fixed) j["reference_fixed"] = true;
    layers.push_back(std::move(j));
  }
  doc["layers"] = std::move(layers);
  json edges = json::array();
  for (const auto& [from, to] : edges_) edges.push_back({from, to});
  doc["edges"] = std::move(edges);
  doc["residual_ties"] = residual_ties_;
  return doc;
}

void NetworkSpec::validate_and_derive() {
  const int n = static_cast<int>(layers_.size());
  if (n == 0) throw SpecValidationError("", "spec has no layers");
  if (input_shape_.c < 1 || input_shape_.h < 1 || input_shape_.w < 1)
    throw SpecValidationError("", "input_shape must be positive");
  if (num_classes_ < 1) throw SpecValidationError("", "num_classes must be positive");

  for (int i = 0; i < n; ++i) {
    const auto& l = layers_[i];
    if (l.id.empty()) throw SpecValidationError("", "layer without id");
    if (!index_.emplace(l.id, i).second) throw SpecValidationError(l.id, "duplicate layer id");
    if (l.kernel < 1) throw SpecValidationError(l.id, "kernel must be >= 1");
    if (l.stride < 1) throw SpecValidationError(l.id, "stride must be >= 1");
    if ((l.kind == LayerKind::kConv || l.kind == LayerKind::kFc)) {
      if (l.base_channels < 1) throw SpecValidationError(l.id, "base_channels must be >= 1");
      if (l.channel_set.empty()) throw SpecValidationError(l.id, "compute layer needs a channel_set");
    }
    if (l.kind == LayerKind::kDwConv && l.kernel % 2 == 0)
      throw SpecValidationError(l.id, "depthwise kernel must be odd");
    if (l.kind == LayerKind::kConv && l.kernel % 2 == 0)
      throw SpecValidationError(l.id, "conv kernel must be odd");
  }

  inputs_.assign(n, {});
  std::vector<int> out_degree(n, 0);
  for (const auto& [from, to] : edges_) {
    auto f = index_.find(from);
    if (f == index_.end()) throw SpecValidationError(from, "edge references unknown layer");
    auto t = index_.find(to);
    if (t == index_.end()) throw SpecValidationError(to, "edge references unknown layer");
    if (f->second == t->second) throw SpecValidationError(from, "self edge (cycle)");
    inputs_[t->second].push_back(f->second);
    ++out_degree[f->second];
  }
  topo_ = topological_order(inputs_, layers_);

  for (int i = 0; i < n; ++i) {
    if (inputs_[i].empty()) {
      if (input_layer_ >= 0) throw SpecValidationError(layers_[i].id, "second input node");
      input_layer_ = i;
    }
    if (out_degree[i] == 0) {
      if (output_layer_ >= 0) throw SpecValidationError(layers_[i].id, "second output node");
      output_layer_ = i;
    }
  }
  const auto& first = layers_[input_layer_];
  if (first.kind != LayerKind::kConv && first.kind != LayerKind::kFc)
    throw SpecValidationError(first.id, "input node must be conv or fc");

  for (int i = 0; i < n; ++i) {
    const auto& l = layers_[i];
    const size_t fan_in = inputs_[i].size();
    if (l.kind == LayerKind::kAdd) {
      if (fan_in < 2) throw SpecValidationError(l.id, "add needs at least two inputs");
    } else if (i != input_layer_ && fan_in != 1) {
      throw SpecValidationError(l.id, "layer must have exactly one input");
    }
    if (l.kind == LayerKind::kSoftmaxXent && i != output_layer_)
      throw SpecValidationError(l.id, "softmax_xent must be the output node");
  }

  // Channel-sets, derived in execution order.
  std::map<std::string, int, std::less<>> set_index;
  layer_set_.assign(n, -1);
  std::vector<Shape3> spatial(n);
  for (int i : topo_) {
    auto& l = layers_[i];
    const int src = inputs_[i].empty() ? -1 : inputs_[i][0];
    Shape3 in = src < 0 ? input_shape_ : spatial[src];
    int set = -1;
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kFc) {
      auto [it, inserted] = set_index.emplace(l.channel_set, static_cast<int>(sets_.size()));
      if (inserted) {
        sets_.push_back({l.channel_set, l.base_channels, l.slimmable, false, {}});
      }
      set = it->second;
      auto& cs = sets_[set];
      if (cs.base_channels != l.base_channels)
        throw SpecValidationError(l.id, "channel_set '" + l.channel_set +
                                            "' has inconsistent base_channels");
      if (cs.slimmable != l.slimmable)
        throw SpecValidationError(l.id, "channel_set '" + l.channel_set +
                                            "' mixes slimmable and fixed layers");
      cs.layers.push_back(i);
    } else {
      if (src < 0) throw SpecValidationError(l.id, "layer consumes the raw input");
      set = layer_set_[src];
      if (!l.channel_set.empty() && l.channel_set != sets_[set].name)
        throw SpecValidationError(l.id, "channel_set must equal its input's ('" +
                                            sets_[set].name + "')");
      if (l.kind == LayerKind::kAdd) {
        for (int other : inputs_[i]) {
          if (layer_set_[other] != set)
            throw SpecValidationError(l.id, "add joins channel-sets '" + sets_[set].name +
                                                "' and '" + sets_[layer_set_[other]].name + "'");
          if (spatial[other].h != in.h || spatial[other].w != in.w)
            throw SpecValidationError(l.id, "add joins feature maps of different spatial size");
        }
      }
      l.channel_set = sets_[set].name;
      l.base_channels = sets_[set].base_channels;
      l.slimmable = sets_[set].slimmable;
      if (l.kind == LayerKind::kDwConv) sets_[set].layers.push_back(i);
    }
    layer_set_[i] = set;

    Shape3 out{0, in.h, in.w};
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kDwConv:
        out.h = (in.h + l.stride - 1) / l.stride;
        out.w = (in.w + l.stride - 1) / l.stride;
        break;
      case LayerKind::kFc:
      case LayerKind::kAvgPoolGlobal:
        out.h = out.w = 1;
        break;
      default:
        break;
    }
    spatial[i] = out;
  }
  // Sets sorted by first appearance in spec order.
  {
    std::vector<int> first_layer(sets_.size(), n);
    for (int i = 0; i < n; ++i)
      if (layer_set_[i] >= 0) first_layer[layer_set_[i]] = std::min(first_layer[layer_set_[i]], i);
    std::vector<int> perm(sets_.size());
    for (size_t s = 0; s < perm.size(); ++s) perm[s] = static_cast<int>(s);
    std::stable_sort(perm.begin(), perm.end(),
                     [&](int a, int b) { return first_layer[a] < first_layer[b]; });
    std::vector<int> remap(sets_.size());
    std::vector<ChannelSet> sorted;
    for (size_t r = 0; r < perm.size(); ++r) {
      remap[perm[r]] = static_cast<int>(r);
      sorted.push_back(std::move(sets_[perm[r]]));
    }
    sets_ = std::move(sorted);
    for (auto& s : layer_set_) s = remap[s];
    for (auto& cs : sets_) std::sort(cs.layers.begin(), cs.layers.end());
  }

  logits_layer_ = output_layer_;
  if (layers_[output_layer_].kind == LayerKind::kSoftmaxXent)
    logits_layer_ = inputs_[output_layer_][0];
  const auto& classifier = layers_[logits_layer_];
  if (!is_compute(classifier.kind) || classifier.kind == LayerKind::kDwConv)
    throw SpecValidationError(classifier.id, "logits must come from a conv or fc layer");
  if (classifier.slimmable)
    throw SpecValidationError(classifier.id, "classifier output must not be slimmable");
  if (classifier.base_channels != num_classes_)
    throw SpecValidationError(classifier.id, "classifier output must equal num_classes");
  if (spatial[logits_layer_].h != 1 || spatial[logits_layer_].w != 1)
    throw SpecValidationError(classifier.id, "logits must be spatially 1x1");

  for (const auto& tie : residual_ties_) {
    int set = -1;
    for (const auto& id : tie) {
      auto it = index_.find(id);
      if (it == index_.end()) throw SpecValidationError(id, "residual tie names unknown layer");
      if (set >= 0 && layer_set_[it->second] != set)
        throw SpecValidationError(id, "residual tie spans channel-sets '" + sets_[set].name +
                                          "' and '" + sets_[layer_set_[it->second]].name + "'");
      set = layer_set_[it->second];
    }
    if (set >= 0) sets_[set].tied = true;
  }
}

int NetworkSpec::layer_index(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown layer '" + std::string(id) + "'");
  return it->second;
}

const ChannelSet& NetworkSpec::channel_set(std::string_view name) const {
  for (const auto& s : sets_)
    if (s.name == name) return s;
  throw std::out_of_range("unknown channel_set '" + std::string(name) + "'");
}

std::vector<int> NetworkSpec::sampling_order() const {
  std::vector<int> order;
  for (int pass = 0; pass < 2; ++pass)
    for (size_t s = 0; s < sets_.size(); ++s)
      if (sets_[s].slimmable && sets_[s].tied == (pass == 0)) order.push_back(static_cast<int>(s));
  return order;
}

std::uint64_t NetworkSpec::hash() const { return fnv1a64(to_json().dump()); }

NetworkSpec parse_spec(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SpecSyntaxError(std::string("spec is not valid JSON: ") + e.what());
  }
  return NetworkSpec::from_json(doc);
}

NetworkSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open spec file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_spec(buffer.str());
}

void validate_bounds(const NetworkSpec& spec, const WidthBounds& bounds) {
  if (!(bounds.lower > 0.0) || bounds.lower > bounds.upper)
    throw SpecValidationError("", "width bounds must satisfy 0 < lower <= upper");
  if (bounds.groups < 2) throw SpecValidationError("", "groups must be >= 2");
  for (const auto& set : spec.channel_sets()) {
    if (!set.slimmable) continue;
    const double widest = set.base_channels * bounds.upper;
    const long rounded = std::lround(widest);
    if (rounded < bounds.groups || rounded % bounds.groups != 0) {
      throw SpecValidationError(spec.layer(set.layers.front()).id,
                                "channel_set '" + set.name + "': " + std::to_string(rounded) +
                                    " channels at upper bound not divisible into " +
                                    std::to_string(bounds.groups) + " groups");
    }
  }
}

int min_groups(const WidthBounds& bounds) {
  const double k = bounds.groups * bounds.lower / bounds.upper;
  return std::max(1, static_cast<int>(std::ceil(k - 1e-9)));
}

int group_size(const ChannelSet& set, const WidthBounds& bounds) {
  return static_cast<int>(std::lround(set.base_channels * bounds.upper)) / bounds.groups;
}

ChannelConfig max_config(const NetworkSpec& spec, const WidthBounds& bounds) {
  ChannelConfig config;
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) config.active_groups[set.name] = bounds.groups;
  return config;
}

ChannelConfig min_config(const NetworkSpec& spec, const WidthBounds& bounds) {
  ChannelConfig config;
  const int k_min = min_groups(bounds);
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) config.active_groups[set.name] = k_min;
  return config;
}

ChannelConfig apply_width_multiplier(const NetworkSpec& spec, const WidthBounds& bounds,
                                     double multiplier) {
  constexpr double kSlack = 1e-12;
  if (multiplier < bounds.lower - kSlack || multiplier > bounds.upper + kSlack)
    throw std::invalid_argument("width multiplier " + std::to_string(multiplier) +
                                " outside bounds");
  const int k = std::clamp(static_cast<int>(std::lround(bounds.groups * multiplier / bounds.upper)),
                           min_groups(bounds), bounds.groups);
  ChannelConfig config;
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) config.active_groups[set.name] = k;
  return config;
}

ChannelConfig sample_random_config(const NetworkSpec& spec, const WidthBounds& bounds,
                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<int> draw(min_groups(bounds), bounds.groups);
  ChannelConfig config;
  for (int s : spec.sampling_order()) config.active_groups[spec.channel_sets()[s].name] = draw(rng);
  return config;
}

std::vector<SlimCandidate> slim_candidates(const NetworkSpec& spec, const WidthBounds& bounds,
                                           const ChannelConfig& config) {
  const int k_min = min_groups(bounds);
  std::vector<SlimCandidate> out;
  for (const auto& set : spec.channel_sets()) {
    if (!set.slimmable) continue;
    const int k = config.active_groups.at(set.name);
    if (k <= k_min) continue;
    SlimCandidate candidate{set.name, config};
    candidate.config.active_groups[set.name] = k - 1;
    out.push_back(std::move(candidate));
  }
  return out;
}

void check_config(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config) {
  const int k_min = min_groups(bounds);
  size_t expected = 0;
  for (const auto& set : spec.channel_sets()) {
    if (!set.slimmable) continue;
    ++expected;
    auto it = config.active_groups.find(set.name);
    if (it == config.active_groups.end())
      throw std::invalid_argument("config lacks channel_set '" + set.name + "'");
    if (it->second < k_min || it->second > bounds.groups)
      throw std::invalid_argument("channel_set '" + set.name + "' has k=" +
                                  std::to_string(it->second) + " outside [" +
                                  std::to_string(k_min) + ", " + std::to_string(bounds.groups) + "]");
  }
  if (config.active_groups.size() != expected)
    throw std::invalid_argument("config names channel_sets absent from the spec");
}

ChannelWidths active_channels(const NetworkSpec& spec, const WidthBounds& bounds,
                              const ChannelConfig& config) {
  check_config(spec, bounds, config);
  ChannelWidths widths;
  for (const auto& set : spec.channel_sets()) {
    widths[set.name] = set.slimmable ? config.active_groups.at(set.name) * group_size(set, bounds)
                                     : set.base_channels;
  }
  return widths;
}

ChannelWidths base_widths(const NetworkSpec& spec) {
  ChannelWidths widths;
  for (const auto& set : spec.channel_sets()) widths[set.name] = set.base_channels;
  return widths;
}

ChannelWidths reference_widths(const NetworkSpec& spec, double multiplier) {
  ChannelWidths widths;
  const int divisor = std::max(1, spec.width_divisor());
  for (const auto& set : spec.channel_sets()) {
    int width = 0;
    int expand_layer = -1;
    for (int l : set.layers)
      if (spec.layer(l).expand_ratio > 0) expand_layer = l;
    const bool fixed = std::any_of(set.layers.begin(), set.layers.end(),
                                   [&](int l) { return spec.layer(l).reference_fixed; });
    if (!set.slimmable) {
      width = set.base_channels;
    } else if (expand_layer >= 0) {
      const auto& layer = spec.layer(expand_layer);
      const auto& src = spec.channel_sets()[spec.set_of(spec.inputs_of(expand_layer)[0])];
      width = layer.expand_ratio * widths.at(src.name);
    } else if (fixed && multiplier < 1.0) {
      width = set.base_channels;
    } else {
      width = make_divisible(set.base_channels * multiplier, divisor);
    }
    widths[set.name] = width;
  }
  return widths;
}

std::vector<int> layer_channels(const NetworkSpec& spec, const ChannelWidths& widths) {
  std::vector<int> out(spec.layers().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = widths.at(spec.channel_sets()[spec.set_of(static_cast<int>(i))].name);
  return out;
}

nlohmann::json config_to_json(const ChannelConfig& config) {
  return nlohmann::json(config.active_groups);
}

ChannelConfig config_from_json(const nlohmann::json& doc) {
  ChannelConfig config;
  try {
    config.active_groups = doc.get<std::map<std::string, int>>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed channel config: ") + e.what());
  }
  return config;
}

}  // namespace autoslim
