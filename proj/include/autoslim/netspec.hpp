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

// Network architectures, channel-sets and the channel-configuration search
// space spanned by a pair of width bounds and an even channel grouping.

#ifndef AUTOSLIM_NETSPEC_HPP_
#define AUTOSLIM_NETSPEC_HPP_

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace autoslim {

enum class LayerKind { kConv, kDwConv, kFc, kRelu, kAvgPoolGlobal, kBn, kSoftmaxXent, kAdd };

std::string_view to_string(LayerKind kind);
LayerKind parse_layer_kind(std::string_view name);

// True for kinds that own weights and define an output channel count.
inline bool is_compute(LayerKind kind) {
  return kind == LayerKind::kConv || kind == LayerKind::kDwConv || kind == LayerKind::kFc;
}

struct Shape3 {
  int c = 0;
  int h = 0;
  int w = 0;
  std::int64_t size() const { return std::int64_t{c} * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::kConv;
  int kernel = 1;
  int stride = 1;
  // Output channels at 1.0x (fc: output units). Inherited for pass-through kinds.
  int base_channels = 0;
  bool slimmable = true;
  std::string channel_set;
  // Reference width-multiplier annotations (see reference_widths()).
  int expand_ratio = 0;
  bool reference_fixed = false;
};

struct WidthBounds {
  double lower = 0.15;
  double upper = 1.5;
  int groups = 10;
};

struct ChannelSet {
  std::string name;
  int base_channels = 0;
  bool slimmable = true;
  bool tied = false;                // member of a residual tie
  std::vector<int> layers;          // producing compute layers, spec order
};

// Raised for malformed spec documents.
class SpecSyntaxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a document parses but violates a structural invariant.
class SpecValidationError : public std::runtime_error {
 public:
  SpecValidationError(std::string layer_id, const std::string& what)
      : std::runtime_error("layer '" + layer_id + "': " + what), layer_id_(std::move(layer_id)) {}
  const std::string& layer_id() const { return layer_id_; }

 private:
  std::string layer_id_;
};

class NetworkSpec {
 public:
  // Validates and derives topology. Throws SpecValidationError.
  static NetworkSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::string& name() const { return name_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(int index) const { return layers_[index]; }
  int layer_index(std::string_view id) const;
  const std::vector<std::pair<std::string, std::string>>& edges() const { return edges_; }
  const std::vector<std::vector<std::string>>& residual_ties() const { return residual_ties_; }
  Shape3 input_shape() const { return input_shape_; }
  int num_classes() const { return num_classes_; }
  const WidthBounds& bounds() const { return bounds_; }
  int width_divisor() const { return width_divisor_; }

  // Execution order (a topological order that preserves spec order where possible).
  const std::vector<int>& topo_order() const { return topo_; }
  const std::vector<int>& inputs_of(int layer) const { return inputs_[layer]; }
  int input_layer() const { return input_layer_; }
  int output_layer() const { return output_layer_; }
  // Layer whose output is the logits (input of the loss head, or the output layer).
  int logits_layer() const { return logits_layer_; }

  const std::vector<ChannelSet>& channel_sets() const { return sets_; }
  const ChannelSet& channel_set(std::string_view name) const;
  // Channel-set index of every layer's output.
  int set_of(int layer) const { return layer_set_[layer]; }
  // Slimmable sets in sampling order: residual-tied sets first, then the rest.
  std::vector<int> sampling_order() const;

  // Stable 64-bit digest of the canonical JSON form.
  std::uint64_t hash() const;

 private:
  void validate_and_derive();

  std::string name_;
  std::vector<LayerSpec> layers_;
  std::vector<std::pair<std::string, std::string>> edges_;
  std::vector<std::vector<std::string>> residual_ties_;
  Shape3 input_shape_;
  int num_classes_ = 0;
  WidthBounds bounds_;
  int width_divisor_ = 1;

  std::map<std::string, int, std::less<>> index_;
  std::vector<std::vector<int>> inputs_;
  std::vector<int> topo_;
  int input_layer_ = -1;
  int output_layer_ = -1;
  int logits_layer_ = -1;
  std::vector<ChannelSet> sets_;
  std::vector<int> layer_set_;
};

NetworkSpec parse_spec(std::string_view document);
NetworkSpec load_spec(const std::string& path);

// Checks the bounds against the spec (ratios, G >= 2, group tiling). Throws
// SpecValidationError naming the first offending layer.
void validate_bounds(const NetworkSpec& spec, const WidthBounds& bounds);

// Active group count per slimmable channel-set. Non-slimmable sets are absent.
struct ChannelConfig {
  std::map<std::string, int> active_groups;
  friend bool operator==(const ChannelConfig&, const ChannelConfig&) = default;
};

// Active channel count per channel-set, including non-slimmable sets.
using ChannelWidths = std::map<std::string, int>;

int min_groups(const WidthBounds& bounds);
int group_size(const ChannelSet& set, const WidthBounds& bounds);

ChannelConfig max_config(const NetworkSpec& spec, const WidthBounds& bounds);
ChannelConfig min_config(const NetworkSpec& spec, const WidthBounds& bounds);
ChannelConfig apply_width_multiplier(const NetworkSpec& spec, const WidthBounds& bounds,
                                     double multiplier);
ChannelConfig sample_random_config(const NetworkSpec& spec, const WidthBounds& bounds,
                                   std::mt19937_64& rng);

struct SlimCandidate {
  std::string channel_set;
  ChannelConfig config;
};
std::vector<SlimCandidate> slim_candidates(const NetworkSpec& spec, const WidthBounds& bounds,
                                           const ChannelConfig& config);

// Throws std::invalid_argument when a set is missing, unknown, or outside [k_min, G].
void check_config(const NetworkSpec& spec, const WidthBounds& bounds, const ChannelConfig& config);
ChannelWidths active_channels(const NetworkSpec& spec, const WidthBounds& bounds,
                              const ChannelConfig& config);
ChannelWidths base_widths(const NetworkSpec& spec);

// Channel counts under the architecture's published width-multiplier rule:
// widths rounded to the spec's width_divisor, expansion layers derived from
// their (rounded) input width, and `reference_fixed` sets never shrunk below
// their base width. Not restricted to the group grid.
ChannelWidths reference_widths(const NetworkSpec& spec, double multiplier);
// Per-layer output channels for a set of widths, indexed like spec.layers().
std::vector<int> layer_channels(const NetworkSpec& spec, const ChannelWidths& widths);

nlohmann::json config_to_json(const ChannelConfig& config);
ChannelConfig config_from_json(const nlohmann::json& doc);

}  // namespace autoslim

#endif  // AUTOSLIM_NETSPEC_HPP_
