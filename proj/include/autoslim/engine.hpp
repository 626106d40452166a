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

// Forward, reverse-mode gradients and SGD for the layer kinds of a
// NetworkSpec, over a weight store allocated at maximum width.
//
// A sub-network at some channel widths reads and writes only the leading
// slices of every weight tensor: output channels [0, C_out) and input
// channels [0, C_in). The slice geometry is taken from the stored tensor
// shapes, so a compact store holding exactly the active slices runs the same
// sub-network.
//
// Instantiated for float (training) and double (gradient checks).

#ifndef AUTOSLIM_ENGINE_HPP_
#define AUTOSLIM_ENGINE_HPP_

#include <cstdint>
#include <functional>
#include <vector>

#include "autoslim/netspec.hpp"
#include "autoslim/tensor.hpp"

namespace autoslim {

template <typename T>
struct LayerParams {
  BasicTensor<T> weight;        // conv [Cout,Cin,k,k]; dwconv [C,1,k,k]; fc [Out, Cin*H*W]
  BasicTensor<T> bias;          // [Cout]
  BasicTensor<T> gamma;         // bn only, [C]
  BasicTensor<T> beta;
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

// Indexed like NetworkSpec::layers(); empty entries for parameter-free layers.
template <typename T>
struct BasicWeights {
  std::vector<LayerParams<T>> layers;
};
using SlimmableWeights = BasicWeights<float>;

template <typename T>
struct LayerGrads {
  BasicTensor<T> weight;
  BasicTensor<T> bias;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

template <typename T>
struct BasicGradients {
  std::vector<LayerGrads<T>> layers;
};
using Gradients = BasicGradients<float>;

enum class BnMode {
  kTrain,      // normalize with batch statistics
  kEval,       // normalize with running statistics
  kCalibrate,  // normalize with batch statistics and accumulate dataset moments
};

enum class LossKind { kHardXent, kSoftXent };

constexpr double kBnEpsilon = 1e-5;

// Streaming per-channel moments of BN inputs, one entry per BN layer.
struct BnMoments {
  struct Layer {
    double count = 0.0;
    std::vector<double> mean;
    std::vector<double> m2;
  };
  std::vector<Layer> layers;  // indexed like NetworkSpec::layers()
};

// Per-layer output channels for a config, indexed like spec.layers().
std::vector<int> resolve_channels(const NetworkSpec& spec, const WidthBounds& bounds,
                                  const ChannelConfig& config);

// Allocates every tensor at the upper width bound. Conv/dwconv weights are
// N(0, 2/fan_out); fc weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases
// and beta are 0, gamma 1. Fans use `fan_widths` when given (e.g. a fixed
// architecture trained from scratch), else the maximum widths. The random
// stream does not depend on `fan_widths`.
template <typename T>
BasicWeights<T> init_weights(const NetworkSpec& spec, const WidthBounds& bounds,
                             std::uint64_t seed, const ChannelWidths* fan_widths = nullptr);

template <typename T>
BasicGradients<T> zero_gradients(const BasicWeights<T>& weights);

// images: [N, C, H, W] matching the spec input. Returns logits [N, classes].
// kCalibrate requires `moments`; other modes ignore it.
template <typename T>
BasicTensor<T> forward(const NetworkSpec& spec, const BasicWeights<T>& weights,
                       const std::vector<int>& channels, const BasicTensor<T>& images,
                       BnMode mode, BnMoments* moments = nullptr);

template <typename T>
struct Targets {
  std::vector<int> labels;     // hard_xent
  BasicTensor<T> soft;         // soft_xent, [N, classes], rows sum to 1
};

template <typename T>
struct PassResult {
  double loss = 0.0;
  BasicTensor<T> probabilities;  // detached softmax of the logits, [N, classes]
};

// Train-mode forward plus backward. Adds gradients of the mean loss into
// `accum` on the active slices only.
template <typename T>
PassResult<T> backward(const NetworkSpec& spec, const BasicWeights<T>& weights,
                       const std::vector<int>& channels, const BasicTensor<T>& images,
                       const Targets<T>& targets, LossKind loss_kind, BasicGradients<T>& accum);

// Mean softmax cross-entropy and its gradient w.r.t. the logits.
template <typename T>
double softmax_xent(const BasicTensor<T>& logits, const Targets<T>& targets, LossKind loss_kind,
                    BasicTensor<T>* dlogits, BasicTensor<T>* probabilities);

struct SgdParams {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

// One momentum buffer per trainable tensor, shared across sampled widths.
template <typename T>
struct SgdState {
  BasicGradients<T> velocity;
};

// v <- momentum * v + (g + weight_decay * w); w <- w - lr * v, over the full
// store (inactive entries see weight decay only).
template <typename T>
void sgd_step(BasicWeights<T>& weights, const BasicGradients<T>& grads, SgdState<T>& state,
              const SgdParams& params);

// Pulls image batches until it returns false.
template <typename T>
using BatchStream = std::function<bool(BasicTensor<T>& images)>;

// Replaces running mean/var of the active BN slices with the exact dataset
// moments of each BN input over the stream (population variance). Inactive
// slices are untouched. Returns the number of samples seen; throws on an empty
// stream.
template <typename T>
std::int64_t recalibrate_bn(const NetworkSpec& spec, BasicWeights<T>& weights,
                            const std::vector<int>& channels, const BatchStream<T>& stream);

}  // namespace autoslim

#endif  // AUTOSLIM_ENGINE_HPP_
