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

// Binary weight-store files.
//
//   "ASLM"  u32 version  u64 spec_hash  u32 tensor_count
//   per tensor: u32 name_len, name bytes, u32 rank, u32 dims[rank],
//               raw f32 values
//
// All integers and floats little-endian. Tensor names are
// "<layer_id>.<field>" with field in {weight, bias, gamma, beta,
// running_mean, running_var}.

#ifndef AUTOSLIM_CHECKPOINT_HPP_
#define AUTOSLIM_CHECKPOINT_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

#include "autoslim/engine.hpp"
#include "autoslim/netspec.hpp"

namespace autoslim {

constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const NetworkSpec& spec, const SlimmableWeights& weights);
// Throws CheckpointError on bad magic/version, spec-hash mismatch, unknown or
// missing tensors, shape mismatch, or truncation.
SlimmableWeights decode_checkpoint(const NetworkSpec& spec, const std::string& bytes);

void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     const SlimmableWeights& weights);
SlimmableWeights load_checkpoint(const std::string& path, const NetworkSpec& spec);

}  // namespace autoslim

#endif  // AUTOSLIM_CHECKPOINT_HPP_
