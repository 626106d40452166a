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

#include "autoslim/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <map>

#include "autoslim/util.hpp"

namespace autoslim {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");
static_assert(sizeof(float) == 4);

constexpr char kMagic[4] = {'A', 'S', 'L', 'M'};

template <typename U>
void put(std::string& out, U value) {
  char buf[sizeof(U)];
  std::memcpy(buf, &value, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return value;
  }
  std::string get_bytes(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated");
  }
  const std::string& bytes_;
  size_t pos_ = 0;
};

template <typename Fn>
void for_each_tensor(const NetworkSpec& spec, SlimmableWeights& w, Fn fn) {
  for (size_t i = 0; i < w.layers.size(); ++i) {
    const std::string& id = spec.layer(static_cast<int>(i)).id;
    auto& p = w.layers[i];
    fn(id + ".weight", p.weight);
    fn(id + ".bias", p.bias);
    fn(id + ".gamma", p.gamma);
    fn(id + ".beta", p.beta);
    fn(id + ".running_mean", p.running_mean);
    fn(id + ".running_var", p.running_var);
  }
}

}  // namespace

std::string encode_checkpoint(const NetworkSpec& spec, const SlimmableWeights& weights) {
  if (weights.layers.size() != spec.layers().size())
    throw CheckpointError("weight store does not match the spec");
  auto& w = const_cast<SlimmableWeights&>(weights);
  std::uint32_t count = 0;
  for_each_tensor(spec, w, [&](const std::string&, const Tensor& t) { count += !t.empty(); });
  std::string out(kMagic, 4);
  put(out, kCheckpointVersion);
  put(out, spec.hash());
  put(out, count);
  for_each_tensor(spec, w, [&](const std::string& name, const Tensor& t) {
    if (t.empty()) return;
    put(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data()), static_cast<size_t>(t.numel()) * 4);
  });
  return out;
}

SlimmableWeights decode_checkpoint(const NetworkSpec& spec, const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(4) != std::string(kMagic, 4)) throw CheckpointError("bad checkpoint magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(fmt::format("unsupported checkpoint version {}", version));
  const auto hash = r.get<std::uint64_t>();
  if (hash != spec.hash())
    throw CheckpointError(fmt::format("checkpoint was written for a different spec ({:016x} vs {:016x})",
                                      hash, spec.hash()));
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw CheckpointError(fmt::format("tensor '{}' has rank {}", name, rank));
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.get<std::uint32_t>());
    const std::string raw = r.get_bytes(static_cast<size_t>(Tensor::count(shape)) * 4);
    std::vector<float> data(raw.size() / 4);
    std::memcpy(data.data(), raw.data(), raw.size());
    if (!tensors.emplace(name, Tensor(shape, std::move(data))).second)
      throw CheckpointError(fmt::format("duplicate tensor '{}'", name));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after the last tensor");

  SlimmableWeights w;
  w.layers.resize(spec.layers().size());
  for_each_tensor(spec, w, [&](const std::string& name, Tensor& t) {
    auto it = tensors.find(name);
    if (it == tensors.end()) return;
    t = std::move(it->second);
    tensors.erase(it);
  });
  for (size_t i = 0; i < w.layers.size(); ++i) {
    const auto& layer = spec.layer(static_cast<int>(i));
    const auto& p = w.layers[i];
    const bool compute = is_compute(layer.kind);
    const bool bn = layer.kind == LayerKind::kBn;
    auto require = [&](const Tensor& t, bool expected, const char* field, int rank) {
      if (t.empty() == expected)
        throw CheckpointError(fmt::format("{} tensor '{}.{}'", expected ? "missing" : "unexpected",
                                          layer.id, field));
      if (expected && t.rank() != rank)
        throw CheckpointError(fmt::format("tensor '{}.{}' has rank {}, expected {}", layer.id,
                                          field, t.rank(), rank));
    };
    const int weight_rank = layer.kind == LayerKind::kFc ? 2 : 4;
    require(p.weight, compute, "weight", weight_rank);
    require(p.bias, compute, "bias", 1);
    require(p.gamma, bn, "gamma", 1);
    require(p.beta, bn, "beta", 1);
    require(p.running_mean, bn, "running_mean", 1);
    require(p.running_var, bn, "running_var", 1);
  }
  if (!tensors.empty())
    throw CheckpointError(fmt::format("unknown tensor '{}'", tensors.begin()->first));
  return w;
}

void save_checkpoint(const std::string& path, const NetworkSpec& spec,
                     const SlimmableWeights& weights) {
  write_file(path, encode_checkpoint(spec, weights));
}

SlimmableWeights load_checkpoint(const std::string& path, const NetworkSpec& spec) {
  try {
    return decode_checkpoint(spec, read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path + ": " + e.what());
  }
}

}  // namespace autoslim
