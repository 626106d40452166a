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

#include "autoslim/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "autoslim/util.hpp"

namespace autoslim {
namespace fs = std::filesystem;
namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::int64_t kCifarRecord = 3073;

std::atomic<std::int64_t> g_test_reads{0};

std::string load(const fs::path& path) {
  if (!fs::exists(path)) throw DatasetError(path.string(), "file not found");
  return read_file(path);
}

std::uint32_t be32(const std::string& bytes, size_t offset) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

// Verifies every file listed in a SHA256SUMS manifest next to `dir`.
void verify_checksums(const fs::path& dir, const std::vector<fs::path>& files) {
  const fs::path sums = dir / "SHA256SUMS";
  if (!fs::exists(sums)) return;
  std::map<std::string, std::string> expected;
  std::istringstream in(read_file(sums));
  std::string hex, name;
  while (in >> hex >> name) expected[name] = hex;
  for (const auto& f : files) {
    auto it = expected.find(f.filename().string());
    if (it == expected.end()) continue;
    if (sha256_file(f) != it->second) throw DatasetError(f.string(), "checksum mismatch");
  }
}

Split synthetic(const DatasetOptions& opt, std::int64_t count, std::uint64_t stream) {
  // Fixed class prototypes on a coarse grid plus per-sample Gaussian noise.
  const Shape3 s = opt.synthetic_shape;
  const int classes = opt.synthetic_classes;
  std::mt19937_64 proto_rng(0x5EEDC0DEULL);
  std::uniform_real_distribution<double> level(0.0, 255.0);
  const int grid = 4;
  std::vector<double> protos(static_cast<size_t>(classes) * s.c * grid * grid);
  for (auto& v : protos) v = level(proto_rng);

  std::mt19937_64 rng(0x5EEDC0DEULL ^ (stream * 0x9E3779B97F4A7C15ULL));
  std::normal_distribution<double> noise(0.0, 70.0);
  Split out;
  out.shape = s;
  out.pixels.resize(static_cast<size_t>(count * s.size()));
  out.labels.resize(static_cast<size_t>(count));
  for (std::int64_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(rng() % classes);
    out.labels[n] = label;
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const int gy = y * grid / s.h, gx = x * grid / s.w;
          const double v = protos[((static_cast<size_t>(label) * s.c + c) * grid + gy) * grid + gx] + noise(rng);
          out.pixels[static_cast<size_t>(n * s.size() + (static_cast<std::int64_t>(c) * s.h + y) * s.w + x)] =
              static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
  }
  return out;
}

Split take(const Split& from, const std::vector<std::int64_t>& indices) {
  Split out;
  out.shape = from.shape;
  const std::int64_t per = from.shape.size();
  out.pixels.resize(static_cast<size_t>(indices.size() * per));
  out.labels.resize(indices.size());
  for (size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(from.pixels.begin() + indices[i] * per, per, out.pixels.begin() + static_cast<std::int64_t>(i) * per);
    out.labels[i] = from.labels[indices[i]];
  }
  return out;
}

}  // namespace

std::string_view to_string(DatasetName name) {
  switch (name) {
    case DatasetName::kMnist: return "mnist";
    case DatasetName::kCifar10: return "cifar10";
    case DatasetName::kSynthetic: return "synthetic";
  }
  return "unknown";
}

DatasetName parse_dataset_name(std::string_view name) {
  for (auto d : {DatasetName::kMnist, DatasetName::kCifar10, DatasetName::kSynthetic})
    if (to_string(d) == name) return d;
  throw std::invalid_argument("unknown dataset '" + std::string(name) + "'");
}

Split read_idx(const fs::path& images, const fs::path& labels) {
  const std::string img = load(images);
  const std::string lab = load(labels);
  if (img.size() < 4) throw DatasetError(images.string(), "truncated IDX header");
  if (be32(img, 0) != kIdxImages)
    throw DatasetError(images.string(), fmt::format("bad IDX image magic 0x{:08x}", be32(img, 0)));
  if (img.size() < 16) throw DatasetError(images.string(), "truncated IDX header");
  if (lab.size() < 4) throw DatasetError(labels.string(), "truncated IDX header");
  if (be32(lab, 0) != kIdxLabels)
    throw DatasetError(labels.string(), fmt::format("bad IDX label magic 0x{:08x}", be32(lab, 0)));
  if (lab.size() < 8) throw DatasetError(labels.string(), "truncated IDX header");
  const std::int64_t n = be32(img, 4);
  const int rows = static_cast<int>(be32(img, 8));
  const int cols = static_cast<int>(be32(img, 12));
  const std::int64_t need = 16 + n * rows * cols;
  if (static_cast<std::int64_t>(img.size()) < need)
    throw DatasetError(images.string(), fmt::format("truncated: {} bytes, header promises {}", img.size(), need));
  if (be32(lab, 4) != n)
    throw DatasetError(labels.string(), fmt::format("holds {} labels for {} images", be32(lab, 4), n));
  if (static_cast<std::int64_t>(lab.size()) < 8 + n)
    throw DatasetError(labels.string(), "truncated label file");
  Split s;
  s.shape = {1, rows, cols};
  s.pixels.assign(img.begin() + 16, img.begin() + need);
  s.labels.resize(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    s.labels[i] = static_cast<unsigned char>(lab[8 + i]);
    if (s.labels[i] > 9) throw DatasetError(labels.string(), fmt::format("label {} out of range", s.labels[i]));
  }
  return s;
}

Split read_cifar_batches(const std::vector<fs::path>& files) {
  Split s;
  s.shape = {3, 32, 32};
  for (const auto& f : files) {
    const std::string bytes = load(f);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0)
      throw DatasetError(f.string(), fmt::format("size {} is not a whole number of {}-byte records",
                                                 bytes.size(), kCifarRecord));
    const std::int64_t n = static_cast<std::int64_t>(bytes.size()) / kCifarRecord;
    for (std::int64_t r = 0; r < n; ++r) {
      const int label = static_cast<unsigned char>(bytes[r * kCifarRecord]);
      if (label > 9) throw DatasetError(f.string(), fmt::format("record {} has label {}", r, label));
      s.labels.push_back(label);
      s.pixels.insert(s.pixels.end(), bytes.begin() + r * kCifarRecord + 1, bytes.begin() + (r + 1) * kCifarRecord);
    }
  }
  return s;
}

const Split& DatasetHandle::test(const TestAccessKey&) const {
  g_test_reads.fetch_add(1);
  return test_;
}

std::int64_t DatasetHandle::test_reads() { return g_test_reads.load(); }

std::string DatasetHandle::holdout_id() const {
  std::string bytes(reinterpret_cast<const char*>(holdout_indices_.data()),
                    holdout_indices_.size() * sizeof(std::int64_t));
  return fmt::format("{}-{}-{:016x}", to_string(name_), holdout_indices_.size(), fnv1a64(bytes));
}

Tensor DatasetHandle::batch(const Split& split, std::span<const std::int64_t> indices, bool augment,
                            std::mt19937_64* rng) const {
  const Shape3 s = split.shape;
  const int n = static_cast<int>(indices.size());
  Tensor out({n, s.c, s.h, s.w});
  const std::int64_t per = s.size();
  const bool crop = augment && name_ == DatasetName::kCifar10;
  if (crop && rng == nullptr) throw std::invalid_argument("augmentation needs an rng");
  for (int b = 0; b < n; ++b) {
    const std::uint8_t* src = split.pixels.data() + indices[b] * per;
    float* dst = out.data() + b * per;
    int dy = 0, dx = 0;
    bool flip = false;
    if (crop) {
      dy = static_cast<int>((*rng)() % 9) - 4;
      dx = static_cast<int>((*rng)() % 9) - 4;
      flip = ((*rng)() & 1) != 0;
    }
    for (int c = 0; c < s.c; ++c) {
      const float inv = 1.0f / std_[c];
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) {
          const int sy = y + dy;
          const int sx0 = flip ? s.w - 1 - x : x;
          const int sx = sx0 + dx;
          // Zero padding in raw pixel space.
          const float raw = (sy < 0 || sy >= s.h || sx < 0 || sx >= s.w)
                                ? 0.0f
                                : static_cast<float>(src[(static_cast<std::int64_t>(c) * s.h + sy) * s.w + sx]);
          dst[(static_cast<std::int64_t>(c) * s.h + y) * s.w + x] = (raw / 255.0f - mean_[c]) * inv;
        }
    }
  }
  return out;
}

DatasetHandle load_dataset(DatasetName name, const fs::path& root, std::uint64_t seed,
                           const DatasetOptions& options) {
  DatasetHandle h;
  h.name_ = name;
  h.seed_ = seed;
  Split full;
  switch (name) {
    case DatasetName::kMnist: {
      const fs::path dir = root / "mnist";
      const fs::path ti = dir / "train-images-idx3-ubyte", tl = dir / "train-labels-idx1-ubyte";
      const fs::path vi = dir / "t10k-images-idx3-ubyte", vl = dir / "t10k-labels-idx1-ubyte";
      std::vector<fs::path> files{ti, tl};
      const bool has_test = fs::exists(vi) && fs::exists(vl);
      if (has_test) files.insert(files.end(), {vi, vl});
      verify_checksums(dir, files);
      full = read_idx(ti, tl);
      if (has_test) h.test_ = read_idx(vi, vl);
      break;
    }
    case DatasetName::kCifar10: {
      const fs::path dir = root / "cifar-10-batches-bin";
      std::vector<fs::path> train;
      for (int i = 1; i <= 5; ++i) train.push_back(dir / fmt::format("data_batch_{}.bin", i));
      const fs::path test = dir / "test_batch.bin";
      auto files = train;
      if (fs::exists(test)) files.push_back(test);
      verify_checksums(dir, files);
      full = read_cifar_batches(train);
      if (fs::exists(test)) h.test_ = read_cifar_batches({test});
      break;
    }
    case DatasetName::kSynthetic:
      full = synthetic(options, options.synthetic_train, 1);
      h.test_ = synthetic(options, options.synthetic_test, 2);
      h.num_classes_ = options.synthetic_classes;
      break;
  }
  if (h.test_.labels.empty()) h.test_.shape = full.shape;
  if (options.holdout_size < 0 || options.holdout_size >= full.size())
    throw std::invalid_argument(fmt::format("holdout of {} leaves no training data out of {}",
                                            options.holdout_size, full.size()));

  std::vector<std::int64_t> perm(static_cast<size_t>(full.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  h.holdout_indices_.assign(perm.begin(), perm.begin() + options.holdout_size);
  std::sort(h.holdout_indices_.begin(), h.holdout_indices_.end());
  std::vector<std::int64_t> train_idx(perm.begin() + options.holdout_size, perm.end());
  std::sort(train_idx.begin(), train_idx.end());
  h.holdout_ = take(full, h.holdout_indices_);
  h.train_ = take(full, train_idx);

  const Shape3 s = full.shape;
  h.mean_.assign(s.c, 0.0f);
  h.std_.assign(s.c, 1.0f);
  const std::int64_t hw = std::int64_t{s.h} * s.w;
  for (int c = 0; c < s.c; ++c) {
    double sum = 0, sq = 0;
    for (std::int64_t n = 0; n < h.train_.size(); ++n) {
      const std::uint8_t* p = h.train_.pixels.data() + n * s.size() + c * hw;
      for (std::int64_t q = 0; q < hw; ++q) {
        const double v = p[q] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    const double count = static_cast<double>(h.train_.size() * hw);
    const double mean = sum / count;
    h.mean_[c] = static_cast<float>(mean);
    h.std_[c] = static_cast<float>(std::sqrt(std::max(sq / count - mean * mean, 1e-12)));
  }
  return h;
}

fs::path dataset_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("AUTOSLIM_DATA"); env != nullptr && *env != '\0') return env;
  return "data";
}

}  // namespace autoslim
