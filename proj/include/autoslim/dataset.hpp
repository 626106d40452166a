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

// Image-classification datasets with a deterministic train/holdout split.
//
// Files under <root>:
//   mnist/train-images-idx3-ubyte, mnist/train-labels-idx1-ubyte
//   mnist/t10k-images-idx3-ubyte, mnist/t10k-labels-idx1-ubyte   (optional)
//   cifar-10-batches-bin/data_batch_{1..5}.bin
//   cifar-10-batches-bin/test_batch.bin                          (optional)
// A SHA256SUMS file next to the data, when present, is verified.

#ifndef AUTOSLIM_DATASET_HPP_
#define AUTOSLIM_DATASET_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoslim/netspec.hpp"
#include "autoslim/tensor.hpp"

namespace autoslim {

enum class DatasetName { kMnist, kCifar10, kSynthetic };

std::string_view to_string(DatasetName name);
DatasetName parse_dataset_name(std::string_view name);

class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& file, const std::string& what)
      : std::runtime_error(file + ": " + what), file_(file) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

// Raw uint8 images, CHW per sample.
struct Split {
  Shape3 shape;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;
  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

// Decoders. Each error names the file.
Split read_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
Split read_cifar_batches(const std::vector<std::filesystem::path>& files);

struct DatasetOptions {
  std::int64_t holdout_size = 5000;
  // Synthetic only.
  Shape3 synthetic_shape{1, 28, 28};
  std::int64_t synthetic_train = 3000;
  std::int64_t synthetic_test = 1000;
  int synthetic_classes = 10;
};

// Permission to read the test split. Only the reporting stage mints one.
class TestAccessKey {
 private:
  TestAccessKey() = default;
  friend class TestAccessGrant;
};

class DatasetHandle {
 public:
  DatasetName name() const { return name_; }
  std::uint64_t seed() const { return seed_; }
  Shape3 shape() const { return train_.shape; }
  int num_classes() const { return num_classes_; }
  const Split& train() const { return train_; }
  const Split& holdout() const { return holdout_; }
  std::int64_t test_size() const { return test_.size(); }
  const Split& test(const TestAccessKey&) const;
  // Indices into the original training file that form the holdout split.
  const std::vector<std::int64_t>& holdout_indices() const { return holdout_indices_; }
  const std::vector<float>& mean() const { return mean_; }
  const std::vector<float>& stddev() const { return std_; }
  // Stable identifier of the holdout (digest of its source indices).
  std::string holdout_id() const;

  // Normalized NCHW batch of the given samples. With `augment` (CIFAR only)
  // applies random crop with 4-pixel zero padding and horizontal flip.
  Tensor batch(const Split& split, std::span<const std::int64_t> indices, bool augment = false,
               std::mt19937_64* rng = nullptr) const;

  // Process-wide number of test() reads, for isolation checks.
  static std::int64_t test_reads();

 private:
  friend DatasetHandle load_dataset(DatasetName, const std::filesystem::path&, std::uint64_t,
                                    const DatasetOptions&);
  DatasetName name_ = DatasetName::kSynthetic;
  std::uint64_t seed_ = 0;
  int num_classes_ = 10;
  Split train_, holdout_, test_;
  std::vector<std::int64_t> holdout_indices_;
  std::vector<float> mean_, std_;
};

// Decodes, verifies, splits (holdout drawn from the training file with a
// seeded permutation) and computes per-channel mean/std over the remaining
// training samples.
DatasetHandle load_dataset(DatasetName name, const std::filesystem::path& root, std::uint64_t seed,
                           const DatasetOptions& options = {});

// `explicit_root` if nonempty, else $AUTOSLIM_DATA, else "data".
std::filesystem::path dataset_root(const std::string& explicit_root);

}  // namespace autoslim

#endif  // AUTOSLIM_DATASET_HPP_
