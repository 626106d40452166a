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

// End-to-end run: train_slim -> search -> select -> train_final -> report.
//
// Output directory layout:
//   run.json, spec.json, manifest.json
//   slim.ckpt, slim_log.csv                       train_slim
//   trace.csv, trace.meta.json                    search
//   selected.json                                 select
//   final_<i>.ckpt, baseline_<i>.ckpt,
//   final_log.csv                                 train_final
//   report.csv, report.txt                        report
//
// manifest.json records seeds, the dataset split, and per stage its status and
// the SHA-256 of every artifact. A stage is skipped on rerun when it and all
// stages before it are complete with matching hashes.

#ifndef AUTOSLIM_PIPELINE_HPP_
#define AUTOSLIM_PIPELINE_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "autoslim/dataset.hpp"
#include "autoslim/netspec.hpp"
#include "autoslim/resource.hpp"
#include "autoslim/slimtrain.hpp"
#include "json.hpp"

namespace autoslim {

inline constexpr std::array<const char*, 5> kStages = {"train_slim", "search", "select", "train_final", "report"};

// Either a resource limit or a width multiplier; a multiplier m stands for
// the madds of the uniform config apply_width_multiplier(m).
struct BudgetSpec {
  std::optional<Budget> budget;
  std::optional<double> width;
};

struct DatasetConfig {
  DatasetName name = DatasetName::kSynthetic;
  std::string root;  // empty: $AUTOSLIM_DATA, then "data"
  DatasetOptions options;
};

struct RunConfig {
  std::string spec_path;
  std::optional<WidthBounds> bounds;  // default: the spec's bounds
  DatasetConfig dataset;
  TrainSchedule slim_schedule;
  TrainSchedule final_schedule;
  std::vector<BudgetSpec> budgets;
  std::vector<std::uint64_t> seeds{0};
  EvalOptions eval;
  std::string output_dir;
  std::string model_name = "Model";
};

// A relative spec path resolves against `base_dir`; dataset root and output
// directory stay relative to the working directory.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A budget resolved against the spec, plus its width-multiplier baseline:
// the multiplier's own config, or the largest uniform config within limit.
struct ResolvedBudget {
  Budget budget;
  std::string label;
  ChannelConfig baseline;
  double baseline_multiplier = 0.0;
};

// Sorted by descending limit; all budgets must share one metric.
std::vector<ResolvedBudget> resolve_budgets(const NetworkSpec& spec, const WidthBounds& bounds,
                                            const std::vector<BudgetSpec>& budgets);

struct PipelineResult {
  std::filesystem::path output_dir;
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
};

// Runs one seed into `dir` (the config's output_dir when unset).
PipelineResult run_pipeline_seed(const RunConfig& config, std::uint64_t seed, const std::filesystem::path& dir,
                                 std::ostream* progress = nullptr);
// One run per seed: directly in output_dir for a single seed, else in
// output_dir/seed-<s>.
std::vector<PipelineResult> run_pipeline(const RunConfig& config, std::ostream* progress = nullptr);

// Runs the report stage of a finished run directory and returns the table.
// Refuses missing stages (listing them) and artifacts whose hash differs
// from the manifest.
std::string report(const std::filesystem::path& dir, std::ostream* progress = nullptr);

// Report cells.
std::string format_count(double value, bool params);
std::string format_multiplier(double m);
std::string format_report_row(const std::string& model, std::int64_t params, std::int64_t madds, double error_pct,
                              std::optional<double> gain_pct = std::nullopt);

}  // namespace autoslim

#endif  // AUTOSLIM_PIPELINE_HPP_
