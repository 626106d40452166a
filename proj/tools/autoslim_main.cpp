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

// autoslim command-line driver.

#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "autoslim/checkpoint.hpp"
#include "autoslim/pipeline.hpp"
#include "autoslim/resource.hpp"
#include "autoslim/slimsearch.hpp"
#include "autoslim/slimtrain.hpp"
#include "autoslim/util.hpp"

namespace fs = std::filesystem;
using namespace autoslim;
using nlohmann::json;

namespace {

struct DataArgs {
  std::string dataset = "synthetic";
  std::string data_root;
  std::uint64_t seed = 0;
  std::int64_t holdout = -1;
};

void add_data_options(CLI::App* cmd, DataArgs& a) {
  cmd->add_option("--dataset", a.dataset, "mnist, cifar10 or synthetic");
  cmd->add_option("--data-root", a.data_root, "dataset directory (default $AUTOSLIM_DATA, then ./data)");
  cmd->add_option("--seed", a.seed, "seed for the holdout split, init and sampling");
  cmd->add_option("--holdout", a.holdout, "holdout size carved from the training file");
}

DatasetHandle open_data(const DataArgs& a) {
  DatasetOptions o;
  if (a.holdout >= 0) o.holdout_size = a.holdout;
  return load_dataset(parse_dataset_name(a.dataset), dataset_root(a.data_root), a.seed, o);
}

WidthBounds bounds_or(const NetworkSpec& spec, const std::string& text) {
  if (text.empty()) return spec.bounds();
  WidthBounds b;
  if (std::sscanf(text.c_str(), "%lf,%lf,%d", &b.lower, &b.upper, &b.groups) != 3)
    throw std::invalid_argument("--bounds expects lower,upper,groups");
  validate_bounds(spec, b);
  return b;
}

// Settings recorded by train-slim next to its checkpoint.
struct SlimRun {
  std::string spec;
  std::string bounds;
  DataArgs data;
};

void write_slim_run(const fs::path& dir, const SlimRun& r) {
  const json doc = {{"spec", fs::absolute(r.spec).string()},
                    {"bounds", r.bounds},
                    {"dataset", r.data.dataset},
                    {"data_root", r.data.data_root},
                    {"seed", r.data.seed},
                    {"holdout", r.data.holdout}};
  write_file(dir / "train_slim.json", doc.dump(2) + "\n");
}

std::optional<SlimRun> read_slim_run(const fs::path& dir) {
  const fs::path p = dir / "train_slim.json";
  if (!fs::exists(p)) return std::nullopt;
  const json doc = json::parse(read_file(p));
  SlimRun r;
  r.spec = doc.at("spec").get<std::string>();
  r.bounds = doc.value("bounds", std::string());
  r.data.dataset = doc.at("dataset").get<std::string>();
  r.data.data_root = doc.value("data_root", std::string());
  r.data.seed = doc.at("seed").get<std::uint64_t>();
  r.data.holdout = doc.value("holdout", std::int64_t{-1});
  return r;
}

ChannelConfig read_config_arg(const std::string& arg) {
  const std::string text = fs::exists(arg) ? read_file(arg) : arg;
  json doc = json::parse(text);
  if (doc.contains("config")) doc = doc["config"];
  return config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AutoSlim: one-shot channel-number search"};
  app.require_subcommand(1);

  // train-slim
  SlimRun slim;
  TrainSchedule slim_sched;
  std::string slim_out = "runs/slim";
  auto* train_slim = app.add_subcommand("train-slim", "train a slimmable network");
  train_slim->add_option("--spec", slim.spec, "network spec JSON")->required();
  train_slim->add_option("--bounds", slim.bounds, "lower,upper,groups (default: the spec's)");
  add_data_options(train_slim, slim.data);
  train_slim->add_option("--epochs", slim_sched.epochs);
  train_slim->add_option("--batch-size", slim_sched.batch_size);
  train_slim->add_option("--lr", slim_sched.lr);
  train_slim->add_option("--n-random", slim_sched.n_random_widths, "random widths per step");
  train_slim->add_option("--out", slim_out, "output directory");

  // search
  std::string search_ckpt, search_budget, search_out = ".";
  SlimRun search_run;
  EvalOptions eval;
  auto* search = app.add_subcommand("search", "greedy slimming of a trained slimmable network");
  search->add_option("--ckpt", search_ckpt, "slimmable checkpoint")->required();
  search->add_option("--budget", search_budget, "stop budget, e.g. madds=2.0e7")->required();
  search->add_option("--spec", search_run.spec, "network spec (default: recorded by train-slim)");
  search->add_option("--bounds", search_run.bounds);
  add_data_options(search, search_run.data);
  search->add_option("--calibration-samples", eval.calibration_samples);
  search->add_option("--eval-batch", eval.batch_size);
  search->add_option("--out", search_out, "output directory");

  // select
  std::string select_trace, select_budget;
  auto* select = app.add_subcommand("select", "pick the config for a budget from a search trace");
  select->add_option("--trace", select_trace, "trace.csv")->required();
  select->add_option("--budget", select_budget, "metric=value")->required();

  // train-final
  std::string final_spec, final_config, final_bounds, final_out = "runs/final";
  DataArgs final_data;
  TrainSchedule final_sched;
  auto* train_final = app.add_subcommand("train-final", "train a fixed config from scratch");
  train_final->add_option("--spec", final_spec)->required();
  train_final->add_option("--config", final_config, "config JSON (file or inline)")->required();
  train_final->add_option("--bounds", final_bounds);
  add_data_options(train_final, final_data);
  train_final->add_option("--epochs", final_sched.epochs);
  train_final->add_option("--batch-size", final_sched.batch_size);
  train_final->add_option("--lr", final_sched.lr);
  train_final->add_option("--out", final_out);

  // report
  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "evaluate a finished run on the test split");
  report_cmd->add_option("dir", report_dir, "run directory")->required();

  // cost-report
  std::string cost_spec, cost_bounds;
  double cost_width = 1.0;
  bool cost_reference = false;
  auto* cost_cmd = app.add_subcommand("cost-report", "per-layer madds and params");
  cost_cmd->add_option("--spec", cost_spec)->required();
  cost_cmd->add_option("--width", cost_width, "uniform width multiplier");
  cost_cmd->add_option("--bounds", cost_bounds);
  cost_cmd->add_flag("--reference", cost_reference, "use the architecture's own width-multiplier rounding");

  // run
  std::string run_config;
  std::string run_root;
  auto* run_cmd = app.add_subcommand("run", "run the whole pipeline, resuming completed stages");
  run_cmd->add_option("--config", run_config, "run configuration JSON")->required();
  run_cmd->add_option("--data-root", run_root);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_slim) {
      const auto spec = load_spec(slim.spec);
      const auto bounds = bounds_or(spec, slim.bounds);
      slim_sched.seed = slim.data.seed;
      validate(slim_sched);
      const auto data = open_data(slim.data);
      auto weights = init_weights<float>(spec, bounds, slim.data.seed);
      TrainOptions opts;
      opts.eval.calibration_seed = slim.data.seed;
      opts.on_epoch = [](int epoch, const SlimmableWeights&) { std::cerr << "epoch " << epoch << " done\n"; };
      const auto log = train_slimmable(spec, bounds, weights, data, slim_sched, opts);
      fs::create_directories(slim_out);
      save_checkpoint((fs::path(slim_out) / "slim.ckpt").string(), spec, weights);
      write_file(fs::path(slim_out) / "slim_log.csv", training_log_csv(log));
      write_slim_run(slim_out, slim);
      std::cout << training_log_csv(log);
    } else if (*search) {
      SlimRun r = read_slim_run(fs::path(search_ckpt).parent_path()).value_or(SlimRun{});
      if (!search_run.spec.empty()) r.spec = search_run.spec;
      if (!search_run.bounds.empty()) r.bounds = search_run.bounds;
      for (auto* opt : {"--dataset", "--data-root", "--seed", "--holdout"})
        if (search->count(opt) > 0 || r.spec.empty()) {
          r.data = search_run.data;
          break;
        }
      if (r.spec.empty()) throw std::invalid_argument("--spec is required when the checkpoint has no train_slim.json");
      const auto spec = load_spec(r.spec);
      const auto bounds = bounds_or(spec, r.bounds);
      const auto data = open_data(r.data);
      auto weights = load_checkpoint(search_ckpt, spec);
      eval.calibration_seed = r.data.seed;
      SlimmableModelEstimator estimator(spec, bounds, weights, data, eval);
      const CostFn cost_fn = [&](const ChannelConfig& c) { return cost(spec, bounds, c); };
      auto trace = greedy_search(estimator, spec, bounds, cost_fn, parse_budget(search_budget));
      trace.metadata["seed"] = r.data.seed;
      trace.metadata["spec"] = spec.name();
      trace.metadata["checkpoint_sha256"] = sha256_file(search_ckpt);
      trace.metadata["holdout_id"] = data.holdout_id();
      fs::create_directories(search_out);
      write_file(fs::path(search_out) / "trace.csv", trace_csv(trace));
      write_file(fs::path(search_out) / "trace.meta.json", trace.metadata.dump(2) + "\n");
      const auto& last = trace.steps.back();
      std::cout << fmt::format("{} steps; final madds {} accuracy {:.4f}\n", trace.steps.size(), last.report.madds,
                               last.accuracy);
    } else if (*select) {
      const auto trace = parse_trace_csv(read_file(select_trace));
      const auto s = select_config(trace, parse_budget(select_budget));
      const json out = {{"step", s.step},
                        {"config", config_to_json(s.config)},
                        {"madds", s.report.madds},
                        {"params", s.report.params},
                        {"memory", s.report.memory},
                        {"model_size", s.report.model_size},
                        {"latency_proxy", s.report.latency_proxy},
                        {"accuracy", s.accuracy}};
      std::cout << out.dump(2) << "\n";
    } else if (*train_final) {
      const auto spec = load_spec(final_spec);
      const auto bounds = bounds_or(spec, final_bounds);
      const auto config = read_config_arg(final_config);
      final_sched.seed = final_data.seed;
      validate(final_sched);
      const auto data = open_data(final_data);
      TrainOptions opts;
      opts.eval.calibration_seed = final_data.seed;
      const auto r = train_from_scratch(spec, bounds, config, data, final_sched, opts);
      fs::create_directories(final_out);
      save_checkpoint((fs::path(final_out) / "final.ckpt").string(), spec, r.weights);
      write_file(fs::path(final_out) / "final_log.csv", training_log_csv(r.log));
      std::cout << fmt::format("holdout accuracy {:.4f}\n", r.holdout_accuracy);
    } else if (*report_cmd) {
      std::cout << report(report_dir, &std::cerr);
    } else if (*cost_cmd) {
      const auto spec = load_spec(cost_spec);
      ChannelWidths widths;
      if (cost_reference) {
        widths = reference_widths(spec, cost_width);
      } else {
        const auto bounds = bounds_or(spec, cost_bounds);
        widths = active_channels(spec, bounds, apply_width_multiplier(spec, bounds, cost_width));
      }
      std::cout << cost_report_csv(spec, widths, spec.input_shape());
    } else if (*run_cmd) {
      auto config = load_run_config(run_config);
      if (!run_root.empty()) config.dataset.root = run_root;
      for (const auto& r : run_pipeline(config, &std::cerr)) {
        std::cout << r.output_dir.string() << ": ran " << r.ran.size() << ", skipped " << r.skipped.size() << "\n";
        std::cout << read_file(r.output_dir / "report.txt");
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
