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

#include "autoslim/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <map>
#include <memory>
#include <ostream>
#include <set>

#include "autoslim/checkpoint.hpp"
#include "autoslim/slimsearch.hpp"
#include "autoslim/util.hpp"

namespace autoslim {

namespace fs = std::filesystem;
using nlohmann::json;

// The only place that can mint a TestAccessKey.
class TestAccessGrant {
 public:
  static TestAccessKey key() { return TestAccessKey(); }
};

namespace {

constexpr const char* kRunFile = "run.json";
constexpr const char* kSpecFile = "spec.json";
constexpr const char* kManifestFile = "manifest.json";

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

json bounds_json(const WidthBounds& b) { return {{"lower", b.lower}, {"upper", b.upper}, {"groups", b.groups}}; }

BudgetSpec budget_from_json(const json& doc) {
  BudgetSpec b;
  if (doc.is_string()) {
    b.budget = parse_budget(doc.get<std::string>());
  } else if (doc.is_object() && doc.contains("width")) {
    b.width = doc["width"].get<double>();
  } else if (doc.is_object()) {
    b.budget = Budget{parse_metric(doc.at("metric").get<std::string>()), doc.at("limit").get<double>()};
  } else {
    throw PipelineError("budget must be \"metric=value\", {metric, limit} or {width}");
  }
  return b;
}

json budget_to_json(const BudgetSpec& b) {
  if (b.width) return {{"width", *b.width}};
  return {{"metric", std::string(to_string(b.budget->metric))}, {"limit", b.budget->limit}};
}

ChannelConfig uniform_config(const NetworkSpec& spec, int k) {
  ChannelConfig c;
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) c.active_groups[set.name] = k;
  return c;
}

json report_json(const ResourceReport& r) {
  return {{"madds", r.madds},
          {"params", r.params},
          {"memory", r.memory},
          {"model_size", r.model_size},
          {"latency_proxy", r.latency_proxy}};
}

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// One seed's run directory.
class Run {
 public:
  Run(RunConfig config, std::uint64_t seed, fs::path dir, std::ostream* progress)
      : config_(std::move(config)), seed_(seed), dir_(std::move(dir)), progress_(progress) {
    spec_ = load_spec(config_.spec_path);
    bounds_ = config_.bounds.value_or(spec_.bounds());
    validate_bounds(spec_, bounds_);
    budgets_ = resolve_budgets(spec_, bounds_, config_.budgets);
    config_.eval.calibration_seed = seed_;
    config_.slim_schedule.seed = seed_;
    config_.final_schedule.seed = seed_;
  }

  const fs::path& dir() const { return dir_; }

  // Writes run.json and spec.json; resets the manifest when they changed.
  void prepare() {
    fs::create_directories(dir_);
    RunConfig saved = config_;
    saved.spec_path = kSpecFile;
    saved.seeds = {seed_};
    saved.output_dir = ".";
    saved.dataset.root = dataset_root(config_.dataset.root).lexically_normal().string();
    if (fs::path(saved.dataset.root).is_relative()) saved.dataset.root = fs::absolute(saved.dataset.root).string();
    const std::string run_text = to_json(saved).dump(2) + "\n";
    const std::string spec_text = spec_.to_json().dump(2) + "\n";
    const std::string config_sha = sha256_hex(run_text + spec_text);
    manifest_ = read_manifest(dir_);
    if (manifest_.value("config_sha256", "") != config_sha) {
      manifest_ = json::object();
      manifest_["version"] = 1;
      manifest_["config_sha256"] = config_sha;
      manifest_["seed"] = seed_;
      manifest_["spec_hash"] = fmt::format("{:016x}", spec_.hash());
      manifest_["stages"] = json::object();
    }
    write_file(dir_ / kRunFile, run_text);
    write_file(dir_ / kSpecFile, spec_text);
    save_manifest();
  }

  void load_existing() { manifest_ = read_manifest(dir_); }

  static json read_manifest(const fs::path& dir) {
    const fs::path p = dir / kManifestFile;
    if (!fs::exists(p)) return json::object();
    try {
      return json::parse(read_file(p));
    } catch (const json::exception& e) {
      throw PipelineError(fmt::format("{}: {}", p.string(), e.what()));
    }
  }

  // Complete with every recorded artifact present and matching its hash.
  bool stage_valid(const std::string& stage, std::string* why = nullptr) const {
    if (!manifest_.contains("stages") || !manifest_["stages"].contains(stage)) {
      if (why) *why = "not run";
      return false;
    }
    const auto& entry = manifest_["stages"][stage];
    if (entry.value("status", "") != "complete") {
      if (why) *why = "status " + entry.value("status", std::string("unknown"));
      return false;
    }
    for (const auto& [name, sha] : entry.at("artifacts").items()) {
      const fs::path p = dir_ / name;
      if (!fs::exists(p)) {
        if (why) *why = name + " missing";
        return false;
      }
      if (sha256_file(p) != sha.get<std::string>()) {
        if (why) *why = name + " does not match its recorded SHA-256";
        return false;
      }
    }
    return true;
  }

  void run_stage(const std::string& stage) {
    log("{}: running", stage);
    manifest_["stages"][stage] = {{"status", "running"}, {"started", now_utc()}};
    save_manifest();
    std::vector<std::string> artifacts;
    try {
      if (stage == "train_slim") artifacts = train_slim();
      else if (stage == "search") artifacts = search();
      else if (stage == "select") artifacts = select();
      else if (stage == "train_final") artifacts = train_final();
      else artifacts = report_stage();
    } catch (const std::exception& e) {
      manifest_["stages"][stage]["status"] = "failed";
      manifest_["stages"][stage]["error"] = e.what();
      save_manifest();
      throw;
    }
    json hashes = json::object();
    for (const auto& a : artifacts) hashes[a] = sha256_file(dir_ / a);
    auto& entry = manifest_["stages"][stage];
    entry["status"] = "complete";
    entry["finished"] = now_utc();
    entry["artifacts"] = hashes;
    if (data_) manifest_["dataset"] = dataset_json();
    save_manifest();
    log("{}: done", stage);
  }

  std::string report_text() const { return report_text_; }

 private:
  template <typename... Args>
  void log(fmt::format_string<Args...> f, Args&&... args) {
    if (progress_) *progress_ << "[" << dir_.filename().string() << "] " << fmt::format(f, std::forward<Args>(args)...)
                              << std::endl;
  }

  void save_manifest() { write_file(dir_ / kManifestFile, manifest_.dump(2) + "\n"); }

  const DatasetHandle& data() {
    if (!data_) {
      data_ = std::make_unique<DatasetHandle>(load_dataset(config_.dataset.name, dataset_root(config_.dataset.root),
                                                           seed_, config_.dataset.options));
      if (data_->shape() != spec_.input_shape())
        throw PipelineError(fmt::format("dataset {} has input {}x{}x{}, spec expects {}x{}x{}",
                                        to_string(data_->name()), data_->shape().c, data_->shape().h,
                                        data_->shape().w, spec_.input_shape().c, spec_.input_shape().h,
                                        spec_.input_shape().w));
      if (data_->num_classes() != spec_.num_classes())
        throw PipelineError(fmt::format("dataset has {} classes, spec expects {}", data_->num_classes(),
                                        spec_.num_classes()));
    }
    return *data_;
  }

  json dataset_json() const {
    return {{"name", std::string(to_string(data_->name()))},
            {"train", data_->train().size()},
            {"holdout", data_->holdout().size()},
            {"test", data_->test_size()},
            {"holdout_id", data_->holdout_id()}};
  }

  std::vector<std::string> train_slim() {
    auto weights = init_weights<float>(spec_, bounds_, seed_);
    TrainOptions opts;
    opts.eval = config_.eval;
    opts.on_epoch = [&](int epoch, const SlimmableWeights&) { log("train_slim: epoch {}", epoch); };
    const auto log_rows = train_slimmable(spec_, bounds_, weights, data(), config_.slim_schedule, opts);
    save_checkpoint((dir_ / "slim.ckpt").string(), spec_, weights);
    write_file(dir_ / "slim_log.csv", training_log_csv(log_rows));
    return {"slim.ckpt", "slim_log.csv"};
  }

  std::vector<std::string> search() {
    auto weights = load_checkpoint((dir_ / "slim.ckpt").string(), spec_);
    SlimmableModelEstimator estimator(spec_, bounds_, weights, data(), config_.eval);
    const CostFn cost_fn = [&](const ChannelConfig& c) { return cost(spec_, bounds_, c); };
    auto trace = greedy_search(estimator, spec_, bounds_, cost_fn, budgets_.back().budget);
    trace.metadata["seed"] = seed_;
    trace.metadata["spec"] = spec_.name();
    trace.metadata["spec_hash"] = fmt::format("{:016x}", spec_.hash());
    trace.metadata["bounds"] = bounds_json(bounds_);
    trace.metadata["checkpoint_sha256"] = sha256_file(dir_ / "slim.ckpt");
    trace.metadata["holdout_id"] = data().holdout_id();
    write_file(dir_ / "trace.csv", trace_csv(trace));
    write_file(dir_ / "trace.meta.json", trace.metadata.dump(2) + "\n");
    return {"trace.csv", "trace.meta.json"};
  }

  std::vector<std::string> select() {
    const auto trace = parse_trace_csv(read_file(dir_ / "trace.csv"));
    json doc = json::array();
    for (size_t i = 0; i < budgets_.size(); ++i) {
      const auto& b = budgets_[i];
      const auto s = select_config(trace, b.budget);
      doc.push_back({{"index", i},
                     {"budget", to_string(b.budget)},
                     {"label", b.label},
                     {"step", s.step},
                     {"config", config_to_json(s.config)},
                     {"cost", report_json(s.report)},
                     {"search_accuracy", s.accuracy},
                     {"baseline",
                      {{"multiplier", b.baseline_multiplier},
                       {"config", config_to_json(b.baseline)},
                       {"cost", report_json(cost(spec_, bounds_, b.baseline))}}}});
    }
    write_file(dir_ / "selected.json", doc.dump(2) + "\n");
    return {"selected.json"};
  }

  json selected() const { return json::parse(read_file(dir_ / "selected.json")); }

  std::vector<std::string> train_final() {
    const auto sel = selected();
    std::string log_csv = "model,index,epoch,lr,train_loss,holdout_acc,wallclock_s\n";
    std::vector<std::string> artifacts;
    TrainOptions opts;
    opts.eval = config_.eval;
    opts.evaluate_each_epoch = false;
    for (const auto& entry : sel) {
      const int i = entry.at("index").get<int>();
      const std::pair<const char*, json> models[] = {{"autoslim", entry.at("config")},
                                                     {"baseline", entry.at("baseline").at("config")}};
      for (const auto& [kind, cfg] : models) {
        log("train_final: {} {}", kind, i);
        const auto r = train_from_scratch(spec_, bounds_, config_from_json(cfg), data(), config_.final_schedule,
                                          opts);
        for (const auto& e : r.log)
          log_csv += fmt::format("{},{},{},{:.6g},{:.6f},{},{:.2f}\n", kind, i, e.epoch, e.lr, e.train_loss,
                                 std::isnan(e.acc_max) ? std::string() : fmt::format("{:.4f}", e.acc_max),
                                 e.wallclock_s);
        const std::string name = fmt::format("{}_{}.ckpt", std::string(kind) == "autoslim" ? "final" : "baseline", i);
        save_checkpoint((dir_ / name).string(), spec_, r.weights);
        artifacts.push_back(name);
      }
    }
    write_file(dir_ / "final_log.csv", log_csv);
    artifacts.push_back("final_log.csv");
    return artifacts;
  }

  std::vector<std::string> report_stage() {
    const auto sel = selected();
    const auto& d = data();
    if (d.test_size() == 0)
      throw PipelineError(fmt::format("dataset {} has no test split under {}", to_string(d.name()),
                                      dataset_root(config_.dataset.root).string()));
    const Split& test = d.test(TestAccessGrant::key());
    std::string csv = "model,kind,budget,multiplier,params,madds,test_error,gain,config_json\n";
    std::string text = fmt::format("{} on {} (seed {}, {} test images)\n", config_.model_name, to_string(d.name()),
                                   seed_, test.size());
    for (const auto& entry : sel) {
      const int i = entry.at("index").get<int>();
      const auto error_of = [&](const std::string& file, const ChannelConfig& c) {
        auto w = load_checkpoint((dir_ / file).string(), spec_);
        return 100.0 * (1.0 - evaluate_accuracy(spec_, bounds_, w, c, d, test, config_.eval));
      };
      const auto base_cfg = config_from_json(entry.at("baseline").at("config"));
      const auto slim_cfg = config_from_json(entry.at("config"));
      const double m = entry.at("baseline").at("multiplier").get<double>();
      const double base_err = error_of(fmt::format("baseline_{}.ckpt", i), base_cfg);
      const double slim_err = error_of(fmt::format("final_{}.ckpt", i), slim_cfg);
      const auto base_cost = cost(spec_, bounds_, base_cfg);
      const auto slim_cost = cost(spec_, bounds_, slim_cfg);
      const std::string base_name = fmt::format("{} {}", config_.model_name, format_multiplier(m));
      const std::string slim_name = "AutoSlim-" + config_.model_name;
      const std::string budget = entry.at("budget").get<std::string>();
      csv += fmt::format("{},baseline,{},{},{},{},{:.4f},,{}\n", csv_escape(base_name), budget, m, base_cost.params,
                         base_cost.madds, base_err, csv_escape(config_to_json(base_cfg).dump()));
      csv += fmt::format("{},autoslim,{},{},{},{},{:.4f},{:.4f},{}\n", csv_escape(slim_name), budget, m,
                         slim_cost.params, slim_cost.madds, slim_err, base_err - slim_err,
                         csv_escape(config_to_json(slim_cfg).dump()));
      text += fmt::format("budget {}\n", entry.at("label").get<std::string>());
      text += "  " + format_report_row(base_name, base_cost.params, base_cost.madds, base_err) + "\n";
      text += "  " + format_report_row(slim_name, slim_cost.params, slim_cost.madds, slim_err, base_err - slim_err) +
              "\n";
    }
    write_file(dir_ / "report.csv", csv);
    write_file(dir_ / "report.txt", text);
    report_text_ = text;
    return {"report.csv", "report.txt"};
  }

  RunConfig config_;
  std::uint64_t seed_;
  fs::path dir_;
  std::ostream* progress_;
  NetworkSpec spec_;
  WidthBounds bounds_;
  std::vector<ResolvedBudget> budgets_;
  json manifest_;
  std::unique_ptr<DatasetHandle> data_;
  std::string report_text_;
};

}  // namespace

RunConfig parse_run_config(const json& doc, const fs::path& base_dir) {
  static const std::set<std::string> kKeys = {"spec",    "bounds", "dataset", "slim_schedule", "final_schedule",
                                              "budgets", "seeds",  "eval",    "output_dir",    "model_name"};
  if (!doc.is_object()) throw PipelineError("run config must be a JSON object");
  for (const auto& [key, _] : doc.items())
    if (!kKeys.count(key)) throw PipelineError("unknown run config key '" + key + "'");
  RunConfig c;
  try {
    c.spec_path = resolve(base_dir, doc.at("spec").get<std::string>()).string();
    if (doc.contains("bounds")) {
      const auto& b = doc["bounds"];
      c.bounds = WidthBounds{b.at("lower").get<double>(), b.at("upper").get<double>(), b.at("groups").get<int>()};
    }
    if (doc.contains("dataset")) {
      const auto& d = doc["dataset"];
      c.dataset.name = parse_dataset_name(d.at("name").get<std::string>());
      c.dataset.root = d.value("root", std::string());
      auto& o = c.dataset.options;
      o.holdout_size = d.value("holdout_size", o.holdout_size);
      o.synthetic_train = d.value("synthetic_train", o.synthetic_train);
      o.synthetic_test = d.value("synthetic_test", o.synthetic_test);
      o.synthetic_classes = d.value("synthetic_classes", o.synthetic_classes);
      if (d.contains("synthetic_shape")) {
        const auto s = d["synthetic_shape"].get<std::vector<int>>();
        if (s.size() != 3) throw PipelineError("synthetic_shape must be [C, H, W]");
        o.synthetic_shape = Shape3{s[0], s[1], s[2]};
      }
    }
    if (doc.contains("slim_schedule")) c.slim_schedule = schedule_from_json(doc["slim_schedule"]);
    if (doc.contains("final_schedule")) c.final_schedule = schedule_from_json(doc["final_schedule"]);
    for (const auto& b : doc.at("budgets")) c.budgets.push_back(budget_from_json(b));
    if (doc.contains("seeds")) c.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
    if (doc.contains("eval")) {
      c.eval.calibration_samples = doc["eval"].value("calibration_samples", c.eval.calibration_samples);
      c.eval.batch_size = doc["eval"].value("batch_size", c.eval.batch_size);
    }
    c.output_dir = doc.value("output_dir", std::string("runs/default"));
    c.model_name = doc.value("model_name", c.model_name);
  } catch (const json::exception& e) {
    throw PipelineError(std::string("run config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw PipelineError(std::string("run config: ") + e.what());
  }
  if (c.budgets.empty()) throw PipelineError("run config needs at least one budget");
  if (c.seeds.empty()) throw PipelineError("run config needs at least one seed");
  if (c.eval.calibration_samples < 1 || c.eval.batch_size < 1)
    throw PipelineError("eval sizes must be positive");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw PipelineError(fmt::format("{}: {}", path.string(), e.what()));
  }
  return parse_run_config(doc, path.parent_path());
}

json to_json(const RunConfig& c) {
  json doc;
  doc["spec"] = c.spec_path;
  if (c.bounds) doc["bounds"] = bounds_json(*c.bounds);
  const auto& o = c.dataset.options;
  doc["dataset"] = {{"name", std::string(to_string(c.dataset.name))},
                    {"root", c.dataset.root},
                    {"holdout_size", o.holdout_size},
                    {"synthetic_train", o.synthetic_train},
                    {"synthetic_test", o.synthetic_test},
                    {"synthetic_classes", o.synthetic_classes},
                    {"synthetic_shape", {o.synthetic_shape.c, o.synthetic_shape.h, o.synthetic_shape.w}}};
  doc["slim_schedule"] = to_json(c.slim_schedule);
  doc["final_schedule"] = to_json(c.final_schedule);
  doc["budgets"] = json::array();
  for (const auto& b : c.budgets) doc["budgets"].push_back(budget_to_json(b));
  doc["seeds"] = c.seeds;
  doc["eval"] = {{"calibration_samples", c.eval.calibration_samples}, {"batch_size", c.eval.batch_size}};
  doc["output_dir"] = c.output_dir;
  doc["model_name"] = c.model_name;
  return doc;
}

std::vector<ResolvedBudget> resolve_budgets(const NetworkSpec& spec, const WidthBounds& bounds,
                                            const std::vector<BudgetSpec>& budgets) {
  if (budgets.empty()) throw PipelineError("no budgets given");
  std::vector<ResolvedBudget> out;
  for (const auto& b : budgets) {
    ResolvedBudget r;
    if (b.width) {
      r.baseline = apply_width_multiplier(spec, bounds, *b.width);
      r.baseline_multiplier = bounds.upper * r.baseline.active_groups.begin()->second / bounds.groups;
      r.budget = Budget{Metric::kMadds, static_cast<double>(cost(spec, bounds, r.baseline).madds)};
      r.label = fmt::format("{} ({})", format_multiplier(*b.width), to_string(r.budget));
    } else {
      r.budget = *b.budget;
      r.label = to_string(r.budget);
      int k = bounds.groups;
      while (k >= min_groups(bounds) &&
             !budget_satisfied(cost(spec, bounds, uniform_config(spec, k)), r.budget))
        --k;
      if (k < min_groups(bounds))
        throw PipelineError(fmt::format("budget {} is below the narrowest uniform width", r.label));
      r.baseline = uniform_config(spec, k);
      r.baseline_multiplier = bounds.upper * k / bounds.groups;
    }
    if (!out.empty() && out.front().budget.metric != r.budget.metric)
      throw PipelineError("all budgets of a run must use the same metric");
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ResolvedBudget& a, const ResolvedBudget& b) { return a.budget.limit > b.budget.limit; });
  return out;
}

PipelineResult run_pipeline_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir,
                                 std::ostream* progress) {
  Run run(config, seed, dir.empty() ? fs::path(config.output_dir) : dir, progress);
  run.prepare();
  PipelineResult result;
  result.output_dir = run.dir();
  bool upstream_ran = false;
  for (const char* stage : kStages) {
    if (!upstream_ran && run.stage_valid(stage)) {
      result.skipped.push_back(stage);
      continue;
    }
    run.run_stage(stage);
    result.ran.push_back(stage);
    upstream_ran = true;
  }
  return result;
}

std::vector<PipelineResult> run_pipeline(const RunConfig& config, std::ostream* progress) {
  std::vector<PipelineResult> results;
  for (std::uint64_t seed : config.seeds) {
    const fs::path dir = config.seeds.size() == 1 ? fs::path(config.output_dir)
                                                  : fs::path(config.output_dir) / fmt::format("seed-{}", seed);
    results.push_back(run_pipeline_seed(config, seed, dir, progress));
  }
  return results;
}

std::string report(const fs::path& dir, std::ostream* progress) {
  const json manifest = Run::read_manifest(dir);
  const bool have_run = fs::exists(dir / kRunFile) && fs::exists(dir / kSpecFile) && manifest.contains("stages");
  std::vector<std::string> missing;
  std::unique_ptr<Run> run;
  if (have_run) {
    const RunConfig config = load_run_config(dir / kRunFile);
    run = std::make_unique<Run>(config, config.seeds.front(), dir, progress);
    run->load_existing();
    for (size_t i = 0; i + 1 < kStages.size(); ++i) {
      std::string why;
      if (!run->stage_valid(kStages[i], &why)) {
        if (why.find("SHA-256") != std::string::npos)
          throw PipelineError(fmt::format("{}: stage {}: {}", dir.string(), kStages[i], why));
        missing.push_back(kStages[i]);
      }
    }
  } else {
    missing.assign(kStages.begin(), kStages.end() - 1);
  }
  if (!missing.empty()) {
    if (!fs::exists(dir / "report.csv")) missing.push_back(kStages.back());
    std::string list;
    for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
    throw PipelineError(fmt::format("{}: missing stages: {}", dir.string(), list));
  }
  run->run_stage(kStages.back());
  return run->report_text();
}

std::string format_count(double value, bool params) {
  if (params) return value >= 1e5 ? fmt::format("{:.1f}M", value / 1e6) : fmt::format("{:.1f}K", value / 1e3);
  if (value >= 1e9) return fmt::format("{:.1f}G", value / 1e9);
  if (value >= 1e7) return fmt::format("{:.0f}M", value / 1e6);
  if (value >= 1e6) return fmt::format("{:.1f}M", value / 1e6);
  return fmt::format("{:.0f}K", value / 1e3);
}

std::string format_multiplier(double m) {
  const double tenths = m * 10.0;
  if (std::abs(tenths - std::round(tenths)) < 1e-9) return fmt::format("{:.1f}×", m);
  return fmt::format("{:.2f}×", m);
}

std::string format_report_row(const std::string& model, std::int64_t params, std::int64_t madds, double error_pct,
                              std::optional<double> gain_pct) {
  std::string err = fmt::format("{:.1f}", error_pct);
  if (gain_pct) err += fmt::format(" ({:.1f})", *gain_pct);
  return fmt::format("{}, {} params, {}, {} err", model, format_count(static_cast<double>(params), true),
                     format_count(static_cast<double>(madds), false), err);
}

}  // namespace autoslim
