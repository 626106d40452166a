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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. Arguments select a subset, e.g. `acceptance 1 7`.

#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <set>

#include "autoslim/pipeline.hpp"
#include "autoslim/slimsearch.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "random_specs.hpp"
#include "specs.hpp"

using namespace autoslim;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double rel_gap(double value, double target) { return std::abs(value - target) / target; }

fs::path data_root() {
  if (const char* env = std::getenv("AUTOSLIM_DATA"); env != nullptr && *env != '\0') return env;
  return fs::path(AUTOSLIM_SOURCE_DIR) / "data";
}

fs::path work_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("autoslim_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

ChannelConfig uniform(const NetworkSpec& spec, int k) {
  ChannelConfig c;
  for (const auto& set : spec.channel_sets())
    if (set.slimmable) c.active_groups[set.name] = k;
  return c;
}

ChannelWidths widths_of(const NetworkSpec& spec, const WidthBounds& b, const ChannelConfig& c) {
  ChannelWidths w;
  for (const auto& set : spec.channel_sets()) {
    const int g = static_cast<int>(std::lround(set.base_channels * b.upper)) / b.groups;
    w[set.name] = set.slimmable ? g * c.active_groups.at(set.name) : set.base_channels;
  }
  return w;
}

Outcome flops_oracle() {
  std::mt19937_64 rng(2026);
  int exact = 0;
  std::string first_miss;
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = NetworkSpec::from_json(test_specs::random_spec(rng));
    const auto b = spec.bounds();
    const auto config = sample_random_config(spec, b, rng);
    const auto got = cost(spec, b, config).madds;
    const auto want = oracle::brute_force_madds(spec, widths_of(spec, b, config));
    if (got == want) ++exact;
    else if (first_miss.empty()) first_miss = fmt::format(" (trial {}: {} vs {})", trial, got, want);
  }
  return {exact == 50, fmt::format("{}/50 random specs exact{}", exact, first_miss)};
}

Outcome mobilenet_v2_static() {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2.json"));
  const auto one = cost(spec, reference_widths(spec, 1.0), {3, 224, 224});
  const auto tq = cost(spec, reference_widths(spec, 0.75), {3, 224, 224});
  const bool ok = rel_gap(one.madds, 300e6) <= 0.02 && rel_gap(one.params, 3.5e6) <= 0.02 &&
                  rel_gap(tq.madds, 209e6) <= 0.03 && rel_gap(tq.params, 2.6e6) <= 0.03 &&
                  rel_gap(one.memory, 10.2e6) <= 0.15;
  return {ok, fmt::format("1.0x {:.1f}M madds {:.2f}M params {:.2f}M memory; 0.75x {:.1f}M madds {:.2f}M params",
                          one.madds / 1e6, one.params / 1e6, one.memory / 1e6, tq.madds / 1e6, tq.params / 1e6)};
}

Outcome mobilenet_v2_cifar_static() {
  const auto spec = parse_spec(test_specs::shipped("mobilenet_v2_cifar.json"));
  bool ok = true;
  std::string detail;
  for (auto [m, target] : {std::pair{1.0, 88e6}, {0.75, 59e6}, {0.5, 28e6}}) {
    const auto r = cost(spec, reference_widths(spec, m), {3, 32, 32});
    ok &= rel_gap(r.madds, target) <= 0.03;
    detail += fmt::format("{}{}x {:.1f}M", detail.empty() ? "" : ", ", m, r.madds / 1e6);
  }
  return {ok, detail + " madds (targets 88/59/28M)"};
}

Outcome slice_consistency() {
  const auto spec = parse_spec(test_specs::kToy);
  const auto& b = spec.bounds();
  auto w = init_weights<float>(spec, b, 7);
  test_grad::perturb(w, 8);
  const auto x = test_grad::random_images<float>(8, spec.input_shape(), 9);
  std::mt19937_64 rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto ch = resolve_channels(spec, b, sample_random_config(spec, b, rng));
    const auto alone = oracle::extract_standalone(spec, w, ch);
    for (BnMode mode : {BnMode::kEval, BnMode::kTrain}) {
      const auto s = forward(spec, w, ch, x, mode);
      const auto a = forward(spec, alone, ch, x, mode);
      for (std::int64_t e = 0; e < s.numel(); ++e)
        worst = std::max(worst, std::abs(double{s[e]} - a[e]) / std::max(1.0, std::abs(double{a[e]})));
    }
  }
  return {worst <= 1e-6, fmt::format("20 configs, max relative gap {:.2e}", worst)};
}

Outcome gradients() {
  double worst = 0.0;
  std::string where;
  int tensors = 0;
  for (const auto* doc : {&test_specs::kAllKinds, &test_specs::kHiddenFc})
    for (LossKind kind : {LossKind::kHardXent, LossKind::kSoftXent})
      for (const auto& r : test_grad::gradient_check(*doc, kind)) {
        ++tensors;
        if (r.rel >= worst) {
          worst = r.rel;
          where = r.name;
        }
      }
  return {worst < 1e-4, fmt::format("{} tensor checks over all layer kinds and both losses, max rel error {:.2e} ({})",
                                    tensors, worst, where)};
}

// The stream is standardized to exact mean 0 / variance 1 in double, and each
// output channel of a 1x1 conv maps it to a_c x + b_c, so the BN input moments
// are exactly b_c and a_c^2.
Outcome bn_recalibration() {
  const auto spec = parse_spec(test_specs::kSingleBnPointwise);
  const auto& b = spec.bounds();
  auto w = init_weights<float>(spec, b, 71);
  auto& conv = w.layers[0];
  const int channels = conv.weight.dim(0);
  for (int c = 0; c < channels; ++c) {
    conv.weight[c] = 0.5f + 0.25f * c;
    conv.bias[c] = -1.0f + 0.5f * c;
  }
  const int n = 2048, pixels = 16;
  std::mt19937_64 rng(72);
  std::gamma_distribution<double> skewed(2.0, 1.0);
  std::vector<double> raw(static_cast<size_t>(n) * pixels);
  for (auto& v : raw) v = skewed(rng);
  double mean = 0, var = 0;
  for (double v : raw) mean += v;
  mean /= raw.size();
  for (double v : raw) var += (v - mean) * (v - mean);
  var /= raw.size();
  std::vector<BasicTensor<float>> batches;
  for (int start = 0; start < n; start += 300) {
    const int m = std::min(300, n - start);
    BasicTensor<float> t({m, 1, 4, 4});
    for (int i = 0; i < m * pixels; ++i)
      t[i] = static_cast<float>((raw[static_cast<size_t>(start) * pixels + i] - mean) / std::sqrt(var));
    batches.push_back(std::move(t));
  }
  double worst = 0.0;
  for (double m : {1.0, 0.5}) {
    const auto ch = resolve_channels(spec, b, apply_width_multiplier(spec, b, m * b.upper));
    size_t next = 0;
    const auto seen = recalibrate_bn<float>(spec, w, ch, [&](BasicTensor<float>& out) {
      if (next == batches.size()) return false;
      out = batches[next++];
      return true;
    });
    if (seen != n) return {false, fmt::format("stream delivered {} samples", seen)};
    for (int c = 0; c < ch[0]; ++c) {
      const double a = conv.weight[c], shift = conv.bias[c];
      worst = std::max({worst, std::abs(w.layers[1].running_mean[c] - shift),
                        std::abs(w.layers[1].running_var[c] - a * a)});
    }
  }
  return {worst <= 1e-3, fmt::format("{} samples, max moment error {:.2e}", n, worst)};
}

// Chains of 1 to 3 slimmable convs with 2 to 5 groups.
NetworkSpec small_search_spec(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int groups = pick(2, 5);
  const int sets = pick(1, 3);
  nlohmann::json layers = nlohmann::json::array();
  for (int s = 0; s < sets; ++s) {
    layers.push_back({{"id", fmt::format("conv{}", s)},
                      {"kind", "conv"},
                      {"kernel", pick(0, 1) * 2 + 1},
                      {"stride", 1},
                      {"base_channels", groups * pick(1, 3)},
                      {"channel_set", fmt::format("s{}", s)}});
    layers.push_back({{"id", fmt::format("relu{}", s)}, {"kind", "relu"}});
  }
  layers.push_back({{"id", "pool"}, {"kind", "avgpool_global"}});
  layers.push_back(
      {{"id", "fc"}, {"kind", "fc"}, {"base_channels", 3}, {"channel_set", "logits"}, {"slimmable", false}});
  layers.push_back({{"id", "loss"}, {"kind", "softmax_xent"}});
  return NetworkSpec::from_json({{"input_shape", {pick(1, 3), pick(4, 9), pick(4, 9)}},
                                 {"num_classes", 3},
                                 {"bounds", {{"lower", 1.0 / groups}, {"upper", 1.0}, {"groups", groups}}},
                                 {"layers", layers}});
}

// Quantized sums of per-set increasing gains; the coarse grid forces ties.
std::function<double(const ChannelConfig&)> monotone_estimator(const NetworkSpec& spec, const WidthBounds& b,
                                                               std::mt19937_64& rng, double step) {
  std::map<std::string, std::vector<double>> gains;
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (const auto& set : spec.channel_sets()) {
    if (!set.slimmable) continue;
    auto& g = gains[set.name];
    g.assign(b.groups + 1, 0.0);
    for (int k = 1; k <= b.groups; ++k) g[k] = g[k - 1] + u(rng);
  }
  return [gains, step](const ChannelConfig& c) {
    double acc = 0.0;
    for (const auto& [name, k] : c.active_groups) acc += gains.at(name)[k];
    return std::floor(acc / step) * step;
  };
}

// Every one-group decrement, highest accuracy, then fewest madds, then first set.
std::vector<ChannelConfig> argmax_oracle(const NetworkSpec& spec, const WidthBounds& b,
                                         const std::function<double(const ChannelConfig&)>& acc, double limit) {
  const int k_min = std::max(1, static_cast<int>(std::ceil(b.groups * b.lower / b.upper - 1e-9)));
  auto madds = [&](const ChannelConfig& c) { return oracle::brute_force_madds(spec, widths_of(spec, b, c)); };
  ChannelConfig c = uniform(spec, b.groups);
  std::vector<ChannelConfig> path{c};
  while (static_cast<double>(madds(c)) > limit) {
    std::optional<ChannelConfig> best;
    double best_acc = 0;
    std::int64_t best_m = 0;
    for (const auto& set : spec.channel_sets()) {
      if (!set.slimmable || c.active_groups[set.name] <= k_min) continue;
      ChannelConfig cand = c;
      --cand.active_groups[set.name];
      const double a = acc(cand);
      const std::int64_t m = madds(cand);
      if (!best || a > best_acc || (a == best_acc && m < best_m)) {
        best = cand;
        best_acc = a;
        best_m = m;
      }
    }
    if (!best) break;
    c = *best;
    path.push_back(c);
  }
  return path;
}

std::vector<ChannelConfig> trace_configs(const SearchTrace& t) {
  std::vector<ChannelConfig> out;
  for (const auto& s : t.steps) out.push_back(s.config);
  return out;
}

Outcome greedy_oracle() {
  std::mt19937_64 rng(4242);
  int match = 0, tie_steps = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto spec = small_search_spec(rng);
    const auto b = spec.bounds();
    const auto acc = monotone_estimator(spec, b, rng, 0.02);
    const CostFn cost_fn = [&](const ChannelConfig& c) { return cost(spec, b, c); };
    const double lo = cost_fn(min_config(spec, b)).madds, hi = cost_fn(max_config(spec, b)).madds;
    const double limit = lo + std::uniform_real_distribution<double>(0.0, 1.0)(rng) * (hi - lo);
    FunctionEstimator est(acc);
    const auto trace = greedy_search(est, spec, b, cost_fn, Budget{Metric::kMadds, limit});
    if (trace_configs(trace) == argmax_oracle(spec, b, acc, limit)) ++match;
    for (size_t i = 0; i + 1 < trace.steps.size(); ++i) {
      std::set<double> accs;
      const auto cands = slim_candidates(spec, b, trace.steps[i].config);
      for (const auto& c : cands) accs.insert(acc(c.config));
      tie_steps += accs.size() < cands.size();
    }
  }
  return {match == 100 && tie_steps > 0,
          fmt::format("{}/100 traces match the exhaustive argmax; {} steps had tied candidates", match, tie_steps)};
}

Outcome rank_invariance() {
  std::mt19937_64 rng(99);
  int same = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto spec = small_search_spec(rng);
    const auto b = spec.bounds();
    const auto acc = monotone_estimator(spec, b, rng, 1e-9);
    const CostFn cost_fn = [&](const ChannelConfig& c) { return cost(spec, b, c); };
    const Budget stop{Metric::kMadds, static_cast<double>(cost_fn(min_config(spec, b)).madds)};
    const std::function<double(double)> transforms[] = {
        [](double a) { return std::exp(4.0 * a); }, [](double a) { return a * a * a + 2.0 * a - 5.0; },
        [](double a) { return std::log1p(a); }};
    FunctionEstimator base(acc);
    const auto reference = trace_configs(greedy_search(base, spec, b, cost_fn, stop));
    bool all = true;
    for (const auto& g : transforms) {
      FunctionEstimator t([&](const ChannelConfig& c) { return g(acc(c)); });
      all &= trace_configs(greedy_search(t, spec, b, cost_fn, stop)) == reference;
    }
    same += all;
  }
  return {same == 50, fmt::format("{}/50 cases keep the slimming sequence under 3 increasing transforms", same)};
}

Outcome width_ranking() {
  const fs::path root = data_root();
  if (!fs::exists(root / "mnist" / "train-images-idx3-ubyte"))
    return {false, fmt::format("MNIST not found under {} (run tools/fetch_mnist_subset.py)", root.string())};
  const auto spec = parse_spec(test_specs::kToy);
  const auto b = spec.bounds();
  DatasetOptions o;
  o.holdout_size = 1000;
  std::vector<double> rhos;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto data = load_dataset(DatasetName::kMnist, root, seed, o);
    TrainSchedule s;
    s.epochs = 5;
    s.batch_size = 32;
    s.lr = 0.1;
    s.seed = seed;
    TrainOptions opts;
    opts.evaluate_each_epoch = false;
    opts.eval.calibration_seed = seed;
    auto w = init_weights<float>(spec, b, seed);
    train_slimmable(spec, b, w, data, s, opts);
    std::vector<double> width, acc;
    for (int k = 1; k <= b.groups; ++k) {
      width.push_back(k);
      acc.push_back(evaluate_accuracy(spec, b, w, uniform(spec, k), data, data.holdout(), opts.eval));
    }
    rhos.push_back(oracle::spearman(width, acc));
    detail += fmt::format("; seed {}: rho {:.3f}, acc {:.3f}..{:.3f}", seed, rhos.back(), acc.front(), acc.back());
    if (seed == 1) detail = fmt::format("MNIST {} train / {} holdout", data.train().size(), data.holdout().size()) + detail;
  }
  std::sort(rhos.begin(), rhos.end());
  return {rhos[1] >= 0.8, fmt::format("median Spearman {:.3f}; {}", rhos[1], detail)};
}

Outcome cifar_direction() {
  const fs::path root = data_root();
  const fs::path dir = root / "cifar-10-batches-bin";
  if (!fs::exists(dir / "data_batch_1.bin") || !fs::exists(dir / "test_batch.bin"))
    return {false, fmt::format("CIFAR-10 binary batches not found under {}", dir.string())};
  nlohmann::json doc = {{"spec", std::string(AUTOSLIM_SOURCE_DIR) + "/specs/mobilenet_v2_cifar_reduced.json"},
                        {"model_name", "MobileNet v2 (reduced)"},
                        {"dataset", {{"name", "cifar10"}, {"root", root.string()}, {"holdout_size", 5000}}},
                        {"slim_schedule", {{"epochs", 20}, {"batch_size", 128}, {"lr", 0.1}}},
                        {"final_schedule", {{"epochs", 20}, {"batch_size", 128}, {"lr", 0.1}}},
                        {"budgets", {{{"width", 0.75}}}},
                        {"seeds", {1, 2, 3}},
                        {"eval", {{"calibration_samples", 2048}, {"batch_size", 500}}},
                        {"output_dir", (fs::path(AUTOSLIM_BINARY_DIR) / "acceptance_cifar").string()}};
  const auto results = run_pipeline(parse_run_config(doc), &std::cerr);
  int wins = 0;
  std::string detail;
  for (const auto& r : results) {
    const std::string csv = read_file(r.output_dir / "report.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    double base = 0, slim = 0;
    while (std::getline(in, line)) {
      const auto f = csv_split(line);
      (f[1] == "baseline" ? base : slim) = std::stod(f[6]);
    }
    wins += slim <= base;
    detail += fmt::format("{}{}: {:.2f} vs {:.2f}", detail.empty() ? "" : "; ", r.output_dir.filename().string(),
                          slim, base);
  }
  return {wins >= 2, fmt::format("{}/3 seed pairs with AutoSlim error <= baseline ({})", wins, detail)};
}

Outcome determinism() {
  const nlohmann::json doc = {
      {"spec", std::string(AUTOSLIM_SOURCE_DIR) + "/specs/toy_cnn.json"},
      {"dataset", {{"name", "synthetic"}, {"holdout_size", 500}, {"synthetic_train", 2000}, {"synthetic_test", 500}}},
      {"slim_schedule", {{"epochs", 2}, {"batch_size", 32}, {"lr", 0.1}}},
      {"final_schedule", {{"epochs", 1}, {"batch_size", 32}, {"lr", 0.1}}},
      {"budgets", {{{"width", 1.0}}, {{"width", 0.5}}}},
      {"seeds", {11}},
      {"eval", {{"calibration_samples", 512}, {"batch_size", 500}}}};
  std::vector<fs::path> dirs{work_dir("det_a"), work_dir("det_b")};
  auto config = parse_run_config(doc);
  for (const auto& d : dirs) run_pipeline_seed(config, 11, d);
  const bool trace = read_file(dirs[0] / "trace.csv") == read_file(dirs[1] / "trace.csv");
  const bool sel = read_file(dirs[0] / "selected.json") == read_file(dirs[1] / "selected.json");
  const auto steps = parse_trace_csv(read_file(dirs[0] / "trace.csv")).steps.size();
  for (const auto& d : dirs) fs::remove_all(d);
  return {trace && sel, fmt::format("trace.csv {} ({} steps), selected.json {}", trace ? "identical" : "differs",
                                    steps, sel ? "identical" : "differs")};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "FLOPs oracle", flops_oracle},
      {2, "MobileNet v2 ImageNet static cost", mobilenet_v2_static},
      {3, "MobileNet v2 CIFAR static cost", mobilenet_v2_cifar_static},
      {4, "slice consistency", slice_consistency},
      {5, "gradient correctness", gradients},
      {6, "BN recalibration", bn_recalibration},
      {7, "greedy-oracle equivalence", greedy_oracle},
      {8, "rank invariance", rank_invariance},
      {9, "width-accuracy ranking", width_ranking},
      {10, "end-to-end direction on CIFAR-10", cifar_direction},
      {11, "pipeline determinism", determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << fmt::format("{} {:>2} {}: {} [{:.1f}s]", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail, secs)
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
