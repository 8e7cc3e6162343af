// One PASS/FAIL line per acceptance criterion. Usage:
//   acceptance [--work-dir DIR] [--only 1,5,12] [--keep]
// Criteria 9, 10 and 12 drive the mtlsed CLI in-process; their artefacts stay
// under DIR for inspection.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "mtlsed/cli/cli.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/experiments.hpp"
#include "mtlsed/nn/ops.hpp"
#include "psds_oracle.hpp"

using namespace mtlsed;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nn::Parameter<double> random_param(const std::string& name, nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  nn::Parameter<double> p{name, nn::Tensor<double>(std::move(shape)), {}};
  for (auto& v : p.value.data) v = u(rng);
  p.zero_grad();
  return p;
}

std::vector<double> random_bits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> t(n);
  for (auto& v : t) v = static_cast<double>(rng() % 2);
  return t;
}

int cli(const std::vector<std::string>& args) {
  std::cerr << "  $ mtlsed";
  for (const auto& a : args) std::cerr << ' ' << a;
  std::cerr << '\n';
  return cli::run(args);
}

// 1 ---------------------------------------------------------------------------

Outcome alpha_one_reduction(const fs::path&) {
  const auto t0 = Clock::now();
  DatasetConfig dc;
  dc.strong_clips = 12;
  dc.weak_clips = 4;
  dc.unlabeled_clips = 1;
  dc.validation_clips = 1;
  const auto data = prepare_data(generate_dataset(dc, 11), 32, 625);
  TrainConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch_size = 4;
  cfg.stage2_epochs = 3;
  cfg.ramp_epochs = 1;
  cfg.seed = 5;
  TrainConfig omit = cfg;
  omit.omit_acc_loss = true;
  auto a = train_stage2(cfg, ModelConfig::tiny(32), data.labeled).model;
  auto b = train_stage2(omit, ModelConfig::tiny(32), data.labeled).model;
  const auto pa = a.sed_parameters(), pb = b.sed_parameters();
  std::size_t values = 0, differing = 0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j, ++values)
      differing += std::memcmp(&pa[i]->value.data[j], &pb[i]->value.data[j], sizeof(float)) != 0;
  const double secs = seconds_since(t0);
  return {pa.size() == pb.size() && differing == 0 && secs < 300.0,
          std::to_string(differing) + " of " + std::to_string(values) + " SED values differ, " + fmt("%.1f s", secs)};
}

// 2 ---------------------------------------------------------------------------

Outcome taxonomy_tables(const fs::path&) {
  using enum EventClass;
  using enum AccClass;
  const std::vector<std::pair<EventClass, AccClass>> proposed{
      {Vacuum_cleaner, A}, {Frying, A}, {Blender, A}, {Electric_shaver_toothbrush, B}, {Running_water, B},
      {Speech, C},         {Dog, C},    {Cat, C},     {Dishes, D},                     {Alarm_bell_ringing, D}};
  const std::vector<std::pair<EventClass, AccClass>> randomized{
      {Alarm_bell_ringing, A}, {Blender, A}, {Electric_shaver_toothbrush, A}, {Vacuum_cleaner, B}, {Dog, B},
      {Dishes, C},             {Frying, C},  {Speech, C},                     {Running_water, D},  {Cat, D}};
  int ok = 0;
  for (const auto& [e, a] : proposed) ok += proposed_map()(e) == a;
  for (const auto& [e, a] : randomized) ok += randomized_map()(e) == a;
  return {ok == 20, std::to_string(ok) + "/20 mapping assertions hold"};
}

// 3 ---------------------------------------------------------------------------

Outcome gradients(const fs::path&) {
  using namespace nn;
  auto x = random_param("x", {6, 8}, 1), w = random_param("w", {5, 8}, 2), b = random_param("b", {5}, 3);
  const auto tgt = random_bits(30, 4);
  const auto head = grad_check({&w, &b}, [&](Tape<double>& t) {
    return bce_sum(t, sigmoid(t, linear(t, t.parameter(x), t.parameter(w), t.parameter(b))), tgt);
  }, 1e-5, 1);

  auto fx = random_param("x", {3, 8, 10}, 5), basis = random_param("basis", {4, 4, 3, 3, 3}, 6),
       bias = random_param("bias", {4, 4}, 7), aw = random_param("attn_w", {4, 3}, 8), ab = random_param("attn_b", {4}, 9);
  const auto ftgt = random_bits(4 * 4 * 5, 10);
  const auto fdy = grad_check({&basis, &bias, &aw, &ab, &fx}, [&](Tape<double>& t) {
    const Var y = fdy_conv(t, t.parameter(fx), {t.parameter(basis), t.parameter(bias), t.parameter(aw), t.parameter(ab)}, 1.0);
    return squared_error(t, avg_pool(t, silu(t, y), 2, 2), ftgt);
  }, 1e-5, 2);

  ModelConfig c = ModelConfig::tiny(16);
  c.input_frames = 48;
  c.shared.channels = 4;
  for (auto& blk : c.branch) blk.channels = 4;
  c.recurrent_hidden = 6;
  Model64 m = Model(c, 12).cast<double>();
  std::mt19937_64 rng(13);
  std::normal_distribution<float> n;
  LogMel in;
  in.mel_bins = 16;
  in.frames = 48;
  in.values.resize(16 * 48);
  for (auto& v : in.values) v = n(rng);
  const auto input = features_to_tensor<double>(in);
  const std::size_t T = c.output_frames();
  const auto ts = random_bits(T * 10, 14), ta = random_bits(T * 4, 15), cs = random_bits(10, 16), ca = random_bits(4, 17);
  const double alpha = 0.8;
  const auto full = grad_check(m.parameters(), [&](Tape<double>& t) {
    const auto o = m.forward(t, t.constant(input), true);
    const std::vector<Var> terms{bce_sum(t, o.sed_frame, ts), bce_sum(t, o.sed_clip, cs), bce_sum(t, o.acc_frame, ta),
                                 bce_sum(t, o.acc_clip, ca)};
    const std::vector<double> wts{alpha / (T * 10.0), alpha / 10.0, (1 - alpha) / (T * 4.0), (1 - alpha) / 4.0};
    return weighted_sum<double>(t, terms, wts);
  }, 1e-4, 3);
  const bool pass = head.max_relative_error < 1e-4 && fdy.max_relative_error < 1e-3 && full.max_relative_error < 1e-3;
  return {pass, "head " + fmt("%.2e", head.max_relative_error) + ", FDY block " + fmt("%.2e", fdy.max_relative_error) +
                    ", full model " + fmt("%.2e", full.max_relative_error) + " over " + std::to_string(full.checked) +
                    " entries"};
}

// 4 ---------------------------------------------------------------------------

Outcome parameter_counts(const fs::path&) {
  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  int equal = 0;
  std::string counts;
  for (int i = 0; i < 10; ++i) {
    ModelConfig c;
    c.mel_bins = std::size_t{16} << pick(0, 2);
    c.input_frames = 64 * pick(1, 4);
    c.shared = {pick(2, 8), 2 * pick(0, 2) + 1, pick(1, 2), 2, 1};
    c.branch.clear();
    const std::size_t depth = pick(1, 3), basis = pick(1, 4);
    for (std::size_t d = 0; d < depth; ++d) c.branch.push_back({pick(2, 8), c.shared.kernel, d == 0 ? 2u : 1u, 2, basis});
    c.recurrent_hidden = pick(2, 12);
    Model two(c, i);
    two.strip_acc();
    ModelConfig single = c;
    single.acc_classes = 0;
    const std::size_t s = Model(single, i).param_count();
    equal += two.param_count() == s;
    counts += (i ? "," : "") + std::to_string(s);
  }
  return {equal == 10, std::to_string(equal) + "/10 configs equal (" + counts + ")"};
}

// 5 ---------------------------------------------------------------------------

Outcome psds_oracle(const fs::path&) {
  const auto toy = oracle::load_toy(std::string(MTLSED_FIXTURE_DIR) + "/psds_toy.json");
  const auto grid = default_threshold_grid();
  const auto p1 = PsdsParams::scenario1(), p2 = PsdsParams::scenario2();
  const auto s = evaluate_system(toy.posteriors, toy.classes, toy.ground_truth, grid, unit_filter_lengths(), p1, p2);
  const std::vector<int> w(toy.classes.size(), 1);
  const double e1 = std::abs(s.psds1.score - oracle::psds(toy, grid, w, p1));
  const double e2 = std::abs(s.psds2.score - oracle::psds(toy, grid, w, p2));

  auto perfect = toy.posteriors, empty = toy.posteriors;
  const std::size_t k = toy.classes.size();
  for (std::size_t i = 0; i < perfect.size(); ++i) {
    auto& p = perfect[i];
    std::fill(p.probs.begin(), p.probs.end(), 0.0f);
    std::fill(empty[i].probs.begin(), empty[i].probs.end(), 0.0f);
    for (const auto& g : toy.ground_truth) {
      if (g.clip_id != p.clip_id) continue;
      const std::size_t c = std::find(toy.classes.begin(), toy.classes.end(), g.klass) - toy.classes.begin();
      for (std::size_t t = 0; t < p.frames; ++t)
        if (t * p.hop_seconds < g.offset && (t + 1) * p.hop_seconds > g.onset) p.probs[t * k + c] = 1.0f;
    }
  }
  const auto sp = evaluate_system(perfect, toy.classes, toy.ground_truth, grid, unit_filter_lengths(), p1, p2);
  const auto se = evaluate_system(empty, toy.classes, toy.ground_truth, grid, unit_filter_lengths(), p1, p2);
  const bool pass = e1 < 1e-9 && e2 < 1e-9 && sp.psds1.score == 1.0 && sp.psds2.score == 1.0 &&
                    se.psds1.score == 0.0 && se.psds2.score == 0.0;
  return {pass, "oracle diff " + fmt("%.1e", std::max(e1, e2)) + " (psds1 " + fmt("%.6f", s.psds1.score) + ", psds2 " +
                    fmt("%.6f", s.psds2.score) + "), perfect " + fmt("%g", sp.psds1.score) + "/" +
                    fmt("%g", sp.psds2.score) + ", empty " + fmt("%g", se.psds1.score) + "/" + fmt("%g", se.psds2.score)};
}

// 6 ---------------------------------------------------------------------------

std::vector<std::uint8_t> sort_median(const std::vector<std::uint8_t>& v, int window) {
  const int n = static_cast<int>(v.size()), h = window / 2;
  std::vector<std::uint8_t> out(v.size());
  for (int i = 0; i < n; ++i) {
    std::vector<int> w;
    for (int j = i - h; j <= i + h; ++j) w.push_back(j < 0 || j >= n ? 0 : v[j]);
    std::sort(w.begin(), w.end());
    out[i] = static_cast<std::uint8_t>(w[h]);
  }
  return out;
}

Outcome median_and_decode(const fs::path&) {
  std::mt19937_64 rng(77);
  int median_ok = 0, decode_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::uint8_t> v(1 + rng() % 200);
    const double density = (rng() % 100) / 100.0;
    for (auto& x : v) x = (rng() % 1000) < density * 1000;
    bool same = true;
    for (int w : {1, 3, 5, 7}) same = same && median_filter({v, 0.064}, w).values == sort_median(v, w);
    median_ok += same;
  }
  const double hop = 0.064;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t frames = 157;
    std::vector<EventLabel> events;
    for (std::size_t t = rng() % 5; t < frames;) {
      const std::size_t len = 1 + rng() % 20;
      if (t + len > frames) break;
      events.push_back({"c", EventClass::Alarm_bell_ringing, t * hop, std::min((t + len) * hop, 10.0)});
      t += len + 1 + rng() % 10;
    }
    const auto r = rasterize(std::span<const EventLabel>(events), frames, hop, 1);
    // Single-column raster: column 0 is the first class.
    const auto back = decode_events({{r.begin(), r.end()}, hop}, "c", EventClass::Alarm_bell_ringing);
    bool same = back.size() == events.size();
    for (std::size_t e = 0; same && e < events.size(); ++e)
      same = std::abs(back[e].onset - events[e].onset) < 1e-9 && std::abs(back[e].offset - events[e].offset) < 1e-9;
    decode_ok += same;
  }
  return {median_ok == 1000 && decode_ok == 1000, "median " + std::to_string(median_ok) + "/1000, decode-rasterize " +
                                                      std::to_string(decode_ok) + "/1000"};
}

// 7 ---------------------------------------------------------------------------

Outcome normalization(const fs::path&) {
  DatasetConfig dc;
  dc.strong_clips = 24;
  dc.weak_clips = 8;
  dc.unlabeled_clips = 24;
  dc.validation_clips = 2;
  const auto data = prepare_data(generate_dataset(dc, 21), 64, 625);
  double n = 0.0, sum = 0.0, sq = 0.0;
  auto add = [&](const LogMel& f) {
    for (float v : f.values) {
      n += 1.0;
      sum += v;
      sq += double(v) * v;
    }
  };
  for (const auto& c : data.labeled) add(*c.features);
  for (const auto& c : data.unlabeled) add(*c.features);
  const double mean = sum / n, sd = std::sqrt(sq / n - mean * mean);
  return {std::abs(mean) < 1e-6 && std::abs(sd - 1.0) < 1e-6,
          "|mean| " + fmt("%.2e", std::abs(mean)) + ", |std-1| " + fmt("%.2e", std::abs(sd - 1.0)) + " over " +
              fmt("%.0f", n) + " values"};
}

// 8 ---------------------------------------------------------------------------

Outcome overfit(const fs::path&) {
  const auto t0 = Clock::now();
  DatasetConfig dc;
  dc.strong_clips = 10;
  dc.weak_clips = 1;
  dc.unlabeled_clips = 1;
  dc.validation_clips = 1;
  const auto data = prepare_data(generate_dataset(dc, 8), 32, 625);
  std::vector<TrainingClip> strong;
  for (const auto& c : data.labeled)
    if (c.strong) strong.push_back(c);
  TrainConfig cfg;
  cfg.alpha = 0.8;
  cfg.batch_size = 2;
  cfg.max_lr = 3e-3;
  cfg.ramp_epochs = 0;
  cfg.stage2_epochs = 300;
  cfg.augment = false;
  double best = 1e9, last = 0.0;
  std::size_t first = 0;
  train_stage2(cfg, ModelConfig::tiny(32), strong, [&](const EpochLog& e) {
    last = e.loss.L_MTL;
    if (last < 0.05 && !first) first = e.epoch + 1;
    best = std::min(best, last);
  });
  const double secs = seconds_since(t0);
  return {strong.size() == 10 && last < 0.05 && secs < 600.0,
          "L_MTL " + fmt("%.4f", last) + " after 300 epochs (first below 0.05 at epoch " + std::to_string(first) +
              "), " + fmt("%.0f s", secs)};
}

// 9, 10 -----------------------------------------------------------------------

struct DeskSweep {
  bool ok = false;
  std::string error;
  nlohmann::json summary;
};

const DeskSweep& desk_sweep(const fs::path& work) {
  static DeskSweep result = [&] {
    DeskSweep d;
    const std::string cfg = std::string(MTLSED_CONFIG_DIR) + "/desk.ini", out = (work / "desk").string();
    const auto t0 = Clock::now();
    if (cli({"gen-data", "--config", cfg, "--out", out}) != 0 || cli({"sweep", "--config", cfg, "--out", out}) != 0) {
      d.error = "pipeline failed";
      return d;
    }
    std::cerr << "  desk sweep finished in " << fmt("%.0f s", seconds_since(t0)) << '\n';
    d.summary = nlohmann::json::parse(slurp(fs::path(out) / "sweep" / "summary.json"));
    d.ok = true;
    return d;
  }();
  return result;
}

const nlohmann::json* row(const nlohmann::json& summary, double alpha, const std::string& tax) {
  for (const auto& r : summary["rows"])
    if (std::abs(r["alpha"].get<double>() - alpha) < 1e-12 && r["taxonomy"] == tax) return &r;
  return nullptr;
}

std::string per_seed(const nlohmann::json& r) {
  std::string s;
  for (const auto& v : r["per_seed_total"]) s += (s.empty() ? "" : " ") + fmt("%.3f", v.get<double>());
  return s;
}

Outcome compare(const fs::path& work, double a_alpha, const std::string& a_tax, double b_alpha,
                const std::string& b_tax) {
  const auto& d = desk_sweep(work);
  if (!d.ok) return {false, d.error};
  const auto* a = row(d.summary, a_alpha, a_tax);
  const auto* b = row(d.summary, b_alpha, b_tax);
  if (!a || !b) return {false, "summary lacks a compared row"};
  const std::size_t n = std::min((*a)["n_seeds"].get<std::size_t>(), (*b)["n_seeds"].get<std::size_t>());
  const double diff = (*a)["total_mean"].get<double>() - (*b)["total_mean"].get<double>();
  return {n >= 5 && diff > -0.01,
          a_tax + " " + fmt("%.4f", (*a)["total_mean"].get<double>()) + " [" + per_seed(*a) + "] vs " + b_tax + " " +
              fmt("%.4f", (*b)["total_mean"].get<double>()) + " [" + per_seed(*b) + "], diff " + fmt("%+.4f", diff) +
              " over " + std::to_string(n) + " seeds"};
}

Outcome mtl_benefit(const fs::path& work) { return compare(work, 0.8, "proposed", 1.0, "na"); }
Outcome ablation(const fs::path& work) { return compare(work, 0.8, "proposed", 0.8, "randomized"); }

// 11 --------------------------------------------------------------------------

Outcome relative_arithmetic(const fs::path&) {
  std::vector<RunRecord> r{{run_id(1.0, "na", 0), 1.0, "na", 0, 0.452, 0.451, 0.903, 0, 0.0},
                           {run_id(0.8, "proposed", 0), 0.8, "proposed", 0, 0.5, 0.731, 1.231, 0, 0.0}};
  const auto s = summarize(r);
  const double pct = 100.0 * s.rows.back().relative_improvement.value_or(0.0);
  return {std::abs(pct - 36.3) <= 0.05, "control 0.903, best 1.231 -> " + fmt("%.2f%%", pct)};
}

// 12 --------------------------------------------------------------------------

Outcome determinism(const fs::path& work) {
  const std::string cfg = std::string(MTLSED_CONFIG_DIR) + "/tiny.ini";
  // The tiny preset scores near zero, so the trained weights and loss logs are
  // compared as well.
  const std::vector<std::string> files{"summary.csv", "runs/a0.80_proposed_s0/model.ckpt",
                                       "runs/a0.80_proposed_s0/train_log.csv", "stage1/s0/tagger.ckpt"};
  std::vector<std::vector<std::string>> bytes;
  for (const std::string name : {"det_a", "det_b"}) {
    const std::string out = (work / name).string();
    if (cli({"gen-data", "--config", cfg, "--out", out}) != 0 ||
        cli({"sweep", "--config", cfg, "--out", out, "--alpha", "0.8", "--seed", "0"}) != 0)
      return {false, "pipeline failed"};
    bytes.emplace_back();
    for (const auto& f : files) bytes.back().push_back(slurp(fs::path(out) / "sweep" / f));
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < files.size(); ++i) same += !bytes[0][i].empty() && bytes[0][i] == bytes[1][i];
  return {same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) +
                                    " artefacts byte-identical (summary.csv " + std::to_string(bytes[0][0].size()) +
                                    " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work", only;
  bool keep = false;
  app.add_option("--work-dir", work, "Scratch directory")->capture_default_str();
  app.add_option("--only", only, "Comma-separated criterion numbers");
  app.add_flag("--keep", keep, "Reuse earlier sweep results under the work dir");
  CLI11_PARSE(app, argc, argv);

  std::set<int> selected;
  for (std::size_t s = 0; s < only.size();) {
    const auto e = only.find(',', s);
    selected.insert(std::stoi(only.substr(s, e - s)));
    if (e == std::string::npos) break;
    s = e + 1;
  }
  const fs::path root(work);
  if (!keep) fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::pair<std::string, std::function<Outcome(const fs::path&)>>> criteria{
      {"alpha=1 equals the omitted-ACC code path", alpha_one_reduction},
      {"taxonomy tables", taxonomy_tables},
      {"gradient checks", gradients},
      {"inference parameter count", parameter_counts},
      {"PSDS oracle equivalence", psds_oracle},
      {"median filter and decoding oracles", median_and_decode},
      {"feature normalisation", normalization},
      {"overfit sanity", overfit},
      {"MTL(0.8, proposed) vs single branch", mtl_benefit},
      {"proposed vs randomized taxonomy", ablation},
      {"relative improvement arithmetic", relative_arithmetic},
      {"pipeline determinism", determinism},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second(root);
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " - " << criteria[i].first << " ("
              << o.detail << ") [" << fmt("%.1f s", seconds_since(t0)) << "]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
