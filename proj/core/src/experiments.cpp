#include "mtlsed/experiments.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "mtlsed/digest.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/wav.hpp"

namespace mtlsed {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Write-then-rename so readers never see a partial file.
void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << s;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, p);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

class FileLock {
 public:
  explicit FileLock(const fs::path& p) : fd_(::open(p.c_str(), O_CREAT | O_RDWR, 0644)) {
    if (fd_ < 0) throw std::runtime_error("cannot open lock file " + p.string());
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw std::runtime_error("cannot lock " + p.string());
    }
  }
  ~FileLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_;
};

std::vector<std::string> wav_files(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

LogMel cached_features(const fs::path& wav, const fs::path& feature_dir, int mel_bins) {
  const fs::path cache = feature_dir / (feature_cache_key(sha256_file(wav.string()), mel_bins) + ".feat");
  if (fs::exists(cache)) return read_feature_cache(cache.string());
  LogMel f = log_mel(read_wav(wav.string()), mel_bins);
  fs::create_directories(feature_dir);
  const fs::path tmp = cache.string() + ".tmp";
  write_feature_cache(tmp.string(), f);
  fs::rename(tmp, cache);
  return f;
}

std::array<DatasetManifest, 4> read_manifests(const fs::path& data_dir) {
  std::array<DatasetManifest, 4> m;
  for (Split s : kAllSplits) {
    const fs::path p = data_dir / (std::string(to_string(s)) + ".tsv");
    if (!fs::exists(p)) throw std::runtime_error("missing data artifact " + p.string() + " (run gen-data first)");
    m[static_cast<std::size_t>(s)] = parse_manifest(read_text(p), s);
  }
  return m;
}

}  // namespace

PreparedData prepare_data(std::array<std::vector<std::pair<std::string, LogMel>>, 4> features,
                          const std::array<DatasetManifest, 4>& manifests, std::size_t input_frames) {
  auto& strong = features[static_cast<std::size_t>(Split::Strong)];
  auto& weak = features[static_cast<std::size_t>(Split::Weak)];
  auto& unlabeled = features[static_cast<std::size_t>(Split::Unlabeled)];
  auto& validation = features[static_cast<std::size_t>(Split::Validation)];
  require(!strong.empty() || !weak.empty(), "data: no labelled training clips");

  std::vector<LogMel> fit_set;
  for (auto* split : {&strong, &weak, &unlabeled})
    for (const auto& [id, f] : *split) fit_set.push_back(f);
  PreparedData d;
  d.norm = fit_normalizer(fit_set);
  fit_set.clear();

  auto norm = [&](LogMel f) {
    return std::make_shared<const LogMel>(pad_or_truncate(apply_normalizer(std::move(f), d.norm), input_frames));
  };
  std::map<std::string, const ManifestRow*> strong_rows, weak_rows;
  for (const auto& r : manifests[static_cast<std::size_t>(Split::Strong)].rows) strong_rows[r.filename] = &r;
  for (const auto& r : manifests[static_cast<std::size_t>(Split::Weak)].rows) weak_rows[r.filename] = &r;

  for (auto& [id, f] : strong) {
    TrainingClip c{id, norm(std::move(f)), true, {}, {}};
    if (auto it = strong_rows.find(id); it != strong_rows.end()) c.events = it->second->strong;
    d.labeled.push_back(std::move(c));
  }
  for (auto& [id, f] : weak) {
    TrainingClip c{id, norm(std::move(f)), false, {}, {}};
    if (auto it = weak_rows.find(id); it != weak_rows.end()) c.tags = it->second->weak;
    d.labeled.push_back(std::move(c));
  }
  for (auto& [id, f] : unlabeled) d.unlabeled.push_back({id, norm(std::move(f))});
  for (auto& [id, f] : validation) d.validation.push_back({id, norm(std::move(f))});
  for (const auto& r : manifests[static_cast<std::size_t>(Split::Validation)].rows)
    d.validation_truth.insert(d.validation_truth.end(), r.strong.begin(), r.strong.end());
  return d;
}

PreparedData prepare_data(const GeneratedDataset& data, int mel_bins, std::size_t input_frames) {
  std::array<std::vector<std::pair<std::string, LogMel>>, 4> features;
  std::array<DatasetManifest, 4> manifests;
  for (Split s : kAllSplits) {
    const auto i = static_cast<std::size_t>(s);
    for (const auto& r : data.split(s)) features[i].emplace_back(r.clip_id, log_mel(render_clip(r), mel_bins));
    manifests[i] = data.manifest(s);
  }
  manifests[static_cast<std::size_t>(Split::Validation)].rows.clear();
  for (const auto& r : data.split(Split::Validation))
    manifests[static_cast<std::size_t>(Split::Validation)].rows.push_back({r.clip_id, r.labels(), {}});
  return prepare_data(std::move(features), manifests, input_frames);
}

PreparedData load_data(const std::string& data_dir, const std::string& feature_dir, int mel_bins,
                       std::size_t input_frames) {
  const auto manifests = read_manifests(data_dir);
  std::array<std::vector<std::pair<std::string, LogMel>>, 4> features;
  for (Split s : kAllSplits) {
    const fs::path audio = fs::path(data_dir) / "audio" / std::string(to_string(s));
    for (const auto& file : wav_files(audio))
      features[static_cast<std::size_t>(s)].emplace_back(file, cached_features(audio / file, feature_dir, mel_bins));
  }
  return prepare_data(std::move(features), manifests, input_frames);
}

std::size_t extract_features(const std::string& data_dir, const std::string& feature_dir, int mel_bins) {
  std::vector<LogMel> fit_set;
  std::size_t n = 0;
  for (Split s : kAllSplits) {
    const fs::path audio = fs::path(data_dir) / "audio" / std::string(to_string(s));
    const auto files = wav_files(audio);
    require(!files.empty() || s == Split::Unlabeled, "extract-features: no audio under " + audio.string());
    for (const auto& file : files) {
      LogMel f = cached_features(audio / file, feature_dir, mel_bins);
      if (s != Split::Validation) fit_set.push_back(std::move(f));
      ++n;
    }
  }
  write_norm_stats((fs::path(feature_dir) / "norm.json").string(), fit_normalizer(fit_set));
  return n;
}

void ExperimentPlan::validate() const {
  train.validate();
  model.validate();
  tagger.validate();
  require(!alphas.empty() && !taxonomies.empty() && !seeds.empty(), "experiments: alpha, taxonomy and seed lists must be nonempty");
  for (double a : alphas) require(a >= 0.0 && a <= 1.0, "experiments: alpha values must lie in [0, 1]");
  for (const auto& t : taxonomies) taxonomy_by_name(t);
  require(model.acc_classes > 0, "experiments: the stage-2 model needs an ACC branch");
  require(jobs >= 1, "experiments: jobs must be >= 1");
  require(!thresholds.empty(), "experiments: threshold grid is empty");
  psds1.validate();
  psds2.validate();
}

std::string run_id(double alpha, const std::string& taxonomy, std::uint64_t seed) {
  return "a" + fmt("%.2f", alpha) + "_" + taxonomy + "_s" + std::to_string(seed);
}

std::vector<RunSpec> expand_plan(const ExperimentPlan& plan) {
  std::vector<RunSpec> out;
  std::set<std::string> seen;
  for (std::uint64_t seed : plan.seeds)
    for (double a : plan.alphas) {
      std::vector<std::string> taxes = a == 1.0 ? std::vector<std::string>{"na"} : plan.taxonomies;
      for (const auto& t : taxes) {
        RunSpec r{run_id(a, t, seed), a, t, seed};
        if (seen.insert(r.run_id).second) out.push_back(r);
      }
    }
  return out;
}

nlohmann::json to_json(const RunRecord& r) {
  return {{"run_id", r.run_id}, {"alpha", r.alpha},   {"taxonomy", r.taxonomy},
          {"seed", r.seed},     {"psds1", r.psds1},   {"psds2", r.psds2},
          {"total", r.total},   {"inference_params", r.inference_params}, {"wall_seconds", r.wall_seconds}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.taxonomy = j.at("taxonomy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.psds1 = j.at("psds1").get<double>();
  r.psds2 = j.at("psds2").get<double>();
  r.total = j.at("total").get<double>();
  r.inference_params = j.at("inference_params").get<std::size_t>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
  return r;
}

namespace {

struct SeedArtifacts {
  std::vector<TrainingClip> clips;  // labelled + pseudo-weak
};

SeedArtifacts stage1_for_seed(const ExperimentPlan& plan, const PreparedData& data, std::uint64_t seed,
                              const fs::path& dir, const LogFn& log) {
  fs::create_directories(dir);
  const fs::path ckpt = dir / "tagger.ckpt";
  Model tagger;
  {
    FileLock lock(dir / "stage1.lock");
    ModelConfig tc = plan.tagger;
    tc.acc_classes = 0;
    if (fs::exists(ckpt)) {
      tagger = load_checkpoint(ckpt.string(), tc).model;
      if (log) log("stage1 s" + std::to_string(seed) + ": reusing " + ckpt.string());
    } else {
      TrainConfig cfg = plan.train;
      cfg.seed = seed;
      if (log) log("stage1 s" + std::to_string(seed) + ": training tagger");
      auto res = train_stage1(cfg, tc, data.labeled);
      write_text(dir / "train_log.csv", format_epoch_csv(res.epochs));
      save_checkpoint((ckpt.string() + ".tmp"), res.model, res.steps.size());
      fs::rename(ckpt.string() + ".tmp", ckpt);
      tagger = std::move(res.model);
    }
  }
  const DatasetManifest pseudo = pseudo_label(tagger, data.unlabeled, plan.train.pseudo_threshold);
  write_text(dir / "pseudo_weak.tsv", format_manifest(pseudo));
  SeedArtifacts a;
  a.clips = data.labeled;
  std::map<std::string, std::shared_ptr<const LogMel>> feats;
  for (const auto& u : data.unlabeled) feats[u.clip_id] = u.features;
  for (const auto& row : pseudo.rows) a.clips.push_back({row.filename, feats.at(row.filename), false, {}, row.weak});
  if (log)
    log("stage1 s" + std::to_string(seed) + ": " + std::to_string(pseudo.rows.size()) + " of " +
        std::to_string(data.unlabeled.size()) + " unlabeled clips pseudo-labelled");
  return a;
}

RunRecord execute_run(const ExperimentPlan& plan, const PreparedData& data, const RunSpec& spec,
                      const SeedArtifacts& seed_data, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig cfg = plan.train;
  cfg.alpha = spec.alpha;
  cfg.seed = spec.seed;
  cfg.taxonomy = spec.taxonomy == "na" ? "proposed" : spec.taxonomy;
  auto res = train_stage2(cfg, plan.model, seed_data.clips);
  Model model = std::move(res.model);
  model.strip_acc();
  save_checkpoint((dir / "model.ckpt").string(), model, res.steps.size());
  write_text(dir / "train_log.csv", format_epoch_csv(res.epochs));

  const double hop = output_hop_seconds(model.config());
  std::vector<FramePosteriors> post;
  for (const auto& v : data.validation) post.push_back(frame_posteriors(v.clip_id, model.predict(*v.features), hop));
  const auto& classes = all_event_classes();
  const FilterLengths windows = search_filter_lengths(post, classes, data.validation_truth, plan.filter_search);
  write_text(dir / "filter_lengths.tsv", format_filter_lengths(windows));
  const SystemScores s =
      evaluate_system(post, classes, data.validation_truth, plan.thresholds, windows, plan.psds1, plan.psds2);
  write_text(dir / "psds1.json", report_json(s.psds1).dump(2) + "\n");
  write_text(dir / "psds2.json", report_json(s.psds2).dump(2) + "\n");
  write_text(dir / "psds1_operating_points.csv", report_csv(s.psds1));
  write_text(dir / "psds2_operating_points.csv", report_csv(s.psds2));

  RunRecord r{spec.run_id, spec.alpha, spec.taxonomy, spec.seed, s.psds1.score, s.psds2.score, s.total,
              model.param_count(), 0.0};
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

std::vector<RunRecord> run_plan(const ExperimentPlan& plan, const PreparedData& data, const std::string& out_dir,
                                const LogFn& log) {
  plan.validate();
  require(!data.validation.empty(), "experiments: no validation clips");
  const fs::path root(out_dir);
  fs::create_directories(root / "runs");
  const auto specs = expand_plan(plan);
  std::mutex log_mutex;
  auto say = [&](const std::string& m) {
    if (!log) return;
    std::lock_guard<std::mutex> g(log_mutex);
    log(m);
  };

  std::vector<std::optional<RunRecord>> records(specs.size());
  std::set<std::uint64_t> seeds_needed;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const fs::path rec = root / "runs" / specs[i].run_id / "record.json";
    if (fs::exists(rec)) {
      records[i] = run_record_from_json(nlohmann::json::parse(read_text(rec)));
      say(specs[i].run_id + ": already complete, skipping");
    } else {
      seeds_needed.insert(specs[i].seed);
    }
  }

  // Stage 1 is shared by every pending run of a seed.
  std::map<std::uint64_t, SeedArtifacts> seed_data;
  {
    std::vector<std::uint64_t> seeds(seeds_needed.begin(), seeds_needed.end());
    std::vector<SeedArtifacts> out(seeds.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex fail_mutex;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < seeds.size();) {
        try {
          out[i] = stage1_for_seed(plan, data, seeds[i], root / "stage1" / ("s" + std::to_string(seeds[i])), say);
        } catch (...) {
          std::lock_guard<std::mutex> g(fail_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 1; j < std::min(plan.jobs, seeds.size()); ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    for (std::size_t i = 0; i < seeds.size(); ++i) seed_data[seeds[i]] = std::move(out[i]);
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < specs.size(); ++i)
    if (!records[i]) pending.push_back(i);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mutex;
  auto worker = [&] {
    for (std::size_t k; (k = next++) < pending.size();) {
      const RunSpec& spec = specs[pending[k]];
      try {
        const fs::path dir = root / "runs" / spec.run_id;
        fs::create_directories(dir);
        FileLock lock(root / "runs" / (spec.run_id + ".lock"));
        const fs::path rec = dir / "record.json";
        if (fs::exists(rec)) {
          records[pending[k]] = run_record_from_json(nlohmann::json::parse(read_text(rec)));
          continue;
        }
        say(spec.run_id + ": training");
        RunRecord r = execute_run(plan, data, spec, seed_data.at(spec.seed), dir);
        write_text(rec, to_json(r).dump(2) + "\n");
        say(spec.run_id + ": psds1 " + fmt("%.4f", r.psds1) + " psds2 " + fmt("%.4f", r.psds2) + " total " +
            fmt("%.4f", r.total) + " (" + fmt("%.0f", r.wall_seconds) + " s)");
        records[pending[k]] = r;
      } catch (...) {
        std::lock_guard<std::mutex> g(fail_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < std::min(plan.jobs, pending.size()); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<RunRecord> out;
  for (auto& r : records) out.push_back(*r);
  return out;
}

double relative_improvement(double control, double value) {
  require(control != 0.0, "relative improvement: control total is zero");
  return (value - control) / control;
}

Summary summarize(std::span<const RunRecord> records) {
  require(!records.empty(), "summarize: no run records");
  std::map<std::pair<double, std::string>, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) groups[{r.alpha, r.taxonomy}].push_back(&r);

  auto mean_std = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    std::optional<double> sd;
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return std::pair{m, sd};
  };

  Summary s;
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    SummaryRow row;
    row.alpha = key.first;
    row.taxonomy = key.second;
    row.n = group.size();
    std::vector<double> p1, p2, tot;
    for (const auto* r : group) {
      p1.push_back(r->psds1);
      p2.push_back(r->psds2);
      tot.push_back(r->total);
      row.seeds.push_back(r->seed);
    }
    row.totals = tot;
    row.inference_params = group.front()->inference_params;
    std::tie(row.psds1_mean, row.psds1_std) = mean_std(p1);
    std::tie(row.psds2_mean, row.psds2_std) = mean_std(p2);
    std::tie(row.total_mean, row.total_std) = mean_std(tot);
    s.rows.push_back(std::move(row));
  }
  // Control (alpha = 1) first, then ascending alpha.
  std::stable_sort(s.rows.begin(), s.rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
    const bool ca = a.alpha == 1.0, cb = b.alpha == 1.0;
    if (ca != cb) return ca;
    return a.alpha < b.alpha;
  });
  for (const auto& r : s.rows)
    if (r.alpha == 1.0) s.control_total = r.total_mean;
  if (s.control_total && *s.control_total != 0.0)
    for (auto& r : s.rows) r.relative_improvement = relative_improvement(*s.control_total, r.total_mean);
  return s;
}

std::string summary_csv(const Summary& s) {
  std::ostringstream os;
  os << "alpha,taxonomy,n_seeds,psds1_mean,psds1_std,psds2_mean,psds2_std,total_mean,total_std,"
        "relative_improvement_pct,inference_params,seeds,per_seed_total\n";
  auto opt = [](const std::optional<double>& v, const char* f) { return v ? fmt(f, *v) : std::string(); };
  for (const auto& r : s.rows) {
    std::string seeds, totals;
    for (std::size_t i = 0; i < r.seeds.size(); ++i) {
      seeds += (i ? ";" : "") + std::to_string(r.seeds[i]);
      totals += (i ? ";" : "") + fmt("%.6f", r.totals[i]);
    }
    os << fmt("%.2f", r.alpha) << ',' << r.taxonomy << ',' << r.n << ',' << fmt("%.6f", r.psds1_mean) << ','
       << opt(r.psds1_std, "%.6f") << ',' << fmt("%.6f", r.psds2_mean) << ',' << opt(r.psds2_std, "%.6f") << ','
       << fmt("%.6f", r.total_mean) << ',' << opt(r.total_std, "%.6f") << ','
       << (r.relative_improvement ? fmt("%.2f", *r.relative_improvement * 100.0) : std::string()) << ','
       << r.inference_params << ',' << seeds << ',' << totals << '\n';
  }
  return os.str();
}

nlohmann::json summary_json(const Summary& s, std::span<const RunRecord> records) {
  nlohmann::json rows = nlohmann::json::array();
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  for (const auto& r : s.rows)
    rows.push_back({{"alpha", r.alpha},
                    {"taxonomy", r.taxonomy},
                    {"n_seeds", r.n},
                    {"psds1_mean", r.psds1_mean},
                    {"psds1_std", opt(r.psds1_std)},
                    {"psds2_mean", r.psds2_mean},
                    {"psds2_std", opt(r.psds2_std)},
                    {"total_mean", r.total_mean},
                    {"total_std", opt(r.total_std)},
                    {"relative_improvement", opt(r.relative_improvement)},
                    {"inference_params", r.inference_params},
                    {"seeds", r.seeds},
                    {"per_seed_total", r.totals}});
  nlohmann::json runs = nlohmann::json::array();
  std::vector<RunRecord> sorted(records.begin(), records.end());
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  for (const auto& r : sorted) {
    auto j = to_json(r);
    j.erase("wall_seconds");
    runs.push_back(j);
  }
  return {{"control_total", opt(s.control_total)}, {"rows", rows}, {"runs", runs}};
}

std::string alpha_sweep_svg(const Summary& s) {
  const double W = 640, H = 400, L = 70, R = 150, T = 30, B = 50;
  double amin = 1.0, amax = 1.0, ymin = 1e9, ymax = -1e9;
  for (const auto& r : s.rows) {
    amin = std::min(amin, r.alpha);
    ymin = std::min(ymin, r.total_mean);
    ymax = std::max(ymax, r.total_mean);
  }
  if (amax - amin < 1e-9) amin = amax - 0.1;
  if (ymax - ymin < 1e-6) {
    ymin -= 0.05;
    ymax += 0.05;
  }
  const double pad = 0.1 * (ymax - ymin);
  ymin = std::max(0.0, ymin - pad);
  ymax += pad;
  auto X = [&](double a) { return L + (a - amin) / (amax - amin) * (W - L - R); };
  auto Y = [&](double v) { return H - B - (v - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = ymin + (ymax - ymin) * i / 4.0;
    os << "<text x=\"" << L - 8 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << fmt("%.3f", v) << "</text>\n";
  }
  std::set<double> alphas;
  for (const auto& r : s.rows) alphas.insert(r.alpha);
  for (double a : alphas)
    os << "<text x=\"" << X(a) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << fmt("%.2f", a) << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">alpha</text>\n";
  os << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (T + H - B) / 2
     << ")\">PSDS1 + PSDS2 (mean over seeds)</text>\n";
  if (s.control_total)
    os << "<line x1=\"" << L << "\" y1=\"" << Y(*s.control_total) << "\" x2=\"" << W - R << "\" y2=\"" << Y(*s.control_total)
       << "\" stroke=\"gray\" stroke-dasharray=\"5,4\"/>\n";

  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::map<std::string, std::vector<const SummaryRow*>> series;
  for (const auto& r : s.rows)
    if (r.alpha != 1.0) series[r.taxonomy].push_back(&r);
  std::size_t k = 0;
  for (auto& [tax, rows] : series) {
    const char* color = colors[k % 4];
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->alpha < b->alpha; });
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (const auto* r : rows) os << X(r->alpha) << ',' << Y(r->total_mean) << ' ';
    os << "\"/>\n";
    for (const auto* r : rows)
      os << "<circle cx=\"" << X(r->alpha) << "\" cy=\"" << Y(r->total_mean) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
    os << "<text x=\"" << W - R + 12 << "\" y=\"" << T + 16 + 18 * k << "\" fill=\"" << color << "\">" << tax << "</text>\n";
    ++k;
  }
  if (s.control_total) {
    os << "<circle cx=\"" << X(1.0) << "\" cy=\"" << Y(*s.control_total) << "\" r=\"4\" fill=\"black\"/>\n";
    os << "<text x=\"" << W - R + 12 << "\" y=\"" << T + 16 + 18 * k << "\" fill=\"gray\">alpha = 1 control</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_summary(const std::string& dir, std::span<const RunRecord> records) {
  const Summary s = summarize(records);
  write_text(fs::path(dir) / "summary.csv", summary_csv(s));
  write_text(fs::path(dir) / "summary.json", summary_json(s, records).dump(2) + "\n");
  write_text(fs::path(dir) / "alpha_sweep.svg", alpha_sweep_svg(s));
}

std::vector<RunRecord> load_records(const std::string& dir) {
  std::vector<RunRecord> out;
  const fs::path runs = fs::path(dir) / "runs";
  if (!fs::exists(runs)) return out;
  for (const auto& e : fs::directory_iterator(runs)) {
    const fs::path rec = e.path() / "record.json";
    if (e.is_directory() && fs::exists(rec)) out.push_back(run_record_from_json(nlohmann::json::parse(read_text(rec))));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.run_id < b.run_id; });
  return out;
}

}  // namespace mtlsed
