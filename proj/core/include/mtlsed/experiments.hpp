#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsed/audiogen.hpp"
#include "mtlsed/eval.hpp"
#include "mtlsed/frontend.hpp"
#include "mtlsed/model.hpp"
#include "mtlsed/postprocess.hpp"
#include "mtlsed/training.hpp"

namespace mtlsed {

/// Normalised features and labels of every split, ready for training.
struct PreparedData {
  NormStats norm;
  std::vector<TrainingClip> labeled;  // strong + weak
  std::vector<UnlabeledClip> unlabeled;
  std::vector<UnlabeledClip> validation;
  std::vector<EventLabel> validation_truth;
};

/// Fits the normaliser on strong + weak + unlabeled features and applies it
/// everywhere. `features[s]` lists (clip_id, raw log-mel) of split s.
PreparedData prepare_data(std::array<std::vector<std::pair<std::string, LogMel>>, 4> features,
                          const std::array<DatasetManifest, 4>& manifests, std::size_t input_frames);

/// Renders and analyses a generated dataset in memory.
PreparedData prepare_data(const GeneratedDataset& data, int mel_bins, std::size_t input_frames);

/// Reads `<data_dir>/audio/<split>/*.wav` and the split manifests, computing
/// log-mel features or reading them from `<feature_dir>` when cached there.
PreparedData load_data(const std::string& data_dir, const std::string& feature_dir, int mel_bins,
                       std::size_t input_frames);

/// Writes one feature cache file per clip plus norm.json; returns clip count.
std::size_t extract_features(const std::string& data_dir, const std::string& feature_dir, int mel_bins);

struct ExperimentPlan {
  TrainConfig train;
  ModelConfig model;
  ModelConfig tagger = ModelConfig::tagger();
  std::vector<double> alphas{1.0, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> taxonomies{"proposed", "randomized"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  FilterSearchConfig filter_search;
  std::vector<double> thresholds = default_threshold_grid();
  PsdsParams psds1 = PsdsParams::scenario1();
  PsdsParams psds2 = PsdsParams::scenario2();
  std::size_t jobs = 1;

  void validate() const;
};

struct RunSpec {
  std::string run_id;
  double alpha = 1.0;
  /// "na" when alpha == 1 (the ACC branch cannot influence the run).
  std::string taxonomy;
  std::uint64_t seed = 0;
};

/// alpha == 1 yields one run per seed; every other alpha one run per taxonomy.
std::vector<RunSpec> expand_plan(const ExperimentPlan& plan);
std::string run_id(double alpha, const std::string& taxonomy, std::uint64_t seed);

struct RunRecord {
  std::string run_id;
  double alpha = 1.0;
  std::string taxonomy;
  std::uint64_t seed = 0;
  double psds1 = 0.0;
  double psds2 = 0.0;
  double total = 0.0;
  std::size_t inference_params = 0;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

using LogFn = std::function<void(const std::string&)>;

/// Stage 1 per seed (checkpoint shared by every run of that seed), pseudo
/// labels, Stage 2, ACC stripping, filter search and evaluation per run.
/// Records go to `<out_dir>/runs/<run_id>/record.json` as soon as a run ends;
/// runs whose record already exists are loaded instead of retrained.
std::vector<RunRecord> run_plan(const ExperimentPlan& plan, const PreparedData& data, const std::string& out_dir,
                                const LogFn& log = {});

struct SummaryRow {
  double alpha = 1.0;
  std::string taxonomy;
  std::size_t n = 0;
  double psds1_mean = 0.0, psds2_mean = 0.0, total_mean = 0.0;
  /// Sample standard deviations; absent for a single record.
  std::optional<double> psds1_std, psds2_std, total_std;
  /// (total_mean - control) / control against the alpha = 1 row.
  std::optional<double> relative_improvement;
  std::vector<std::uint64_t> seeds;
  std::vector<double> totals;
  std::size_t inference_params = 0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::optional<double> control_total;
};

double relative_improvement(double control, double value);
Summary summarize(std::span<const RunRecord> records);

std::string summary_csv(const Summary& s);
nlohmann::json summary_json(const Summary& s, std::span<const RunRecord> records);
std::string alpha_sweep_svg(const Summary& s);
/// Writes summary.csv, summary.json and alpha_sweep.svg into dir.
void write_summary(const std::string& dir, std::span<const RunRecord> records);
/// Loads every runs/<id>/record.json below dir, sorted by run id.
std::vector<RunRecord> load_records(const std::string& dir);

}  // namespace mtlsed
