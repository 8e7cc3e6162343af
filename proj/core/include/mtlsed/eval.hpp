#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsed/postprocess.hpp"
#include "mtlsed/taxonomy.hpp"

namespace mtlsed {

struct PsdsParams {
  std::string name = "custom";
  double rho_dtc = 0.7;
  double rho_gtc = 0.7;
  double rho_cttc = 0.3;
  double alpha_ct = 0.0;
  double alpha_st = 1.0;
  /// Maximum effective false-positive rate, per second.
  double e_max = 100.0 / 3600.0;

  void validate() const;
  static PsdsParams scenario1();
  static PsdsParams scenario2();
};

nlohmann::json to_json(const PsdsParams& p);

/// Matching outcome over a set of clips; vectors are indexed like `classes`.
struct MatchCounts {
  std::vector<std::size_t> tp;
  std::vector<std::size_t> fp;
  std::vector<std::size_t> gt_count;
  /// ct[c][k]: FP detections of class c meeting the cross-trigger criterion
  /// against ground truth of class k.
  std::vector<std::vector<std::size_t>> ct;
};

/// Intersection-based matching. A detection is DTC-valid when its summed
/// overlap with same-class ground truth of its clip covers >= rho_dtc of it;
/// a ground-truth event is a TP when DTC-valid same-class detections cover
/// >= rho_gtc of it. Detections that are not DTC-valid are FPs; an FP is also a
/// cross-trigger on class k when its overlap with class-k ground truth covers
/// >= rho_cttc of it.
MatchCounts match_events(std::span<const EventLabel> detections, std::span<const EventLabel> ground_truth,
                         std::span<const EventClass> classes, const PsdsParams& params);

struct OperatingPoint {
  double threshold = 0.0;
  std::vector<std::size_t> tp, fp, ct;  // ct summed over other classes
  std::vector<double> tpr;
  /// FP rate per second plus alpha_ct times the mean cross-trigger rate.
  std::vector<double> efpr;
};

struct RocEvaluation {
  std::vector<EventClass> classes;  // classes with ground truth
  std::vector<EventClass> excluded; // classes without ground truth
  std::vector<OperatingPoint> points;
};

/// One operating point per threshold. Classes without ground truth are moved
/// to `excluded` (a warning is the caller's business).
RocEvaluation roc_points(std::span<const std::vector<EventLabel>> detections_per_threshold,
                         std::span<const double> thresholds, std::span<const EventLabel> ground_truth,
                         std::span<const EventClass> classes, const PsdsParams& params, double total_duration);

struct PsdsCurve {
  std::vector<double> efpr;
  std::vector<double> etpr;
};

struct PsdsReport {
  PsdsParams params;
  double score = 0.0;
  PsdsCurve curve;
  RocEvaluation roc;
};

/// Per-class staircase TPR_c(x) = best TPR with eFPR_c <= x; effective curve
/// mean_c TPR_c - alpha_st * std_c TPR_c (population, clipped at 0), held
/// constant to e_max; score = area / e_max.
PsdsReport psds(const RocEvaluation& roc, const PsdsParams& params);

std::vector<double> default_threshold_grid(std::size_t n = 50);

struct SystemScores {
  PsdsReport psds1;
  PsdsReport psds2;
  double total = 0.0;
};

SystemScores evaluate_system(std::span<const FramePosteriors> posteriors, std::span<const EventClass> classes,
                             std::span<const EventLabel> ground_truth, std::span<const double> thresholds,
                             const FilterLengths& windows, const PsdsParams& params1, const PsdsParams& params2);

nlohmann::json report_json(const PsdsReport& r);
/// threshold,class,tp,fp,ct,tpr,efpr rows.
std::string report_csv(const PsdsReport& r);

}  // namespace mtlsed
