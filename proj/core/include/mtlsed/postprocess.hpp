#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlsed/model.hpp"
#include "mtlsed/taxonomy.hpp"

namespace mtlsed {

struct BinarySequence {
  std::vector<std::uint8_t> values;
  double hop_seconds = 0.0;
};

/// Frame probabilities of one clip for an ordered list of classes.
struct FramePosteriors {
  std::string clip_id;
  std::size_t frames = 0;
  std::vector<float> probs;  // frames x classes
  double hop_seconds = 0.0;
  double duration = 10.0;

  float at(std::size_t t, std::size_t c, std::size_t classes) const { return probs[t * classes + c]; }
};

/// SED frame posteriors of a model prediction, all 10 classes.
FramePosteriors frame_posteriors(const std::string& clip_id, const Posteriors& p, double hop_seconds,
                                 double duration = 10.0);

/// Per-class 0/1 sequences: 1 iff probability >= threshold of that class.
std::vector<BinarySequence> binarize(const FramePosteriors& p, std::span<const double> thresholds);

/// Centred median with zero-padded borders; window must be odd and >= 1.
BinarySequence median_filter(const BinarySequence& s, int window);

/// Maximal runs of ones; onset first*hop, offset (last+1)*hop clipped to duration.
std::vector<EventLabel> decode_events(const BinarySequence& s, const std::string& clip_id, EventClass klass,
                                      double clip_duration = 10.0);

/// Odd median window per event class, indexed by index_of(EventClass).
using FilterLengths = std::array<int, kNumEventClasses>;

FilterLengths unit_filter_lengths();
std::vector<int> default_filter_candidates();

/// binarize -> per-class median filter -> decode, for the listed classes
/// (posterior column i belongs to classes[i]).
std::vector<EventLabel> detect(const FramePosteriors& p, std::span<const EventClass> classes, double threshold,
                               const FilterLengths& windows);

struct FilterSearchConfig {
  std::vector<int> candidates = default_filter_candidates();
  double threshold = 0.5;
  double rho_dtc = 0.7;
  double rho_gtc = 0.7;
};

/// Intersection-based F1 of one class: TP = ground-truth events meeting the
/// GTC criterion, FP = detections failing DTC. 1 when there is nothing to find
/// and nothing was detected.
double intersection_f1(std::span<const EventLabel> detections, std::span<const EventLabel> ground_truth,
                       EventClass klass, double rho_dtc, double rho_gtc);

/// Per class independently, the candidate window maximising intersection_f1 over
/// the validation clips (other classes at window 1); ties go to the smallest window.
FilterLengths search_filter_lengths(std::span<const FramePosteriors> posteriors, std::span<const EventClass> classes,
                                    std::span<const EventLabel> ground_truth, const FilterSearchConfig& cfg = {});

/// Two-column text: event_label<TAB>window_frames.
std::string format_filter_lengths(const FilterLengths& f);
FilterLengths parse_filter_lengths(const std::string& text);

}  // namespace mtlsed
