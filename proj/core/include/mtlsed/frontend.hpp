#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mtlsed/wav.hpp"

namespace mtlsed {

inline constexpr int kWindowSamples = 2048;
inline constexpr int kHopSamples = 256;
inline constexpr double kLogFloor = 1e-10;
inline constexpr double kNormEpsilon = 1e-8;

/// Row-major frames x mel_bins matrix of natural-log mel magnitudes.
struct LogMel {
  std::vector<float> values;
  std::size_t frames = 0;
  std::size_t mel_bins = 0;
  int hop = kHopSamples;
  int window = kWindowSamples;
  int sample_rate = kSampleRate;

  float& at(std::size_t t, std::size_t m) { return values[t * mel_bins + m]; }
  float at(std::size_t t, std::size_t m) const { return values[t * mel_bins + m]; }
  std::span<float> row(std::size_t t) { return {values.data() + t * mel_bins, mel_bins}; }
  std::span<const float> row(std::size_t t) const { return {values.data() + t * mel_bins, mel_bins}; }
  /// Seconds at the centre of frame t.
  double frame_time(std::size_t t) const { return static_cast<double>(t) * hop / sample_rate; }
};

/// HTK-scale mel conversions.
double hz_to_mel(double hz);
double mel_to_hz(double mel);
/// Centre frequency (Hz) of every filter of an n-bin bank spanning 0..8000 Hz.
std::vector<double> mel_center_frequencies(int mel_bins);
/// Dense (mel_bins x (window/2+1)) triangular filterbank, row-major.
std::vector<double> mel_filterbank(int mel_bins);

/// Magnitude STFT (periodic Hann, 2048 window, hop 256, centred with reflect
/// padding, ceil(N/hop) frames) -> mel filterbank -> log(x + 1e-10).
LogMel log_mel(const Waveform& w, int mel_bins = 128);

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
  /// Present only when fitted per mel bin.
  std::vector<double> bin_mean;
  std::vector<double> bin_std;

  bool per_bin() const { return !bin_mean.empty(); }
};

/// Mergeable count/mean/M2 accumulator (Chan et al. parallel update).
struct MomentAccumulator {
  double count = 0.0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const MomentAccumulator& other);
  double variance() const { return count > 0 ? m2 / count : 0.0; }
};

/// Global scalar mean/std over every entry of every matrix (std clamped to 1e-8).
NormStats fit_normalizer(std::span<const LogMel> training_features, bool per_bin = false);
LogMel apply_normalizer(LogMel f, const NormStats& s);

/// Exactly target_frames rows: zero rows appended, or the prefix kept.
LogMel pad_or_truncate(LogMel f, std::size_t target_frames);

struct AugmentPolicy {
  struct Mask {
    int count = 0;
    int max_width = 0;
    int min_width = 0;
  };
  Mask time_mask{1, 30, 0};
  Mask freq_mask{1, 12, 0};
  int min_bands = 2;
  int max_bands = 5;
  double min_gain_db = -6.0;
  double max_gain_db = 6.0;

  void validate() const;
  static AugmentPolicy none();
};

/// Zeroes `count` random blocks of consecutive frames and of consecutive mel bins.
LogMel spec_augment(LogMel f, const AugmentPolicy& p, std::uint64_t seed);

/// Splits the mel axis into a random number of contiguous bands, draws a dB gain
/// per band, and adds the piecewise-linear (between band centres) gain curve in
/// natural-log units (dB * ln(10) / 20).
LogMel filter_augment(LogMel f, const AugmentPolicy& p, std::uint64_t seed);

/// Binary cache record: magic, frames, mel_bins, hop, window, sample_rate, then
/// row-major little-endian float32 values.
void write_feature_cache(const std::string& path, const LogMel& f);
LogMel read_feature_cache(const std::string& path);
/// Key combining the clip content digest and the frontend configuration.
std::string feature_cache_key(const std::string& clip_digest, int mel_bins);

void write_norm_stats(const std::string& path, const NormStats& s);
NormStats read_norm_stats(const std::string& path);

}  // namespace mtlsed
