#include "mtlsed/frontend.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <numbers>
#include <stdexcept>

#include "mtlsed/digest.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/random.hpp"

namespace mtlsed {
namespace {

constexpr int kBins = kWindowSamples / 2 + 1;

// FFTW planning is not thread-safe; plans are created once and executed with
// the new-array interface, which is.
class RealFft {
 public:
  static const RealFft& instance() {
    static RealFft fft;
    return fft;
  }
  void execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }

 private:
  RealFft() {
    static std::mutex planner;
    std::lock_guard lock(planner);
    auto* in = fftw_alloc_real(kWindowSamples);
    auto* out = fftw_alloc_complex(kBins);
    plan_ = fftw_plan_dft_r2c_1d(kWindowSamples, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  fftw_plan plan_;
};

struct SparseFilter {
  std::size_t first = 0;
  std::vector<double> weights;
};

const std::vector<SparseFilter>& sparse_bank(int mel_bins) {
  static std::mutex mu;
  static std::vector<std::pair<int, std::vector<SparseFilter>>> cache;
  std::lock_guard lock(mu);
  for (auto& [n, bank] : cache)
    if (n == mel_bins) return bank;
  const auto dense = mel_filterbank(mel_bins);
  std::vector<SparseFilter> bank(static_cast<std::size_t>(mel_bins));
  for (int m = 0; m < mel_bins; ++m) {
    const double* row = dense.data() + static_cast<std::size_t>(m) * kBins;
    std::size_t a = 0, b = kBins;
    while (a < static_cast<std::size_t>(kBins) && row[a] == 0.0) ++a;
    while (b > a && row[b - 1] == 0.0) --b;
    bank[m].first = a;
    bank[m].weights.assign(row + a, row + b);
  }
  cache.emplace_back(mel_bins, std::move(bank));
  return cache.back().second;
}

// numpy-style reflect padding (edge sample not repeated), any distance.
std::size_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies(int mel_bins) {
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> c(static_cast<std::size_t>(mel_bins));
  for (int m = 0; m < mel_bins; ++m) c[m] = mel_to_hz(lo + (hi - lo) * (m + 1) / (mel_bins + 1));
  return c;
}

std::vector<double> mel_filterbank(int mel_bins) {
  require(mel_bins >= 8, "log_mel: mel_bins must be >= 8");
  const double lo = hz_to_mel(0.0), hi = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(mel_bins) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (mel_bins + 1));
  std::vector<double> bank(static_cast<std::size_t>(mel_bins) * kBins, 0.0);
  for (int m = 0; m < mel_bins; ++m) {
    const double left = edges[m], centre = edges[m + 1], right = edges[m + 2];
    for (int k = 0; k < kBins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / kWindowSamples;
      double w = 0.0;
      if (f > left && f <= centre) w = (f - left) / (centre - left);
      else if (f > centre && f < right) w = (right - f) / (right - centre);
      bank[static_cast<std::size_t>(m) * kBins + k] = w;
    }
  }
  return bank;
}

LogMel log_mel(const Waveform& w, int mel_bins) {
  require(!w.samples.empty(), "log_mel: empty waveform");
  require(w.sample_rate == kSampleRate, "log_mel: sample rate must be 16000 Hz (got " +
                                            std::to_string(w.sample_rate) + ")");
  const auto& bank = sparse_bank(mel_bins);
  const auto n = static_cast<std::int64_t>(w.samples.size());
  LogMel out;
  out.mel_bins = static_cast<std::size_t>(mel_bins);
  out.frames = static_cast<std::size_t>((n + kHopSamples - 1) / kHopSamples);
  out.values.resize(out.frames * out.mel_bins);

  std::vector<double> window(kWindowSamples);
  for (int j = 0; j < kWindowSamples; ++j)
    window[j] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * j / kWindowSamples);

  std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(kWindowSamples), &fftw_free);
  std::unique_ptr<fftw_complex, decltype(&fftw_free)> spec(fftw_alloc_complex(kBins), &fftw_free);
  std::vector<double> mag(kBins);
  const auto& fft = RealFft::instance();

  for (std::size_t t = 0; t < out.frames; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * kHopSamples - kWindowSamples / 2;
    for (int j = 0; j < kWindowSamples; ++j) {
      const std::int64_t idx = start + j;
      const std::size_t src = (idx >= 0 && idx < n) ? static_cast<std::size_t>(idx) : reflect_index(idx, n);
      in.get()[j] = window[j] * w.samples[src];
    }
    fft.execute(in.get(), spec.get());
    for (int k = 0; k < kBins; ++k) mag[k] = std::hypot(spec.get()[k][0], spec.get()[k][1]);
    for (int m = 0; m < mel_bins; ++m) {
      const auto& f = bank[m];
      double acc = 0.0;
      for (std::size_t i = 0; i < f.weights.size(); ++i) acc += f.weights[i] * mag[f.first + i];
      out.at(t, static_cast<std::size_t>(m)) = static_cast<float>(std::log(acc + kLogFloor));
    }
  }
  return out;
}

void MomentAccumulator::add(double x) {
  count += 1.0;
  const double delta = x - mean;
  mean += delta / count;
  m2 += delta * (x - mean);
}

void MomentAccumulator::merge(const MomentAccumulator& o) {
  if (o.count == 0) return;
  if (count == 0) {
    *this = o;
    return;
  }
  const double n = count + o.count;
  const double delta = o.mean - mean;
  mean += delta * o.count / n;
  m2 += o.m2 + delta * delta * count * o.count / n;
  count = n;
}

NormStats fit_normalizer(std::span<const LogMel> training_features, bool per_bin) {
  require(!training_features.empty(), "fit_normalizer: no training features");
  const std::size_t bins = training_features.front().mel_bins;
  MomentAccumulator global;
  std::vector<MomentAccumulator> bin(per_bin ? bins : 0);
  for (const auto& f : training_features) {
    require(f.mel_bins == bins, "fit_normalizer: inconsistent mel bin counts");
    MomentAccumulator local;
    for (std::size_t t = 0; t < f.frames; ++t)
      for (std::size_t m = 0; m < bins; ++m) {
        const double x = f.at(t, m);
        local.add(x);
        if (per_bin) bin[m].add(x);
      }
    global.merge(local);
  }
  NormStats s;
  s.mean = global.mean;
  s.std = std::max(std::sqrt(global.variance()), kNormEpsilon);
  for (const auto& b : bin) {
    s.bin_mean.push_back(b.mean);
    s.bin_std.push_back(std::max(std::sqrt(b.variance()), kNormEpsilon));
  }
  return s;
}

LogMel apply_normalizer(LogMel f, const NormStats& s) {
  if (s.per_bin()) {
    require(s.bin_mean.size() == f.mel_bins, "apply_normalizer: per-bin stats do not match mel_bins");
    for (std::size_t t = 0; t < f.frames; ++t)
      for (std::size_t m = 0; m < f.mel_bins; ++m)
        f.at(t, m) = static_cast<float>((f.at(t, m) - s.bin_mean[m]) / s.bin_std[m]);
    return f;
  }
  for (float& v : f.values) v = static_cast<float>((v - s.mean) / s.std);
  return f;
}

LogMel pad_or_truncate(LogMel f, std::size_t target_frames) {
  require(target_frames >= 1, "pad_or_truncate: target_frames must be >= 1");
  f.values.resize(target_frames * f.mel_bins, 0.0f);
  f.frames = target_frames;
  return f;
}

void AugmentPolicy::validate() const {
  for (const auto* m : {&time_mask, &freq_mask})
    require(m->count >= 0 && m->max_width >= 0 && m->min_width >= 0 && m->min_width <= m->max_width,
            "augment: mask counts and widths must be >= 0 with min <= max");
  require(min_bands >= 1 && min_bands <= max_bands, "augment: band count range must satisfy 1 <= min <= max");
  require(min_gain_db <= max_gain_db, "augment: gain range must satisfy min <= max");
}

AugmentPolicy AugmentPolicy::none() {
  AugmentPolicy p;
  p.time_mask = {0, 0, 0};
  p.freq_mask = {0, 0, 0};
  p.min_bands = p.max_bands = 1;
  p.min_gain_db = p.max_gain_db = 0.0;
  return p;
}

LogMel spec_augment(LogMel f, const AugmentPolicy& p, std::uint64_t seed) {
  p.validate();
  require(p.time_mask.max_width <= static_cast<int>(f.frames) && p.freq_mask.max_width <= static_cast<int>(f.mel_bins),
          "spec_augment: mask width exceeds matrix dimensions");
  Rng rng = make_rng(seed, {0x5a});
  for (int k = 0; k < p.time_mask.count; ++k) {
    const auto width = uniform_int(rng, p.time_mask.min_width, p.time_mask.max_width);
    const auto start = uniform_int(rng, 0, static_cast<std::int64_t>(f.frames) - width);
    for (auto t = start; t < start + width; ++t)
      for (auto& v : f.row(static_cast<std::size_t>(t))) v = 0.0f;
  }
  for (int k = 0; k < p.freq_mask.count; ++k) {
    const auto width = uniform_int(rng, p.freq_mask.min_width, p.freq_mask.max_width);
    const auto start = uniform_int(rng, 0, static_cast<std::int64_t>(f.mel_bins) - width);
    for (std::size_t t = 0; t < f.frames; ++t)
      for (auto m = start; m < start + width; ++m) f.at(t, static_cast<std::size_t>(m)) = 0.0f;
  }
  return f;
}

LogMel filter_augment(LogMel f, const AugmentPolicy& p, std::uint64_t seed) {
  p.validate();
  Rng rng = make_rng(seed, {0xfa});
  const auto bins = static_cast<std::int64_t>(f.mel_bins);
  const auto n_bands = std::min<std::int64_t>(uniform_int(rng, p.min_bands, p.max_bands), bins);
  // Distinct interior cut points give n_bands non-empty contiguous bands.
  std::vector<std::int64_t> cuts = {0, bins};
  while (static_cast<std::int64_t>(cuts.size()) < n_bands + 1) {
    const auto c = uniform_int(rng, 1, bins - 1);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<double> centres, gains;
  for (std::int64_t b = 0; b < n_bands; ++b) {
    centres.push_back(0.5 * static_cast<double>(cuts[b] + cuts[b + 1] - 1));
    gains.push_back(uniform(rng, p.min_gain_db, p.max_gain_db) * std::log(10.0) / 20.0);
  }
  std::vector<double> curve(static_cast<std::size_t>(bins));
  for (std::int64_t m = 0; m < bins; ++m) {
    const double x = static_cast<double>(m);
    if (x <= centres.front()) curve[m] = gains.front();
    else if (x >= centres.back()) curve[m] = gains.back();
    else {
      std::size_t b = 0;
      while (centres[b + 1] < x) ++b;
      const double u = (x - centres[b]) / (centres[b + 1] - centres[b]);
      curve[m] = gains[b] + u * (gains[b + 1] - gains[b]);
    }
  }
  for (std::size_t t = 0; t < f.frames; ++t)
    for (std::size_t m = 0; m < f.mel_bins; ++m) f.at(t, m) = static_cast<float>(f.at(t, m) + curve[m]);
  return f;
}

namespace {
constexpr char kCacheMagic[8] = {'M', 'T', 'L', 'F', 'E', 'A', 'T', '1'};

template <typename U>
void put_le(std::ostream& out, U v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}
template <typename U>
U get_le(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw ValidationError("truncated feature cache record");
  return v;
}
}  // namespace

void write_feature_cache(const std::string& path, const LogMel& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(kCacheMagic, sizeof(kCacheMagic));
  put_le<std::uint64_t>(out, f.frames);
  put_le<std::uint64_t>(out, f.mel_bins);
  put_le<std::int32_t>(out, f.hop);
  put_le<std::int32_t>(out, f.window);
  put_le<std::int32_t>(out, f.sample_rate);
  out.write(reinterpret_cast<const char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(float)));
}

LogMel read_feature_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCacheMagic, sizeof(magic)) != 0) throw ValidationError(path + ": not a feature cache record");
  LogMel f;
  f.frames = get_le<std::uint64_t>(in);
  f.mel_bins = get_le<std::uint64_t>(in);
  f.hop = get_le<std::int32_t>(in);
  f.window = get_le<std::int32_t>(in);
  f.sample_rate = get_le<std::int32_t>(in);
  f.values.resize(f.frames * f.mel_bins);
  in.read(reinterpret_cast<char*>(f.values.data()), static_cast<std::streamsize>(f.values.size() * sizeof(float)));
  if (!in) throw ValidationError(path + ": truncated feature values");
  return f;
}

std::string feature_cache_key(const std::string& clip_digest, int mel_bins) {
  const std::string frontend = "logmel;window=" + std::to_string(kWindowSamples) + ";hop=" + std::to_string(kHopSamples) +
                               ";sr=" + std::to_string(kSampleRate) + ";mel=" + std::to_string(mel_bins) + ";htk;floor=1e-10";
  return sha256_hex(clip_digest + "|" + sha256_hex(frontend));
}

void write_norm_stats(const std::string& path, const NormStats& s) {
  nlohmann::json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  if (s.per_bin()) {
    j["bin_mean"] = s.bin_mean;
    j["bin_std"] = s.bin_std;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

NormStats read_norm_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  const auto j = nlohmann::json::parse(in);
  NormStats s;
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  if (j.contains("bin_mean")) {
    s.bin_mean = j.at("bin_mean").get<std::vector<double>>();
    s.bin_std = j.at("bin_std").get<std::vector<double>>();
  }
  return s;
}

}  // namespace mtlsed
