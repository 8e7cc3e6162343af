#include "mtlsed/audiogen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

#include "mtlsed/errors.hpp"

namespace mtlsed {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t samples_for(double seconds) {
  return static_cast<std::size_t>(std::llround(seconds * kSampleRate));
}

double round_ms(double seconds) { return std::round(seconds * 1000.0) / 1000.0; }

// RBJ band-pass biquad (0 dB peak gain), run twice for steeper skirts.
class BandPass {
 public:
  BandPass(double lo, double hi) {
    const double f0 = std::sqrt(lo * hi);
    const double q = f0 / (hi - lo);
    const double w0 = kTwoPi * f0 / kSampleRate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0_ = alpha / a0;
    b2_ = -alpha / a0;
    a1_ = -2.0 * std::cos(w0) / a0;
    a2_ = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_, b2_, a1_, a2_;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

void normalize_rms(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / std::max<std::size_t>(x.size(), 1));
  if (rms > 0.0)
    for (double& v : x) v *= target / rms;
}

std::vector<double> band_noise(std::size_t n, double lo, double hi, Rng& rng) {
  constexpr std::size_t kPreroll = 4096;
  BandPass f1(lo, hi), f2(lo, hi);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n + kPreroll; ++i) {
    const double y = f2(f1(uniform(rng, -1.0, 1.0)));
    if (i >= kPreroll) out[i - kPreroll] = y;
  }
  normalize_rms(out, 1.0);
  return out;
}

// Harmonic tone following an instantaneous f0 track; harmonics stop below 7.5 kHz.
std::vector<double> harmonic_tone(const std::vector<double>& f0, double rolloff, int max_harmonics) {
  std::vector<double> out(f0.size(), 0.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < f0.size(); ++i) {
    phase += kTwoPi * f0[i] / kSampleRate;
    double s = 0.0;
    for (int h = 1; h <= max_harmonics; ++h) {
      if (h * f0[i] > 7500.0) break;
      s += std::sin(h * phase) / std::pow(h, rolloff);
    }
    out[i] = s;
  }
  return out;
}

// Partials at fixed frequencies with an exponential decay starting at `start`.
void add_strike(std::vector<double>& out, std::size_t start, double freq, double decay_s, double amp,
                const std::vector<double>& partial_ratios) {
  const std::size_t len = std::min(out.size() - std::min(out.size(), start), samples_for(decay_s * 6.0));
  for (std::size_t k = 0; k < len; ++k) {
    const double t = static_cast<double>(k) / kSampleRate;
    const double env = amp * std::exp(-t / decay_s);
    double s = 0.0;
    for (std::size_t p = 0; p < partial_ratios.size(); ++p) {
      const double f = freq * partial_ratios[p];
      if (f < 7800.0) s += std::sin(kTwoPi * f * t) / static_cast<double>(p + 1);
    }
    out[start + k] += env * s;
  }
}

void apply_fades(std::vector<double>& x, double fade_s) {
  const std::size_t n = std::min(samples_for(fade_s), x.size() / 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = static_cast<double>(i) / static_cast<double>(n);
    x[i] *= g;
    x[x.size() - 1 - i] *= g;
  }
}

Waveform to_waveform(std::vector<double> x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  Waveform w;
  w.samples.resize(x.size());
  const double scale = m > 0.0 ? peak / m : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) w.samples[i] = static_cast<float>(x[i] * scale);
  return w;
}

std::vector<double> synth_stationary(const ArchetypeSpec& spec, std::size_t n, Rng& rng) {
  auto x = band_noise(n, spec.band_lo_hz, spec.band_hi_hz, rng);
  apply_fades(x, 0.01);
  return x;
}

std::vector<double> synth_noise_impulses(const ArchetypeSpec& spec, std::size_t n, Rng& rng) {
  auto x = band_noise(n, spec.band_lo_hz, spec.band_hi_hz, rng);
  for (double& v : x) v *= 0.6;
  const double seconds = static_cast<double>(n) / kSampleRate;
  const double rate = uniform(rng, 5.0, 10.0);
  const auto count = static_cast<int>(std::lround(rate * seconds));
  for (int k = 0; k < count; ++k) {
    const auto at = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(n)));
    if (spec.klass == EventClass::Running_water) {
      // Bubble: short rising chirp.
      const double f_start = uniform(rng, 600.0, 1200.0);
      const double f_end = f_start * uniform(rng, 1.5, 2.2);
      const std::size_t len = std::min(n - at, samples_for(0.03));
      double phase = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(len, 1));
        phase += kTwoPi * (f_start + (f_end - f_start) * u) / kSampleRate;
        x[at + i] += 2.0 * std::sin(phase) * std::exp(-4.0 * u);
      }
    } else {
      // Click: decaying broadband burst.
      const std::size_t len = std::min(n - at, samples_for(0.012));
      for (std::size_t i = 0; i < len; ++i)
        x[at + i] += 3.0 * uniform(rng, -1.0, 1.0) * std::exp(-static_cast<double>(i) / (0.003 * kSampleRate));
    }
  }
  apply_fades(x, 0.01);
  return x;
}

std::vector<double> synth_pitch_contour(const ArchetypeSpec& spec, std::size_t n, Rng& rng) {
  const double base = uniform(rng, spec.pitch_lo_hz, spec.pitch_hi_hz);
  const double seconds = static_cast<double>(n) / kSampleRate;
  std::vector<double> f0(n), env(n, 0.0);
  switch (spec.klass) {
    case EventClass::Speech: {
      const double vib_rate = uniform(rng, 1.5, 3.0);
      const double vib_phase = uniform(rng, 0.0, kTwoPi);
      const double drift = uniform(rng, -0.12, 0.12);
      const double syllable_rate = uniform(rng, 3.5, 5.5);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        f0[i] = base * (1.0 + 0.2 * std::sin(kTwoPi * vib_rate * t + vib_phase) + drift * (t / seconds - 0.5));
        const double s = std::sin(std::numbers::pi * syllable_rate * t);
        env[i] = std::pow(std::abs(s), 0.6);
      }
      break;
    }
    case EventClass::Dog: {
      double t0 = 0.0;
      while (t0 < seconds) {
        const double bark = std::min(uniform(rng, 0.12, 0.25), seconds - t0);
        const std::size_t a = samples_for(t0), b = std::min(n, samples_for(t0 + bark));
        for (std::size_t i = a; i < b; ++i) {
          const double u = (static_cast<double>(i - a)) / std::max<double>(1.0, static_cast<double>(b - a));
          f0[i] = base * (1.25 - 0.5 * u);
          env[i] = std::sin(std::numbers::pi * u);
        }
        t0 += bark + uniform(rng, 0.06, 0.18);
      }
      for (std::size_t i = 0; i < n; ++i)
        if (f0[i] == 0.0) f0[i] = base;
      break;
    }
    default: {  // Cat: one meow, pitch rises then falls.
      for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(n);
        f0[i] = base * (0.82 + 0.36 * std::sin(std::numbers::pi * u));
        env[i] = std::pow(std::sin(std::numbers::pi * u), 0.6);
      }
      break;
    }
  }
  auto x = harmonic_tone(f0, spec.klass == EventClass::Speech ? 1.2 : 0.9, 16);
  for (std::size_t i = 0; i < n; ++i) x[i] *= env[i];
  apply_fades(x, 0.005);
  return x;
}

std::vector<double> synth_stable_high(const ArchetypeSpec& spec, std::size_t n, Rng& rng) {
  const double freq = uniform(rng, spec.pitch_lo_hz, spec.pitch_hi_hz);
  const double seconds = static_cast<double>(n) / kSampleRate;
  std::vector<double> x(n, 0.0);
  if (spec.klass == EventClass::Alarm_bell_ringing) {
    const double strike_rate = uniform(rng, 4.0, 8.0);
    for (double t = 0.0; t < seconds; t += 1.0 / strike_rate)
      add_strike(x, samples_for(t), freq, 0.025, 1.0, {1.0, 2.0});
  } else {  // Dishes
    const int clinks = static_cast<int>(std::max(1.0, std::round(seconds * uniform(rng, 2.0, 4.0))));
    for (int k = 0; k < clinks; ++k) {
      const double t = k == 0 ? 0.0 : uniform(rng, 0.0, std::max(0.0, seconds - 0.05));
      add_strike(x, samples_for(t), freq, 0.04, uniform(rng, 0.6, 1.0), {1.0, 1.47, 2.09});
    }
  }
  apply_fades(x, 0.002);
  return x;
}

std::array<ArchetypeSpec, kNumEventClasses> make_archetypes() {
  using enum EventClass;
  using enum ArchetypeFamily;
  constexpr double kLongMin = 4.0, kLongMax = 8.0, kShortMin = 0.3, kShortMax = 2.0;
  std::array<ArchetypeSpec, kNumEventClasses> a{};
  a[index_of(Vacuum_cleaner)] = {Vacuum_cleaner, StationaryNoise, 400, 2400, 0, 0, kLongMin, kLongMax};
  a[index_of(Frying)] = {Frying, StationaryNoise, 2600, 7000, 0, 0, kLongMin, kLongMax};
  a[index_of(Blender)] = {Blender, StationaryNoise, 120, 900, 0, 0, kLongMin, kLongMax};
  a[index_of(Electric_shaver_toothbrush)] = {Electric_shaver_toothbrush, NoisePlusImpulses, 1500, 5000, 0, 0,
                                             kLongMin, kLongMax};
  a[index_of(Running_water)] = {Running_water, NoisePlusImpulses, 500, 6000, 0, 0, kLongMin, kLongMax};
  a[index_of(Speech)] = {Speech, PitchContourTone, 0, 0, 100, 220, kShortMin, kShortMax};
  a[index_of(Dog)] = {Dog, PitchContourTone, 0, 0, 350, 650, kShortMin, kShortMax};
  a[index_of(Cat)] = {Cat, PitchContourTone, 0, 0, 500, 900, kShortMin, kShortMax};
  a[index_of(Dishes)] = {Dishes, StableHighTone, 0, 0, 3000, 5200, kShortMin, kShortMax};
  a[index_of(Alarm_bell_ringing)] = {Alarm_bell_ringing, StableHighTone, 0, 0, 2200, 3400, kShortMin, kShortMax};
  return a;
}

}  // namespace

std::string_view to_string(ArchetypeFamily f) {
  switch (f) {
    case ArchetypeFamily::StationaryNoise: return "StationaryNoise";
    case ArchetypeFamily::NoisePlusImpulses: return "NoisePlusImpulses";
    case ArchetypeFamily::PitchContourTone: return "PitchContourTone";
    case ArchetypeFamily::StableHighTone: return "StableHighTone";
  }
  return "?";
}

const ArchetypeSpec& archetype(EventClass klass) {
  static const auto table = make_archetypes();
  return table[index_of(klass)];
}

double sample_duration(EventClass klass, Rng& rng) {
  const auto& spec = archetype(klass);
  return round_ms(uniform(rng, spec.min_duration, spec.max_duration));
}

Waveform synth_event(EventClass klass, double duration, std::uint64_t seed) {
  require(duration >= kMinEventSeconds && duration <= kMaxEventSeconds,
          "synth_event: duration must be within [0.25, 10] s");
  const auto& spec = archetype(klass);
  Rng rng = make_rng(seed, {index_of(klass), 0x5e7});
  const std::size_t n = samples_for(duration);
  std::vector<double> x;
  switch (spec.family) {
    case ArchetypeFamily::StationaryNoise: x = synth_stationary(spec, n, rng); break;
    case ArchetypeFamily::NoisePlusImpulses: x = synth_noise_impulses(spec, n, rng); break;
    case ArchetypeFamily::PitchContourTone: x = synth_pitch_contour(spec, n, rng); break;
    case ArchetypeFamily::StableHighTone: x = synth_stable_high(spec, n, rng); break;
  }
  return to_waveform(std::move(x), 0.9);
}

std::vector<double> pink_noise(std::size_t n, double level_dbfs, std::uint64_t seed) {
  Rng rng = make_rng(seed, {0x9141});
  std::vector<double> out(n);
  double b0 = 0, b1 = 0, b2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double white = uniform(rng, -1.0, 1.0);
    b0 = 0.99765 * b0 + white * 0.0990460;
    b1 = 0.96300 * b1 + white * 0.2965164;
    b2 = 0.57000 * b2 + white * 1.0526913;
    out[i] = b0 + b1 + b2 + white * 0.1848;
  }
  normalize_rms(out, std::pow(10.0, level_dbfs / 20.0));
  return out;
}

std::vector<EventLabel> ClipRecipe::labels() const {
  std::vector<EventLabel> out;
  for (const auto& e : events) out.push_back({clip_id, e.klass, e.onset, round_ms(e.onset + e.duration)});
  return out;
}

std::set<EventClass> ClipRecipe::classes() const {
  std::set<EventClass> out;
  for (const auto& e : events) out.insert(e.klass);
  return out;
}

std::vector<double> mix_clip(const ClipRecipe& recipe) {
  const std::size_t n = samples_for(kClipSeconds);
  auto mix = pink_noise(n, recipe.background_dbfs, recipe.seed);
  for (const auto& e : recipe.events) {
    require(e.onset >= 0.0 && e.onset + e.duration <= kClipSeconds + 1e-9,
            "event " + std::string(to_string(e.klass)) + " extends past the 10 s clip");
    const Waveform w = synth_event(e.klass, e.duration, e.seed);
    const double gain = std::pow(10.0, e.gain_db / 20.0);
    const std::size_t start = samples_for(e.onset);
    for (std::size_t i = 0; i < w.samples.size() && start + i < n; ++i) mix[start + i] += gain * w.samples[i];
  }
  return mix;
}

Waveform render_clip(const ClipRecipe& recipe) {
  auto mix = mix_clip(recipe);
  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  const double scale = peak > 0.95 ? 0.95 / peak : 1.0;
  Waveform w;
  w.samples.resize(mix.size());
  for (std::size_t i = 0; i < mix.size(); ++i)
    w.samples[i] = static_cast<float>(std::clamp(mix[i] * scale, -1.0, 1.0));
  quantize_pcm16(w);
  return w;
}

std::pair<Waveform, std::vector<EventLabel>> synth_clip(
    const std::vector<std::pair<EventClass, double>>& events, double background_dbfs, std::uint64_t seed,
    const std::string& clip_id) {
  ClipRecipe recipe;
  recipe.clip_id = clip_id;
  recipe.background_dbfs = background_dbfs;
  recipe.seed = seed;
  Rng rng = make_rng(seed, {0xc11b});
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto [klass, onset] = events[i];
    PlacedEvent e;
    e.klass = klass;
    e.onset = onset;
    e.duration = sample_duration(klass, rng);
    e.gain_db = uniform(rng, -12.0, -3.0);
    e.seed = derive_seed(seed, {i, 0xe7e});
    require(onset >= 0.0 && onset + e.duration <= kClipSeconds,
            "event " + std::string(to_string(klass)) + " at " + std::to_string(onset) + " s with duration " +
                std::to_string(e.duration) + " s extends past the 10 s clip");
    recipe.events.push_back(e);
  }
  return {render_clip(recipe), recipe.labels()};
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Strong: return "strong";
    case Split::Weak: return "weak";
    case Split::Unlabeled: return "unlabeled";
    case Split::Validation: return "validation";
  }
  return "?";
}

int DatasetConfig::clips(Split s) const {
  switch (s) {
    case Split::Strong: return strong_clips;
    case Split::Weak: return weak_clips;
    case Split::Unlabeled: return unlabeled_clips;
    case Split::Validation: return validation_clips;
  }
  return 0;
}

void DatasetConfig::validate() const {
  for (Split s : kAllSplits)
    require(clips(s) >= 1, "audiogen: clip count for split '" + std::string(to_string(s)) + "' must be >= 1");
  require(max_polyphony >= 1, "audiogen: max_polyphony must be >= 1");
  require(max_events >= 1, "audiogen: max_events must be >= 1");
  require(min_gain_db <= max_gain_db, "audiogen: min_gain_db must not exceed max_gain_db");
}

namespace {

int overlap_count(const std::vector<PlacedEvent>& events, double on, double off) {
  // Maximum number of existing events simultaneously active inside [on, off).
  std::vector<std::pair<double, int>> edges;
  for (const auto& e : events) {
    const double a = std::max(on, e.onset), b = std::min(off, e.onset + e.duration);
    if (a < b) {
      edges.emplace_back(a, +1);
      edges.emplace_back(b, -1);
    }
  }
  std::sort(edges.begin(), edges.end(), [](auto& x, auto& y) {
    return x.first < y.first || (x.first == y.first && x.second < y.second);
  });
  int cur = 0, best = 0;
  for (auto& [t, d] : edges) best = std::max(best, cur += d);
  return best;
}

ClipRecipe make_recipe(const DatasetConfig& cfg, std::uint64_t seed, Split split, std::size_t index) {
  Rng rng = make_rng(seed, {static_cast<std::uint64_t>(split), index});
  ClipRecipe r;
  std::ostringstream name;
  name << to_string(split) << '_' << std::setw(4) << std::setfill('0') << index << ".wav";
  r.clip_id = name.str();
  r.background_dbfs = cfg.background_dbfs;
  r.seed = derive_seed(seed, {static_cast<std::uint64_t>(split), index, 0xb6});
  const auto n_events = uniform_int(rng, 1, cfg.max_events);
  for (std::int64_t k = 0; k < n_events; ++k) {
    PlacedEvent e;
    e.klass = static_cast<EventClass>(uniform_int(rng, 0, kNumEventClasses - 1));
    e.duration = sample_duration(e.klass, rng);
    e.gain_db = uniform(rng, cfg.min_gain_db, cfg.max_gain_db);
    e.seed = derive_seed(r.seed, {static_cast<std::uint64_t>(k), 0xe7e});
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      e.onset = std::min(round_ms(uniform(rng, 0.0, kClipSeconds - e.duration)), kClipSeconds - e.duration);
      placed = overlap_count(r.events, e.onset, e.onset + e.duration) + 1 <= cfg.max_polyphony;
    }
    if (placed) r.events.push_back(e);
  }
  std::sort(r.events.begin(), r.events.end(), [](const PlacedEvent& a, const PlacedEvent& b) {
    return a.onset < b.onset || (a.onset == b.onset && a.klass < b.klass);
  });
  return r;
}

}  // namespace

GeneratedDataset generate_dataset(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  GeneratedDataset data;
  data.config = config;
  data.seed = seed;
  for (Split s : kAllSplits) {
    auto& out = data.recipes[static_cast<std::size_t>(s)];
    for (int i = 0; i < config.clips(s); ++i) out.push_back(make_recipe(config, seed, s, static_cast<std::size_t>(i)));
  }
  return data;
}

DatasetManifest GeneratedDataset::manifest(Split s) const {
  DatasetManifest m;
  m.split = s;
  for (const auto& r : split(s)) {
    ManifestRow row;
    row.filename = r.clip_id;
    if (s == Split::Strong || s == Split::Validation) row.strong = r.labels();
    if (s == Split::Weak) row.weak = r.classes();
    m.rows.push_back(std::move(row));
  }
  return m;
}

DatasetManifest GeneratedDataset::unlabeled_truth() const {
  DatasetManifest m;
  m.split = Split::Unlabeled;
  for (const auto& r : split(Split::Unlabeled)) m.rows.push_back({r.clip_id, r.labels(), r.classes()});
  return m;
}

namespace {

std::string fmt_time(double t) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << t;
  return os.str();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  for (auto& c : cols)
    if (!c.empty() && c.back() == '\r') c.pop_back();
  return cols;
}

double parse_time(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError("line " + std::to_string(line_no) + ": bad time value '" + s + "'");
}

}  // namespace

std::string format_strong_tsv(const std::vector<EventLabel>& labels) {
  std::string out = "filename\tonset\toffset\tevent_label\n";
  for (const auto& l : labels)
    out += l.clip_id + '\t' + fmt_time(l.onset) + '\t' + fmt_time(l.offset) + '\t' + std::string(to_string(l.klass)) + '\n';
  return out;
}

std::string format_manifest(const DatasetManifest& m) {
  switch (m.split) {
    case Split::Strong:
    case Split::Validation: {
      std::vector<EventLabel> all;
      for (const auto& r : m.rows) all.insert(all.end(), r.strong.begin(), r.strong.end());
      return format_strong_tsv(all);
    }
    case Split::Weak: {
      std::string out = "filename\tevent_labels\n";
      for (const auto& r : m.rows) {
        out += r.filename + '\t';
        bool first = true;
        for (EventClass c : r.weak) {
          if (!first) out += ',';
          out += to_string(c);
          first = false;
        }
        out += '\n';
      }
      return out;
    }
    case Split::Unlabeled: {
      std::string out = "filename\n";
      for (const auto& r : m.rows) out += r.filename + '\n';
      return out;
    }
  }
  return {};
}

std::vector<EventLabel> parse_strong_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<EventLabel> out;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cols = split_tabs(line);
    if (line_no == 1 && cols[0] == "filename") continue;
    require(cols.size() == 4, "line " + std::to_string(line_no) + ": expected filename, onset, offset, event_label");
    EventLabel l{cols[0], parse_event_class(cols[3]), parse_time(cols[1], line_no), parse_time(cols[2], line_no)};
    require(l.onset >= 0.0 && l.onset < l.offset, "line " + std::to_string(line_no) + ": onset must precede offset");
    out.push_back(std::move(l));
  }
  return out;
}

DatasetManifest parse_manifest(const std::string& text, Split split) {
  DatasetManifest m;
  m.split = split;
  if (split == Split::Strong || split == Split::Validation) {
    std::map<std::string, std::size_t> index;
    for (auto& l : parse_strong_tsv(text)) {
      auto [it, inserted] = index.emplace(l.clip_id, m.rows.size());
      if (inserted) m.rows.push_back({l.clip_id, {}, {}});
      m.rows[it->second].strong.push_back(std::move(l));
    }
    return m;
  }
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cols = split_tabs(line);
    if (line_no == 1 && cols[0] == "filename") continue;
    ManifestRow row;
    row.filename = cols[0];
    if (split == Split::Weak) {
      require(cols.size() == 2, "line " + std::to_string(line_no) + ": expected filename, event_labels");
      std::size_t start = 0;
      while (start <= cols[1].size()) {
        const auto comma = cols[1].find(',', start);
        const auto tok = cols[1].substr(start, comma - start);
        if (!tok.empty()) row.weak.insert(parse_event_class(tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_dataset(const GeneratedDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  auto write_text = [](const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << s;
  };
  for (Split s : kAllSplits) {
    const fs::path audio_dir = fs::path(dir) / "audio" / std::string(to_string(s));
    fs::create_directories(audio_dir);
    for (const auto& r : data.split(s)) write_wav((audio_dir / r.clip_id).string(), render_clip(r));
    write_text(fs::path(dir) / (std::string(to_string(s)) + ".tsv"), format_manifest(data.manifest(s)));
  }
  write_text(fs::path(dir) / "unlabeled_truth.tsv", format_manifest([&] {
               auto m = data.unlabeled_truth();
               m.split = Split::Strong;
               return m;
             }()));
}

}  // namespace mtlsed
