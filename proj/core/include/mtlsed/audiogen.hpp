#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mtlsed/random.hpp"
#include "mtlsed/taxonomy.hpp"
#include "mtlsed/wav.hpp"

namespace mtlsed {

inline constexpr double kClipSeconds = 10.0;

enum class ArchetypeFamily { StationaryNoise, NoisePlusImpulses, PitchContourTone, StableHighTone };
std::string_view to_string(ArchetypeFamily f);

/// Synthesis recipe for one event class. Noise families use `band_*`,
/// tonal families use `pitch_*` (fundamental range in Hz).
struct ArchetypeSpec {
  EventClass klass{};
  ArchetypeFamily family{};
  double band_lo_hz = 0.0;
  double band_hi_hz = 0.0;
  double pitch_lo_hz = 0.0;
  double pitch_hi_hz = 0.0;
  double min_duration = 0.0;
  double max_duration = 0.0;
};

const ArchetypeSpec& archetype(EventClass klass);

inline constexpr double kMinEventSeconds = 0.25;
inline constexpr double kMaxEventSeconds = 10.0;

/// Draws an event duration from the class's distribution, rounded to 1 ms.
double sample_duration(EventClass klass, Rng& rng);

/// Deterministic isolated event of `duration` seconds at 16 kHz, peak 0.9.
Waveform synth_event(EventClass klass, double duration, std::uint64_t seed);

/// Pink noise scaled to the given RMS level in dBFS.
std::vector<double> pink_noise(std::size_t n, double level_dbfs, std::uint64_t seed);

struct PlacedEvent {
  EventClass klass{};
  double onset = 0.0;
  double duration = 0.0;
  double gain_db = 0.0;
  std::uint64_t seed = 0;
};

struct ClipRecipe {
  std::string clip_id;
  std::vector<PlacedEvent> events;
  double background_dbfs = -30.0;
  std::uint64_t seed = 0;

  std::vector<EventLabel> labels() const;
  std::set<EventClass> classes() const;
};

/// Background plus events before peak limiting.
std::vector<double> mix_clip(const ClipRecipe& recipe);

/// mix_clip, scaled down so the peak is at most 0.95, hard-clipped to [-1, 1]
/// and rounded to the 16-bit grid.
Waveform render_clip(const ClipRecipe& recipe);

/// Places each (class, onset) pair with a sampled duration and gain, then renders
/// the 10 s clip. Throws ValidationError when an event would run past the clip end.
std::pair<Waveform, std::vector<EventLabel>> synth_clip(
    const std::vector<std::pair<EventClass, double>>& events, double background_dbfs,
    std::uint64_t seed, const std::string& clip_id = "clip");

enum class Split { Strong, Weak, Unlabeled, Validation };
inline constexpr std::array<Split, 4> kAllSplits = {Split::Strong, Split::Weak, Split::Unlabeled,
                                                    Split::Validation};
std::string_view to_string(Split s);

struct DatasetConfig {
  int strong_clips = 200;
  int weak_clips = 50;
  int unlabeled_clips = 300;
  int validation_clips = 80;
  double background_dbfs = -30.0;
  int max_polyphony = 3;
  int max_events = 4;
  double min_gain_db = -12.0;
  double max_gain_db = -3.0;

  int clips(Split s) const;
  void validate() const;
};

struct ManifestRow {
  std::string filename;
  std::vector<EventLabel> strong;   // strong and validation rows
  std::set<EventClass> weak;        // weak rows
};

struct DatasetManifest {
  Split split{};
  std::vector<ManifestRow> rows;
};

struct GeneratedDataset {
  DatasetConfig config;
  std::uint64_t seed = 0;
  std::array<std::vector<ClipRecipe>, 4> recipes;

  const std::vector<ClipRecipe>& split(Split s) const { return recipes[static_cast<std::size_t>(s)]; }
  /// Manifest as published: weak rows carry classes only, unlabeled rows carry nothing.
  DatasetManifest manifest(Split s) const;
  /// Hidden ground truth for the unlabeled split (diagnostics only).
  DatasetManifest unlabeled_truth() const;
};

GeneratedDataset generate_dataset(const DatasetConfig& config, std::uint64_t seed);

// DCASE-style TSV manifests.
std::string format_strong_tsv(const std::vector<EventLabel>& labels);
std::string format_manifest(const DatasetManifest& m);
std::vector<EventLabel> parse_strong_tsv(const std::string& text);
/// Parses a manifest of the given split. Strong/validation rows are grouped by filename.
DatasetManifest parse_manifest(const std::string& text, Split split);

/// Writes `audio/<split>/<file>.wav`, `<split>.tsv`, and `unlabeled_truth.tsv` under dir.
void write_dataset(const GeneratedDataset& data, const std::string& dir);

}  // namespace mtlsed
