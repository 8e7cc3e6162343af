#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtlsed/audiogen.hpp"
#include "mtlsed/eval.hpp"
#include "mtlsed/experiments.hpp"
#include "mtlsed/model.hpp"
#include "mtlsed/postprocess.hpp"
#include "mtlsed/training.hpp"

namespace mtlsed::cli {

/// Everything a subcommand can be configured with. Each field is one
/// `key` of an INI `[section]` and one `--section-key` flag.
struct RunConfig {
  std::uint64_t seed = 0;

  DatasetConfig dataset;

  int mel_bins = 128;
  std::size_t input_frames = 625;

  ModelConfig model;
  ModelConfig tagger = ModelConfig::tagger();

  TrainConfig train;

  FilterSearchConfig filter_search;

  std::size_t threshold_count = 50;
  PsdsParams psds1 = PsdsParams::scenario1();
  PsdsParams psds2 = PsdsParams::scenario2();

  std::vector<double> alphas{1.0, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::string> taxonomies{"proposed", "randomized"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t jobs = 1;

  /// Copies the frontend geometry into both model configs and validates
  /// every module's invariants.
  void finalize();
  ExperimentPlan plan() const;
};

struct KeyInfo {
  std::string section;
  std::string key;
  std::string help;
};

/// All recognised keys in display order.
const std::vector<KeyInfo>& config_keys();

/// "section.key" -> textual value.
using ConfigValues = std::map<std::string, std::string>;

ConfigValues to_values(const RunConfig& c);
/// Unknown keys and unparsable values are ValidationErrors. Missing keys keep
/// their defaults.
RunConfig from_values(const ConfigValues& v);

/// Reads an INI file into values, rejecting unknown sections and keys.
ConfigValues read_ini(const std::string& path);
std::string format_ini(const ConfigValues& v);

}  // namespace mtlsed::cli
