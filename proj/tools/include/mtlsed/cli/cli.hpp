#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsed/postprocess.hpp"

namespace mtlsed::cli {

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on usage or validation errors and 2 on runtime failures.
int run(const std::vector<std::string>& args);

/// Validation-set posteriors as written by `search-filters` and read by
/// `evaluate`. Clips carry either dense "probs" (frames x classes) or sparse
/// "segments" [[class, first_frame, end_frame, p], ...] over a zero background.
struct PosteriorSet {
  std::vector<EventClass> classes;
  std::vector<FramePosteriors> clips;
};

PosteriorSet posteriors_from_json(const nlohmann::json& j);
nlohmann::json posteriors_to_json(const PosteriorSet& p);

}  // namespace mtlsed::cli
