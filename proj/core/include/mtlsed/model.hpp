#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mtlsed/frontend.hpp"
#include "mtlsed/nn/ops.hpp"

namespace mtlsed {

struct BlockConfig {
  std::size_t channels = 16;
  std::size_t kernel = 3;
  std::size_t pool_time = 1;
  std::size_t pool_freq = 1;
  /// Number of FDY basis kernels; ignored for the shared block.
  std::size_t basis = 1;

  bool operator==(const BlockConfig&) const = default;
};

struct ModelConfig {
  std::size_t mel_bins = 128;
  std::size_t input_frames = 625;
  BlockConfig shared{16, 3, 2, 4, 1};
  std::vector<BlockConfig> branch{{16, 3, 2, 2, 4}, {32, 3, 1, 2, 4}, {32, 3, 1, 2, 4}};
  std::size_t recurrent_hidden = 32;
  std::size_t sed_classes = 10;
  /// 0 builds the single-branch model.
  std::size_t acc_classes = 4;
  double attention_temperature = 1.0;

  /// Throws ValidationError on zero sizes, even kernels, K < 1 or pooling
  /// factors larger than the axis they pool.
  void validate() const;
  std::size_t time_pool() const;
  std::size_t output_frames() const;
  /// Frequency bins left after all pooling.
  std::size_t output_freq() const;

  bool operator==(const ModelConfig&) const = default;

  /// Single-branch tagger: same encoder family, wider and with plain convs.
  static ModelConfig tagger(std::size_t mel_bins = 128);
  /// Small preset used by tests and quick runs.
  static ModelConfig tiny(std::size_t mel_bins = 32);
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
/// SHA-256 of the canonical JSON serialisation.
std::string config_digest(const ModelConfig& c);

struct Posteriors {
  std::size_t frames = 0;
  std::size_t sed_classes = 0;
  std::size_t acc_classes = 0;
  std::vector<float> sed_frame;  // frames x sed_classes
  std::vector<float> sed_clip;
  std::vector<float> acc_frame;  // empty after stripping
  std::vector<float> acc_clip;

  float sed(std::size_t t, std::size_t c) const { return sed_frame[t * sed_classes + c]; }
};

struct ForwardOptions {
  /// Skip the ACC branch entirely (no forward, no gradient).
  bool skip_acc = false;
  /// Replace FDY attention by 1/K.
  bool uniform_attention = false;
};

template <typename T>
struct ForwardVars {
  nn::Var sed_frame, sed_clip;
  nn::Var acc_frame, acc_clip;  // invalid when skipped or stripped
};

template <typename T>
class BasicModel {
 public:
  BasicModel() = default;
  BasicModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  bool has_acc() const { return !acc_.blocks.empty(); }

  /// Records the forward graph for one clip. `input` is [1, mel_bins, frames].
  /// With `train` false the parameters enter the tape as constants.
  ForwardVars<T> forward(nn::Tape<T>& tape, nn::Var input, bool train, const ForwardOptions& opt = {});
  Posteriors predict(const LogMel& features, const ForwardOptions& opt = {}) const;

  /// Removes the ACC branch in place; throws std::logic_error if already gone.
  void strip_acc();
  std::size_t param_count() const;

  std::vector<nn::Parameter<T>*> parameters();
  std::vector<const nn::Parameter<T>*> parameters() const;
  std::vector<nn::Parameter<T>*> sed_parameters();
  void zero_grad();

  template <typename U>
  BasicModel<U> cast() const;

 private:
  template <typename U>
  friend class BasicModel;

  struct Conv {
    nn::Parameter<T> weight, bias;
  };
  struct Fdy {
    nn::Parameter<T> basis, basis_bias, attn_w, attn_b;
  };
  struct Gru {
    nn::Parameter<T> w_ih, w_hh, b_ih, b_hh;
  };
  struct Branch {
    std::vector<Fdy> blocks;
    Gru fwd, bwd;
    nn::Parameter<T> head_w, head_b;
  };

  static Branch make_branch(const ModelConfig& c, const std::string& prefix, std::size_t classes, std::uint64_t seed);
  std::pair<nn::Var, nn::Var> run_branch(nn::Tape<T>& tape, Branch& b, nn::Var x, bool train,
                                         const ForwardOptions& opt) const;
  static void collect(Branch& b, std::vector<nn::Parameter<T>*>& out);

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  Conv shared_;
  Branch sed_, acc_;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

extern template class BasicModel<float>;
extern template class BasicModel<double>;

/// Tensor [1, mel_bins, frames] from a frames x mel_bins LogMel.
template <typename T>
nn::Tensor<T> features_to_tensor(const LogMel& f);

/// SHA-256 over parameter names, shapes and float32 values.
std::string parameter_digest(const Model& m);

// Gradient checking -------------------------------------------------------

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients of `loss` with central differences on a random
/// subsample (1%, at least min(n, 32) entries per parameter). `loss` records a
/// fresh graph on the tape it is given and returns the scalar node; it must read
/// parameters through Tape::parameter so that gradients reach them.
GradCheckResult grad_check(const std::vector<nn::Parameter<double>*>& params,
                           const std::function<nn::Var(nn::Tape<double>&)>& loss, double epsilon,
                           std::uint64_t seed);

// Checkpoints ----------------------------------------------------------------

struct Checkpoint {
  Model model;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::string& path, const Model& m, std::uint64_t step);
/// When `expected` is given, a config digest mismatch is a ValidationError.
Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace mtlsed
