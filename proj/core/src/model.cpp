#include "mtlsed/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mtlsed/digest.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/random.hpp"

namespace mtlsed {

using nn::Parameter;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

void validate_block(const BlockConfig& b, const std::string& where, bool fdy) {
  require(b.channels >= 1, where + ": channels must be >= 1");
  require(b.kernel >= 1 && b.kernel % 2 == 1, where + ": kernel must be odd and >= 1");
  require(b.pool_time >= 1 && b.pool_freq >= 1, where + ": pool factors must be >= 1");
  if (fdy) require(b.basis >= 1, where + ": FDY basis count K must be >= 1");
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

template <typename T>
Parameter<T> uniform_param(std::string name, nn::Shape shape, double bound, Rng& rng) {
  Parameter<T> p{std::move(name), Tensor<T>(std::move(shape)), {}};
  for (auto& v : p.value.data) v = static_cast<T>(uniform(rng, -bound, bound));
  return p;
}

template <typename T>
Var param(Tape<T>& tape, const Parameter<T>& p, bool train) {
  // forward() is non-const, so handing out a mutable reference for training is sound.
  return train ? tape.parameter(const_cast<Parameter<T>&>(p)) : tape.parameter(p);
}

}  // namespace

void ModelConfig::validate() const {
  require(mel_bins >= 1, "model: mel_bins must be >= 1");
  require(input_frames >= 1, "model: input_frames must be >= 1");
  require(recurrent_hidden >= 1, "model: recurrent_hidden must be >= 1");
  require(sed_classes >= 1, "model: sed_classes must be >= 1");
  require(attention_temperature > 0.0, "model: attention_temperature must be > 0");
  require(!branch.empty(), "model: at least one branch block is required");
  validate_block(shared, "model.shared", false);
  std::size_t t = input_frames, f = mel_bins;
  auto pool = [&](const BlockConfig& b, const std::string& where) {
    require(b.pool_time <= t, where + ": time pool " + std::to_string(b.pool_time) + " exceeds time axis " +
                                  std::to_string(t) + " (pooling underflow)");
    require(b.pool_freq <= f, where + ": freq pool " + std::to_string(b.pool_freq) + " exceeds freq axis " +
                                  std::to_string(f) + " (pooling underflow)");
    t = ceil_div(t, b.pool_time);
    f = ceil_div(f, b.pool_freq);
  };
  pool(shared, "model.shared");
  for (std::size_t i = 0; i < branch.size(); ++i) {
    const std::string where = "model.branch[" + std::to_string(i) + "]";
    validate_block(branch[i], where, true);
    pool(branch[i], where);
  }
}

std::size_t ModelConfig::time_pool() const {
  std::size_t p = shared.pool_time;
  for (const auto& b : branch) p *= b.pool_time;
  return p;
}

std::size_t ModelConfig::output_frames() const {
  std::size_t t = ceil_div(input_frames, shared.pool_time);
  for (const auto& b : branch) t = ceil_div(t, b.pool_time);
  return t;
}

std::size_t ModelConfig::output_freq() const {
  std::size_t f = ceil_div(mel_bins, shared.pool_freq);
  for (const auto& b : branch) f = ceil_div(f, b.pool_freq);
  return f;
}

ModelConfig ModelConfig::tagger(std::size_t mel_bins) {
  ModelConfig c;
  c.mel_bins = mel_bins;
  c.shared = {16, 3, 2, 4, 1};
  c.branch = {{32, 3, 2, 2, 1}, {48, 3, 1, 2, 1}, {48, 3, 1, 2, 1}};
  c.recurrent_hidden = 48;
  c.acc_classes = 0;
  return c;
}

ModelConfig ModelConfig::tiny(std::size_t mel_bins) {
  ModelConfig c;
  c.mel_bins = mel_bins;
  c.shared = {8, 3, 2, 4, 1};
  c.branch = {{8, 3, 2, 2, 2}, {8, 3, 1, 2, 2}};
  c.recurrent_hidden = 16;
  return c;
}

namespace {
nlohmann::json block_json(const BlockConfig& b) {
  return {{"channels", b.channels},
          {"kernel", b.kernel},
          {"pool_time", b.pool_time},
          {"pool_freq", b.pool_freq},
          {"basis", b.basis}};
}
BlockConfig block_from_json(const nlohmann::json& j) {
  BlockConfig b;
  b.channels = j.at("channels").get<std::size_t>();
  b.kernel = j.at("kernel").get<std::size_t>();
  b.pool_time = j.at("pool_time").get<std::size_t>();
  b.pool_freq = j.at("pool_freq").get<std::size_t>();
  b.basis = j.at("basis").get<std::size_t>();
  return b;
}
}  // namespace

nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json branch = nlohmann::json::array();
  for (const auto& b : c.branch) branch.push_back(block_json(b));
  return {{"mel_bins", c.mel_bins},
          {"input_frames", c.input_frames},
          {"shared", block_json(c.shared)},
          {"branch", branch},
          {"recurrent_hidden", c.recurrent_hidden},
          {"sed_classes", c.sed_classes},
          {"acc_classes", c.acc_classes},
          {"attention_temperature", c.attention_temperature}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.mel_bins = j.at("mel_bins").get<std::size_t>();
  c.input_frames = j.at("input_frames").get<std::size_t>();
  c.shared = block_from_json(j.at("shared"));
  c.branch.clear();
  for (const auto& b : j.at("branch")) c.branch.push_back(block_from_json(b));
  c.recurrent_hidden = j.at("recurrent_hidden").get<std::size_t>();
  c.sed_classes = j.at("sed_classes").get<std::size_t>();
  c.acc_classes = j.at("acc_classes").get<std::size_t>();
  c.attention_temperature = j.at("attention_temperature").get<double>();
  c.validate();
  return c;
}

std::string config_digest(const ModelConfig& c) { return sha256_hex(to_json(c).dump()); }

template <typename T>
typename BasicModel<T>::Branch BasicModel<T>::make_branch(const ModelConfig& c, const std::string& prefix,
                                                          std::size_t classes, std::uint64_t seed) {
  Rng rng = make_rng(seed, {});
  Branch b;
  std::size_t cin = c.shared.channels;
  std::size_t freq = ceil_div(c.mel_bins, c.shared.pool_freq);
  for (std::size_t i = 0; i < c.branch.size(); ++i) {
    const auto& bc = c.branch[i];
    const std::string name = prefix + ".block" + std::to_string(i);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * bc.kernel * bc.kernel));
    const double abound = 1.0 / std::sqrt(static_cast<double>(cin));
    Fdy f;
    f.basis = uniform_param<T>(name + ".basis", {bc.basis, bc.channels, cin, bc.kernel, bc.kernel}, bound, rng);
    f.basis_bias = uniform_param<T>(name + ".basis_bias", {bc.basis, bc.channels}, bound, rng);
    f.attn_w = uniform_param<T>(name + ".attn.weight", {bc.basis, cin}, abound, rng);
    f.attn_b = uniform_param<T>(name + ".attn.bias", {bc.basis}, abound, rng);
    b.blocks.push_back(std::move(f));
    cin = bc.channels;
    freq = ceil_div(freq, bc.pool_freq);
  }
  const std::size_t d = cin * freq, h = c.recurrent_hidden;
  const double gbound = 1.0 / std::sqrt(static_cast<double>(h));
  for (auto [g, dir] : {std::pair{&b.fwd, "fwd"}, std::pair{&b.bwd, "bwd"}}) {
    const std::string name = prefix + ".gru." + dir;
    g->w_ih = uniform_param<T>(name + ".w_ih", {3 * h, d}, gbound, rng);
    g->w_hh = uniform_param<T>(name + ".w_hh", {3 * h, h}, gbound, rng);
    g->b_ih = uniform_param<T>(name + ".b_ih", {3 * h}, gbound, rng);
    g->b_hh = uniform_param<T>(name + ".b_hh", {3 * h}, gbound, rng);
  }
  const double hbound = 1.0 / std::sqrt(static_cast<double>(2 * h));
  b.head_w = uniform_param<T>(prefix + ".head.weight", {classes, 2 * h}, hbound, rng);
  b.head_b = uniform_param<T>(prefix + ".head.bias", {classes}, hbound, rng);
  return b;
}

template <typename T>
BasicModel<T>::BasicModel(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  Rng rng = make_rng(seed, {0});
  const auto& s = config_.shared;
  const double bound = 1.0 / std::sqrt(static_cast<double>(s.kernel * s.kernel));
  shared_.weight = uniform_param<T>("shared.conv.weight", {s.channels, 1, s.kernel, s.kernel}, bound, rng);
  shared_.bias = uniform_param<T>("shared.conv.bias", {s.channels}, bound, rng);
  sed_ = make_branch(config_, "sed", config_.sed_classes, derive_seed(seed, {1}));
  if (config_.acc_classes > 0) acc_ = make_branch(config_, "acc", config_.acc_classes, derive_seed(seed, {2}));
}

template <typename T>
std::pair<Var, Var> BasicModel<T>::run_branch(Tape<T>& tape, Branch& b, Var x, bool train,
                                              const ForwardOptions& opt) const {
  const T tau = static_cast<T>(config_.attention_temperature);
  for (std::size_t i = 0; i < b.blocks.size(); ++i) {
    const auto& f = b.blocks[i];
    const auto& bc = config_.branch[i];
    nn::FdyVars v{param(tape, f.basis, train), param(tape, f.basis_bias, train), param(tape, f.attn_w, train),
                  param(tape, f.attn_b, train)};
    x = nn::fdy_conv(tape, x, v, tau, opt.uniform_attention);
    x = nn::silu(tape, x);
    if (bc.pool_freq > 1 || bc.pool_time > 1) x = nn::avg_pool(tape, x, bc.pool_freq, bc.pool_time);
  }
  Var seq = nn::to_sequence(tape, x);
  auto run = [&](const Gru& g, bool reverse) {
    return nn::gru(tape, seq, param(tape, g.w_ih, train), param(tape, g.w_hh, train), param(tape, g.b_ih, train),
                   param(tape, g.b_hh, train), reverse);
  };
  Var h = nn::concat_features(tape, run(b.fwd, false), run(b.bwd, true));
  Var logits = nn::linear(tape, h, param(tape, b.head_w, train), param(tape, b.head_b, train));
  Var frame = nn::sigmoid(tape, logits);
  return {frame, nn::linear_softmax_pool(tape, frame)};
}

template <typename T>
ForwardVars<T> BasicModel<T>::forward(Tape<T>& tape, Var input, bool train, const ForwardOptions& opt) {
  const auto& in = tape.value(input);
  require(in.rank() == 3 && in.dim(0) == 1 && in.dim(1) == config_.mel_bins,
          "model: input shape " + nn::shape_string(in.shape) + " does not match mel_bins " +
              std::to_string(config_.mel_bins));
  const auto& s = config_.shared;
  Var x = nn::conv2d(tape, input, param(tape, shared_.weight, train), param(tape, shared_.bias, train));
  x = nn::silu(tape, x);
  if (s.pool_freq > 1 || s.pool_time > 1) x = nn::avg_pool(tape, x, s.pool_freq, s.pool_time);
  ForwardVars<T> out;
  std::tie(out.sed_frame, out.sed_clip) = run_branch(tape, sed_, x, train, opt);
  if (has_acc() && !opt.skip_acc) std::tie(out.acc_frame, out.acc_clip) = run_branch(tape, acc_, x, train, opt);
  return out;
}

template <typename T>
Tensor<T> features_to_tensor(const LogMel& f) {
  Tensor<T> t({1, f.mel_bins, f.frames});
  for (std::size_t i = 0; i < f.frames; ++i)
    for (std::size_t m = 0; m < f.mel_bins; ++m) t.data[m * f.frames + i] = static_cast<T>(f.at(i, m));
  return t;
}

template <typename T>
Posteriors BasicModel<T>::predict(const LogMel& features, const ForwardOptions& opt) const {
  Tape<T> tape;
  Var in = tape.constant(features_to_tensor<T>(features));
  auto vars = const_cast<BasicModel*>(this)->forward(tape, in, false, opt);
  Posteriors p;
  auto copy = [&](Var v, std::vector<float>& dst) {
    const auto& t = tape.value(v);
    dst.assign(t.data.begin(), t.data.end());
  };
  copy(vars.sed_frame, p.sed_frame);
  copy(vars.sed_clip, p.sed_clip);
  p.sed_classes = config_.sed_classes;
  p.frames = tape.value(vars.sed_frame).dim(0);
  if (vars.acc_frame.valid()) {
    copy(vars.acc_frame, p.acc_frame);
    copy(vars.acc_clip, p.acc_clip);
    p.acc_classes = config_.acc_classes;
  }
  return p;
}

template <typename T>
void BasicModel<T>::strip_acc() {
  if (!has_acc()) throw std::logic_error("strip_acc: model has no ACC branch");
  acc_ = Branch{};
  config_.acc_classes = 0;
}

template <typename T>
void BasicModel<T>::collect(Branch& b, std::vector<Parameter<T>*>& out) {
  for (auto& f : b.blocks)
    for (auto* p : {&f.basis, &f.basis_bias, &f.attn_w, &f.attn_b}) out.push_back(p);
  for (auto* g : {&b.fwd, &b.bwd})
    for (auto* p : {&g->w_ih, &g->w_hh, &g->b_ih, &g->b_hh}) out.push_back(p);
  out.push_back(&b.head_w);
  out.push_back(&b.head_b);
}

template <typename T>
std::vector<Parameter<T>*> BasicModel<T>::sed_parameters() {
  std::vector<Parameter<T>*> out{&shared_.weight, &shared_.bias};
  collect(sed_, out);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> BasicModel<T>::parameters() {
  auto out = sed_parameters();
  if (has_acc()) collect(acc_, out);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> BasicModel<T>::parameters() const {
  auto ps = const_cast<BasicModel*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

template <typename T>
std::size_t BasicModel<T>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void BasicModel<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
template <typename U>
BasicModel<U> BasicModel<T>::cast() const {
  BasicModel<U> out;
  out.config_ = config_;
  out.seed_ = seed_;
  auto conv = [](const Parameter<T>& p) { return Parameter<U>{p.name, p.value.template cast<U>(), {}}; };
  auto branch = [&](const Branch& b) {
    typename BasicModel<U>::Branch o;
    for (const auto& f : b.blocks) o.blocks.push_back({conv(f.basis), conv(f.basis_bias), conv(f.attn_w), conv(f.attn_b)});
    o.fwd = {conv(b.fwd.w_ih), conv(b.fwd.w_hh), conv(b.fwd.b_ih), conv(b.fwd.b_hh)};
    o.bwd = {conv(b.bwd.w_ih), conv(b.bwd.w_hh), conv(b.bwd.b_ih), conv(b.bwd.b_hh)};
    o.head_w = conv(b.head_w);
    o.head_b = conv(b.head_b);
    return o;
  };
  out.shared_ = {conv(shared_.weight), conv(shared_.bias)};
  out.sed_ = branch(sed_);
  if (has_acc()) out.acc_ = branch(acc_);
  return out;
}

template class BasicModel<float>;
template class BasicModel<double>;
template BasicModel<double> BasicModel<float>::cast<double>() const;
template BasicModel<float> BasicModel<double>::cast<float>() const;
template nn::Tensor<float> features_to_tensor<float>(const LogMel&);
template nn::Tensor<double> features_to_tensor<double>(const LogMel&);

std::string parameter_digest(const Model& m) {
  std::string buf;
  for (const auto* p : m.parameters()) {
    buf += p->name;
    buf += nn::shape_string(p->value.shape);
    buf.append(reinterpret_cast<const char*>(p->value.data.data()), p->value.size() * sizeof(float));
  }
  return sha256_hex(buf);
}

}  // namespace mtlsed
