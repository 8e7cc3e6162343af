#include "mtlsed/cli/config.hpp"

#include <charconv>
#include <functional>
#include <set>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mtlsed/errors.hpp"

namespace mtlsed::cli {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    const std::string item = trim(s.substr(start, comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + f(v[i]);
  return out;
}

[[noreturn]] void bad(const std::string& name, const std::string& what, const std::string& text) {
  throw ValidationError(name + ": expected " + what + ", got '" + text + "'");
}

double to_double(const std::string& name, const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad(name, "a number", s);
  return v;
}

long long to_int(const std::string& name, const std::string& s) {
  const std::string t = trim(s);
  long long v = 0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty()) bad(name, "an integer", s);
  return v;
}

std::size_t to_size(const std::string& name, const std::string& s) {
  const long long v = to_int(name, s);
  if (v < 0) bad(name, "a non-negative integer", s);
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& name, const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  bad(name, "true or false", s);
}

struct Binding {
  KeyInfo info;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string& name, const std::string&)> set;
};

#define MTLSED_SIMPLE(sec, k, help, field, conv, show)                                                     \
  b.push_back({{sec, k, help},                                                                            \
               [](const RunConfig& c) { return show(c.field); },                                          \
               [](RunConfig& c, const std::string& n, const std::string& s) { c.field = conv(n, s); }})

std::string show_int(long long v) { return std::to_string(v); }
std::string show_bool(bool v) { return v ? "true" : "false"; }
std::string show_str(const std::string& v) { return v; }
std::string ident(const std::string&, const std::string& s) { return trim(s); }
int to_int32(const std::string& n, const std::string& s) { return static_cast<int>(to_int(n, s)); }
std::uint64_t to_u64(const std::string& n, const std::string& s) { return to_size(n, s); }

void model_bindings(std::vector<Binding>& b, const std::string& sec, ModelConfig RunConfig::*m, bool fdy) {
  auto get_list = [m](std::size_t BlockConfig::*f) {
    return [m, f](const RunConfig& c) {
      return join<BlockConfig>((c.*m).branch, [f](const BlockConfig& x) { return std::to_string(x.*f); });
    };
  };
  auto set_list = [m](std::size_t BlockConfig::*f, bool resize) {
    return [m, f, resize](RunConfig& c, const std::string& n, const std::string& s) {
      auto& br = (c.*m).branch;
      const auto items = split_list(s);
      if (items.empty()) bad(n, "a nonempty comma-separated list", s);
      if (resize) {
        const BlockConfig tail = br.empty() ? BlockConfig{} : br.back();
        br.resize(items.size(), tail);
      } else if (items.size() != br.size()) {
        throw ValidationError(n + ": needs one entry per branch block (" + std::to_string(br.size()) + ")");
      }
      for (std::size_t i = 0; i < items.size(); ++i) br[i].*f = to_size(n, items[i]);
    };
  };
  auto scalar = [&](const std::string& k, const std::string& help, std::size_t BlockConfig::*f) {
    b.push_back({{sec, k, help},
                 [m, f](const RunConfig& c) { return std::to_string((c.*m).shared.*f); },
                 [m, f](RunConfig& c, const std::string& n, const std::string& s) { (c.*m).shared.*f = to_size(n, s); }});
  };
  scalar("shared_channels", "channels of the shared convolution block", &BlockConfig::channels);
  scalar("shared_pool_time", "time pooling after the shared block", &BlockConfig::pool_time);
  scalar("shared_pool_freq", "frequency pooling after the shared block", &BlockConfig::pool_freq);
  b.push_back({{sec, "kernel", "odd kernel size of every convolution"},
               [m](const RunConfig& c) { return std::to_string((c.*m).shared.kernel); },
               [m](RunConfig& c, const std::string& n, const std::string& s) {
                 const std::size_t k = to_size(n, s);
                 (c.*m).shared.kernel = k;
                 for (auto& x : (c.*m).branch) x.kernel = k;
               }});
  b.push_back({{sec, "branch_channels", "channels per branch block; the list length sets the depth"},
               get_list(&BlockConfig::channels), set_list(&BlockConfig::channels, true)});
  b.push_back({{sec, "branch_pool_time", "time pooling per branch block"}, get_list(&BlockConfig::pool_time),
               set_list(&BlockConfig::pool_time, false)});
  b.push_back({{sec, "branch_pool_freq", "frequency pooling per branch block"}, get_list(&BlockConfig::pool_freq),
               set_list(&BlockConfig::pool_freq, false)});
  if (fdy) {
    b.push_back({{sec, "basis", "FDY basis kernels per branch block"},
                 [m](const RunConfig& c) { return std::to_string((c.*m).branch.front().basis); },
                 [m](RunConfig& c, const std::string& n, const std::string& s) {
                   const std::size_t k = to_size(n, s);
                   for (auto& x : (c.*m).branch) x.basis = k;
                 }});
    b.push_back({{sec, "attention_temperature", "softmax temperature of the FDY attention"},
                 [m](const RunConfig& c) { return fmt_double((c.*m).attention_temperature); },
                 [m](RunConfig& c, const std::string& n, const std::string& s) {
                   (c.*m).attention_temperature = to_double(n, s);
                 }});
  }
  b.push_back({{sec, "recurrent_hidden", "GRU units per direction"},
               [m](const RunConfig& c) { return std::to_string((c.*m).recurrent_hidden); },
               [m](RunConfig& c, const std::string& n, const std::string& s) {
                 (c.*m).recurrent_hidden = to_size(n, s);
               }});
}

void psds_bindings(std::vector<Binding>& b, const std::string& prefix, PsdsParams RunConfig::*m) {
  auto add = [&](const std::string& k, const std::string& help, double PsdsParams::*f, double scale) {
    b.push_back({{"eval", prefix + "_" + k, help},
                 [m, f, scale](const RunConfig& c) { return fmt_double((c.*m).*f * scale); },
                 [m, f, scale](RunConfig& c, const std::string& n, const std::string& s) {
                   (c.*m).*f = to_double(n, s) / scale;
                 }});
  };
  add("rho_dtc", "detection tolerance criterion", &PsdsParams::rho_dtc, 1.0);
  add("rho_gtc", "ground-truth intersection criterion", &PsdsParams::rho_gtc, 1.0);
  add("rho_cttc", "cross-trigger tolerance criterion", &PsdsParams::rho_cttc, 1.0);
  add("alpha_ct", "cross-trigger weight", &PsdsParams::alpha_ct, 1.0);
  add("alpha_st", "weight of the across-class standard deviation", &PsdsParams::alpha_st, 1.0);
  add("e_max", "largest effective false positives per hour", &PsdsParams::e_max, 3600.0);
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = [] {
    std::vector<Binding> b;
    MTLSED_SIMPLE("general", "seed", "seed of data generation and training (MTLSED_SEED overrides)", seed, to_u64,
                  show_int);

    MTLSED_SIMPLE("audiogen", "strong_clips", "strongly labelled training clips", dataset.strong_clips, to_int32,
                  show_int);
    MTLSED_SIMPLE("audiogen", "weak_clips", "weakly labelled training clips", dataset.weak_clips, to_int32, show_int);
    MTLSED_SIMPLE("audiogen", "unlabeled_clips", "unlabelled training clips", dataset.unlabeled_clips, to_int32,
                  show_int);
    MTLSED_SIMPLE("audiogen", "validation_clips", "strongly labelled validation clips", dataset.validation_clips,
                  to_int32, show_int);
    MTLSED_SIMPLE("audiogen", "background_dbfs", "pink-noise background level", dataset.background_dbfs, to_double,
                  fmt_double);
    MTLSED_SIMPLE("audiogen", "max_polyphony", "most simultaneous events", dataset.max_polyphony, to_int32, show_int);
    MTLSED_SIMPLE("audiogen", "max_events", "most events per clip", dataset.max_events, to_int32, show_int);
    MTLSED_SIMPLE("audiogen", "min_gain_db", "lowest event gain", dataset.min_gain_db, to_double, fmt_double);
    MTLSED_SIMPLE("audiogen", "max_gain_db", "highest event gain", dataset.max_gain_db, to_double, fmt_double);

    MTLSED_SIMPLE("frontend", "mel_bins", "mel filterbank size", mel_bins, to_int32, show_int);
    MTLSED_SIMPLE("frontend", "input_frames", "frames after zero-padding or truncation", input_frames, to_size,
                  show_int);

    model_bindings(b, "model", &RunConfig::model, true);
    model_bindings(b, "tagger", &RunConfig::tagger, false);

    MTLSED_SIMPLE("training", "alpha", "SED weight of the multi-task loss", train.alpha, to_double, fmt_double);
    MTLSED_SIMPLE("training", "taxonomy", "ACC taxonomy: proposed or randomized", train.taxonomy, ident, show_str);
    MTLSED_SIMPLE("training", "batch_size", "clips per optimiser step", train.batch_size, to_size, show_int);
    MTLSED_SIMPLE("training", "max_lr", "peak Adam learning rate", train.max_lr, to_double, fmt_double);
    MTLSED_SIMPLE("training", "ramp_epochs", "epochs of exponential learning-rate ramp-up", train.ramp_epochs,
                  to_size, show_int);
    MTLSED_SIMPLE("training", "stage1_epochs", "tagger epochs", train.stage1_epochs, to_size, show_int);
    MTLSED_SIMPLE("training", "stage2_epochs", "SED epochs", train.stage2_epochs, to_size, show_int);
    MTLSED_SIMPLE("training", "pseudo_threshold", "tagger probability that yields a pseudo-weak tag",
                  train.pseudo_threshold, to_double, fmt_double);
    MTLSED_SIMPLE("training", "augment", "SpecAugment and filter augmentation", train.augment, to_bool, show_bool);
    MTLSED_SIMPLE("training", "time_masks", "time masks per clip", train.augment_policy.time_mask.count, to_int32,
                  show_int);
    MTLSED_SIMPLE("training", "time_mask_width", "widest time mask in frames", train.augment_policy.time_mask.max_width,
                  to_int32, show_int);
    MTLSED_SIMPLE("training", "freq_masks", "frequency masks per clip", train.augment_policy.freq_mask.count,
                  to_int32, show_int);
    MTLSED_SIMPLE("training", "freq_mask_width", "widest frequency mask in mel bins",
                  train.augment_policy.freq_mask.max_width, to_int32, show_int);
    MTLSED_SIMPLE("training", "filter_min_bands", "fewest filter-augmentation bands", train.augment_policy.min_bands,
                  to_int32, show_int);
    MTLSED_SIMPLE("training", "filter_max_bands", "most filter-augmentation bands", train.augment_policy.max_bands,
                  to_int32, show_int);
    MTLSED_SIMPLE("training", "filter_min_db", "lowest filter-augmentation gain", train.augment_policy.min_gain_db,
                  to_double, fmt_double);
    MTLSED_SIMPLE("training", "filter_max_db", "highest filter-augmentation gain", train.augment_policy.max_gain_db,
                  to_double, fmt_double);

    b.push_back({{"postprocess", "filter_candidates", "median window lengths tried per class"},
                 [](const RunConfig& c) {
                   return join<int>(c.filter_search.candidates, [](const int& w) { return std::to_string(w); });
                 },
                 [](RunConfig& c, const std::string& n, const std::string& s) {
                   c.filter_search.candidates.clear();
                   for (const auto& item : split_list(s)) c.filter_search.candidates.push_back(to_int32(n, item));
                 }});
    MTLSED_SIMPLE("postprocess", "search_threshold", "binarisation threshold of the window search",
                  filter_search.threshold, to_double, fmt_double);
    MTLSED_SIMPLE("postprocess", "search_rho_dtc", "DTC of the window-search F1", filter_search.rho_dtc, to_double,
                  fmt_double);
    MTLSED_SIMPLE("postprocess", "search_rho_gtc", "GTC of the window-search F1", filter_search.rho_gtc, to_double,
                  fmt_double);

    MTLSED_SIMPLE("eval", "thresholds", "size of the evenly spaced threshold grid on [0.01, 0.99]", threshold_count,
                  to_size, show_int);
    psds_bindings(b, "psds1", &RunConfig::psds1);
    psds_bindings(b, "psds2", &RunConfig::psds2);

    b.push_back({{"experiments", "alphas", "alpha values of the sweep"},
                 [](const RunConfig& c) { return join<double>(c.alphas, fmt_double); },
                 [](RunConfig& c, const std::string& n, const std::string& s) {
                   c.alphas.clear();
                   for (const auto& item : split_list(s)) c.alphas.push_back(to_double(n, item));
                 }});
    b.push_back({{"experiments", "taxonomies", "taxonomies of the sweep"},
                 [](const RunConfig& c) { return join<std::string>(c.taxonomies, show_str); },
                 [](RunConfig& c, const std::string&, const std::string& s) { c.taxonomies = split_list(s); }});
    b.push_back({{"experiments", "seeds", "training seeds of the sweep"},
                 [](const RunConfig& c) {
                   return join<std::uint64_t>(c.seeds, [](const std::uint64_t& x) { return std::to_string(x); });
                 },
                 [](RunConfig& c, const std::string& n, const std::string& s) {
                   c.seeds.clear();
                   for (const auto& item : split_list(s)) c.seeds.push_back(to_u64(n, item));
                 }});
    MTLSED_SIMPLE("experiments", "jobs", "runs trained concurrently", jobs, to_size, show_int);
    return b;
  }();
  return table;
}

#undef MTLSED_SIMPLE

std::string full_name(const KeyInfo& k) { return k.section + "." + k.key; }

}  // namespace

void RunConfig::finalize() {
  require(mel_bins >= 8, "frontend.mel_bins must be >= 8");
  require(input_frames >= 1, "frontend.input_frames must be >= 1");
  require(threshold_count >= 2, "eval.thresholds must be >= 2");
  for (ModelConfig* m : {&model, &tagger}) {
    m->mel_bins = static_cast<std::size_t>(mel_bins);
    m->input_frames = input_frames;
  }
  tagger.acc_classes = 0;
  model.acc_classes = kNumAccClasses;
  for (auto& blk : tagger.branch) blk.basis = 1;
  psds1.name = "psds1";
  psds2.name = "psds2";
  dataset.validate();
  plan().validate();
}

ExperimentPlan RunConfig::plan() const {
  ExperimentPlan p;
  p.train = train;
  p.model = model;
  p.tagger = tagger;
  p.alphas = alphas;
  p.taxonomies = taxonomies;
  p.seeds = seeds;
  p.filter_search = filter_search;
  p.thresholds = default_threshold_grid(threshold_count);
  p.psds1 = psds1;
  p.psds2 = psds2;
  p.jobs = jobs;
  return p;
}

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> k;
    for (const auto& b : bindings()) k.push_back(b.info);
    return k;
  }();
  return keys;
}

ConfigValues to_values(const RunConfig& c) {
  ConfigValues v;
  for (const auto& b : bindings()) v[full_name(b.info)] = b.get(c);
  return v;
}

RunConfig from_values(const ConfigValues& v) {
  std::set<std::string> known;
  for (const auto& b : bindings()) known.insert(full_name(b.info));
  for (const auto& [k, _] : v) require(known.count(k) > 0, "unknown config key '" + k + "'");
  RunConfig c;
  for (const auto& b : bindings()) {
    const auto it = v.find(full_name(b.info));
    if (it != v.end()) b.set(c, full_name(b.info), it->second);
  }
  return c;
}

ConfigValues read_ini(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  std::set<std::string> sections;
  for (const auto& k : config_keys()) sections.insert(k.section);
  ConfigValues v;
  for (const auto& [section, body] : tree) {
    require(!(body.empty() && !body.data().empty()), "config: key '" + section + "' must live inside a [section]");
    require(sections.count(section) > 0, "config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) v[section + "." + key] = value.data();
  }
  from_values(v);  // rejects unknown keys and bad values early
  return v;
}

std::string format_ini(const ConfigValues& v) {
  std::string out, section;
  for (const auto& k : config_keys()) {
    const auto it = v.find(k.section + "." + k.key);
    if (it == v.end()) continue;
    if (k.section != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + k.section + "]\n";
      section = k.section;
    }
    out += k.key + " = " + it->second + "\n";
  }
  return out;
}

}  // namespace mtlsed::cli
