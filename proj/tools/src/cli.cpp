#include "mtlsed/cli/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif

#include "mtlsed/cli/config.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/experiments.hpp"

namespace mtlsed::cli {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

void say(const std::string& m) { std::cerr << m << '\n'; }

struct Options {
  std::string config;
  std::string out = ".";
  std::string seed, alpha, taxonomy, jobs;
  std::map<std::string, std::string> flags;  // "section.key" -> raw flag text
  std::map<std::string, CLI::Option*> flag_opts;
  // evaluate
  std::string posteriors = "postprocess/validation_posteriors.json";
  std::string ground_truth = "data/validation.tsv";
  std::string filters;
};

struct Context {
  RunConfig cfg;
  fs::path out;

  fs::path at(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : out / p; }
  fs::path data() const { return out / "data"; }
  fs::path features() const { return out / "features"; }
  fs::path stage1() const { return out / "stage1"; }
  fs::path stage2() const { return out / "stage2"; }
  fs::path post() const { return out / "postprocess"; }

  PreparedData load() const {
    if (!fs::exists(data() / "strong.tsv"))
      throw std::runtime_error("no dataset under " + data().string() + " (run gen-data first)");
    return load_data(data().string(), features().string(), cfg.mel_bins, cfg.input_frames);
  }
};

std::uint64_t parse_seed(const std::string& where, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  require(pos == text.size() && !text.empty() && text[0] != '-', where + ": expected a non-negative integer seed");
  return v;
}

Context resolve(const Options& o, bool sweep) {
  ConfigValues v;
  if (!o.config.empty()) v = read_ini(o.config);
  if (const char* env = std::getenv("MTLSED_SEED"); env && *env)
    v["general.seed"] = std::to_string(parse_seed("MTLSED_SEED", env));
  for (const auto& [name, opt] : o.flag_opts)
    if (opt->count() > 0) v[name] = o.flags.at(name);
  if (!o.seed.empty()) {
    v["general.seed"] = std::to_string(parse_seed("--seed", o.seed));
    if (sweep) v["experiments.seeds"] = v["general.seed"];
  }
  if (!o.alpha.empty()) v[sweep ? "experiments.alphas" : "training.alpha"] = o.alpha;
  if (!o.taxonomy.empty()) v[sweep ? "experiments.taxonomies" : "training.taxonomy"] = o.taxonomy;
  if (!o.jobs.empty()) v["experiments.jobs"] = o.jobs;
  Context c{from_values(v), fs::path(o.out)};
  c.cfg.train.seed = c.cfg.seed;
  c.cfg.finalize();
  return c;
}

TrainConfig train_config(const Context& c) {
  TrainConfig t = c.cfg.train;
  t.seed = c.cfg.seed;
  return t;
}

// Subcommands ----------------------------------------------------------------

void gen_data(const Context& c) {
  const auto ds = generate_dataset(c.cfg.dataset, c.cfg.seed);
  write_dataset(ds, c.data().string());
  std::size_t n = 0;
  for (const auto& r : ds.recipes) n += r.size();
  say("gen-data: wrote " + std::to_string(n) + " clips to " + c.data().string());
}

void extract(const Context& c) {
  const std::size_t n = extract_features(c.data().string(), c.features().string(), c.cfg.mel_bins);
  say("extract-features: " + std::to_string(n) + " clips cached in " + c.features().string());
}

void stage1(const Context& c) {
  const auto data = c.load();
  auto res = train_stage1(train_config(c), c.cfg.tagger, data.labeled, [](const EpochLog& e) {
    say("stage1 epoch " + std::to_string(e.epoch) + ": clip BCE " + std::to_string(e.loss.l_sed_weak));
  });
  fs::create_directories(c.stage1());
  save_checkpoint((c.stage1() / "tagger.ckpt").string(), res.model, res.steps.size());
  write_text(c.stage1() / "train_log.csv", format_epoch_csv(res.epochs));
  say("train-stage1: wrote " + (c.stage1() / "tagger.ckpt").string());
}

void pseudo(const Context& c) {
  const auto data = c.load();
  const Model tagger = load_checkpoint((c.stage1() / "tagger.ckpt").string(), c.cfg.tagger).model;
  const auto m = pseudo_label(tagger, data.unlabeled, c.cfg.train.pseudo_threshold);
  write_text(c.stage1() / "pseudo_weak.tsv", format_manifest(m));
  say("pseudo-label: " + std::to_string(m.rows.size()) + " of " + std::to_string(data.unlabeled.size()) +
      " unlabeled clips tagged");
}

void stage2(const Context& c) {
  const auto data = c.load();
  const fs::path pseudo_path = c.stage1() / "pseudo_weak.tsv";
  if (!fs::exists(pseudo_path)) throw std::runtime_error("missing " + pseudo_path.string() + " (run pseudo-label first)");
  const auto pseudo = parse_manifest(read_text(pseudo_path), Split::Weak);
  std::vector<TrainingClip> clips = data.labeled;
  std::map<std::string, std::shared_ptr<const LogMel>> feats;
  for (const auto& u : data.unlabeled) feats[u.clip_id] = u.features;
  for (const auto& row : pseudo.rows) {
    const auto it = feats.find(row.filename);
    if (it == feats.end()) throw std::runtime_error("pseudo label for unknown clip " + row.filename);
    clips.push_back({row.filename, it->second, false, {}, row.weak});
  }
  auto res = train_stage2(train_config(c), c.cfg.model, clips, [](const EpochLog& e) {
    say("stage2 epoch " + std::to_string(e.epoch) + ": L_SED " + std::to_string(e.loss.L_SED) + " L_ACC " +
        std::to_string(e.loss.L_ACC) + " L_MTL " + std::to_string(e.loss.L_MTL));
  });
  fs::create_directories(c.stage2());
  save_checkpoint((c.stage2() / "model_mtl.ckpt").string(), res.model, res.steps.size());
  Model inference = res.model;
  inference.strip_acc();
  save_checkpoint((c.stage2() / "model.ckpt").string(), inference, res.steps.size());
  write_text(c.stage2() / "train_log.csv", format_epoch_csv(res.epochs));
  say("train-stage2: " + std::to_string(res.model.param_count()) + " parameters in training, " +
      std::to_string(inference.param_count()) + " at inference");
}

void search(const Context& c) {
  const auto data = c.load();
  ModelConfig single = c.cfg.model;
  single.acc_classes = 0;
  const Model model = load_checkpoint((c.stage2() / "model.ckpt").string(), single).model;
  const double hop = output_hop_seconds(model.config());
  PosteriorSet set;
  set.classes.assign(all_event_classes().begin(), all_event_classes().end());
  for (const auto& v : data.validation) set.clips.push_back(frame_posteriors(v.clip_id, model.predict(*v.features), hop));
  const auto windows = search_filter_lengths(set.clips, set.classes, data.validation_truth, c.cfg.filter_search);
  write_text(c.post() / "validation_posteriors.json", posteriors_to_json(set).dump() + "\n");
  write_text(c.post() / "filter_lengths.tsv", format_filter_lengths(windows));
  say("search-filters: wrote " + (c.post() / "filter_lengths.tsv").string());
}

void evaluate(const Context& c, const Options& o) {
  const auto set = posteriors_from_json(nlohmann::json::parse(read_text(c.at(o.posteriors))));
  const auto truth = parse_strong_tsv(read_text(c.at(o.ground_truth)));
  FilterLengths windows = unit_filter_lengths();
  if (!o.filters.empty())
    windows = parse_filter_lengths(read_text(c.at(o.filters)));
  else if (fs::exists(c.post() / "filter_lengths.tsv"))
    windows = parse_filter_lengths(read_text(c.post() / "filter_lengths.tsv"));
  const auto s = evaluate_system(set.clips, set.classes, truth, default_threshold_grid(c.cfg.threshold_count), windows,
                                 c.cfg.psds1, c.cfg.psds2);
  const fs::path dir = c.out / "eval";
  write_text(dir / "psds1.json", report_json(s.psds1).dump(2) + "\n");
  write_text(dir / "psds2.json", report_json(s.psds2).dump(2) + "\n");
  write_text(dir / "psds1_operating_points.csv", report_csv(s.psds1));
  write_text(dir / "psds2_operating_points.csv", report_csv(s.psds2));
  write_text(dir / "scores.json",
             nlohmann::json{{"psds1", s.psds1.score}, {"psds2", s.psds2.score}, {"total", s.total}}.dump(2) + "\n");
  char buf[128];
  std::snprintf(buf, sizeof buf, "evaluate: psds1 %.6f psds2 %.6f total %.6f", s.psds1.score, s.psds2.score,
                s.total);
  say(buf);
}

void print_summary(const std::string& dir) {
  const auto records = load_records(dir);
  require(!records.empty(), "report: no run records under " + (fs::path(dir) / "runs").string());
  write_summary(dir, records);
  std::cerr << summary_csv(summarize(records));
}

void sweep(const Context& c) {
  const auto data = c.load();
  const fs::path dir = c.out / "sweep";
  fs::create_directories(dir);
  write_text(dir / "config.ini", format_ini(to_values(c.cfg)));
  const auto records = run_plan(c.cfg.plan(), data, dir.string(), say);
  write_summary(dir.string(), records);
  std::cerr << summary_csv(summarize(records));
}

}  // namespace

PosteriorSet posteriors_from_json(const nlohmann::json& j) {
  PosteriorSet p;
  try {
    for (const auto& c : j.at("classes")) p.classes.push_back(parse_event_class(c.get<std::string>()));
    const double hop = j.at("hop_seconds").get<double>();
    const std::size_t frames = j.at("frames").get<std::size_t>();
    const double duration = j.value("duration", 10.0);
    const std::size_t k = p.classes.size();
    require(hop > 0.0 && frames > 0 && k > 0, "posteriors: hop, frames and classes must be positive");
    for (const auto& clip : j.at("clips")) {
      FramePosteriors f{clip.at("id").get<std::string>(), frames, std::vector<float>(frames * k, 0.0f), hop, duration};
      if (clip.contains("probs")) {
        const auto& rows = clip.at("probs");
        require(rows.size() == frames, "posteriors: clip " + f.clip_id + " needs one row per frame");
        for (std::size_t t = 0; t < frames; ++t) {
          require(rows[t].size() == k, "posteriors: clip " + f.clip_id + " needs one column per class");
          for (std::size_t c = 0; c < k; ++c) f.probs[t * k + c] = rows[t][c].get<float>();
        }
      }
      for (const auto& seg : clip.value("segments", nlohmann::json::array())) {
        const EventClass cls = parse_event_class(seg.at(0).get<std::string>());
        const auto it = std::find(p.classes.begin(), p.classes.end(), cls);
        require(it != p.classes.end(), "posteriors: segment class not listed in classes");
        const std::size_t col = static_cast<std::size_t>(it - p.classes.begin());
        const std::size_t f0 = seg.at(1).get<std::size_t>(), f1 = seg.at(2).get<std::size_t>();
        require(f0 < f1 && f1 <= frames, "posteriors: segment frames out of range in " + f.clip_id);
        for (std::size_t t = f0; t < f1; ++t) f.probs[t * k + col] = seg.at(3).get<float>();
      }
      for (float v : f.probs) require(v >= 0.0f && v <= 1.0f, "posteriors: probabilities must lie in [0, 1]");
      p.clips.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("posteriors: ") + e.what());
  }
  return p;
}

nlohmann::json posteriors_to_json(const PosteriorSet& p) {
  require(!p.clips.empty(), "posteriors: no clips");
  nlohmann::json classes = nlohmann::json::array();
  for (EventClass c : p.classes) classes.push_back(std::string(to_string(c)));
  const std::size_t k = p.classes.size();
  nlohmann::json clips = nlohmann::json::array();
  for (const auto& f : p.clips) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t t = 0; t < f.frames; ++t)
      rows.push_back(std::vector<float>(f.probs.begin() + static_cast<std::ptrdiff_t>(t * k),
                                        f.probs.begin() + static_cast<std::ptrdiff_t>((t + 1) * k)));
    clips.push_back({{"id", f.clip_id}, {"probs", rows}});
  }
  return {{"hop_seconds", p.clips.front().hop_seconds},
          {"frames", p.clips.front().frames},
          {"duration", p.clips.front().duration},
          {"classes", classes},
          {"clips", clips}};
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Multi-task sound event detection toolkit", "mtlsed"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  struct Sub {
    std::string name, help;
    bool evaluate = false;
  };
  const std::vector<Sub> subs{
      {"gen-data", "Generate the synthetic strong/weak/unlabeled/validation dataset into OUT/data"},
      {"extract-features", "Cache log-mel features of OUT/data in OUT/features"},
      {"train-stage1", "Train the audio tagger (OUT/stage1/tagger.ckpt)"},
      {"pseudo-label", "Tag the unlabeled clips with the Stage-1 tagger (OUT/stage1/pseudo_weak.tsv)"},
      {"train-stage2", "Train the two-branch SED model (OUT/stage2/model.ckpt after ACC removal)"},
      {"search-filters", "Search class-wise median windows on the validation set (OUT/postprocess)"},
      {"evaluate", "Score posteriors with PSDS scenarios 1 and 2 (OUT/eval)", true},
      {"sweep", "Run the alpha x taxonomy x seed experiment plan (OUT/sweep)"},
      {"report", "Rebuild summary.csv, summary.json and alpha_sweep.svg from OUT/sweep/runs"},
  };

  Options o;
  const RunConfig defaults;
  const ConfigValues default_values = to_values(defaults);
  for (const auto& k : config_keys()) o.flags[k.section + "." + k.key];

  std::map<std::string, CLI::App*> apps;
  std::vector<std::map<std::string, CLI::Option*>> per_sub(subs.size());
  for (std::size_t i = 0; i < subs.size(); ++i) {
    CLI::App* s = app.add_subcommand(subs[i].name, subs[i].help);
    apps[subs[i].name] = s;
    s->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    s->add_option("--out", o.out, "Output directory; relative paths resolve against it")->capture_default_str();
    s->add_option("--seed", o.seed, "Overrides general.seed (on sweep also experiments.seeds)");
    s->add_option("--alpha", o.alpha, "Overrides training.alpha (on sweep experiments.alphas)");
    s->add_option("--taxonomy", o.taxonomy, "Overrides training.taxonomy (on sweep experiments.taxonomies)");
    if (subs[i].name == "sweep") s->add_option("--jobs", o.jobs, "Overrides experiments.jobs");
    if (subs[i].evaluate) {
      s->add_option("--posteriors", o.posteriors, "Posteriors JSON")->capture_default_str();
      s->add_option("--ground-truth", o.ground_truth, "Strong-label TSV")->capture_default_str();
      s->add_option("--filters", o.filters, "Median windows TSV (default OUT/postprocess/filter_lengths.tsv if present)");
    }
    for (const auto& k : config_keys()) {
      const std::string name = k.section + "." + k.key;
      per_sub[i][name] = s->add_option("--" + name, o.flags[name], k.help)
                             ->default_str(default_values.at(name))
                             ->group("[" + k.section + "]");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, std::cerr, std::cerr);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    std::cerr << app.help() << '\n';
    return 1;
  }

  try {
    const auto chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i].name == name) o.flag_opts = per_sub[i];
    const Context c = resolve(o, name == "sweep");
    if (name == "gen-data") gen_data(c);
    else if (name == "extract-features") extract(c);
    else if (name == "train-stage1") stage1(c);
    else if (name == "pseudo-label") pseudo(c);
    else if (name == "train-stage2") stage2(c);
    else if (name == "search-filters") search(c);
    else if (name == "evaluate") evaluate(c, o);
    else if (name == "sweep") sweep(c);
    else if (name == "report") print_summary((c.out / "sweep").string());
    return 0;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace mtlsed::cli
