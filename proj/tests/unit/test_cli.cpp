#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mtlsed/cli/cli.hpp"
#include "mtlsed/cli/config.hpp"
#include "mtlsed/errors.hpp"
#include "mtlsed/experiments.hpp"

using namespace mtlsed;
using namespace mtlsed::cli;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = MTLSED_FIXTURE_DIR;
const std::string kTinyIni = MTLSED_CONFIG_DIR "/tiny.ini";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mtlsed_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

struct Outcome {
  int code;
  std::string err;
};

Outcome invoke(const std::vector<std::string>& args) {
  testing::internal::CaptureStderr();
  const int code = run(args);
  return {code, testing::internal::GetCapturedStderr()};
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const ConfigValues v = to_values(RunConfig{});
  EXPECT_EQ(to_values(from_values(v)), v);
  EXPECT_EQ(v.at("training.alpha"), "0.8");
  EXPECT_EQ(v.at("model.branch_channels"), "16,32,32");
  EXPECT_EQ(v.at("experiments.alphas"), "1,0.5,0.6,0.7,0.8,0.9");
  EXPECT_EQ(v.at("eval.psds2_e_max"), "100");
  EXPECT_EQ(v.size(), config_keys().size());
}

TEST(Config, KeysAreUnique) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) EXPECT_TRUE(names.insert(k.section + "." + k.key).second) << k.key;
}

TEST(Config, ValuesParseIntoModules) {
  ConfigValues v;
  v["model.branch_channels"] = "4, 6";
  v["model.branch_pool_time"] = "2,1";
  v["model.branch_pool_freq"] = "2,2";
  v["model.basis"] = "3";
  v["eval.psds1_e_max"] = "36";
  v["experiments.taxonomies"] = "randomized";
  RunConfig c = from_values(v);
  c.finalize();
  ASSERT_EQ(c.model.branch.size(), 2u);
  EXPECT_EQ(c.model.branch[1].channels, 6u);
  EXPECT_EQ(c.model.branch[1].basis, 3u);
  EXPECT_NEAR(c.psds1.e_max, 0.01, 1e-15);
  EXPECT_EQ(c.plan().taxonomies, (std::vector<std::string>{"randomized"}));
  EXPECT_EQ(c.tagger.acc_classes, 0u);
  EXPECT_EQ(c.model.mel_bins, 128u);
}

TEST(Config, RejectsUnknownAndMalformed) {
  EXPECT_THROW(from_values({{"training.alhpa", "0.5"}}), ValidationError);
  EXPECT_THROW(from_values({{"training.alpha", "half"}}), ValidationError);
  EXPECT_THROW(from_values({{"training.batch_size", "-3"}}), ValidationError);
  EXPECT_THROW(from_values({{"training.augment", "maybe"}}), ValidationError);
  EXPECT_THROW(from_values({{"model.branch_pool_time", "1,1"}}), ValidationError);  // 3 blocks by default
  RunConfig bad = from_values({{"training.alpha", "1.5"}});
  EXPECT_THROW(bad.finalize(), ValidationError);
}

TEST(Config, IniRoundTripAndRejection) {
  const auto dir = fresh_dir("ini");
  const ConfigValues v = to_values(from_values({{"training.alpha", "0.6"}, {"experiments.seeds", "3,4"}}));
  write(dir / "all.ini", format_ini(v));
  EXPECT_EQ(read_ini((dir / "all.ini").string()), v);
  write(dir / "key.ini", "[training]\nalpah = 0.5\n");
  EXPECT_THROW(read_ini((dir / "key.ini").string()), ValidationError);
  write(dir / "section.ini", "[trainning]\nalpha = 0.5\n");
  EXPECT_THROW(read_ini((dir / "section.ini").string()), ValidationError);
  write(dir / "loose.ini", "alpha = 0.5\n");
  EXPECT_THROW(read_ini((dir / "loose.ini").string()), ValidationError);
  EXPECT_EQ(read_ini(kTinyIni).at("audiogen.strong_clips"), "8");
  fs::remove_all(dir);
}

TEST(Cli, AlphaOutOfRangeIsValidationError) {
  const auto r = invoke({"train-stage2", "--alpha", "1.5", "--out", fresh_dir("alpha").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("alpha must lie in [0, 1]"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(invoke({}).code, 1);
  EXPECT_EQ(invoke({"teleport"}).code, 1);
  const auto r = invoke({"gen-data", "--no-such-flag"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_EQ(invoke({"evaluate", "--config", "/nonexistent/c.ini"}).code, 1);
  EXPECT_EQ(invoke({"sweep", "--training.batch_size", "x"}).code, 1);
}

TEST(Cli, HelpListsEveryKeyWithDefault) {
  const auto r = invoke({"train-stage1", "--help"});
  EXPECT_EQ(r.code, 0);
  const ConfigValues v = to_values(RunConfig{});
  for (const auto& k : config_keys()) {
    const std::string flag = "--" + k.section + "." + k.key;
    const auto at = r.err.find(flag + " ");
    ASSERT_NE(at, std::string::npos) << flag;
    EXPECT_NE(r.err.find("[" + v.at(k.section + "." + k.key) + "]", at), std::string::npos) << flag;
  }
}

TEST(Cli, MissingArtifactsAreRuntimeFailures) {
  const auto out = fresh_dir("missing");
  EXPECT_EQ(invoke({"train-stage1", "--out", out.string()}).code, 2);
  EXPECT_EQ(invoke({"evaluate", "--out", out.string()}).code, 2);
  EXPECT_EQ(invoke({"report", "--out", out.string()}).code, 1);
  fs::remove_all(out);
}

TEST(Cli, EvaluateToyFixtureMatchesGolden) {
  const auto out = fresh_dir("toy");
  const auto r = invoke({"evaluate", "--posteriors", kFixtures + "/psds_toy.json", "--ground-truth",
                      kFixtures + "/psds_toy_gt.tsv", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto golden = nlohmann::json::parse(slurp(kFixtures + "/psds_toy.json"))["golden"];
  const auto scores = nlohmann::json::parse(slurp(out / "eval" / "scores.json"));
  EXPECT_NEAR(scores["psds1"].get<double>(), golden["psds1"].get<double>(), 1e-12);
  EXPECT_NEAR(scores["psds2"].get<double>(), golden["psds2"].get<double>(), 1e-12);
  const std::string first = slurp(out / "eval" / "psds1_operating_points.csv");
  ASSERT_EQ(invoke({"evaluate", "--posteriors", kFixtures + "/psds_toy.json", "--ground-truth",
                 kFixtures + "/psds_toy_gt.tsv", "--out", out.string()})
                .code,
            0);
  EXPECT_EQ(slurp(out / "eval" / "psds1_operating_points.csv"), first);
  fs::remove_all(out);
}

TEST(Cli, PosteriorJsonRoundTrip) {
  const auto set = posteriors_from_json(nlohmann::json::parse(slurp(kFixtures + "/psds_toy.json")));
  ASSERT_EQ(set.clips.size(), 3u);
  EXPECT_FLOAT_EQ(set.clips[0].at(3, 0, 2), 0.9f);
  EXPECT_FLOAT_EQ(set.clips[1].at(9, 1, 2), 0.45f);
  const auto back = posteriors_from_json(posteriors_to_json(set));
  EXPECT_EQ(back.classes, set.classes);
  EXPECT_EQ(back.clips[2].probs, set.clips[2].probs);
  EXPECT_THROW(posteriors_from_json(nlohmann::json::parse(R"({"classes":["Dog"],"hop_seconds":1,"frames":2,
      "clips":[{"id":"x","probs":[[0.1],[1.5]]}]})")),
               ValidationError);
}

TEST(Cli, SeedSourcesAgreeAndDataIsIdempotent) {
  const auto a = fresh_dir("seed_flag"), b = fresh_dir("seed_env"), c = fresh_dir("seed_default");
  ASSERT_EQ(invoke({"gen-data", "--config", kTinyIni, "--seed", "5", "--out", a.string()}).code, 0);
  ::setenv("MTLSED_SEED", "5", 1);
  ASSERT_EQ(invoke({"gen-data", "--config", kTinyIni, "--out", b.string()}).code, 0);
  ::unsetenv("MTLSED_SEED");
  ASSERT_EQ(invoke({"gen-data", "--config", kTinyIni, "--out", c.string()}).code, 0);
  EXPECT_EQ(slurp(a / "data" / "strong.tsv"), slurp(b / "data" / "strong.tsv"));
  EXPECT_NE(slurp(a / "data" / "strong.tsv"), slurp(c / "data" / "strong.tsv"));
  const std::string wav = slurp(a / "data" / "audio" / "validation" / "validation_0000.wav");
  ASSERT_EQ(invoke({"gen-data", "--config", kTinyIni, "--seed", "5", "--out", a.string()}).code, 0);
  EXPECT_EQ(slurp(a / "data" / "audio" / "validation" / "validation_0000.wav"), wav);
  for (const auto& d : {a, b, c}) fs::remove_all(d);
}

TEST(Cli, StagedPipelineAndAlphaSweep) {
  const auto out = fresh_dir("pipeline");
  const std::string o = out.string();
  for (const std::string sub : {"gen-data", "extract-features", "train-stage1", "pseudo-label", "train-stage2",
                                "search-filters", "evaluate"}) {
    const auto r = invoke({sub, "--config", kTinyIni, "--out", o});
    ASSERT_EQ(r.code, 0) << sub << ": " << r.err;
  }
  EXPECT_TRUE(fs::exists(out / "stage2" / "model.ckpt"));
  EXPECT_TRUE(fs::exists(out / "eval" / "scores.json"));
  const Model stripped = load_checkpoint((out / "stage2" / "model.ckpt").string()).model;
  const Model full = load_checkpoint((out / "stage2" / "model_mtl.ckpt").string()).model;
  EXPECT_FALSE(stripped.has_acc());
  EXPECT_TRUE(full.has_acc());

  const auto r = invoke({"sweep", "--config", kTinyIni, "--out", o, "--experiments.alphas", "0.5,0.6,0.7,0.8,0.9,1.0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = nlohmann::json::parse(slurp(out / "sweep" / "summary.json"));
  std::vector<double> alphas;
  for (const auto& row : summary["rows"]) alphas.push_back(row["alpha"].get<double>());
  EXPECT_EQ(alphas, (std::vector<double>{1.0, 0.5, 0.6, 0.7, 0.8, 0.9}));
  EXPECT_EQ(summary["rows"][0]["taxonomy"], "na");
  for (const auto& row : summary["rows"]) EXPECT_EQ(row["inference_params"].get<std::size_t>(), stripped.param_count());

  const std::string csv = slurp(out / "sweep" / "summary.csv");
  const auto again = invoke({"sweep", "--config", kTinyIni, "--out", o, "--experiments.alphas", "0.5,0.6,0.7,0.8,0.9,1.0"});
  EXPECT_EQ(again.code, 0);
  EXPECT_EQ(again.err.find(": training"), std::string::npos);
  EXPECT_EQ(slurp(out / "sweep" / "summary.csv"), csv);
  fs::remove(out / "sweep" / "summary.csv");
  EXPECT_EQ(invoke({"report", "--out", o}).code, 0);
  EXPECT_EQ(slurp(out / "sweep" / "summary.csv"), csv);
  fs::remove_all(out);
}
