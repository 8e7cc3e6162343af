#include <gtest/gtest.h>

#include <random>

#include "mtlsed/errors.hpp"
#include "mtlsed/eval.hpp"
#include "mtlsed/training.hpp"
#include "psds_oracle.hpp"

using namespace mtlsed;
using enum EventClass;

namespace {

const std::vector<EventClass> kTwo{Dog, Speech};

oracle::Toy toy() { return oracle::load_toy(std::string(MTLSED_FIXTURE_DIR) + "/psds_toy.json"); }

FilterLengths ones() { return unit_filter_lengths(); }

OperatingPoint point(std::vector<double> tpr, std::vector<double> efpr) {
  OperatingPoint p;
  p.tpr = std::move(tpr);
  p.efpr = std::move(efpr);
  p.tp = p.fp = p.ct = std::vector<std::size_t>(p.tpr.size(), 0);
  return p;
}

RocEvaluation roc_of(std::vector<OperatingPoint> pts, std::size_t classes = 1) {
  RocEvaluation r;
  for (std::size_t c = 0; c < classes; ++c) r.classes.push_back(all_event_classes()[c]);
  r.points = std::move(pts);
  return r;
}

}  // namespace

TEST(MatchEvents, PartialCoverageFailsGtcButIsNotFp) {
  const std::vector<EventLabel> det{{"c", Dog, 0, 6}}, gt{{"c", Dog, 0, 10}};
  const auto m = match_events(det, gt, kTwo, PsdsParams::scenario1());
  EXPECT_EQ(m.tp[0], 0u);
  EXPECT_EQ(m.fp[0], 0u);
  EXPECT_EQ(m.gt_count[0], 1u);
}

TEST(MatchEvents, IdenticalDetectionsAreAllTruePositives) {
  const std::vector<EventLabel> gt{{"a", Dog, 0, 1}, {"a", Speech, 0.5, 2}, {"b", Dog, 3, 4.5}};
  for (double rho : {0.1, 0.5, 1.0}) {
    PsdsParams p;
    p.rho_dtc = p.rho_gtc = rho;
    const auto m = match_events(gt, gt, kTwo, p);
    EXPECT_EQ(m.tp, (std::vector<std::size_t>{2, 1}));
    EXPECT_EQ(m.fp, (std::vector<std::size_t>{0, 0}));
  }
}

TEST(MatchEvents, DisjointDetectionIsFalsePositive) {
  const std::vector<EventLabel> det{{"c", Dog, 5, 6}}, gt{{"c", Dog, 0, 1}};
  const auto m = match_events(det, gt, kTwo, PsdsParams::scenario1());
  EXPECT_EQ(m.fp[0], 1u);
  EXPECT_EQ(m.tp[0], 0u);
}

TEST(MatchEvents, CrossTriggerCounted) {
  const std::vector<EventLabel> det{{"c", Dog, 2, 3}}, gt{{"c", Speech, 1, 4}};
  const auto m = match_events(det, gt, kTwo, PsdsParams::scenario2());
  EXPECT_EQ(m.fp[0], 1u);
  EXPECT_EQ(m.ct[0][1], 1u);
  EXPECT_EQ(m.ct[0][0], 0u);
}

TEST(MatchEvents, FragmentsSumTowardsGtc) {
  const std::vector<EventLabel> det{{"c", Dog, 0, 2}, {"c", Dog, 2.5, 4}}, gt{{"c", Dog, 0, 4}};
  const auto m = match_events(det, gt, kTwo, PsdsParams::scenario1());
  EXPECT_EQ(m.tp[0], 1u);  // 3.5 / 4 >= 0.7
}

TEST(MatchEvents, PermutationAndClipOrderInvariant) {
  std::vector<EventLabel> det{{"b", Dog, 0, 2}, {"a", Speech, 1, 3}, {"a", Dog, 4, 5}, {"b", Speech, 6, 9}};
  std::vector<EventLabel> gt{{"a", Speech, 1, 2.5}, {"b", Dog, 0.5, 2}, {"b", Speech, 7, 8}};
  const auto ref = match_events(det, gt, kTwo, PsdsParams::scenario2());
  std::reverse(det.begin(), det.end());
  std::rotate(gt.begin(), gt.begin() + 1, gt.end());
  const auto perm = match_events(det, gt, kTwo, PsdsParams::scenario2());
  EXPECT_EQ(ref.tp, perm.tp);
  EXPECT_EQ(ref.fp, perm.fp);
  EXPECT_EQ(ref.ct, perm.ct);
}

TEST(RocPoints, PerfectAndEmpty) {
  const std::vector<EventLabel> gt{{"a", Dog, 0, 1}, {"a", Speech, 2, 3}};
  const std::vector<double> th{0.5};
  const std::vector<std::vector<EventLabel>> perfect{gt}, empty{{}};
  const auto p = roc_points(perfect, th, gt, kTwo, PsdsParams::scenario1(), 10.0);
  EXPECT_EQ(p.points[0].tpr, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(p.points[0].efpr, (std::vector<double>{0.0, 0.0}));
  const auto e = roc_points(empty, th, gt, kTwo, PsdsParams::scenario1(), 10.0);
  EXPECT_EQ(e.points[0].tpr, (std::vector<double>{0.0, 0.0}));
  EXPECT_DOUBLE_EQ(psds(p, PsdsParams::scenario1()).score, 1.0);
  EXPECT_DOUBLE_EQ(psds(e, PsdsParams::scenario1()).score, 0.0);
}

TEST(RocPoints, ExcludesClassesWithoutGroundTruth) {
  const std::vector<EventLabel> gt{{"a", Dog, 0, 1}};
  const std::vector<std::vector<EventLabel>> dets{{{"a", Speech, 4, 5}}};
  const std::vector<double> th{0.5};
  const auto r = roc_points(dets, th, gt, kTwo, PsdsParams::scenario1(), 10.0);
  EXPECT_EQ(r.classes, (std::vector<EventClass>{Dog}));
  EXPECT_EQ(r.excluded, (std::vector<EventClass>{Speech}));
  EXPECT_THROW(roc_points(dets, th, gt, kTwo, PsdsParams::scenario1(), 0.0), ValidationError);
}

TEST(RocPoints, CrossTriggerRaisesEfprInScenarioTwo) {
  const std::vector<EventLabel> gt{{"a", Dog, 0, 2}, {"a", Speech, 4, 8}};
  const std::vector<std::vector<EventLabel>> dets{{{"a", Dog, 5, 6}}};
  const std::vector<double> th{0.5};
  const auto r = roc_points(dets, th, gt, kTwo, PsdsParams::scenario2(), 100.0);
  // 1 FP / 100 s + 0.5 * (1 CT / 4 s of Speech)
  EXPECT_NEAR(r.points[0].efpr[0], 0.01 + 0.5 * 0.25, 1e-12);
  EXPECT_EQ(r.points[0].ct[0], 1u);
}

TEST(Psds, TwoClassVariancePenalty) {
  const auto p = PsdsParams::scenario1();
  EXPECT_DOUBLE_EQ(psds(roc_of({point({1.0, 0.0}, {0.0, 0.0})}, 2), p).score, 0.0);
}

TEST(Psds, ConstantHalf) {
  const auto p = PsdsParams::scenario1();
  EXPECT_DOUBLE_EQ(psds(roc_of({point({0.5}, {0.0})}), p).score, 0.5);
}

TEST(Psds, StaircaseArea) {
  PsdsParams p;
  p.e_max = 1.0;
  const auto r = roc_of({point({0.2}, {0.0}), point({0.6}, {0.25}), point({1.0}, {0.75}), point({1.0}, {2.0})});
  EXPECT_NEAR(psds(r, p).score, 0.2 * 0.25 + 0.6 * 0.5 + 1.0 * 0.25, 1e-12);
}

TEST(Psds, PointsBeyondEmaxContributeNothing) {
  PsdsParams p;
  p.e_max = 1.0;
  EXPECT_DOUBLE_EQ(psds(roc_of({point({1.0}, {1.5})}), p).score, 0.0);
}

TEST(Psds, DominatingPointNeverLowersScore) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PsdsParams p;
  p.e_max = 1.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<OperatingPoint> pts;
    for (int i = 0; i < 5; ++i) pts.push_back(point({u(rng), u(rng)}, {u(rng), u(rng)}));
    const double before = psds(roc_of(pts, 2), p).score;
    auto better = pts[trial % 5];
    for (auto& t : better.tpr) t = std::min(1.0, t + 0.1);
    for (auto& e : better.efpr) e *= 0.5;
    pts.push_back(better);
    EXPECT_GE(psds(roc_of(pts, 2), p).score, before - 1e-15);
  }
}

TEST(Psds, DuplicateThresholdsDoNotChangeScore) {
  const auto t = toy();
  const std::vector<double> grid{0.1, 0.3, 0.5, 0.7}, dup{0.1, 0.3, 0.3, 0.5, 0.7, 0.7};
  for (const auto& prm : {PsdsParams::scenario1(), PsdsParams::scenario2()}) {
    const auto a = evaluate_system(t.posteriors, t.classes, t.ground_truth, grid, ones(), prm, prm);
    const auto b = evaluate_system(t.posteriors, t.classes, t.ground_truth, dup, ones(), prm, prm);
    EXPECT_DOUBLE_EQ(a.total, b.total);
  }
}

TEST(EvaluateSystem, PerfectPosteriors) {
  const double hop = 0.064;
  const std::vector<EventLabel> gt{{"a", Dog, 0.64, 1.28}, {"a", Speech, 2.56, 5.12}, {"b", Dog, 6.4, 7.04}};
  std::vector<FramePosteriors> post;
  for (const std::string id : {"a", "b"}) {
    std::vector<EventLabel> mine;
    for (const auto& g : gt)
      if (g.clip_id == id) mine.push_back(g);
    const auto r = rasterize(std::span<const EventLabel>(mine), 157, hop);
    post.push_back({id, 157, std::vector<float>(r.begin(), r.end()), hop, 10.0});
  }
  const auto s = evaluate_system(post, all_event_classes(), gt, default_threshold_grid(), ones(),
                                 PsdsParams::scenario1(), PsdsParams::scenario2());
  EXPECT_DOUBLE_EQ(s.psds1.score, 1.0);
  EXPECT_DOUBLE_EQ(s.psds2.score, 1.0);
  EXPECT_DOUBLE_EQ(s.total, 2.0);
  EXPECT_EQ(s.psds1.roc.excluded.size(), 8u);
}

TEST(EvaluateSystem, ZeroPosteriors) {
  const std::vector<EventLabel> gt{{"a", Dog, 0.64, 1.28}};
  std::vector<FramePosteriors> post{{"a", 157, std::vector<float>(1570, 0.0f), 0.064, 10.0}};
  const auto s = evaluate_system(post, all_event_classes(), gt, default_threshold_grid(), ones(),
                                 PsdsParams::scenario1(), PsdsParams::scenario2());
  EXPECT_EQ(s.total, 0.0);
}

TEST(EvaluateSystem, ToyMatchesGoldenAndOracle) {
  const auto t = toy();
  const auto grid = default_threshold_grid();
  const auto s = evaluate_system(t.posteriors, t.classes, t.ground_truth, grid, ones(), PsdsParams::scenario1(),
                                 PsdsParams::scenario2());
  EXPECT_NEAR(s.psds1.score, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.psds2.score, 1.0, 1e-12);
  const std::vector<int> w{1, 1};
  EXPECT_NEAR(s.psds1.score, oracle::psds(t, grid, w, PsdsParams::scenario1()), 1e-9);
  EXPECT_NEAR(s.psds2.score, oracle::psds(t, grid, w, PsdsParams::scenario2()), 1e-9);
}

TEST(EvaluateSystem, OracleAgreesOnRandomPosteriorsAndParams) {
  auto t = toy();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int trial = 0; trial < 40; ++trial) {
    for (auto& p : t.posteriors)
      for (auto& v : p.probs) v = u(rng) < 0.6f ? 0.0f : u(rng);
    PsdsParams prm;
    prm.rho_dtc = 0.1 + 0.8 * u(rng);
    prm.rho_gtc = 0.1 + 0.8 * u(rng);
    prm.rho_cttc = 0.1 + 0.8 * u(rng);
    prm.alpha_ct = trial % 2 ? 0.5 : 0.0;
    prm.alpha_st = trial % 3 ? 1.0 : 0.0;
    prm.e_max = 0.05 + 0.3 * u(rng);
    FilterLengths w = ones();
    w[index_of(Dog)] = 1 + 2 * (trial % 3);
    w[index_of(Speech)] = 1 + 2 * ((trial + 1) % 3);
    const std::vector<int> wo{w[index_of(Dog)], w[index_of(Speech)]};
    const auto grid = default_threshold_grid(20);
    const auto s = evaluate_system(t.posteriors, t.classes, t.ground_truth, grid, w, prm, prm);
    ASSERT_NEAR(s.psds1.score, oracle::psds(t, grid, wo, prm), 1e-9) << "trial " << trial;
  }
}

TEST(ThresholdGrid, Default) {
  const auto g = default_threshold_grid();
  ASSERT_EQ(g.size(), 50u);
  EXPECT_DOUBLE_EQ(g.front(), 0.01);
  EXPECT_DOUBLE_EQ(g.back(), 0.99);
}

TEST(PsdsParams, ScenarioDefaultsAndValidation) {
  const auto s1 = PsdsParams::scenario1(), s2 = PsdsParams::scenario2();
  EXPECT_EQ(s1.rho_dtc, 0.7);
  EXPECT_EQ(s1.alpha_ct, 0.0);
  EXPECT_EQ(s2.rho_gtc, 0.1);
  EXPECT_EQ(s2.rho_cttc, 0.3);
  EXPECT_EQ(s2.alpha_ct, 0.5);
  EXPECT_NEAR(s2.e_max * 3600, 100.0, 1e-9);
  PsdsParams bad;
  bad.rho_dtc = 0.0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Reports, JsonAndCsv) {
  const auto t = toy();
  const std::vector<double> grid{0.25, 0.5};
  const auto s = evaluate_system(t.posteriors, t.classes, t.ground_truth, grid, ones(), PsdsParams::scenario1(),
                                 PsdsParams::scenario2());
  const auto j = report_json(s.psds1);
  EXPECT_EQ(j["scenario"], "psds1");
  EXPECT_DOUBLE_EQ(j["score"].get<double>(), s.psds1.score);
  const auto csv = report_csv(s.psds1);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "threshold,class,tp,fp,ct,tpr,efpr_per_hour");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2);
}
