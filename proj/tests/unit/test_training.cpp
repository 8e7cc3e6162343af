#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mtlsed/errors.hpp"
#include "mtlsed/training.hpp"

using namespace mtlsed;
using enum EventClass;

namespace {

constexpr std::size_t kBins = 16, kFrames = 64;

ModelConfig small_model() {
  ModelConfig c = ModelConfig::tiny(kBins);
  c.input_frames = kFrames;
  return c;
}

// Features with a class-specific bump so that tiny models can fit them.
std::shared_ptr<const LogMel> features_for(const std::set<EventClass>& classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  auto f = std::make_shared<LogMel>();
  f->frames = kFrames;
  f->mel_bins = kBins;
  f->values.resize(kFrames * kBins);
  for (auto& v : f->values) v = static_cast<float>(n(rng));
  for (EventClass c : classes)
    for (std::size_t t = 0; t < kFrames; ++t) f->at(t, (index_of(c) * 3) % kBins) += 2.0f;
  return f;
}

std::vector<TrainingClip> toy_clips(std::size_t n, std::uint64_t seed) {
  std::vector<TrainingClip> clips;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    TrainingClip c;
    c.clip_id = "clip" + std::to_string(i);
    const EventClass a = all_event_classes()[rng() % 10];
    c.strong = i % 2 == 0;
    if (c.strong) c.events = {{c.clip_id, a, 0.0, 4.0}};
    else c.tags = {a};
    c.features = features_for({a}, seed * 100 + i);
    clips.push_back(std::move(c));
  }
  return clips;
}

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_lr = 3e-3;
  cfg.ramp_epochs = 0;
  cfg.stage1_epochs = 2;
  cfg.stage2_epochs = 2;
  cfg.augment = false;
  return cfg;
}

Posteriors constant_posteriors(std::size_t frames, float p) {
  Posteriors q;
  q.frames = frames;
  q.sed_classes = 10;
  q.acc_classes = 4;
  q.sed_frame.assign(frames * 10, p);
  q.acc_frame.assign(frames * 4, p);
  q.sed_clip.assign(10, p);
  q.acc_clip.assign(4, p);
  return q;
}

float logit(double p) { return static_cast<float>(std::log(p / (1.0 - p))); }

}  // namespace

TEST(Bce, Examples) {
  const std::vector<float> p{1.0f - 1e-7f, 1e-7f}, t{1.0f, 0.0f};
  const std::vector<std::uint8_t> m{1, 1};
  EXPECT_LT(bce(p, t, m), 1e-6);
  const std::vector<float> half(6, 0.5f), tt{1, 0, 1, 1, 0, 0};
  EXPECT_NEAR(bce(half, tt, std::vector<std::uint8_t>(6, 1)), std::log(2.0), 1e-12);
  const std::vector<float> p9{0.9f}, one{1.0f};
  EXPECT_NEAR(bce(p9, one, std::vector<std::uint8_t>{1}), 0.10536, 1e-5);
}

TEST(Bce, MaskExcludesEntries) {
  const std::vector<float> p{0.9f, 0.01f}, t{1.0f, 1.0f};
  EXPECT_NEAR(bce(p, t, std::vector<std::uint8_t>{1, 0}), -std::log(0.9f), 1e-7);
  EXPECT_EQ(bce(p, t, std::vector<std::uint8_t>{0, 0}), 0.0);
}

TEST(Rasterize, FrameCoverage) {
  const std::vector<EventLabel> e{{"c", Dog, 0.1, 0.2}, {"c", Cat, 0.0, 0.064}};
  const auto r = rasterize(std::span<const EventLabel>(e), 6, 0.064);
  for (std::size_t t = 0; t < 6; ++t) {
    EXPECT_EQ(r[t * 10 + index_of(Dog)], (t >= 1 && t <= 3) ? 1.0f : 0.0f) << t;
    EXPECT_EQ(r[t * 10 + index_of(Cat)], t == 0 ? 1.0f : 0.0f) << t;
  }
}

TEST(OutputHop, Tiny) { EXPECT_DOUBLE_EQ(output_hop_seconds(ModelConfig::tiny()), 0.064); }

TEST(SedLoss, StrongOnlyWeakOnlyAndMixed) {
  const std::size_t T = 5;
  TrainingClip strong{"s", nullptr, true, {{"s", Dog, 0.0, 0.2}}, {}};
  TrainingClip weak{"w", nullptr, false, {}, {Cat, Speech}};
  const auto map = proposed_map();
  Batch all{{nullptr, nullptr}, {make_targets(strong, map, T, 0.064), make_targets(weak, map, T, 0.064)}, T};
  Batch s_only{{nullptr}, {all.targets[0]}, T}, w_only{{nullptr}, {all.targets[1]}, T};
  const std::vector<Posteriors> post{constant_posteriors(T, 0.3f), constant_posteriors(T, 0.7f)};
  LossBreakdown a, s, w;
  sed_loss(post, all, a);
  sed_loss(std::span(post).first(1), s_only, s);
  sed_loss(std::span(post).subspan(1), w_only, w);
  EXPECT_DOUBLE_EQ(s.L_SED, s.l_sed_strong);
  EXPECT_EQ(s.l_sed_weak, 0.0);
  EXPECT_DOUBLE_EQ(w.L_SED, w.l_sed_weak);
  EXPECT_NEAR(a.L_SED, s.L_SED + w.L_SED, 1e-12);
  // Hand value of the strong term: 4 positive frames of 50 entries at p = 0.3.
  EXPECT_NEAR(s.l_sed_strong, (4 * -std::log(0.3) + 46 * -std::log(0.7)) / 50.0, 1e-6);
}

TEST(AccLoss, ZeroTargetsAndHandValue) {
  const std::size_t T = 4;
  TrainingClip empty{"e", nullptr, true, {}, {}};
  Batch b{{nullptr}, {make_targets(empty, proposed_map(), T, 0.064)}, T};
  for (float v : b.targets[0].acc_frame) EXPECT_EQ(v, 0.0f);
  const std::vector<Posteriors> post{constant_posteriors(T, 0.2f)};
  LossBreakdown l;
  acc_loss(post, b, l);
  EXPECT_NEAR(l.L_ACC, -std::log(0.8), 1e-6);
}

TEST(Targets, VacuumEventMarksClassAOnly) {
  TrainingClip c{"c", nullptr, true, {{"c", Vacuum_cleaner, 0.128, 0.32}}, {}};
  const auto t = make_targets(c, proposed_map(), 8, 0.064);
  for (std::size_t f = 0; f < 8; ++f)
    for (std::size_t a = 0; a < 4; ++a) {
      const bool on = a == 0 && f >= 2 && f < 5;
      EXPECT_EQ(t.acc_frame[f * 4 + a], on ? 1.0f : 0.0f) << f << "," << a;
    }
}

TEST(Targets, TaxonomiesDifferExactlyWhereMapsDisagree) {
  for (EventClass c : all_event_classes()) {
    TrainingClip clip{"c", nullptr, true, {{"c", c, 0.0, 0.2}}, {}};
    const auto p = make_targets(clip, proposed_map(), 4, 0.064);
    const auto r = make_targets(clip, randomized_map(), 4, 0.064);
    EXPECT_EQ(p.sed_frame, r.sed_frame);
    EXPECT_EQ(p.acc_frame == r.acc_frame, proposed_map()(c) == randomized_map()(c)) << to_string(c);
    TrainingClip weak{"w", nullptr, false, {}, {c}};
    const auto pw = make_targets(weak, proposed_map(), 4, 0.064);
    const auto rw = make_targets(weak, randomized_map(), 4, 0.064);
    EXPECT_EQ(pw.acc_clip[index_of(proposed_map()(c))], 1.0f);
    EXPECT_EQ(rw.acc_clip[index_of(randomized_map()(c))], 1.0f);
  }
}

TEST(CombineLosses, Examples) {
  EXPECT_DOUBLE_EQ(combine_losses(0.5, 0.3, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(combine_losses(1.0, 1.0, 0.8), 1.0);
  EXPECT_NEAR(combine_losses(0.4, 0.9, 0.8), 0.50, 1e-12);
  EXPECT_THROW(combine_losses(0.4, 0.9, 1.2), ValidationError);
}

TEST(LrSchedule, Examples) {
  EXPECT_DOUBLE_EQ(lr_schedule(50, 1e-3, 50), 1e-3);
  EXPECT_DOUBLE_EQ(lr_schedule(80, 1e-3, 50), 1e-3);
  EXPECT_NEAR(lr_schedule(0, 1e-3, 50), 6.738e-6, 1e-9);
  EXPECT_NEAR(lr_schedule(25, 1e-3, 50), 2.865e-4, 1e-7);
  EXPECT_DOUBLE_EQ(lr_schedule(0, 1e-3, 0), 1e-3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Parameter<float> p{"p", nn::Tensor<float>({3}, {1.0f, -2.0f, 0.5f}), {}};
  p.grad = {0.5f, -3.0f, 0.0f};
  Adam opt({&p});
  opt.step(0.01);
  EXPECT_NEAR(p.value.data[0], 0.99f, 1e-6);
  EXPECT_NEAR(p.value.data[1], -1.99f, 1e-6);
  EXPECT_EQ(p.value.data[2], 0.5f);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.alpha = 1.5;
  try {
    c.validate();
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("alpha"), std::string::npos);
  }
  TrainConfig d;
  d.taxonomy = "other";
  EXPECT_THROW(d.validate(), ValidationError);
}

TEST(PseudoLabel, ThresholdRule) {
  ModelConfig c = small_model();
  c.acc_classes = 0;
  Model tagger(c, 1);
  for (auto* p : tagger.parameters()) {
    if (p->name == "sed.head.weight") std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
    if (p->name == "sed.head.bias") {
      std::fill(p->value.data.begin(), p->value.data.end(), logit(0.2));
      p->value.data[index_of(Speech)] = logit(0.9);
      p->value.data[index_of(Dog)] = logit(0.6);
    }
  }
  std::vector<UnlabeledClip> clips{{"u0", features_for({}, 1)}};
  const auto m = pseudo_label(tagger, clips, 0.5);
  ASSERT_EQ(m.rows.size(), 1u);
  EXPECT_EQ(m.rows[0].weak, (std::set<EventClass>{Speech, Dog}));
  EXPECT_EQ(m.split, Split::Weak);
  for (auto* p : tagger.parameters())
    if (p->name == "sed.head.bias") std::fill(p->value.data.begin(), p->value.data.end(), logit(0.4));
  EXPECT_TRUE(pseudo_label(tagger, clips, 0.5).rows.empty());
}

TEST(PseudoLabel, MatchesExhaustiveOracle) {
  ModelConfig c = small_model();
  c.acc_classes = 0;
  const Model tagger(c, 3);
  std::vector<UnlabeledClip> clips;
  for (int i = 0; i < 6; ++i) clips.push_back({"u" + std::to_string(i), features_for({}, 10 + i)});
  const double tau = 0.5;
  const auto m = pseudo_label(tagger, clips, tau);
  std::size_t row = 0;
  for (const auto& u : clips) {
    const auto p = tagger.predict(*u.features);
    std::set<EventClass> expect;
    for (EventClass k : all_event_classes())
      if (p.sed_clip[index_of(k)] >= tau) expect.insert(k);
    if (expect.empty()) continue;
    ASSERT_LT(row, m.rows.size());
    EXPECT_EQ(m.rows[row].filename, u.clip_id);
    EXPECT_EQ(m.rows[row].weak, expect);
    ++row;
  }
  EXPECT_EQ(row, m.rows.size());
}

TEST(Stage1, StepCountAndDeterminism) {
  const auto clips = toy_clips(10, 1);
  auto cfg = quick_config();
  cfg.stage1_epochs = 1;
  ModelConfig tagger = small_model();
  const auto a = train_stage1(cfg, tagger, clips);
  EXPECT_EQ(a.steps.size(), 3u);
  EXPECT_FALSE(a.model.has_acc());
  const auto b = train_stage1(cfg, tagger, clips);
  EXPECT_EQ(parameter_digest(a.model), parameter_digest(b.model));
}

TEST(Stage1, OverfitsTenClips) {
  const auto clips = toy_clips(10, 2);
  auto cfg = quick_config();
  cfg.stage1_epochs = 200;
  cfg.batch_size = 2;
  ModelConfig tagger = small_model();
  const auto r = train_stage1(cfg, tagger, clips);
  EXPECT_LT(clip_bce(r.model, clips), 0.05);
}

TEST(Stage2, LoggedMtlLossIsCombination) {
  const auto clips = toy_clips(8, 3);
  auto cfg = quick_config();
  cfg.alpha = 0.7;
  cfg.augment = true;
  cfg.augment_policy.time_mask = {1, 8, 0};
  cfg.augment_policy.freq_mask = {1, 4, 0};
  std::size_t callbacks = 0;
  const auto r = train_stage2(cfg, small_model(), clips, [&](const EpochLog&) { ++callbacks; });
  EXPECT_EQ(callbacks, 2u);
  EXPECT_EQ(r.steps.size(), 4u);
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.loss.L_MTL, combine_losses(s.loss.L_SED, s.loss.L_ACC, 0.7), 1e-7);
    EXPECT_GT(s.loss.L_ACC, 0.0);
  }
  EXPECT_EQ(format_epoch_csv(r.epochs).substr(0, 9), "epoch,lr,");
}

TEST(Stage2, AlphaOneMatchesOmittedAccTerm) {
  const auto clips = toy_clips(8, 4);
  auto cfg = quick_config();
  cfg.alpha = 1.0;
  auto a = train_stage2(cfg, small_model(), clips).model;
  cfg.omit_acc_loss = true;
  auto b = train_stage2(cfg, small_model(), clips).model;
  const auto pa = a.sed_parameters(), pb = b.sed_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value.data, pb[i]->value.data) << pa[i]->name;
}

TEST(Stage2, TaxonomyChangesTheRun) {
  const auto clips = toy_clips(8, 5);
  auto cfg = quick_config();
  cfg.alpha = 0.5;
  const auto a = train_stage2(cfg, small_model(), clips).model;
  cfg.taxonomy = "randomized";
  const auto b = train_stage2(cfg, small_model(), clips).model;
  EXPECT_NE(parameter_digest(a), parameter_digest(b));
}

TEST(Training, RejectsEmptyData) {
  EXPECT_THROW(train_stage2(quick_config(), small_model(), {}), ValidationError);
}
