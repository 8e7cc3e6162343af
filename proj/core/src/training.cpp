#include "mtlsed/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mtlsed/errors.hpp"
#include "mtlsed/random.hpp"

namespace mtlsed {

void TrainConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, "training.alpha must lie in [0, 1] (got " + std::to_string(alpha) + ")");
  require(batch_size >= 1, "training.batch_size must be >= 1");
  require(max_lr > 0.0, "training.max_lr must be > 0");
  require(stage1_epochs >= 1 && stage2_epochs >= 1, "training epochs must be >= 1");
  require(pseudo_threshold > 0.0 && pseudo_threshold < 1.0, "training.pseudo_threshold must lie in (0, 1)");
  taxonomy_by_name(taxonomy);
  augment_policy.validate();
}

double output_hop_seconds(const ModelConfig& c) {
  return static_cast<double>(c.time_pool()) * kHopSamples / kSampleRate;
}

namespace {

template <typename Label>
std::vector<float> rasterize_impl(std::span<const Label> events, std::size_t frames, double hop,
                                  std::size_t classes) {
  require(hop > 0.0, "rasterize: hop must be > 0");
  std::vector<float> out(frames * classes, 0.0f);
  for (const auto& e : events) {
    const std::size_t c = index_of(e.klass);
    require(c < classes, "rasterize: class index out of range");
    if (e.offset <= e.onset) continue;
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor(e.onset / hop)));
    const auto last = std::min(frames, static_cast<std::size_t>(std::max(0.0, std::ceil(e.offset / hop))));
    for (std::size_t t = first; t < last; ++t) out[t * classes + c] = 1.0f;
  }
  return out;
}

}  // namespace

std::vector<float> rasterize(std::span<const EventLabel> events, std::size_t frames, double hop_seconds,
                             std::size_t classes) {
  return rasterize_impl(events, frames, hop_seconds, classes);
}

std::vector<float> rasterize(std::span<const AccLabel> events, std::size_t frames, double hop_seconds,
                             std::size_t classes) {
  return rasterize_impl(events, frames, hop_seconds, classes);
}

ClipTargets make_targets(const TrainingClip& clip, const TaxonomyMap& map, std::size_t frames, double hop_seconds) {
  ClipTargets t;
  t.strong = clip.strong;
  if (clip.strong) {
    t.sed_frame = rasterize(std::span<const EventLabel>(clip.events), frames, hop_seconds);
    const auto acc = project_labels(clip.events, map);
    t.acc_frame = rasterize(std::span<const AccLabel>(acc), frames, hop_seconds);
  } else {
    t.sed_clip.assign(kNumEventClasses, 0.0f);
    t.acc_clip.assign(kNumAccClasses, 0.0f);
    for (EventClass c : clip.tags) t.sed_clip[index_of(c)] = 1.0f;
    for (AccClass a : project_classes(clip.tags, map)) t.acc_clip[index_of(a)] = 1.0f;
  }
  return t;
}

double bce(std::span<const float> p, std::span<const float> t, std::span<const std::uint8_t> mask) {
  require(p.size() == t.size() && p.size() == mask.size(), "bce: shape mismatch");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double q = std::clamp(static_cast<double>(p[i]), nn::kBceClamp, 1.0 - nn::kBceClamp);
    sum -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

namespace {

// Strong-frame and weak-clip BCE terms of one head over a batch.
std::pair<double, double> head_loss(std::span<const Posteriors> post, const Batch& b, bool acc) {
  require(post.size() == b.targets.size(), "loss: posterior/batch size mismatch");
  std::vector<float> fp, ft, cp, ct;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const auto& tg = b.targets[i];
    const auto& frame = acc ? post[i].acc_frame : post[i].sed_frame;
    const auto& clip = acc ? post[i].acc_clip : post[i].sed_clip;
    if (acc && post[i].acc_clip.empty()) throw std::logic_error("acc_loss: model has no ACC branch");
    if (tg.strong) {
      const auto& t = acc ? tg.acc_frame : tg.sed_frame;
      require(t.size() == frame.size(), "loss: frame target size mismatch");
      fp.insert(fp.end(), frame.begin(), frame.end());
      ft.insert(ft.end(), t.begin(), t.end());
    } else {
      const auto& t = acc ? tg.acc_clip : tg.sed_clip;
      require(t.size() == clip.size(), "loss: clip target size mismatch");
      cp.insert(cp.end(), clip.begin(), clip.end());
      ct.insert(ct.end(), t.begin(), t.end());
    }
  }
  const std::vector<std::uint8_t> fm(fp.size(), 1), cm(cp.size(), 1);
  return {bce(fp, ft, fm), bce(cp, ct, cm)};
}

}  // namespace

void sed_loss(std::span<const Posteriors> post, const Batch& b, LossBreakdown& out) {
  std::tie(out.l_sed_strong, out.l_sed_weak) = head_loss(post, b, false);
  out.L_SED = out.l_sed_strong + out.l_sed_weak;
}

void acc_loss(std::span<const Posteriors> post, const Batch& b, LossBreakdown& out) {
  std::tie(out.l_acc_strong, out.l_acc_weak) = head_loss(post, b, true);
  out.L_ACC = out.l_acc_strong + out.l_acc_weak;
}

double combine_losses(double l_sed, double l_acc, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1] (got " + std::to_string(alpha) + ")");
  return alpha * l_sed + (1.0 - alpha) * l_acc;
}

double lr_schedule(std::size_t epoch, double max_lr, std::size_t ramp_epochs) {
  if (ramp_epochs == 0) return max_lr;
  const double x = std::min(static_cast<double>(epoch) / static_cast<double>(ramp_epochs), 1.0);
  return max_lr * std::exp(-5.0 * (1.0 - x) * (1.0 - x));
}

Adam::Adam(std::vector<nn::Parameter<float>*> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (auto* p : params_) {
    m_.emplace_back(p->value.size(), 0.0);
    v_.emplace_back(p->value.size(), 0.0);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.empty() ? 0.0 : p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double update = lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      p.value.data[i] = static_cast<float>(p.value.data[i] - update);
    }
  }
}

namespace {

enum class Stage { Tagging, Joint };

std::vector<float> presence(const TrainingClip& c) {
  std::vector<float> t(kNumEventClasses, 0.0f);
  if (c.strong)
    for (const auto& e : c.events) t[index_of(e.klass)] = 1.0f;
  else
    for (EventClass k : c.tags) t[index_of(k)] = 1.0f;
  return t;
}

LogMel training_view(const TrainingClip& clip, const TrainConfig& cfg, std::size_t epoch, std::size_t index) {
  LogMel f = *clip.features;
  if (!cfg.augment) return f;
  f = spec_augment(std::move(f), cfg.augment_policy, derive_seed(cfg.seed, {epoch, index, 0}));
  return filter_augment(std::move(f), cfg.augment_policy, derive_seed(cfg.seed, {epoch, index, 1}));
}

void accumulate(LossBreakdown& acc, const LossBreakdown& s) {
  acc.l_sed_strong += s.l_sed_strong;
  acc.l_sed_weak += s.l_sed_weak;
  acc.L_SED += s.L_SED;
  acc.l_acc_strong += s.l_acc_strong;
  acc.l_acc_weak += s.l_acc_weak;
  acc.L_ACC += s.L_ACC;
  acc.L_MTL += s.L_MTL;
}

TrainResult run_training(const TrainConfig& cfg, Model model, std::span<const TrainingClip> clips,
                         std::size_t epochs, Stage stage, std::uint64_t order_stream, const EpochCallback& on_epoch) {
  require(!clips.empty(), "training: empty training data");
  for (const auto& c : clips) require(c.features != nullptr, "training: clip " + c.clip_id + " has no features");
  const TaxonomyMap map = taxonomy_by_name(cfg.taxonomy);
  const double hop = output_hop_seconds(model.config());
  const bool joint = stage == Stage::Joint;
  const bool use_acc = joint && !cfg.omit_acc_loss;
  const double alpha = joint ? cfg.alpha : 1.0;
  if (use_acc) require(model.has_acc(), "train_stage2: model has no ACC branch");

  TrainResult result;
  Adam adam(model.parameters());
  std::vector<ClipTargets> targets(clips.size());
  std::vector<bool> have_targets(clips.size(), false);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.max_lr, cfg.ramp_epochs);
    std::vector<std::size_t> order(clips.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(cfg.seed, {order_stream, epoch});
    shuffle(order, rng);

    LossBreakdown epoch_sum;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::size_t n_strong = 0, n_weak = 0;
      for (std::size_t k = start; k < end; ++k) (clips[order[k]].strong ? n_strong : n_weak) += 1;

      model.zero_grad();
      double s_frame = 0, s_clip = 0, a_frame = 0, a_clip = 0, tag_sum = 0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const TrainingClip& clip = clips[idx];
        nn::Tape<float> tape;
        nn::Var in = tape.constant(features_to_tensor<float>(training_view(clip, cfg, epoch, idx)));
        ForwardOptions opt;
        opt.skip_acc = !use_acc;
        auto out = model.forward(tape, in, true, opt);

        std::vector<nn::Var> terms;
        std::vector<float> weights;
        if (!joint) {
          const std::size_t n = end - start;
          terms.push_back(nn::bce_sum(tape, out.sed_clip, presence(clip)));
          weights.push_back(static_cast<float>(1.0 / static_cast<double>(n * kNumEventClasses)));
        } else {
          const std::size_t frames = tape.value(out.sed_frame).dim(0);
          if (!have_targets[idx]) {
            targets[idx] = make_targets(clip, map, frames, hop);
            have_targets[idx] = true;
          }
          const ClipTargets& tg = targets[idx];
          const std::size_t sed_c = model.config().sed_classes, acc_c = model.config().acc_classes;
          if (clip.strong) {
            const double ns = static_cast<double>(n_strong * frames);
            terms.push_back(nn::bce_sum(tape, out.sed_frame, tg.sed_frame));
            weights.push_back(static_cast<float>(alpha / (ns * static_cast<double>(sed_c))));
            if (use_acc) {
              terms.push_back(nn::bce_sum(tape, out.acc_frame, tg.acc_frame));
              weights.push_back(static_cast<float>((1.0 - alpha) / (ns * static_cast<double>(acc_c))));
            }
          } else {
            const double nw = static_cast<double>(n_weak);
            terms.push_back(nn::bce_sum(tape, out.sed_clip, tg.sed_clip));
            weights.push_back(static_cast<float>(alpha / (nw * static_cast<double>(sed_c))));
            if (use_acc) {
              terms.push_back(nn::bce_sum(tape, out.acc_clip, tg.acc_clip));
              weights.push_back(static_cast<float>((1.0 - alpha) / (nw * static_cast<double>(acc_c))));
            }
          }
          const double sed_v = tape.scalar(terms[0]);
          const double acc_v = use_acc ? tape.scalar(terms[1]) : 0.0;
          if (clip.strong) {
            s_frame += sed_v / static_cast<double>(frames * sed_c);
            a_frame += use_acc ? acc_v / static_cast<double>(frames * acc_c) : 0.0;
          } else {
            s_clip += sed_v / static_cast<double>(sed_c);
            a_clip += use_acc ? acc_v / static_cast<double>(acc_c) : 0.0;
          }
        }
        if (!joint) tag_sum += tape.scalar(terms[0]) / static_cast<double>(kNumEventClasses);
        tape.backward(nn::weighted_sum<float>(tape, terms, weights));
      }
      adam.step(lr);

      LossBreakdown b;
      if (joint) {
        b.l_sed_strong = n_strong ? s_frame / static_cast<double>(n_strong) : 0.0;
        b.l_sed_weak = n_weak ? s_clip / static_cast<double>(n_weak) : 0.0;
        b.L_SED = b.l_sed_strong + b.l_sed_weak;
        b.l_acc_strong = n_strong ? a_frame / static_cast<double>(n_strong) : 0.0;
        b.l_acc_weak = n_weak ? a_clip / static_cast<double>(n_weak) : 0.0;
        b.L_ACC = b.l_acc_strong + b.l_acc_weak;
        b.L_MTL = cfg.omit_acc_loss ? alpha * b.L_SED : combine_losses(b.L_SED, b.L_ACC, alpha);
      } else {
        b.l_sed_weak = tag_sum / static_cast<double>(end - start);
        b.L_SED = b.l_sed_weak;
        b.L_MTL = b.L_SED;
      }
      result.steps.push_back({epoch, step++, lr, b});
      accumulate(epoch_sum, b);
      ++epoch_steps;
    }
    EpochLog log{epoch, lr, {}};
    const double n = static_cast<double>(epoch_steps);
    log.loss = {epoch_sum.l_sed_strong / n, epoch_sum.l_sed_weak / n, epoch_sum.L_SED / n,
                epoch_sum.l_acc_strong / n, epoch_sum.l_acc_weak / n, epoch_sum.L_ACC / n,
                epoch_sum.L_MTL / n};
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train_stage1(const TrainConfig& cfg, const ModelConfig& tagger_config, std::span<const TrainingClip> clips,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  ModelConfig mc = tagger_config;
  mc.acc_classes = 0;
  return run_training(cfg, Model(mc, derive_seed(cfg.seed, {1})), clips, cfg.stage1_epochs, Stage::Tagging, 1,
                      on_epoch);
}

TrainResult train_stage2(const TrainConfig& cfg, const ModelConfig& model_config, std::span<const TrainingClip> clips,
                         const EpochCallback& on_epoch) {
  cfg.validate();
  require(model_config.acc_classes > 0 || cfg.omit_acc_loss || cfg.alpha == 1.0,
          "train_stage2: model config has no ACC branch");
  return run_training(cfg, Model(model_config, derive_seed(cfg.seed, {2})), clips, cfg.stage2_epochs, Stage::Joint, 2,
                      on_epoch);
}

DatasetManifest pseudo_label(const Model& tagger, std::span<const UnlabeledClip> clips, double threshold) {
  require(threshold > 0.0 && threshold < 1.0, "pseudo_label: threshold must lie in (0, 1)");
  DatasetManifest m{Split::Weak, {}};
  for (const auto& c : clips) {
    const Posteriors p = tagger.predict(*c.features);
    ManifestRow row{c.clip_id, {}, {}};
    for (std::size_t k = 0; k < kNumEventClasses; ++k)
      if (p.sed_clip[k] >= threshold) row.weak.insert(all_event_classes()[k]);
    if (!row.weak.empty()) m.rows.push_back(std::move(row));
  }
  return m;
}

double clip_bce(const Model& m, std::span<const TrainingClip> clips) {
  require(!clips.empty(), "clip_bce: no clips");
  double sum = 0.0;
  for (const auto& c : clips) {
    const Posteriors p = m.predict(*c.features);
    const auto t = presence(c);
    const std::vector<std::uint8_t> mask(t.size(), 1);
    sum += bce(p.sed_clip, t, mask);
  }
  return sum / static_cast<double>(clips.size());
}

std::string format_epoch_csv(const std::vector<EpochLog>& epochs) {
  std::ostringstream os;
  os.precision(9);
  os << "epoch,lr,l_sed_strong,l_sed_weak,l_acc_strong,l_acc_weak,L_SED,L_ACC,L_MTL\n";
  for (const auto& e : epochs) {
    const auto& l = e.loss;
    os << e.epoch << ',' << e.lr << ',' << l.l_sed_strong << ',' << l.l_sed_weak << ',' << l.l_acc_strong << ','
       << l.l_acc_weak << ',' << l.L_SED << ',' << l.L_ACC << ',' << l.L_MTL << '\n';
  }
  return os.str();
}

}  // namespace mtlsed
