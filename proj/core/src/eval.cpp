#include "mtlsed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mtlsed/errors.hpp"

namespace mtlsed {

void PsdsParams::validate() const {
  auto ratio = [](double r, const char* what) {
    require(r > 0.0 && r <= 1.0, std::string("psds: ") + what + " must lie in (0, 1]");
  };
  ratio(rho_dtc, "rho_dtc");
  ratio(rho_gtc, "rho_gtc");
  ratio(rho_cttc, "rho_cttc");
  require(alpha_ct >= 0.0 && alpha_st >= 0.0, "psds: penalty weights must be >= 0");
  require(e_max > 0.0, "psds: e_max must be > 0");
}

PsdsParams PsdsParams::scenario1() { return {"psds1", 0.7, 0.7, 0.3, 0.0, 1.0, 100.0 / 3600.0}; }

PsdsParams PsdsParams::scenario2() { return {"psds2", 0.1, 0.1, 0.3, 0.5, 1.0, 100.0 / 3600.0}; }

nlohmann::json to_json(const PsdsParams& p) {
  return {{"name", p.name},         {"rho_dtc", p.rho_dtc},   {"rho_gtc", p.rho_gtc},
          {"rho_cttc", p.rho_cttc}, {"alpha_ct", p.alpha_ct}, {"alpha_st", p.alpha_st},
          {"e_max_per_hour", p.e_max * 3600.0}};
}

namespace {

double overlap(const EventLabel& a, const EventLabel& b) {
  return std::max(0.0, std::min(a.offset, b.offset) - std::max(a.onset, b.onset));
}

std::ptrdiff_t class_slot(std::span<const EventClass> classes, EventClass k) {
  const auto it = std::find(classes.begin(), classes.end(), k);
  return it == classes.end() ? -1 : it - classes.begin();
}

}  // namespace

MatchCounts match_events(std::span<const EventLabel> detections, std::span<const EventLabel> ground_truth,
                         std::span<const EventClass> classes, const PsdsParams& params) {
  const std::size_t n = classes.size();
  MatchCounts m{std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0), std::vector<std::size_t>(n, 0),
                std::vector<std::vector<std::size_t>>(n, std::vector<std::size_t>(n, 0))};
  std::map<std::string, std::vector<const EventLabel*>> det_by_clip, gt_by_clip;
  for (const auto& d : detections)
    if (class_slot(classes, d.klass) >= 0 && d.duration() > 0.0) det_by_clip[d.clip_id].push_back(&d);
  for (const auto& g : ground_truth) {
    const auto c = class_slot(classes, g.klass);
    if (c < 0 || g.duration() <= 0.0) continue;
    gt_by_clip[g.clip_id].push_back(&g);
    ++m.gt_count[static_cast<std::size_t>(c)];
  }

  for (const auto& [clip, gts] : gt_by_clip) {
    const auto it = det_by_clip.find(clip);
    const std::vector<const EventLabel*> none;
    const auto& dets = it == det_by_clip.end() ? none : it->second;
    std::vector<bool> dtc(dets.size(), false);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      double cover = 0.0;
      for (const auto* g : gts)
        if (g->klass == dets[i]->klass) cover += overlap(*dets[i], *g);
      dtc[i] = cover / dets[i]->duration() >= params.rho_dtc;
    }
    for (const auto* g : gts) {
      double cover = 0.0;
      for (std::size_t i = 0; i < dets.size(); ++i)
        if (dtc[i] && dets[i]->klass == g->klass) cover += overlap(*dets[i], *g);
      if (cover / g->duration() >= params.rho_gtc) ++m.tp[static_cast<std::size_t>(class_slot(classes, g->klass))];
    }
  }
  // False positives and cross-triggers, including clips without ground truth.
  for (const auto& [clip, dets] : det_by_clip) {
    const auto git = gt_by_clip.find(clip);
    const std::vector<const EventLabel*> none;
    const auto& gts = git == gt_by_clip.end() ? none : git->second;
    for (const auto* d : dets) {
      std::vector<double> cover(n, 0.0);
      for (const auto* g : gts) cover[static_cast<std::size_t>(class_slot(classes, g->klass))] += overlap(*d, *g);
      const auto c = static_cast<std::size_t>(class_slot(classes, d->klass));
      if (cover[c] / d->duration() >= params.rho_dtc) continue;
      ++m.fp[c];
      for (std::size_t k = 0; k < n; ++k)
        if (k != c && cover[k] / d->duration() >= params.rho_cttc) ++m.ct[c][k];
    }
  }
  return m;
}

RocEvaluation roc_points(std::span<const std::vector<EventLabel>> detections_per_threshold,
                         std::span<const double> thresholds, std::span<const EventLabel> ground_truth,
                         std::span<const EventClass> classes, const PsdsParams& params, double total_duration) {
  params.validate();
  require(total_duration > 0.0, "roc_points: total duration must be > 0");
  require(detections_per_threshold.size() == thresholds.size(), "roc_points: one detection list per threshold");
  RocEvaluation roc;
  std::vector<double> gt_duration;
  for (EventClass c : classes) {
    double d = 0.0;
    std::size_t count = 0;
    for (const auto& g : ground_truth)
      if (g.klass == c && g.duration() > 0.0) {
        d += g.duration();
        ++count;
      }
    if (count == 0) {
      roc.excluded.push_back(c);
    } else {
      roc.classes.push_back(c);
      gt_duration.push_back(d);
    }
  }
  const std::size_t n = roc.classes.size();
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const MatchCounts m = match_events(detections_per_threshold[i], ground_truth, roc.classes, params);
    OperatingPoint op{thresholds[i], m.tp, m.fp, std::vector<std::size_t>(n, 0), std::vector<double>(n),
                      std::vector<double>(n)};
    for (std::size_t c = 0; c < n; ++c) {
      op.tpr[c] = static_cast<double>(m.tp[c]) / static_cast<double>(m.gt_count[c]);
      double ctr = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == c) continue;
        op.ct[c] += m.ct[c][k];
        ctr += static_cast<double>(m.ct[c][k]) / gt_duration[k];
      }
      const double mean_ctr = n > 1 ? ctr / static_cast<double>(n - 1) : 0.0;
      op.efpr[c] = static_cast<double>(m.fp[c]) / total_duration + params.alpha_ct * mean_ctr;
    }
    roc.points.push_back(std::move(op));
  }
  return roc;
}

PsdsReport psds(const RocEvaluation& roc, const PsdsParams& params) {
  params.validate();
  PsdsReport r{params, 0.0, {}, roc};
  const std::size_t n = roc.classes.size();
  if (n == 0 || roc.points.empty()) {
    r.curve = {{0.0, params.e_max}, {0.0, 0.0}};
    return r;
  }
  std::vector<double> xs{0.0};
  for (const auto& p : roc.points)
    for (double x : p.efpr)
      if (x < params.e_max) xs.push_back(x);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

  auto etpr_at = [&](double x) {
    std::vector<double> tpr(n, 0.0);
    for (const auto& p : roc.points)
      for (std::size_t c = 0; c < n; ++c)
        if (p.efpr[c] <= x) tpr[c] = std::max(tpr[c], p.tpr[c]);
    double mean = 0.0;
    for (double v : tpr) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : tpr) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    return std::max(0.0, mean - params.alpha_st * sd);
  };

  double area = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double y = etpr_at(xs[i]);
    const double next = i + 1 < xs.size() ? xs[i + 1] : params.e_max;
    area += y * (next - xs[i]);
    r.curve.efpr.push_back(xs[i]);
    r.curve.etpr.push_back(y);
  }
  r.curve.efpr.push_back(params.e_max);
  r.curve.etpr.push_back(r.curve.etpr.back());
  r.score = std::clamp(area / params.e_max, 0.0, 1.0);
  return r;
}

std::vector<double> default_threshold_grid(std::size_t n) {
  require(n >= 2, "threshold grid needs at least 2 points");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = 0.01 + 0.98 * static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

SystemScores evaluate_system(std::span<const FramePosteriors> posteriors, std::span<const EventClass> classes,
                             std::span<const EventLabel> ground_truth, std::span<const double> thresholds,
                             const FilterLengths& windows, const PsdsParams& params1, const PsdsParams& params2) {
  require(!thresholds.empty(), "evaluate_system: threshold grid is empty");
  require(!posteriors.empty(), "evaluate_system: no clips");
  double total_duration = 0.0;
  for (const auto& p : posteriors) total_duration += p.duration;
  std::vector<std::vector<EventLabel>> dets(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    for (const auto& p : posteriors) {
      auto ev = detect(p, classes, thresholds[i], windows);
      dets[i].insert(dets[i].end(), ev.begin(), ev.end());
    }
  SystemScores s;
  s.psds1 = psds(roc_points(dets, thresholds, ground_truth, classes, params1, total_duration), params1);
  s.psds2 = psds(roc_points(dets, thresholds, ground_truth, classes, params2, total_duration), params2);
  s.total = s.psds1.score + s.psds2.score;
  return s;
}

nlohmann::json report_json(const PsdsReport& r) {
  nlohmann::json classes = nlohmann::json::array(), excluded = nlohmann::json::array(), per_class;
  for (EventClass c : r.roc.classes) classes.push_back(std::string(to_string(c)));
  for (EventClass c : r.roc.excluded) excluded.push_back(std::string(to_string(c)));
  for (std::size_t c = 0; c < r.roc.classes.size(); ++c) {
    nlohmann::json trace = nlohmann::json::array();
    for (const auto& p : r.roc.points)
      trace.push_back({{"threshold", p.threshold},
                       {"tp", p.tp[c]},
                       {"fp", p.fp[c]},
                       {"ct", p.ct[c]},
                       {"tpr", p.tpr[c]},
                       {"efpr_per_hour", p.efpr[c] * 3600.0}});
    per_class[std::string(to_string(r.roc.classes[c]))] = trace;
  }
  nlohmann::json curve_x = nlohmann::json::array();
  for (double x : r.curve.efpr) curve_x.push_back(x * 3600.0);
  return {{"scenario", r.params.name},
          {"score", r.score},
          {"params", to_json(r.params)},
          {"classes", classes},
          {"excluded_classes", excluded},
          {"curve", {{"efpr_per_hour", curve_x}, {"etpr", r.curve.etpr}}},
          {"per_class", per_class}};
}

std::string report_csv(const PsdsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "threshold,class,tp,fp,ct,tpr,efpr_per_hour\n";
  for (const auto& p : r.roc.points)
    for (std::size_t c = 0; c < r.roc.classes.size(); ++c)
      os << p.threshold << ',' << to_string(r.roc.classes[c]) << ',' << p.tp[c] << ',' << p.fp[c] << ',' << p.ct[c]
         << ',' << p.tpr[c] << ',' << p.efpr[c] * 3600.0 << '\n';
  return os.str();
}

}  // namespace mtlsed
