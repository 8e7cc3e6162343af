#include "mtlsed/postprocess.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "mtlsed/errors.hpp"
#include "mtlsed/eval.hpp"

namespace mtlsed {

FramePosteriors frame_posteriors(const std::string& clip_id, const Posteriors& p, double hop_seconds,
                                 double duration) {
  return {clip_id, p.frames, p.sed_frame, hop_seconds, duration};
}

std::vector<BinarySequence> binarize(const FramePosteriors& p, std::span<const double> thresholds) {
  const std::size_t classes = thresholds.size();
  require(classes > 0 && p.probs.size() == p.frames * classes, "binarize: posterior/threshold shape mismatch");
  std::vector<BinarySequence> out(classes, BinarySequence{std::vector<std::uint8_t>(p.frames, 0), p.hop_seconds});
  for (std::size_t c = 0; c < classes; ++c) {
    require(thresholds[c] > 0.0 && thresholds[c] < 1.0, "binarize: thresholds must lie in (0, 1)");
    for (std::size_t t = 0; t < p.frames; ++t) out[c].values[t] = p.at(t, c, classes) >= thresholds[c] ? 1 : 0;
  }
  return out;
}

BinarySequence median_filter(const BinarySequence& s, int window) {
  require(window >= 1 && window % 2 == 1, "median_filter: window must be odd and >= 1 (got " +
                                              std::to_string(window) + ")");
  if (window == 1) return s;
  const auto n = static_cast<std::ptrdiff_t>(s.values.size());
  const std::ptrdiff_t half = window / 2;
  BinarySequence out{std::vector<std::uint8_t>(s.values.size(), 0), s.hop_seconds};
  // Running count of ones inside [i - half, i + half]; padding contributes zeros.
  std::ptrdiff_t ones = 0;
  for (std::ptrdiff_t j = 0; j <= std::min(half, n - 1); ++j) ones += s.values[static_cast<std::size_t>(j)];
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out.values[static_cast<std::size_t>(i)] = ones > half ? 1 : 0;
    const std::ptrdiff_t enter = i + half + 1, leave = i - half;
    if (enter < n) ones += s.values[static_cast<std::size_t>(enter)];
    if (leave >= 0) ones -= s.values[static_cast<std::size_t>(leave)];
  }
  return out;
}

std::vector<EventLabel> decode_events(const BinarySequence& s, const std::string& clip_id, EventClass klass,
                                      double clip_duration) {
  std::vector<EventLabel> out;
  const std::size_t n = s.values.size();
  for (std::size_t t = 0; t < n;) {
    if (!s.values[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < n && s.values[end]) ++end;
    const double onset = static_cast<double>(t) * s.hop_seconds;
    const double offset = std::min(static_cast<double>(end) * s.hop_seconds, clip_duration);
    if (offset > onset) out.push_back({clip_id, klass, onset, offset});
    t = end;
  }
  return out;
}

FilterLengths unit_filter_lengths() {
  FilterLengths f;
  f.fill(1);
  return f;
}

std::vector<int> default_filter_candidates() {
  std::vector<int> c;
  for (int w = 1; w <= 41; w += 2) c.push_back(w);
  return c;
}

std::vector<EventLabel> detect(const FramePosteriors& p, std::span<const EventClass> classes, double threshold,
                               const FilterLengths& windows) {
  const std::vector<double> th(classes.size(), threshold);
  const auto bins = binarize(p, th);
  std::vector<EventLabel> out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto ev = decode_events(median_filter(bins[c], windows[index_of(classes[c])]), p.clip_id, classes[c],
                                  p.duration);
    out.insert(out.end(), ev.begin(), ev.end());
  }
  return out;
}

double intersection_f1(std::span<const EventLabel> detections, std::span<const EventLabel> ground_truth,
                       EventClass klass, double rho_dtc, double rho_gtc) {
  PsdsParams p;
  p.rho_dtc = rho_dtc;
  p.rho_gtc = rho_gtc;
  const std::vector<EventClass> cls{klass};
  std::vector<EventLabel> det, gt;
  for (const auto& d : detections)
    if (d.klass == klass) det.push_back(d);
  for (const auto& g : ground_truth)
    if (g.klass == klass) gt.push_back(g);
  const MatchCounts m = match_events(det, gt, cls, p);
  const double tp = static_cast<double>(m.tp[0]), fp = static_cast<double>(m.fp[0]);
  const double fn = static_cast<double>(m.gt_count[0]) - tp;
  if (tp + fp + fn == 0.0) return 1.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

FilterLengths search_filter_lengths(std::span<const FramePosteriors> posteriors, std::span<const EventClass> classes,
                                    std::span<const EventLabel> ground_truth, const FilterSearchConfig& cfg) {
  require(!cfg.candidates.empty(), "search_filter_lengths: candidate list is empty");
  for (int w : cfg.candidates)
    require(w >= 1 && w % 2 == 1, "search_filter_lengths: candidate windows must be odd and >= 1");
  std::vector<int> cands = cfg.candidates;
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

  FilterLengths best = unit_filter_lengths();
  const std::vector<double> th(classes.size(), cfg.threshold);
  std::vector<std::vector<BinarySequence>> bins;
  for (const auto& p : posteriors) bins.push_back(binarize(p, th));
  for (std::size_t c = 0; c < classes.size(); ++c) {
    double best_f1 = -1.0;
    for (int w : cands) {
      std::vector<EventLabel> det;
      for (std::size_t i = 0; i < posteriors.size(); ++i) {
        const auto ev = decode_events(median_filter(bins[i][c], w), posteriors[i].clip_id, classes[c],
                                      posteriors[i].duration);
        det.insert(det.end(), ev.begin(), ev.end());
      }
      const double f1 = intersection_f1(det, ground_truth, classes[c], cfg.rho_dtc, cfg.rho_gtc);
      if (f1 > best_f1) {
        best_f1 = f1;
        best[index_of(classes[c])] = w;
      }
    }
  }
  return best;
}

std::string format_filter_lengths(const FilterLengths& f) {
  std::ostringstream os;
  for (EventClass c : all_event_classes()) os << to_string(c) << '\t' << f[index_of(c)] << '\n';
  return os.str();
}

FilterLengths parse_filter_lengths(const std::string& text) {
  FilterLengths f = unit_filter_lengths();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    require(tab != std::string::npos, "filter lengths: expected event_label<TAB>window, got '" + line + "'");
    const int w = std::stoi(line.substr(tab + 1));
    require(w >= 1 && w % 2 == 1, "filter lengths: window must be odd and >= 1");
    f[index_of(parse_event_class(line.substr(0, tab)))] = w;
  }
  return f;
}

}  // namespace mtlsed
