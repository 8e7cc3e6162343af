#include "mtlsed/taxonomy.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include "mtlsed/errors.hpp"

namespace mtlsed {
namespace {

constexpr std::array<std::string_view, kNumEventClasses> kEventNames = {
    "Alarm_bell_ringing", "Blender", "Cat",           "Dishes", "Dog",
    "Electric_shaver_toothbrush", "Frying", "Running_water", "Speech", "Vacuum_cleaner",
};
constexpr std::array<std::string_view, kNumAccClasses> kAccNames = {"A", "B", "C", "D"};

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::array<EventClass, kNumEventClasses>& all_event_classes() {
  static const std::array<EventClass, kNumEventClasses> all = [] {
    std::array<EventClass, kNumEventClasses> a{};
    for (std::size_t i = 0; i < kNumEventClasses; ++i) a[i] = static_cast<EventClass>(i);
    return a;
  }();
  return all;
}

const std::array<AccClass, kNumAccClasses>& all_acc_classes() {
  static const std::array<AccClass, kNumAccClasses> all = {AccClass::A, AccClass::B, AccClass::C,
                                                           AccClass::D};
  return all;
}

std::string_view to_string(EventClass c) { return kEventNames.at(index_of(c)); }
std::string_view to_string(AccClass c) { return kAccNames.at(index_of(c)); }

EventClass parse_event_class(std::string_view text) {
  text = trim(text);
  for (std::size_t i = 0; i < kNumEventClasses; ++i)
    if (kEventNames[i] == text) return static_cast<EventClass>(i);
  throw ValidationError("unknown event class '" + std::string(text) + "'");
}

AccClass parse_acc_class(std::string_view text) {
  text = trim(text);
  for (std::size_t i = 0; i < kNumAccClasses; ++i)
    if (kAccNames[i] == text) return static_cast<AccClass>(i);
  throw ValidationError("unknown acoustic class '" + std::string(text) + "'");
}

std::vector<EventClass> TaxonomyMap::preimage(AccClass a) const {
  std::vector<EventClass> out;
  for (EventClass c : all_event_classes())
    if ((*this)(c) == a) out.push_back(c);
  return out;
}

TaxonomyMap proposed_map() {
  using enum AccClass;
  // Order follows EventClass: Alarm, Blender, Cat, Dishes, Dog, Shaver,
  // Frying, Running_water, Speech, Vacuum_cleaner.
  return TaxonomyMap("proposed", {D, A, C, D, C, B, A, B, C, A});
}

TaxonomyMap randomized_map() {
  using enum AccClass;
  return TaxonomyMap("randomized", {A, A, D, C, B, A, C, D, C, B});
}

TaxonomyMap taxonomy_by_name(std::string_view name) {
  if (name == "proposed") return proposed_map();
  if (name == "randomized") return randomized_map();
  throw ValidationError("unknown taxonomy '" + std::string(name) +
                        "' (expected 'proposed' or 'randomized')");
}

std::string format_taxonomy(const TaxonomyMap& map) {
  std::string out;
  for (EventClass c : all_event_classes()) {
    out += to_string(c);
    out += '\t';
    out += to_string(map(c));
    out += '\n';
  }
  return out;
}

TaxonomyMap parse_taxonomy(std::string_view text, std::string name) {
  std::array<AccClass, kNumEventClasses> mapping{};
  std::array<bool, kNumEventClasses> seen{};
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ValidationError("taxonomy line " + std::to_string(line_no) + ": expected two tab-separated columns");
    const EventClass ev = parse_event_class(line.substr(0, tab));
    const AccClass acc = parse_acc_class(line.substr(tab + 1));
    if (seen[index_of(ev)])
      throw ValidationError("taxonomy maps '" + std::string(to_string(ev)) + "' twice");
    seen[index_of(ev)] = true;
    mapping[index_of(ev)] = acc;
  }
  for (EventClass c : all_event_classes())
    if (!seen[index_of(c)])
      throw ValidationError("taxonomy is missing '" + std::string(to_string(c)) + "'");
  return TaxonomyMap(std::move(name), mapping);
}

void validate_label(const EventLabel& label, double clip_duration) {
  if (!(label.onset >= 0.0 && label.onset < label.offset && label.offset <= clip_duration))
    throw ValidationError("event " + std::string(to_string(label.klass)) + " in '" + label.clip_id +
                          "' has invalid interval [" + std::to_string(label.onset) + ", " +
                          std::to_string(label.offset) + "]");
}

std::vector<AccLabel> merge_acc_labels(std::vector<AccLabel> labels) {
  std::sort(labels.begin(), labels.end(), [](const AccLabel& a, const AccLabel& b) {
    return std::tie(a.clip_id, a.klass, a.onset, a.offset) <
           std::tie(b.clip_id, b.klass, b.onset, b.offset);
  });
  std::vector<AccLabel> merged;
  for (auto& l : labels) {
    if (!merged.empty() && merged.back().clip_id == l.clip_id && merged.back().klass == l.klass &&
        l.onset <= merged.back().offset) {
      merged.back().offset = std::max(merged.back().offset, l.offset);
    } else {
      merged.push_back(std::move(l));
    }
  }
  std::sort(merged.begin(), merged.end(), [](const AccLabel& a, const AccLabel& b) {
    return std::tie(a.clip_id, a.onset, a.klass) < std::tie(b.clip_id, b.onset, b.klass);
  });
  return merged;
}

std::vector<AccLabel> project_labels(std::span<const EventLabel> labels, const TaxonomyMap& map) {
  std::vector<AccLabel> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back({l.clip_id, map(l.klass), l.onset, l.offset});
  return merge_acc_labels(std::move(out));
}

std::set<AccClass> project_classes(const std::set<EventClass>& classes, const TaxonomyMap& map) {
  std::set<AccClass> out;
  for (EventClass c : classes) out.insert(map(c));
  return out;
}

std::string_view to_string(DurationCategory c) { return c == DurationCategory::Long ? "Long" : "Short"; }

DurationCategory duration_category(double mean, double threshold) {
  require(mean > 0.0, "duration_category: mean duration must be positive");
  return mean >= threshold ? DurationCategory::Long : DurationCategory::Short;
}

std::map<EventClass, DurationStats> duration_statistics(std::span<const EventLabel> labels,
                                                        double threshold) {
  std::map<EventClass, std::vector<double>> durations;
  for (const auto& l : labels) durations[l.klass].push_back(l.duration());

  std::map<EventClass, DurationStats> out;
  for (auto& [klass, d] : durations) {
    std::sort(d.begin(), d.end());
    double sum = 0.0;
    for (double x : d) sum += x;
    const std::size_t n = d.size();
    DurationStats s;
    s.count = n;
    s.mean = sum / static_cast<double>(n);
    s.median = n % 2 == 1 ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
    s.category = duration_category(s.mean, threshold);
    out.emplace(klass, s);
  }
  return out;
}

}  // namespace mtlsed
