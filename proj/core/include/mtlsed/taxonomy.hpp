#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mtlsed {

// The 10 DCASE domestic event classes, in canonical (alphabetical) order.
// The enumerator value is the class column index used by every model output.
enum class EventClass : std::uint8_t {
  Alarm_bell_ringing,
  Blender,
  Cat,
  Dishes,
  Dog,
  Electric_shaver_toothbrush,
  Frying,
  Running_water,
  Speech,
  Vacuum_cleaner,
};
inline constexpr std::size_t kNumEventClasses = 10;

// High-level acoustic-characteristic classes.
enum class AccClass : std::uint8_t { A, B, C, D };
inline constexpr std::size_t kNumAccClasses = 4;

const std::array<EventClass, kNumEventClasses>& all_event_classes();
const std::array<AccClass, kNumAccClasses>& all_acc_classes();

std::string_view to_string(EventClass c);
std::string_view to_string(AccClass c);
EventClass parse_event_class(std::string_view text);
AccClass parse_acc_class(std::string_view text);

inline std::size_t index_of(EventClass c) { return static_cast<std::size_t>(c); }
inline std::size_t index_of(AccClass c) { return static_cast<std::size_t>(c); }

/// Total mapping from event classes to acoustic-characteristic classes.
class TaxonomyMap {
 public:
  TaxonomyMap(std::string name, const std::array<AccClass, kNumEventClasses>& mapping)
      : name_(std::move(name)), mapping_(mapping) {}

  const std::string& name() const { return name_; }
  AccClass operator()(EventClass c) const { return mapping_[index_of(c)]; }
  const std::array<AccClass, kNumEventClasses>& table() const { return mapping_; }

  /// Event classes mapped to `a`, in canonical order.
  std::vector<EventClass> preimage(AccClass a) const;

  friend bool operator==(const TaxonomyMap&, const TaxonomyMap&) = default;

 private:
  std::string name_;
  std::array<AccClass, kNumEventClasses> mapping_;
};

/// Grouping by shared acoustic characteristics (stationary noise, semi-stationary
/// noise with transients, pitch-varying vocalizations, short stable high-pitch sounds).
TaxonomyMap proposed_map();
/// Control grouping that deliberately separates acoustically similar events.
TaxonomyMap randomized_map();
/// "proposed" or "randomized"; anything else is a ValidationError.
TaxonomyMap taxonomy_by_name(std::string_view name);

/// Two-column table, one `event_label<TAB>acc_label` row per event class.
std::string format_taxonomy(const TaxonomyMap& map);
/// Inverse of format_taxonomy. Rejects missing, duplicate, or unknown classes.
TaxonomyMap parse_taxonomy(std::string_view text, std::string name);

struct EventLabel {
  std::string clip_id;
  EventClass klass{};
  double onset = 0.0;
  double offset = 0.0;

  double duration() const { return offset - onset; }
  friend bool operator==(const EventLabel&, const EventLabel&) = default;
};

struct AccLabel {
  std::string clip_id;
  AccClass klass{};
  double onset = 0.0;
  double offset = 0.0;

  friend bool operator==(const AccLabel&, const AccLabel&) = default;
};

/// Throws ValidationError unless 0 <= onset < offset <= clip_duration.
void validate_label(const EventLabel& label, double clip_duration);

/// Relabels each event through `map` and merges overlapping or touching
/// intervals of the same acoustic class within a clip. Sorted by (clip_id, onset, class).
std::vector<AccLabel> project_labels(std::span<const EventLabel> labels, const TaxonomyMap& map);

/// Merge step of project_labels applied to labels that are already at the
/// acoustic-class level (identity projection).
std::vector<AccLabel> merge_acc_labels(std::vector<AccLabel> labels);

/// Clip-level projection used for weak labels.
std::set<AccClass> project_classes(const std::set<EventClass>& classes, const TaxonomyMap& map);

enum class DurationCategory { Long, Short };
std::string_view to_string(DurationCategory c);

inline constexpr double kDefaultLongShortThreshold = 3.0;

struct DurationStats {
  double mean = 0.0;
  double median = 0.0;
  std::size_t count = 0;
  DurationCategory category = DurationCategory::Short;
};

/// Long iff mean >= threshold seconds.
DurationCategory duration_category(double mean, double threshold = kDefaultLongShortThreshold);

std::map<EventClass, DurationStats> duration_statistics(std::span<const EventLabel> labels,
                                                        double threshold = kDefaultLongShortThreshold);

}  // namespace mtlsed
