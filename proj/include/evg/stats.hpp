#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evg/event.hpp"
#include "evg/manifest.hpp"

namespace evg {

struct SequenceStats {
  double duration_s = 0.0;
  std::size_t count = 0;
  double rate = 0.0;       // events/s; equals count when degenerate
  bool degenerate = false; // single event / zero duration
};

SequenceStats sequence_stats(const EventStream& s);

enum class GroupKey { Subject, Class, Handedness };

GroupKey group_key_from_name(const std::string& name);
const char* group_key_name(GroupKey k);

struct RateRow {
  std::string group;
  std::string item;  // sequence path
  std::size_t class_id = 0;
  std::size_t subject = 0;
  int hands = 1;
  double rate = 0.0;
  double normalized = 0.0;  // rate / group max, in (0, 1]
};

struct RateReport {
  GroupKey key = GroupKey::Subject;
  std::vector<RateRow> rows;
  // Handedness comparison under global normalization (rate / corpus max).
  double unimanual_mean_normalized = 0.0;
  double bimanual_mean_normalized = 0.0;
};

/// Per-sequence rates normalized by their group maximum. Every group has at
/// least one entry equal to exactly 1.0.
RateReport normalized_rates(const Manifest& manifest,
                            const std::filesystem::path& manifest_dir, GroupKey key);

struct DurationSegment {
  std::size_t subject = 0;
  double seconds = 0.0;
};

struct DurationRow {
  std::size_t class_id = 0;
  std::string class_name;
  std::vector<DurationSegment> per_subject;  // sorted by subject
  double total_s = 0.0;
};

/// Cumulative per-class durations stacked by subject; classes with no
/// sequences are omitted.
std::vector<DurationRow> duration_histogram(const Manifest& manifest,
                                            const std::filesystem::path& manifest_dir);

nlohmann::json rate_report_json(const RateReport& r);
std::string rate_report_csv(const RateReport& r);
nlohmann::json duration_rows_json(const std::vector<DurationRow>& rows);
std::string duration_rows_csv(const std::vector<DurationRow>& rows);

}  // namespace evg
