#include "evg/stats.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "evg/common.hpp"
#include "evg/event_io.hpp"

namespace evg {

SequenceStats sequence_stats(const EventStream& s) {
  if (s.events.empty()) throw data_error("sequence_stats: empty stream");
  SequenceStats st;
  st.count = s.events.size();
  const std::uint64_t span = s.events.back().t - s.events.front().t;
  st.duration_s = static_cast<double>(span) * 1e-6;
  if (span == 0) {
    st.degenerate = true;
    st.rate = static_cast<double>(st.count);
  } else {
    st.rate = static_cast<double>(st.count) / st.duration_s;
  }
  return st;
}

GroupKey group_key_from_name(const std::string& name) {
  if (name == "subject") return GroupKey::Subject;
  if (name == "class") return GroupKey::Class;
  if (name == "handedness") return GroupKey::Handedness;
  throw data_error("unknown group key '" + name + "' (subject|class|handedness)");
}

const char* group_key_name(GroupKey k) {
  switch (k) {
    case GroupKey::Subject: return "subject";
    case GroupKey::Class: return "class";
    case GroupKey::Handedness: return "handedness";
  }
  return "unknown";
}

namespace {

std::string group_label(const ManifestEntry& e, const Manifest& m, GroupKey key) {
  switch (key) {
    case GroupKey::Subject:
      return "subject:" + std::to_string(e.subject);
    case GroupKey::Class:
      return "class:" + (e.class_id < m.class_names.size() ? m.class_names[e.class_id]
                                                           : std::to_string(e.class_id));
    case GroupKey::Handedness:
      return e.hands >= 2 ? "bimanual" : "unimanual";
  }
  return "?";
}

std::vector<SequenceStats> load_all_stats(const Manifest& manifest,
                                          const std::filesystem::path& dir) {
  const std::size_t n = manifest.entries.size();
  std::vector<SequenceStats> stats(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const EventStream s = load_events(dir / manifest.entries[idx].path);
    stats[idx] = sequence_stats(s);
  }
  return stats;
}

}  // namespace

RateReport normalized_rates(const Manifest& manifest,
                            const std::filesystem::path& manifest_dir, GroupKey key) {
  if (manifest.entries.empty()) throw data_error("normalized_rates: empty corpus");
  const std::vector<SequenceStats> stats = load_all_stats(manifest, manifest_dir);

  RateReport report;
  report.key = key;

  std::map<std::string, double> group_max;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    RateRow row;
    row.group = group_label(e, manifest, key);
    row.item = e.path;
    row.class_id = e.class_id;
    row.subject = e.subject;
    row.hands = e.hands;
    row.rate = stats[i].rate;
    report.rows.push_back(std::move(row));
    auto [it, inserted] = group_max.try_emplace(report.rows.back().group, stats[i].rate);
    if (!inserted) it->second = std::max(it->second, stats[i].rate);
  }
  for (RateRow& row : report.rows) row.normalized = row.rate / group_max.at(row.group);

  double global_max = 0.0;
  for (const RateRow& row : report.rows) global_max = std::max(global_max, row.rate);
  double uni_sum = 0.0, bi_sum = 0.0;
  std::size_t uni_n = 0, bi_n = 0;
  for (const RateRow& row : report.rows) {
    const double norm = row.rate / global_max;
    if (row.hands >= 2) {
      bi_sum += norm;
      ++bi_n;
    } else {
      uni_sum += norm;
      ++uni_n;
    }
  }
  report.unimanual_mean_normalized = uni_n ? uni_sum / static_cast<double>(uni_n) : 0.0;
  report.bimanual_mean_normalized = bi_n ? bi_sum / static_cast<double>(bi_n) : 0.0;

  // Deterministic output order regardless of manifest order.
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const RateRow& a, const RateRow& b) {
                     if (a.group != b.group) return a.group < b.group;
                     return a.item < b.item;
                   });
  return report;
}

std::vector<DurationRow> duration_histogram(const Manifest& manifest,
                                            const std::filesystem::path& manifest_dir) {
  if (manifest.entries.empty()) throw data_error("duration_histogram: empty corpus");
  const std::vector<SequenceStats> stats = load_all_stats(manifest, manifest_dir);

  // class -> subject -> cumulative seconds
  std::map<std::size_t, std::map<std::size_t, double>> acc;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    acc[manifest.entries[i].class_id][manifest.entries[i].subject] +=
        stats[i].duration_s;

  std::vector<DurationRow> rows;
  for (const auto& [class_id, by_subject] : acc) {
    DurationRow row;
    row.class_id = class_id;
    row.class_name = class_id < manifest.class_names.size() ? manifest.class_names[class_id]
                                                            : std::to_string(class_id);
    for (const auto& [subject, seconds] : by_subject) {
      row.per_subject.push_back({subject, seconds});
      row.total_s += seconds;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json rate_report_json(const RateReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const RateRow& row : r.rows)
    rows.push_back({{"group", row.group},
                    {"item", row.item},
                    {"class", row.class_id},
                    {"subject", row.subject},
                    {"hands", row.hands},
                    {"rate", row.rate},
                    {"normalized", row.normalized}});
  return {{"group_by", group_key_name(r.key)},
          {"rows", rows},
          {"handedness",
           {{"unimanual_mean_normalized", r.unimanual_mean_normalized},
            {"bimanual_mean_normalized", r.bimanual_mean_normalized}}}};
}

std::string rate_report_csv(const RateReport& r) {
  std::ostringstream out;
  out << "group,item,class,subject,hands,rate,normalized\n";
  out.precision(17);
  for (const RateRow& row : r.rows)
    out << row.group << ',' << row.item << ',' << row.class_id << ',' << row.subject << ','
        << row.hands << ',' << row.rate << ',' << row.normalized << '\n';
  return out.str();
}

nlohmann::json duration_rows_json(const std::vector<DurationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const DurationRow& row : rows) {
    nlohmann::json segs = nlohmann::json::array();
    for (const DurationSegment& s : row.per_subject)
      segs.push_back({{"subject", s.subject}, {"seconds", s.seconds}});
    out.push_back({{"class", row.class_id},
                   {"class_name", row.class_name},
                   {"segments", segs},
                   {"total_s", row.total_s}});
  }
  return out;
}

std::string duration_rows_csv(const std::vector<DurationRow>& rows) {
  std::ostringstream out;
  out << "class,class_name,subject,seconds\n";
  out.precision(17);
  for (const DurationRow& row : rows)
    for (const DurationSegment& s : row.per_subject)
      out << row.class_id << ',' << row.class_name << ',' << s.subject << ',' << s.seconds
          << '\n';
  return out.str();
}

}  // namespace evg
