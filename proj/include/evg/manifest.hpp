#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evg/event.hpp"

namespace evg {

/// Per-sample rendering style. Heterogeneous splits draw these from disjoint
/// train/test ranges; the subject index adds a per-subject speed multiplier.
struct Style {
  double speed_scale = 1.0;
  double blob_sigma = 3.5;   // px
  double ego_scale = 1.0;
  double ego_period_x_s = 0.5;
  double ego_period_y_s = 0.7;
  double ego_phase_x = 0.0;
  double ego_phase_y = 0.0;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest file
  std::size_t class_id = 0;
  std::string class_name;
  std::string split;  // "train" | "val" | "test"
  std::size_t subject = 0;
  int hands = 1;
  Style style;
};

struct Manifest {
  Geometry geometry;
  std::vector<std::string> class_names;
  std::vector<ManifestEntry> entries;
};

void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

}  // namespace evg
