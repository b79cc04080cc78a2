#include "evg/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "evg/common.hpp"

namespace evg {

namespace {

nlohmann::json style_to_json(const Style& s) {
  return {{"speed_scale", s.speed_scale},     {"blob_sigma", s.blob_sigma},
          {"ego_scale", s.ego_scale},         {"ego_period_x_s", s.ego_period_x_s},
          {"ego_period_y_s", s.ego_period_y_s}, {"ego_phase_x", s.ego_phase_x},
          {"ego_phase_y", s.ego_phase_y}};
}

Style style_from_json(const nlohmann::json& j) {
  Style s;
  s.speed_scale = j.value("speed_scale", s.speed_scale);
  s.blob_sigma = j.value("blob_sigma", s.blob_sigma);
  s.ego_scale = j.value("ego_scale", s.ego_scale);
  s.ego_period_x_s = j.value("ego_period_x_s", s.ego_period_x_s);
  s.ego_period_y_s = j.value("ego_period_y_s", s.ego_period_y_s);
  s.ego_phase_x = j.value("ego_phase_x", s.ego_phase_x);
  s.ego_phase_y = j.value("ego_phase_y", s.ego_phase_y);
  return s;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const ManifestEntry& e : m.entries)
    samples.push_back({{"path", e.path},
                       {"class", e.class_id},
                       {"class_name", e.class_name},
                       {"split", e.split},
                       {"subject", e.subject},
                       {"hands", e.hands},
                       {"style", style_to_json(e.style)}});
  nlohmann::json j = {
      {"geometry", {{"width", m.geometry.width}, {"height", m.geometry.height}}},
      {"classes", m.class_names},
      {"samples", samples}};

  std::ofstream out(path);
  if (!out) throw data_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path.string() + ": bad manifest: " + e.what());
  }

  Manifest m;
  try {
    m.geometry.width = j.at("geometry").at("width").get<std::uint16_t>();
    m.geometry.height = j.at("geometry").at("height").get<std::uint16_t>();
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    for (const nlohmann::json& s : j.at("samples")) {
      ManifestEntry e;
      e.path = s.at("path").get<std::string>();
      e.class_id = s.at("class").get<std::size_t>();
      e.class_name = s.value("class_name", std::string());
      e.split = s.at("split").get<std::string>();
      if (!s.contains("subject"))
        throw data_error(path.string() + ": sample " + e.path + " missing subject metadata");
      e.subject = s.at("subject").get<std::size_t>();
      e.hands = s.value("hands", 1);
      if (s.contains("style")) e.style = style_from_json(s.at("style"));
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path.string() + ": bad manifest: " + e.what());
  }
  return m;
}

}  // namespace evg
