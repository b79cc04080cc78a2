#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "evg/common.hpp"
#include "evg/event.hpp"
#include "evg/manifest.hpp"
#include "evg/tensor.hpp"

namespace evg {

/// Gesture motion programs for the synthetic scenes. ConvergePair is the
/// only two-blob (bimanual) class.
enum class Motion { SweepLeft, SweepRight, Circle, ConvergePair, StaticHold };

const char* motion_name(Motion m);
Motion motion_from_name(const std::string& name);
int motion_hands(Motion m);

struct SynthConfig {
  std::uint16_t width = 64;
  std::uint16_t height = 64;
  std::uint64_t duration_us = 390000;
  std::vector<Motion> classes = {Motion::SweepLeft, Motion::SweepRight, Motion::Circle,
                                 Motion::ConvergePair, Motion::StaticHold};
  double ego_amplitude = 30.0;  // peak background speed, px/s
  double threshold = 0.2;       // log-intensity step per event
  double noise_rate = 0.02;     // background noise, events/px/s
  std::uint64_t seed = 1;
  std::uint64_t sim_step_us = 1000;
  bool heterogeneous = true;    // test split drawn from disjoint style ranges
  std::size_t subjects = 6;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Blob centers (pixel coordinates, before the ego offset) at normalized
/// time tau in [0, 1].
std::vector<std::pair<double, double>> blob_centers(Motion m, const Style& style,
                                                    double tau, double width,
                                                    double height);

/// Linear-intensity frame (H, W) at time t: drifting background texture plus
/// the gesture blobs, everything shifted by the shared ego-motion offset.
/// Deterministic in (cfg.seed, class_id, t).
TensorN render_scene(const SynthConfig& cfg, std::size_t class_id, std::uint64_t t_us);
TensorN render_scene_styled(const SynthConfig& cfg, Motion motion, const Style& style,
                            std::uint64_t t_us);

/// Threshold-crossing event emission: the scene is sampled every sim_step_us,
/// per-pixel log-intensity reference levels step by +-threshold, and crossing
/// timestamps are linearly interpolated inside the step. Poisson background
/// noise is appended, then everything is sorted by t (stable).
EventStream emit_events(const SynthConfig& cfg, std::size_t class_id);
EventStream emit_events_styled(const SynthConfig& cfg, Motion motion, const Style& style,
                               Rng& noise_rng);

/// Default style for (seed, class_id); used by the single-sample entry
/// points above.
Style default_style(const SynthConfig& cfg, std::size_t class_id);

struct SynthSample {
  EventStream stream;
  std::size_t class_id = 0;
  std::string split;
  std::size_t subject = 0;
  Style style;
  int hands = 1;
};

/// per_class samples per class with a train/val/test split (roughly 4:1:1,
/// val and test at least 1). In heterogeneous mode the test split draws
/// speed, blob size and ego amplitude from ranges disjoint from training.
std::vector<SynthSample> gen_dataset(const SynthConfig& cfg, std::size_t per_class);

/// Style parameter ranges used by gen_dataset, exposed for the tests.
struct StyleRange {
  double speed_lo, speed_hi;
  double sigma_lo, sigma_hi;
  double ego_lo, ego_hi;
};
StyleRange train_style_range();
StyleRange test_style_range();

}  // namespace evg
