#include "evg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evg {

const char* motion_name(Motion m) {
  switch (m) {
    case Motion::SweepLeft: return "sweep_left";
    case Motion::SweepRight: return "sweep_right";
    case Motion::Circle: return "circle";
    case Motion::ConvergePair: return "converge_pair";
    case Motion::StaticHold: return "static_hold";
  }
  return "unknown";
}

Motion motion_from_name(const std::string& name) {
  for (Motion m : {Motion::SweepLeft, Motion::SweepRight, Motion::Circle,
                   Motion::ConvergePair, Motion::StaticHold})
    if (name == motion_name(m)) return m;
  throw data_error("unknown motion program '" + name + "'");
}

int motion_hands(Motion m) { return m == Motion::ConvergePair ? 2 : 1; }

void to_json(nlohmann::json& j, const SynthConfig& c) {
  std::vector<std::string> names;
  for (Motion m : c.classes) names.emplace_back(motion_name(m));
  j = nlohmann::json{{"width", c.width},
                     {"height", c.height},
                     {"duration_us", c.duration_us},
                     {"classes", names},
                     {"ego_amplitude", c.ego_amplitude},
                     {"threshold", c.threshold},
                     {"noise_rate", c.noise_rate},
                     {"seed", c.seed},
                     {"sim_step_us", c.sim_step_us},
                     {"heterogeneous", c.heterogeneous},
                     {"subjects", c.subjects}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
  SynthConfig d;
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.duration_us = j.value("duration_us", d.duration_us);
  if (j.contains("classes")) {
    c.classes.clear();
    for (const auto& n : j.at("classes")) c.classes.push_back(motion_from_name(n));
  }
  c.ego_amplitude = j.value("ego_amplitude", d.ego_amplitude);
  c.threshold = j.value("threshold", d.threshold);
  c.noise_rate = j.value("noise_rate", d.noise_rate);
  c.seed = j.value("seed", d.seed);
  c.sim_step_us = j.value("sim_step_us", d.sim_step_us);
  c.heterogeneous = j.value("heterogeneous", d.heterogeneous);
  c.subjects = j.value("subjects", d.subjects);
}

namespace {

void validate_synth_config(const SynthConfig& c) {
  if (c.width == 0 || c.height == 0) throw data_error("synth: geometry must be positive");
  if (c.duration_us == 0) throw data_error("synth: duration must be positive");
  if (!(c.threshold > 0.0)) throw data_error("synth: threshold must be positive");
  if (c.ego_amplitude < 0.0) throw data_error("synth: ego amplitude must be >= 0");
  if (c.noise_rate < 0.0) throw data_error("synth: noise rate must be >= 0");
  if (c.sim_step_us == 0) throw data_error("synth: simulation step must be positive");
  if (c.classes.empty()) throw data_error("synth: need at least one class");
}

// Ego-motion offset in pixels at time t. Sinusoidal drift whose peak speed is
// ego_amplitude * style.ego_scale px/s.
std::pair<double, double> ego_offset(const SynthConfig& cfg, const Style& style,
                                     double t_s) {
  const double v = cfg.ego_amplitude * style.ego_scale;
  const double wx = 2.0 * kPi / style.ego_period_x_s;
  const double wy = 2.0 * kPi / style.ego_period_y_s;
  const double ax = v / wx;
  const double ay = v / wy;
  return {ax * std::sin(wx * t_s + style.ego_phase_x),
          ay * std::sin(wy * t_s + style.ego_phase_y)};
}

double background(double x, double y) {
  // Smooth plaid, strictly positive, non-integer periods against aliasing.
  return 0.55 + 0.2 * std::sin(2.0 * kPi * x / 9.7) * std::cos(2.0 * kPi * y / 7.3) +
         0.08 * std::sin(2.0 * kPi * (x - y) / 13.1);
}

}  // namespace

std::vector<std::pair<double, double>> blob_centers(Motion m, const Style& style,
                                                    double tau, double width,
                                                    double height) {
  const double cx = 0.5 * width, cy = 0.5 * height;
  const double s = style.speed_scale;
  switch (m) {
    case Motion::SweepLeft:
      return {{width * 0.85 - width * 0.7 * tau * s, cy}};
    case Motion::SweepRight:
      return {{width * 0.15 + width * 0.7 * tau * s, cy}};
    case Motion::Circle: {
      const double r = 0.22 * std::min(width, height);
      const double ang = 2.0 * kPi * tau * s;
      return {{cx + r * std::cos(ang), cy + r * std::sin(ang)}};
    }
    case Motion::ConvergePair: {
      const double dx = width * 0.35 * (1.0 - std::min(1.0, tau * s));
      return {{cx - dx, cy}, {cx + dx, cy}};
    }
    case Motion::StaticHold:
      return {{cx, cy}};
  }
  return {{cx, cy}};
}

TensorN render_scene_styled(const SynthConfig& cfg, Motion motion, const Style& style,
                            std::uint64_t t_us) {
  validate_synth_config(cfg);
  if (t_us > cfg.duration_us) throw data_error("render_scene: t beyond duration");

  const double t_s = static_cast<double>(t_us) * 1e-6;
  const double tau = static_cast<double>(t_us) / static_cast<double>(cfg.duration_us);
  const auto [ox, oy] = ego_offset(cfg, style, t_s);
  const auto blobs = blob_centers(motion, style, tau, cfg.width, cfg.height);
  const double two_sigma_sq = 2.0 * style.blob_sigma * style.blob_sigma;

  TensorN img({cfg.height, cfg.width});
  for (std::size_t y = 0; y < cfg.height; ++y)
    for (std::size_t x = 0; x < cfg.width; ++x) {
      // The whole scene shares the ego offset: head motion moves background
      // and hands alike in the image plane.
      double v = background(static_cast<double>(x) + ox, static_cast<double>(y) + oy);
      for (const auto& [bx, by] : blobs) {
        const double dx = static_cast<double>(x) - (bx + ox);
        const double dy = static_cast<double>(y) - (by + oy);
        v += 0.9 * std::exp(-(dx * dx + dy * dy) / two_sigma_sq);
      }
      img.data[img.idx(y, x)] = v;
    }
  return img;
}

Style default_style(const SynthConfig& cfg, std::size_t class_id) {
  Rng rng = make_rng(cfg.seed, class_id, 0xDEFAull);
  Style s;
  s.ego_phase_x = uniform(rng, 0.0, 2.0 * kPi);
  s.ego_phase_y = uniform(rng, 0.0, 2.0 * kPi);
  return s;
}

TensorN render_scene(const SynthConfig& cfg, std::size_t class_id, std::uint64_t t_us) {
  if (class_id >= cfg.classes.size()) throw data_error("render_scene: class out of range");
  return render_scene_styled(cfg, cfg.classes[class_id], default_style(cfg, class_id), t_us);
}

EventStream emit_events_styled(const SynthConfig& cfg, Motion motion, const Style& style,
                               Rng& noise_rng) {
  validate_synth_config(cfg);

  EventStream out;
  out.geometry = {cfg.width, cfg.height};

  const std::size_t npx = static_cast<std::size_t>(cfg.width) * cfg.height;
  std::vector<double> ref(npx), prev(npx), curr(npx);

  auto log_frame = [&](std::uint64_t t, std::vector<double>& dst) {
    TensorN img = render_scene_styled(cfg, motion, style, t);
    for (std::size_t i = 0; i < npx; ++i) dst[i] = std::log(img.data[i] + 1e-3);
  };

  log_frame(0, prev);
  ref = prev;

  const std::uint64_t step = cfg.sim_step_us;
  for (std::uint64_t t0 = 0; t0 < cfg.duration_us;) {
    const std::uint64_t t1 = std::min(t0 + step, cfg.duration_us);
    log_frame(t1, curr);
    const double dt = static_cast<double>(t1 - t0);

    for (std::size_t i = 0; i < npx; ++i) {
      const double l0 = prev[i], l1 = curr[i];
      if (l0 == l1) continue;
      const double pol = l1 > l0 ? 1.0 : -1.0;
      double level = ref[i];
      for (;;) {
        const double next = level + pol * cfg.threshold;
        const bool crossed = pol > 0.0 ? (next > l0 && next <= l1) : (next < l0 && next >= l1);
        if (!crossed) break;
        const double frac = (next - l0) / (l1 - l0);
        Event e;
        e.t = t0 + static_cast<std::uint64_t>(std::llround(frac * dt));
        e.x = static_cast<std::uint16_t>(i % cfg.width);
        e.y = static_cast<std::uint16_t>(i / cfg.width);
        e.p = pol > 0.0 ? 1 : -1;
        out.events.push_back(e);
        level = next;
      }
      ref[i] = level;
    }
    prev.swap(curr);
    t0 = t1;
  }

  // Uniform background noise at the configured per-pixel rate.
  const double duration_s = static_cast<double>(cfg.duration_us) * 1e-6;
  const double lambda = cfg.noise_rate * static_cast<double>(npx) * duration_s;
  const std::size_t n_noise = poisson(noise_rng, lambda);
  for (std::size_t k = 0; k < n_noise; ++k) {
    Event e;
    e.t = uniform_below(noise_rng, cfg.duration_us);
    e.x = static_cast<std::uint16_t>(uniform_below(noise_rng, cfg.width));
    e.y = static_cast<std::uint16_t>(uniform_below(noise_rng, cfg.height));
    e.p = (noise_rng() & 1) ? 1 : -1;
    out.events.push_back(e);
  }

  std::stable_sort(out.events.begin(), out.events.end(),
                   [](const Event& a, const Event& b) { return a.t < b.t; });
  return out;
}

EventStream emit_events(const SynthConfig& cfg, std::size_t class_id) {
  if (class_id >= cfg.classes.size()) throw data_error("emit_events: class out of range");
  Rng noise_rng = make_rng(cfg.seed, class_id, 0xA01Eull);
  return emit_events_styled(cfg, cfg.classes[class_id], default_style(cfg, class_id),
                            noise_rng);
}

StyleRange train_style_range() { return {0.80, 1.10, 3.0, 4.2, 0.70, 1.00}; }
StyleRange test_style_range() { return {1.20, 1.50, 4.6, 5.8, 1.10, 1.40}; }

std::vector<SynthSample> gen_dataset(const SynthConfig& cfg, std::size_t per_class) {
  validate_synth_config(cfg);
  if (per_class < 3) throw data_error("gen_dataset: per_class must be at least 3 to split");

  const std::size_t test_n = std::max<std::size_t>(1, per_class / 6);
  const std::size_t val_n = std::max<std::size_t>(1, per_class / 6);
  const std::size_t train_n = per_class - val_n - test_n;
  if (train_n == 0) throw data_error("gen_dataset: per_class too small to split");

  const std::size_t total = cfg.classes.size() * per_class;
  std::vector<SynthSample> samples(total);

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(cfg.classes.size()); ++c)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(per_class); ++k) {
      const auto ci = static_cast<std::size_t>(c);
      const auto ki = static_cast<std::size_t>(k);
      SynthSample& s = samples[ci * per_class + ki];
      s.class_id = ci;
      s.hands = motion_hands(cfg.classes[ci]);
      s.subject = cfg.subjects > 0 ? ki % cfg.subjects : 0;
      s.split = ki < train_n ? "train" : (ki < train_n + val_n ? "val" : "test");

      const bool test_ranges = cfg.heterogeneous && s.split == "test";
      const StyleRange r = test_ranges ? test_style_range() : train_style_range();

      Rng rng = make_rng(cfg.seed, ci * 1000003ull + ki, 0x57A1Eull);
      // Subjects articulate at different speeds; spreads the per-group event
      // rates the way real recordings do.
      const double subj_mult =
          cfg.subjects > 1
              ? 0.6 + 1.2 * static_cast<double>(s.subject) /
                          static_cast<double>(cfg.subjects - 1)
              : 1.0;
      s.style.speed_scale = subj_mult * uniform(rng, r.speed_lo, r.speed_hi);
      s.style.blob_sigma = uniform(rng, r.sigma_lo, r.sigma_hi);
      s.style.ego_scale = uniform(rng, r.ego_lo, r.ego_hi);
      s.style.ego_period_x_s = uniform(rng, 0.3, 0.8);
      s.style.ego_period_y_s = uniform(rng, 0.3, 0.8);
      s.style.ego_phase_x = uniform(rng, 0.0, 2.0 * kPi);
      s.style.ego_phase_y = uniform(rng, 0.0, 2.0 * kPi);

      Rng noise_rng = make_rng(cfg.seed, ci * 1000003ull + ki, 0xA015Eull);
      s.stream = emit_events_styled(cfg, cfg.classes[ci], s.style, noise_rng);
    }
  return samples;
}

}  // namespace evg
