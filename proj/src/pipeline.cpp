#include "evg/pipeline.hpp"

#include <filesystem>
#include <string>

#include "evg/event_io.hpp"
#include "evg/lnes.hpp"

namespace evg {

namespace {

void place_sample(Dataset& out, const std::string& split, Sample&& s) {
  if (split == "train")
    out.train.push_back(std::move(s));
  else if (split == "val")
    out.val.push_back(std::move(s));
  else if (split == "test")
    out.test.push_back(std::move(s));
  else
    throw data_error("unknown split '" + split + "'");
}

}  // namespace

Dataset load_dataset(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                     const ModelConfig& cfg, std::uint64_t bin_len_us) {
  if (manifest.geometry.width != cfg.width || manifest.geometry.height != cfg.height)
    throw data_error("manifest geometry " + std::to_string(manifest.geometry.width) + "x" +
                     std::to_string(manifest.geometry.height) +
                     " does not match model config " + std::to_string(cfg.width) + "x" +
                     std::to_string(cfg.height));

  const std::size_t n = manifest.entries.size();
  std::vector<Sample> samples(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const ManifestEntry& e = manifest.entries[idx];
    EventStream s = load_events(manifest_dir / e.path);
    samples[idx].volume = stack_lnes_fixed(s, bin_len_us, cfg.frames_per_bin, cfg.bins);
    samples[idx].label = e.class_id;
  }

  Dataset out;
  out.num_classes = manifest.class_names.size();
  for (std::size_t i = 0; i < n; ++i)
    place_sample(out, manifest.entries[i].split, std::move(samples[i]));
  return out;
}

Dataset dataset_from_samples(const std::vector<SynthSample>& samples,
                             std::size_t num_classes, const ModelConfig& cfg,
                             std::uint64_t bin_len_us) {
  const std::size_t n = samples.size();
  std::vector<Sample> converted(n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    converted[idx].volume =
        stack_lnes_fixed(samples[idx].stream, bin_len_us, cfg.frames_per_bin, cfg.bins);
    converted[idx].label = samples[idx].class_id;
  }

  Dataset out;
  out.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i)
    place_sample(out, samples[i].split, std::move(converted[i]));
  return out;
}

Manifest write_corpus(const std::filesystem::path& out_dir, const SynthConfig& cfg,
                      const std::vector<SynthSample>& samples) {
  std::filesystem::create_directories(out_dir);

  Manifest m;
  m.geometry = {cfg.width, cfg.height};
  for (Motion mo : cfg.classes) m.class_names.emplace_back(motion_name(mo));

  std::vector<std::size_t> counter(cfg.classes.size(), 0);
  for (const SynthSample& s : samples) {
    const std::string cls = motion_name(cfg.classes[s.class_id]);
    const std::string rel =
        cls + "/" + s.split + "_" + std::to_string(counter[s.class_id]++) + ".evg";
    std::filesystem::create_directories(out_dir / cls);
    save_events(out_dir / rel, s.stream);

    ManifestEntry e;
    e.path = rel;
    e.class_id = s.class_id;
    e.class_name = cls;
    e.split = s.split;
    e.subject = s.subject;
    e.hands = s.hands;
    e.style = s.style;
    m.entries.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace evg
