#pragma once

#include <filesystem>

#include "evg/manifest.hpp"
#include "evg/model.hpp"
#include "evg/synth.hpp"

namespace evg {

/// Loads every manifest entry, slices onto the model's fixed (T, Bn) grid
/// (200 ms bins) and groups by split. Geometry must match the config.
Dataset load_dataset(const Manifest& manifest, const std::filesystem::path& manifest_dir,
                     const ModelConfig& cfg, std::uint64_t bin_len_us = 200000);

/// Same conversion for in-memory synthetic samples.
Dataset dataset_from_samples(const std::vector<SynthSample>& samples,
                             std::size_t num_classes, const ModelConfig& cfg,
                             std::uint64_t bin_len_us = 200000);

/// Writes a synthetic corpus as EVG1 files plus manifest.json under out_dir.
Manifest write_corpus(const std::filesystem::path& out_dir, const SynthConfig& cfg,
                      const std::vector<SynthSample>& samples);

}  // namespace evg
