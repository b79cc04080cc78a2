#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "evg/event.hpp"
#include "evg/tensor.hpp"

namespace evg {

/// Most-recent-event surface for one frame: shape (2, H, W), channel 0 holds
/// positive polarity. Cell value is (t_latest - frame_start + 1) / frame_len,
/// so an event at the very start of the frame is still distinguishable from
/// "no event" (cell 0). All values lie in [0, 1].
TensorN build_lnes(std::span<const Event> frame_events, std::uint64_t frame_start,
                   std::uint64_t frame_len, Geometry geometry);

/// Stacks every frame of a sliced stream into a (T, Bn, 2, H, W) volume.
TensorN stack_lnes(const EventStream& s, const FrameSlices& slices);

/// Like slice_windows + stack_lnes but with the bin count forced to `bins`:
/// events past the grid are dropped, missing frames stay zero. Used wherever
/// a fixed tensor shape is required (training, batched evaluation).
TensorN stack_lnes_fixed(const EventStream& s, std::uint64_t bin_len_us,
                         std::size_t frames_per_bin, std::size_t bins);

/// Volume file: one JSON header line {shape, dtype:"f32le", bin_len_us,
/// frames_per_bin, frame_len_us, t0_us} terminated by '\n', then the raw
/// little-endian float32 planar payload.
void write_lnes_volume(const std::filesystem::path& path, const TensorN& volume,
                       const WindowGrid& grid);

struct LnesVolume {
  TensorN volume;  // (T, Bn, 2, H, W)
  WindowGrid grid;
};
LnesVolume read_lnes_volume(const std::filesystem::path& path);

}  // namespace evg
