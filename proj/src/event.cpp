#include "evg/event.hpp"

#include <string>

#include "evg/common.hpp"

namespace evg {

void validate_stream(const EventStream& s) {
  std::uint64_t prev = 0;
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const Event& e = s.events[i];
    if (e.x >= s.geometry.width || e.y >= s.geometry.height)
      throw data_error("event " + std::to_string(i) + ": coordinate (" +
                       std::to_string(e.x) + "," + std::to_string(e.y) +
                       ") outside geometry " + std::to_string(s.geometry.width) + "x" +
                       std::to_string(s.geometry.height));
    if (e.p != 1 && e.p != -1)
      throw data_error("event " + std::to_string(i) + ": polarity must be +1 or -1");
    if (i > 0 && e.t < prev)
      throw data_error("event " + std::to_string(i) + ": non-monotonic timestamp");
    prev = e.t;
  }
}

GridParams GridParams::from_frame_len(std::uint64_t bin_len_us, std::uint64_t frame_len_us) {
  if (frame_len_us == 0 || bin_len_us == 0)
    throw data_error("grid: bin and frame lengths must be positive");
  if (bin_len_us % frame_len_us != 0)
    throw data_error("grid: bin_len " + std::to_string(bin_len_us) +
                     " not divisible by frame_len " + std::to_string(frame_len_us));
  return GridParams{bin_len_us, static_cast<std::size_t>(bin_len_us / frame_len_us)};
}

std::size_t WindowGrid::frame_of(std::uint64_t t) const {
  const std::uint64_t dt = t - t0;
  const std::uint64_t bin = dt / bin_len;
  const std::uint64_t rem = dt % bin_len;
  // Exact rational frame boundary: frame = floor(rem * Bn / bin_len).
  const auto fib = static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(rem) * frames_per_bin) / bin_len);
  return static_cast<std::size_t>(bin * frames_per_bin + fib);
}

static std::uint64_t ceil_div_u128(unsigned __int128 a, std::uint64_t b) {
  return static_cast<std::uint64_t>((a + b - 1) / b);
}

std::uint64_t WindowGrid::frame_start(std::size_t frame) const {
  const std::size_t bin = frame / frames_per_bin;
  const std::size_t b = frame % frames_per_bin;
  const unsigned __int128 num = static_cast<unsigned __int128>(b) * bin_len;
  return t0 + static_cast<std::uint64_t>(bin) * bin_len +
         ceil_div_u128(num, static_cast<std::uint64_t>(frames_per_bin));
}

std::uint64_t WindowGrid::frame_end(std::size_t frame) const {
  const std::size_t bin = frame / frames_per_bin;
  const std::size_t b = frame % frames_per_bin;
  if (b + 1 == frames_per_bin) return t0 + static_cast<std::uint64_t>(bin + 1) * bin_len;
  const unsigned __int128 num = static_cast<unsigned __int128>(b + 1) * bin_len;
  return t0 + static_cast<std::uint64_t>(bin) * bin_len +
         ceil_div_u128(num, static_cast<std::uint64_t>(frames_per_bin));
}

FrameSlices slice_windows(const EventStream& s, const GridParams& params) {
  if (s.events.empty()) throw data_error("slice_windows: empty stream");
  if (params.bin_len_us == 0 || params.frames_per_bin == 0)
    throw data_error("slice_windows: bin_len and frames_per_bin must be positive");
  if (params.bin_len_us < params.frames_per_bin)
    throw data_error("slice_windows: more frames than microseconds per bin");

  WindowGrid grid;
  grid.t0 = s.events.front().t;
  grid.bin_len = params.bin_len_us;
  grid.frames_per_bin = params.frames_per_bin;
  grid.bins =
      static_cast<std::size_t>((s.events.back().t - grid.t0) / grid.bin_len) + 1;

  const std::size_t frames = grid.frame_count();
  std::vector<std::size_t> counts(frames, 0);
  for (const Event& e : s.events) ++counts[grid.frame_of(e.t)];

  FrameSlices out;
  out.grid = grid;
  out.offsets.assign(frames + 1, 0);
  for (std::size_t f = 0; f < frames; ++f) out.offsets[f + 1] = out.offsets[f] + counts[f];
  return out;
}

}  // namespace evg
