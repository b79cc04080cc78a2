#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace evg {

struct Geometry {
  std::uint16_t width = 0;
  std::uint16_t height = 0;

  bool operator==(const Geometry&) const = default;
};

/// One asynchronous polarity change. p is exactly +1 or -1.
struct Event {
  std::uint64_t t = 0;  // microseconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  std::int8_t p = 1;

  bool operator==(const Event&) const = default;
};

/// Events sorted by t (non-decreasing; ties keep insertion order).
struct EventStream {
  Geometry geometry;
  std::vector<Event> events;

  bool operator==(const EventStream&) const = default;
};

/// Throws data_error on out-of-bounds coordinates, bad polarity or
/// non-monotonic timestamps.
void validate_stream(const EventStream& s);

/// Requested slicing: a coarse bin split into Bn fine frames. When bin_len
/// does not divide evenly (the 200 ms / 6 default), frame boundaries are
/// placed at ceil(b*bin_len/Bn) so the bin is still partitioned exactly;
/// individual frame lengths then differ by at most 1 us.
struct GridParams {
  std::uint64_t bin_len_us = 200000;
  std::size_t frames_per_bin = 6;

  /// Spec'd alternative construction: requires bin_len % frame_len == 0.
  static GridParams from_frame_len(std::uint64_t bin_len_us, std::uint64_t frame_len_us);
};

struct WindowGrid {
  std::uint64_t t0 = 0;
  std::uint64_t bin_len = 200000;
  std::size_t bins = 1;            // T
  std::size_t frames_per_bin = 6;  // Bn

  std::size_t frame_count() const { return bins * frames_per_bin; }
  double frame_len_us() const {
    return static_cast<double>(bin_len) / static_cast<double>(frames_per_bin);
  }

  /// Global frame index of a timestamp; intervals are half-open, so an event
  /// at exactly t0 + bin_len lands in bin 1, frame 0.
  std::size_t frame_of(std::uint64_t t) const;

  /// [frame_start, frame_end) bounds in microseconds of a global frame index.
  std::uint64_t frame_start(std::size_t frame) const;
  std::uint64_t frame_end(std::size_t frame) const;
};

/// Contiguous per-frame ranges into the originating stream's event array
/// (frame assignment is monotone in t, so slices are intervals).
struct FrameSlices {
  WindowGrid grid;
  std::vector<std::size_t> offsets;  // frame_count()+1 entries

  std::span<const Event> frame(const EventStream& s, std::size_t f) const {
    return {s.events.data() + offsets[f], offsets[f + 1] - offsets[f]};
  }
};

/// Buckets a non-empty stream onto the (T, Bn) grid anchored at the first
/// event. T = floor((t_last - t_first)/bin_len) + 1; trailing frames of the
/// last bin may be empty.
FrameSlices slice_windows(const EventStream& s, const GridParams& params);

}  // namespace evg
