#include "evg/lnes.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include <json.hpp>

#include "evg/common.hpp"
#include "evg/event_io.hpp"

namespace evg {

TensorN build_lnes(std::span<const Event> frame_events, std::uint64_t frame_start,
                   std::uint64_t frame_len, Geometry geometry) {
  if (frame_len == 0) throw data_error("build_lnes: zero frame length");
  const std::size_t h = geometry.height, w = geometry.width;
  TensorN surface({2, h, w});
  const double inv_len = 1.0 / static_cast<double>(frame_len);
  for (const Event& e : frame_events) {
    if (e.t < frame_start || e.t - frame_start >= frame_len)
      throw data_error("build_lnes: event at t=" + std::to_string(e.t) +
                       " outside frame [" + std::to_string(frame_start) + "," +
                       std::to_string(frame_start + frame_len) + ")");
    const std::size_t c = e.p > 0 ? 0 : 1;
    double& cell = surface.data[surface.idx(c, e.y, e.x)];
    // Most recent event wins; max keeps the surface order-independent.
    const double v = static_cast<double>(e.t - frame_start + 1) * inv_len;
    if (v > cell) cell = v;
  }
  return surface;
}

TensorN stack_lnes(const EventStream& s, const FrameSlices& slices) {
  const WindowGrid& g = slices.grid;
  const std::size_t frames = g.frame_count();
  if (slices.offsets.size() != frames + 1)
    throw data_error("stack_lnes: slice count does not match grid");
  const std::size_t h = s.geometry.height, w = s.geometry.width;
  TensorN volume({g.bins, g.frames_per_bin, 2, h, w});
  const std::size_t plane = 2 * h * w;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(frames); ++f) {
    const auto fi = static_cast<std::size_t>(f);
    const std::uint64_t start = g.frame_start(fi);
    TensorN surf = build_lnes(slices.frame(s, fi), start, g.frame_end(fi) - start,
                              s.geometry);
    std::memcpy(volume.data.data() + fi * plane, surf.data.data(),
                plane * sizeof(double));
  }
  return volume;
}

TensorN stack_lnes_fixed(const EventStream& s, std::uint64_t bin_len_us,
                         std::size_t frames_per_bin, std::size_t bins) {
  if (s.events.empty()) throw data_error("stack_lnes_fixed: empty stream");
  WindowGrid g;
  g.t0 = s.events.front().t;
  g.bin_len = bin_len_us;
  g.frames_per_bin = frames_per_bin;
  g.bins = bins;

  const std::size_t frames = g.frame_count();
  FrameSlices slices;
  slices.grid = g;
  std::vector<std::size_t> counts(frames, 0);
  std::size_t kept = 0;
  for (const Event& e : s.events) {
    const std::size_t f = g.frame_of(e.t);
    if (f >= frames) break;  // sorted stream: everything after is out too
    ++counts[f];
    ++kept;
  }
  slices.offsets.assign(frames + 1, 0);
  for (std::size_t f = 0; f < frames; ++f)
    slices.offsets[f + 1] = slices.offsets[f] + counts[f];

  EventStream head;
  head.geometry = s.geometry;
  head.events.assign(s.events.begin(), s.events.begin() + static_cast<std::ptrdiff_t>(kept));
  return stack_lnes(head, slices);
}

namespace {

void put_f32le(std::vector<std::uint8_t>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

float get_f32le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<float>(bits);
}

}  // namespace

void write_lnes_volume(const std::filesystem::path& path, const TensorN& volume,
                       const WindowGrid& grid) {
  require_rank(volume, 5, "write_lnes_volume");
  nlohmann::json header = {
      {"shape", volume.shape},
      {"dtype", "f32le"},
      {"bin_len_us", grid.bin_len},
      {"frames_per_bin", grid.frames_per_bin},
      {"frame_len_us", grid.frame_len_us()},
      {"t0_us", grid.t0},
  };
  std::string head = header.dump();
  head.push_back('\n');

  std::vector<std::uint8_t> bytes(head.begin(), head.end());
  bytes.reserve(bytes.size() + volume.numel() * 4);
  for (double v : volume.data) put_f32le(bytes, static_cast<float>(v));
  write_file_bytes(path, bytes);
}

LnesVolume read_lnes_volume(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t('\n'));
  if (nl == bytes.end()) throw data_error(path.string() + ": missing volume header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin(), nl);
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path.string() + ": bad volume header: " + e.what());
  }
  if (header.value("dtype", "") != "f32le")
    throw data_error(path.string() + ": unsupported dtype");

  std::vector<std::size_t> shape = header.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 5) throw data_error(path.string() + ": volume must be rank 5");

  LnesVolume out;
  out.grid.bin_len = header.at("bin_len_us").get<std::uint64_t>();
  out.grid.frames_per_bin = header.at("frames_per_bin").get<std::size_t>();
  out.grid.bins = shape[0];
  out.grid.t0 = header.value("t0_us", std::uint64_t{0});

  const std::size_t n = checked_numel(shape);
  const std::size_t payload_off = static_cast<std::size_t>(nl - bytes.begin()) + 1;
  if (bytes.size() - payload_off != n * 4)
    throw data_error(path.string() + ": payload size does not match shape");

  out.volume = TensorN(shape);
  for (std::size_t i = 0; i < n; ++i)
    out.volume.data[i] = static_cast<double>(get_f32le(bytes.data() + payload_off + i * 4));
  return out;
}

}  // namespace evg
