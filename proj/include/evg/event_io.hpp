#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "evg/event.hpp"

namespace evg {

/// CSV: header line `t_us,x,y,p`, then one `t,x,y,p` line per event.
/// Polarity 0 is accepted and mapped to -1 (common exporter convention).
/// Line numbers in error messages count the header as line 1.
EventStream read_csv(std::istream& in, Geometry geometry);
void write_csv(std::ostream& out, const EventStream& s);

/// `EVG1` binary: 4-byte magic, u16 W, u16 H (little-endian), then 16-byte
/// records {u64 t_us, u16 x, u16 y, i8 p, 3 zero pad bytes}.
EventStream read_binary(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_binary(const EventStream& s);

/// File helpers; load_events sniffs the EVG1 magic and falls back to CSV
/// (geometry is required for the CSV case).
EventStream load_events(const std::filesystem::path& path, Geometry csv_geometry = {});
void save_events(const std::filesystem::path& path, const EventStream& s);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes);

}  // namespace evg
