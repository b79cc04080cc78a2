#include "evg/event_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "evg/common.hpp"

namespace evg {

namespace {

constexpr char kMagic[4] = {'E', 'V', 'G', '1'};
constexpr std::size_t kRecordSize = 16;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

// Strict unsigned/signed integer field parse; rejects garbage and empties.
template <typename T>
bool parse_int(std::string_view field, T& out) {
  if (field.empty()) return false;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

std::int8_t map_polarity(long p, const std::string& where) {
  if (p == 1) return 1;
  if (p == -1) return -1;
  if (p == 0) return -1;  // 0 maps to the negative polarity by convention
  throw data_error(where + ": polarity " + std::to_string(p) + " not in {1,-1,0}");
}

}  // namespace

EventStream read_csv(std::istream& in, Geometry geometry) {
  if (geometry.width == 0 || geometry.height == 0)
    throw data_error("read_csv: geometry must be positive");

  EventStream s;
  s.geometry = geometry;

  std::string line;
  if (!std::getline(in, line)) throw data_error("read_csv: empty input");
  if (trim_cr(line) != "t_us,x,y,p")
    throw data_error("line 1: expected header 't_us,x,y,p'");

  std::size_t line_no = 1;
  std::uint64_t prev_t = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = trim_cr(line);
    if (v.empty()) continue;  // tolerate blank trailing lines
    const std::string where = "line " + std::to_string(line_no);

    std::string_view fields[4];
    std::size_t n = 0;
    while (n < 4) {
      std::size_t comma = v.find(',');
      fields[n++] = v.substr(0, comma);
      if (comma == std::string_view::npos) break;
      v.remove_prefix(comma + 1);
    }
    if (n != 4 || fields[3].find(',') != std::string_view::npos)
      throw data_error(where + ": malformed event line (need 4 comma-separated fields)");

    std::uint64_t t;
    long x, y, p;
    if (!parse_int(fields[0], t) || !parse_int(fields[1], x) || !parse_int(fields[2], y) ||
        !parse_int(fields[3], p))
      throw data_error(where + ": malformed event line");

    if (x < 0 || x >= geometry.width)
      throw data_error(where + ": x=" + std::to_string(x) + " out of range [0," +
                       std::to_string(geometry.width) + ")");
    if (y < 0 || y >= geometry.height)
      throw data_error(where + ": y=" + std::to_string(y) + " out of range [0," +
                       std::to_string(geometry.height) + ")");

    Event e;
    e.t = t;
    e.x = static_cast<std::uint16_t>(x);
    e.y = static_cast<std::uint16_t>(y);
    e.p = map_polarity(p, where);

    if (!s.events.empty() && e.t < prev_t) throw data_error("non-monotonic at " + where);
    prev_t = e.t;
    s.events.push_back(e);
  }
  return s;
}

void write_csv(std::ostream& out, const EventStream& s) {
  out << "t_us,x,y,p\n";
  for (const Event& e : s.events)
    out << e.t << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
}

EventStream read_binary(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw data_error("read_binary: bad magic (expected EVG1)");

  EventStream s;
  s.geometry.width = get_u16(bytes.data() + 4);
  s.geometry.height = get_u16(bytes.data() + 6);
  if (s.geometry.width == 0 || s.geometry.height == 0)
    throw data_error("read_binary: zero geometry");

  const std::size_t payload = bytes.size() - 8;
  if (payload % kRecordSize != 0) throw data_error("read_binary: truncated record");

  const std::size_t count = payload / kRecordSize;
  s.events.reserve(count);
  std::uint64_t prev_t = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* r = bytes.data() + 8 + i * kRecordSize;
    const std::string where = "record " + std::to_string(i);
    Event e;
    e.t = get_u64(r);
    e.x = get_u16(r + 8);
    e.y = get_u16(r + 10);
    e.p = map_polarity(static_cast<std::int8_t>(r[12]), where);
    if (e.x >= s.geometry.width || e.y >= s.geometry.height)
      throw data_error(where + ": coordinate out of range");
    if (i > 0 && e.t < prev_t) throw data_error(where + ": non-monotonic timestamp");
    prev_t = e.t;
    s.events.push_back(e);
  }
  return s;
}

std::vector<std::uint8_t> write_binary(const EventStream& s) {
  validate_stream(s);
  std::vector<std::uint8_t> out;
  out.reserve(8 + s.events.size() * kRecordSize);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, s.geometry.width);
  put_u16(out, s.geometry.height);
  for (const Event& e : s.events) {
    put_u64(out, e.t);
    put_u16(out, e.x);
    put_u16(out, e.y);
    out.push_back(static_cast<std::uint8_t>(e.p));
    out.insert(out.end(), {0, 0, 0});
  }
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw data_error("short write to " + path.string());
}

EventStream load_events(const std::filesystem::path& path, Geometry csv_geometry) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0)
    return read_binary(bytes);
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  return read_csv(in, csv_geometry);
}

void save_events(const std::filesystem::path& path, const EventStream& s) {
  write_file_bytes(path, write_binary(s));
}

}  // namespace evg
