#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>
#include <sstream>

#include "evg/common.hpp"
#include "evg/event_io.hpp"

using namespace evg;

namespace {

EventStream parse(const std::string& text, Geometry g = {16, 16}) {
  std::istringstream in(text);
  return read_csv(in, g);
}

EventStream random_stream(Rng& rng, std::size_t count, Geometry g = {64, 48}) {
  EventStream s;
  s.geometry = g;
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < count; ++i) {
    t += uniform_below(rng, 500);  // ties allowed
    Event e;
    e.t = t;
    e.x = static_cast<std::uint16_t>(uniform_below(rng, g.width));
    e.y = static_cast<std::uint16_t>(uniform_below(rng, g.height));
    e.p = (rng() & 1) ? 1 : -1;
    s.events.push_back(e);
  }
  return s;
}

}  // namespace

TEST_CASE("csv parses events and maps polarity 0 to -1") {
  EventStream s = parse("t_us,x,y,p\n1000,5,7,1\n1000,5,7,0\n");
  REQUIRE(s.events.size() == 2);
  CHECK(s.events[0] == Event{1000, 5, 7, 1});
  CHECK(s.events[1] == Event{1000, 5, 7, -1});
}

TEST_CASE("csv rejects non-monotonic timestamps with the line number") {
  CHECK_THROWS_WITH_AS(parse("t_us,x,y,p\n2000,1,1,1\n1000,1,1,1\n"),
                       "non-monotonic at line 3", data_error);
}

TEST_CASE("csv error paths") {
  CHECK_THROWS_AS(parse("bad header\n"), data_error);
  CHECK_THROWS_AS(parse("t_us,x,y,p\n1,2\n"), data_error);            // malformed
  CHECK_THROWS_AS(parse("t_us,x,y,p\nx,2,3,1\n"), data_error);        // non-numeric
  CHECK_THROWS_AS(parse("t_us,x,y,p\n1,99,3,1\n"), data_error);       // x out of range
  CHECK_THROWS_AS(parse("t_us,x,y,p\n1,2,99,1\n"), data_error);       // y out of range
  CHECK_THROWS_AS(parse("t_us,x,y,p\n1,2,3,2\n"), data_error);        // bad polarity
  CHECK_THROWS_AS(parse("t_us,x,y,p\n1,2,3,1,9\n"), data_error);      // extra field
}

TEST_CASE("empty stream writes an 8-byte binary file") {
  EventStream s;
  s.geometry = {64, 64};
  const std::vector<std::uint8_t> bytes = write_binary(s);
  REQUIRE(bytes.size() == 8);
  CHECK(bytes[0] == 'E');
  CHECK(bytes[3] == '1');
  CHECK(read_binary(bytes) == s);
}

TEST_CASE("binary round trip is the identity on random streams") {
  Rng rng = make_rng(7);
  for (int it = 0; it < 20; ++it) {
    EventStream s = random_stream(rng, uniform_below(rng, 200));
    CHECK(read_binary(write_binary(s)) == s);
  }
}

TEST_CASE("binary rejects bad magic and truncated records") {
  EventStream s;
  s.geometry = {8, 8};
  s.events.push_back({10, 1, 2, 1});
  std::vector<std::uint8_t> bytes = write_binary(s);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(read_binary(bad), "read_binary: bad magic (expected EVG1)",
                       data_error);

  auto truncated = bytes;
  truncated.push_back(0);  // 17 trailing bytes after the 8-byte header
  CHECK_THROWS_WITH_AS(read_binary(truncated), "read_binary: truncated record", data_error);
}

TEST_CASE("csv -> binary -> csv preserves every field") {
  Rng rng = make_rng(13);
  EventStream s = random_stream(rng, 100);
  std::ostringstream first;
  write_csv(first, s);

  std::istringstream in(first.str());
  EventStream parsed = read_csv(in, s.geometry);
  EventStream back = read_binary(write_binary(parsed));

  std::ostringstream second;
  write_csv(second, back);
  CHECK(first.str() == second.str());
}

TEST_CASE("slice_windows: 400 ms span gives T=2 with 12 frames") {
  EventStream s;
  s.geometry = {16, 16};
  s.events.push_back({0, 1, 1, 1});
  s.events.push_back({250000, 2, 2, -1});
  s.events.push_back({399999, 3, 3, 1});

  FrameSlices slices = slice_windows(s, GridParams{200000, 6});
  CHECK(slices.grid.bins == 2);
  CHECK(slices.grid.frame_count() == 12);
  CHECK(slices.offsets.size() == 13);
  CHECK(slices.frame(s, 0).size() == 1);
  // 250 000 - 200 000 = 50 000 into bin 1 -> frame floor(50000*6/200000) = 1.
  CHECK(slices.frame(s, 7).size() == 1);
  CHECK(slices.frame(s, 11).size() == 1);
}

TEST_CASE("slice_windows boundary cases") {
  EventStream s;
  s.geometry = {16, 16};
  s.events.push_back({5000, 1, 1, 1});

  SUBCASE("single event lands in frame 0, everything else empty") {
    FrameSlices slices = slice_windows(s, GridParams{200000, 6});
    CHECK(slices.grid.bins == 1);
    CHECK(slices.frame(s, 0).size() == 1);
    for (std::size_t f = 1; f < 6; ++f) CHECK(slices.frame(s, f).empty());
  }

  SUBCASE("event exactly at t0 + bin_len goes to bin 1, frame 0") {
    s.events.push_back({5000 + 200000, 2, 2, 1});
    FrameSlices slices = slice_windows(s, GridParams{200000, 6});
    CHECK(slices.grid.bins == 2);
    CHECK(slices.frame(s, 6).size() == 1);
  }

  SUBCASE("empty stream is an error") {
    EventStream empty;
    empty.geometry = {16, 16};
    CHECK_THROWS_AS(slice_windows(empty, GridParams{}), data_error);
  }
}

TEST_CASE("grid params from frame length require divisibility") {
  GridParams p = GridParams::from_frame_len(200000, 50000);
  CHECK(p.frames_per_bin == 4);
  CHECK_THROWS_AS(GridParams::from_frame_len(200000, 33000), data_error);
}

TEST_CASE("rational frame boundaries partition each bin exactly") {
  WindowGrid g;
  g.t0 = 0;
  g.bin_len = 200000;
  g.bins = 2;
  g.frames_per_bin = 6;
  std::uint64_t covered = 0;
  for (std::size_t f = 0; f < g.frame_count(); ++f) {
    CHECK(g.frame_start(f) == covered);
    const std::uint64_t len = g.frame_end(f) - g.frame_start(f);
    CHECK(len >= 33333);
    CHECK(len <= 33334);
    covered += len;
  }
  CHECK(covered == 400000);
}

TEST_CASE("every event appears in exactly one slice and assignment is monotone") {
  Rng rng = make_rng(99);
  for (int it = 0; it < 10; ++it) {
    EventStream s = random_stream(rng, 300);
    FrameSlices slices = slice_windows(s, GridParams{1000, 3});

    std::size_t total = 0;
    std::multiset<std::uint64_t> seen, expected;
    for (std::size_t f = 0; f < slices.grid.frame_count(); ++f) {
      auto span = slices.frame(s, f);
      total += span.size();
      for (const Event& e : span) {
        seen.insert(e.t);
        CHECK(slices.grid.frame_of(e.t) == f);
        CHECK(e.t >= slices.grid.frame_start(f));
        CHECK(e.t < slices.grid.frame_end(f));
      }
    }
    for (const Event& e : s.events) expected.insert(e.t);
    CHECK(total == s.events.size());
    CHECK(seen == expected);

    for (std::size_t i = 1; i < s.events.size(); ++i)
      CHECK(slices.grid.frame_of(s.events[i - 1].t) <= slices.grid.frame_of(s.events[i].t));
  }
}
