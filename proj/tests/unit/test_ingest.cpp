#include <doctest.h>

#include <numeric>
#include <sstream>

#include "fixtures.hpp"
#include "hwscen/errors.hpp"

using namespace hwscen;

namespace {

const char* kHeader = "frame,id,x,y,width,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n";

std::string row(int frame, int id, double x = 0.0) {
  std::ostringstream os;
  os << frame << ',' << id << ',' << x << ",1.5,4.2,30,0,0.1,0,6\n";
  return os.str();
}

std::vector<Trajectory> parse(const std::string& text) {
  std::istringstream is(text);
  return parse_tracks(is, highd_layout(1, 3));
}

} // namespace

TEST_CASE("parse_tracks builds one trajectory per vehicle") {
  auto one = parse(std::string(kHeader) + row(1, 7) + row(2, 7) + row(3, 7));
  REQUIRE(one.size() == 1);
  CHECK(one[0].points.size() == 3);
  CHECK(one[0].vehicle_id == 7);
  CHECK(one[0].points[1].vx == 30.0);
  CHECK(one[0].dt == doctest::Approx(0.04));

  const auto two = parse(std::string(kHeader) + row(1, 1, 0) + row(1, 2, 50) + row(2, 2, 51) + row(2, 1, 1) +
                         row(3, 1, 2) + row(3, 2, 52));
  REQUIRE(two.size() == 2);
  for (const auto& t : two) {
    REQUIRE(t.points.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(t.points[i].frame == static_cast<std::int64_t>(i + 1));
  }
  CHECK(two[1].points[2].x == 52.0);
}

TEST_CASE("parse_tracks errors") {
  CHECK_THROWS_AS(parse(std::string(kHeader) + row(1, 7) + row(3, 7)), IntegrityError);
  try {
    parse(std::string(kHeader) + row(1, 7) + "2,7,abc,1,1,1,1,1,1,6\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("frame,id,x,y,xVelocity,yVelocity,xAcceleration,laneId\n1,1,0,0,0,0,0,6\n"), ParseError);
  CHECK_THROWS_AS(parse(std::string(kHeader) + "1,7,0\n"), ParseError);
}

TEST_CASE("normalize_direction") {
  const auto meta = highd_layout(1, 3);
  const auto fwd = fx::cruise(1, 10);
  const auto same = normalize_direction(fwd, meta);
  CHECK(same.points == fwd.points);
  CHECK_FALSE(same.mirrored);

  Trajectory back;
  back.vehicle_id = 2;
  back.points.push_back({0, 100.0, 5.0, -25.0, 0.3, -1.0, 0.2, 2});
  const auto n = normalize_direction(back, meta);
  CHECK(n.mirrored);
  CHECK(n.points[0].x == -100.0);
  CHECK(n.points[0].vx == 25.0);
  CHECK(n.points[0].ax == 1.0);
  CHECK(n.points[0].y == -5.0);
  CHECK(n.points[0].vy == -0.3);
  CHECK(n.points[0].ay == -0.2);

  back.points[0].lane = 42;
  CHECK_THROWS_AS(normalize_direction(back, meta), ConfigError);
}

TEST_CASE("normalised synthetic traffic drives forward") {
  std::mt19937_64 rng(5);
  std::vector<SyntheticScript> scripts;
  for (int i = 0; i < 50; ++i) scripts.push_back(random_maneuver_script(rng, i + 1, 1, 400, 0.05));
  const auto corpus = generate_synthetic(scripts, 0.04, 11);
  const auto meta = highd_layout(1, 3);
  for (std::size_t i = 0; i < corpus.trajectories.size(); ++i) {
    const auto& t = corpus.trajectories[i];
    const auto raw = i % 2 ? mirror_to_upper(t) : t;
    const auto n = normalize_direction(raw, meta);
    const double mean = std::accumulate(n.points.begin(), n.points.end(), 0.0,
                                        [](double s, const TrackPoint& p) { return s + p.vx; }) /
                        static_cast<double>(n.points.size());
    CHECK(mean >= 0.0);
    // Kinematics come back exactly; lane ids stay in the recording's numbering.
    bool same = true;
    for (std::size_t k = 0; k < t.points.size(); ++k) {
      const auto& a = n.points[k];
      const auto& b = t.points[k];
      same = same && a.frame == b.frame && a.x == b.x && a.y == b.y && a.vx == b.vx && a.vy == b.vy &&
             a.ax == b.ax && a.ay == b.ay;
    }
    CHECK(same);
  }
}

TEST_CASE("filter_three_lane") {
  std::vector<Recording> recs(3);
  for (int i = 0; i < 3; ++i) recs[i].meta = highd_layout(i + 1, i + 2);
  const auto kept = filter_three_lane(recs);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].meta.lanes_per_direction == 3);
  CHECK(filter_three_lane({}).empty());
  std::vector<Recording> all(2);
  all[0].meta = highd_layout(1, 3);
  all[1].meta = highd_layout(2, 3);
  CHECK(filter_three_lane(all).size() == 2);
}

TEST_CASE("recording meta round trip") {
  const auto meta = highd_layout(12, 3, 25.0);
  std::stringstream ss;
  write_recording_meta(ss, meta);
  const auto back = parse_recording_meta(ss);
  CHECK(back.recording_id == 12);
  CHECK(back.lanes_per_direction == 3);
  CHECK(back.lane_direction == meta.lane_direction);
}

TEST_CASE("tracks writer and parser agree") {
  std::mt19937_64 rng(2);
  std::vector<SyntheticScript> scripts{random_maneuver_script(rng, 1, 1, 200, 0.05),
                                       random_maneuver_script(rng, 2, 1, 200, 0.05)};
  const auto corpus = generate_synthetic(scripts, 0.04, 3);
  std::stringstream ss;
  write_tracks(ss, corpus.trajectories);
  const auto back = parse_tracks(ss, highd_layout(1, 3));
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(back[i].points == corpus.trajectories[i].points);
}

TEST_CASE("generate_synthetic") {
  SyntheticScript s;
  s.frames = 400;
  s.noise_sigma_accel = 0.0;

  SUBCASE("cruise only") {
    const auto c = generate_synthetic(std::vector{s}, 0.04, 1);
    CHECK(c.truth[0].empty());
  }
  SUBCASE("accelerate at 200") {
    s.maneuvers.push_back({200, 100, ManeuverKind::Accelerate, 0.5});
    const auto c = generate_synthetic(std::vector{s}, 0.04, 1);
    REQUIRE(c.truth[0].size() == 2);
    CHECK(c.truth[0][0].frame == 200);
    CHECK(c.truth[0][0].after == CompositeLabel{Longitudinal::Accelerate, Lateral::KeepLane});
  }
  SUBCASE("lane change integrates to one lane width") {
    s.maneuvers.push_back({100, 100, ManeuverKind::LaneChange, 0.0, 1});
    const auto c = generate_synthetic(std::vector{s}, 0.04, 1);
    const auto& pts = c.trajectories[0].points;
    double dy = 0.0;
    for (const auto& p : pts) dy += p.vy * 0.04;
    CHECK(dy == doctest::Approx(3.75).epsilon(0).scale(1).epsilon(1e-6));
    CHECK(std::abs(pts.back().y - pts.front().y - 3.75) < 1e-6);
    CHECK(pts.back().lane == pts.front().lane + 1);
  }
  SUBCASE("overlapping maneuvers") {
    s.maneuvers.push_back({100, 100, ManeuverKind::Accelerate, 0.5});
    s.maneuvers.push_back({150, 100, ManeuverKind::Decelerate, 0.5});
    CHECK_THROWS_AS(generate_synthetic(std::vector{s}, 0.04, 1), ScriptError);
  }
}

TEST_CASE("synthetic corpora are deterministic and kinematically consistent") {
  std::mt19937_64 a(77), b(77);
  std::vector<SyntheticScript> sa, sb;
  for (int i = 0; i < 10; ++i) {
    sa.push_back(random_maneuver_script(a, i + 1, 1, 500, 0.05));
    sb.push_back(random_maneuver_script(b, i + 1, 1, 500, 0.05));
  }
  const auto ca = generate_synthetic(sa, 0.04, 3);
  const auto cb = generate_synthetic(sb, 0.04, 3);
  for (std::size_t i = 0; i < ca.trajectories.size(); ++i) {
    CHECK(ca.trajectories[i].points == cb.trajectories[i].points);
    CHECK(ca.truth[i] == cb.truth[i]);
    const auto& p = ca.trajectories[i].points;
    bool ok = true;
    for (std::size_t k = 0; k + 1 < p.size(); ++k) {
      const double fd = (p[k + 1].x - p[k].x) / 0.04;
      ok = ok && std::abs(fd - p[k].vx) <= 0.5 * std::abs(p[k].ax) * 0.04 + 1e-9;
    }
    CHECK(ok);
  }
}

TEST_CASE("archetype scenes put the ego first and change lanes") {
  std::mt19937_64 rng(4);
  for (int a = 0; a < kArchetypeCount; ++a) {
    const auto scripts = archetype_scene(static_cast<Archetype>(a), rng, a + 1, 400, 0.05);
    REQUIRE(scripts.size() >= 2);
    CHECK(scripts[0].vehicle_id == 1);
    bool lane_change = false;
    for (const auto& m : scripts[0].maneuvers) lane_change = lane_change || m.kind == ManeuverKind::LaneChange;
    CHECK(lane_change);
  }
}
