#include "hwscen/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "hwscen/dataset_io.hpp"
#include "hwscen/errors.hpp"

namespace hwscen {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

bool to_double(const std::string& s, double& v) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(v);
}

bool to_int(const std::string& s, std::int64_t& v) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && ptr == s.data() + s.size()) return true;
  // highD occasionally stores integers as "12.0".
  double d = 0.0;
  if (to_double(s, d) && d == std::floor(d)) {
    v = static_cast<std::int64_t>(d);
    return true;
  }
  return false;
}

int count_markings(const std::string& s) {
  if (s.empty()) return 0;
  return static_cast<int>(std::count(s.begin(), s.end(), ';')) + 1;
}

} // namespace

RecordingMeta highd_layout(int recording_id, int lanes, double frame_rate) {
  RecordingMeta meta;
  meta.recording_id = recording_id;
  meta.frame_rate = frame_rate;
  meta.lanes_per_direction = lanes;
  for (int i = 0; i < lanes; ++i) {
    meta.lane_direction[2 + i] = Direction::NegativeX;
    meta.lane_direction[lanes + 3 + i] = Direction::PositiveX;
  }
  return meta;
}

RecordingMeta parse_recording_meta(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("recording meta: empty file");
  auto header = split_csv(line);
  auto col = [&](const char* name) -> int {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ParseError(std::string("recording meta: missing column ") + name);
    return static_cast<int>(it - header.begin());
  };
  const int c_id = col("id"), c_rate = col("frameRate");
  const int c_up = col("upperLaneMarkings"), c_low = col("lowerLaneMarkings");
  if (!std::getline(is, line)) throw ParseError("recording meta: line 2: missing data row");
  auto row = split_csv(line);
  if (row.size() != header.size()) throw ParseError("recording meta: line 2: column count mismatch");
  std::int64_t id = 0;
  double rate = 0.0;
  if (!to_int(row[c_id], id) || !to_double(row[c_rate], rate) || rate <= 0.0)
    throw ParseError("recording meta: line 2: bad id or frameRate");
  const int upper = count_markings(row[c_up]) - 1;
  const int lower = count_markings(row[c_low]) - 1;
  if (upper < 1 || lower < 1) throw ParseError("recording meta: line 2: need >= 2 lane markings");

  RecordingMeta meta;
  meta.recording_id = static_cast<int>(id);
  meta.frame_rate = rate;
  meta.lanes_per_direction = std::max(upper, lower);
  for (int i = 0; i < upper; ++i) meta.lane_direction[2 + i] = Direction::NegativeX;
  for (int i = 0; i < lower; ++i) meta.lane_direction[upper + 3 + i] = Direction::PositiveX;
  return meta;
}

void write_recording_meta(std::ostream& os, const RecordingMeta& meta) {
  auto markings = [&](double start) {
    std::string s;
    for (int i = 0; i <= meta.lanes_per_direction; ++i) {
      if (i > 0) s += ';';
      s += format_real(start + i * kLaneWidth);
    }
    return s;
  };
  os << "id,frameRate,locationId,upperLaneMarkings,lowerLaneMarkings\n";
  os << meta.recording_id << ',' << format_real(meta.frame_rate) << ",0,"
     << markings(-meta.lanes_per_direction * kLaneWidth - 1.0) << ',' << markings(0.0) << '\n';
}

std::vector<Trajectory> parse_tracks(std::istream& is, const RecordingMeta& meta) {
  if (!(meta.frame_rate > 0.0)) throw ConfigError("frame rate must be positive");
  std::string line;
  if (!std::getline(is, line)) throw ParseError("tracks: line 1: empty file");
  const auto header = split_csv(line);
  static const char* kRequired[] = {"frame",         "id",            "x",     "y", "xVelocity",
                                    "yVelocity",     "xAcceleration", "yAcceleration",
                                    "laneId"};
  int col[9];
  for (int i = 0; i < 9; ++i) {
    auto it = std::find(header.begin(), header.end(), kRequired[i]);
    if (it == header.end())
      throw ParseError(std::string("tracks: line 1: missing mandatory column ") + kRequired[i]);
    col[i] = static_cast<int>(it - header.begin());
  }

  std::map<std::int64_t, std::vector<TrackPoint>> by_vehicle;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto row = split_csv(line);
    const std::string where = "tracks: line " + std::to_string(line_no);
    if (row.size() != header.size()) throw ParseError(where + ": column count mismatch");
    std::int64_t frame = 0, id = 0, lane = 0;
    TrackPoint p;
    if (!to_int(row[col[0]], frame) || !to_int(row[col[1]], id) || !to_int(row[col[8]], lane) ||
        !to_double(row[col[2]], p.x) || !to_double(row[col[3]], p.y) ||
        !to_double(row[col[4]], p.vx) || !to_double(row[col[5]], p.vy) ||
        !to_double(row[col[6]], p.ax) || !to_double(row[col[7]], p.ay))
      throw ParseError(where + ": malformed value");
    if (frame < 0) throw ParseError(where + ": negative frame");
    p.frame = frame;
    p.lane = static_cast<int>(lane);
    by_vehicle[id].push_back(p);
  }

  std::vector<Trajectory> out;
  out.reserve(by_vehicle.size());
  for (auto& [id, points] : by_vehicle) {
    std::sort(points.begin(), points.end(),
              [](const TrackPoint& a, const TrackPoint& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < points.size(); ++i)
      if (points[i].frame != points[i - 1].frame + 1)
        throw IntegrityError("vehicle " + std::to_string(id) + ": frame sequence broken between " +
                             std::to_string(points[i - 1].frame) + " and " +
                             std::to_string(points[i].frame));
    Trajectory t;
    t.vehicle_id = id;
    t.recording_id = meta.recording_id;
    t.dt = 1.0 / meta.frame_rate;
    t.points = std::move(points);
    out.push_back(std::move(t));
  }
  return out;
}

void write_tracks(std::ostream& os, std::span<const Trajectory> trajectories) {
  os << "frame,id,x,y,width,height,xVelocity,yVelocity,xAcceleration,yAcceleration,laneId\n";
  std::string line;
  for (const auto& t : trajectories) {
    for (const auto& p : t.points) {
      line.clear();
      line += std::to_string(p.frame) + ',' + std::to_string(t.vehicle_id) + ',';
      for (double v : {p.x, p.y}) line += format_real(v) + ',';
      line += "4.5,1.8,";
      for (double v : {p.vx, p.vy, p.ax, p.ay}) line += format_real(v) + ',';
      line += std::to_string(p.lane) + '\n';
      os << line;
    }
  }
}

Trajectory normalize_direction(const Trajectory& traj, const RecordingMeta& meta) {
  if (traj.points.empty()) return traj;
  auto direction_of = [&](int lane) {
    auto it = meta.lane_direction.find(lane);
    if (it == meta.lane_direction.end())
      throw ConfigError("vehicle " + std::to_string(traj.vehicle_id) + ": unknown lane id " +
                        std::to_string(lane));
    return it->second;
  };
  const Direction dir = direction_of(traj.points.front().lane);
  for (const auto& p : traj.points)
    if (direction_of(p.lane) != dir)
      throw ConfigError("vehicle " + std::to_string(traj.vehicle_id) +
                        " crosses carriageways");
  if (dir == Direction::PositiveX) return traj;

  Trajectory out = traj;
  out.mirrored = !traj.mirrored;
  for (auto& p : out.points) {
    p.x = -p.x;
    p.vx = -p.vx;
    p.ax = -p.ax;
    p.y = -p.y;
    p.vy = -p.vy;
    p.ay = -p.ay;
  }
  return out;
}

std::vector<Recording> filter_three_lane(std::vector<Recording> recordings) {
  std::erase_if(recordings, [](const Recording& r) { return r.meta.lanes_per_direction != 3; });
  return recordings;
}

// ---------------------------------------------------------------------------

CompositeLabel scripted_label(const Maneuver& m) {
  switch (m.kind) {
  case ManeuverKind::Cruise: return {Longitudinal::Zero, Lateral::KeepLane};
  case ManeuverKind::Accelerate: return {Longitudinal::Accelerate, Lateral::KeepLane};
  case ManeuverKind::Decelerate: return {Longitudinal::Decelerate, Lateral::KeepLane};
  case ManeuverKind::ExtremeBrake: return {Longitudinal::ExtremeDecelerate, Lateral::KeepLane};
  case ManeuverKind::LaneChange: {
    Longitudinal lon = m.accel > 0.0   ? Longitudinal::Accelerate
                       : m.accel < 0.0 ? Longitudinal::Decelerate
                                       : Longitudinal::Zero;
    return {lon, Lateral::LaneChange};
  }
  }
  return {};
}

namespace {

void check_script(const SyntheticScript& s, std::size_t index) {
  const std::string who = "script " + std::to_string(index);
  if (s.frames < 1) throw ScriptError(who + ": needs at least one frame");
  if (s.noise_sigma_accel < 0.0) throw ScriptError(who + ": negative noise sigma");
  int end = 0;
  for (const auto& m : s.maneuvers) {
    if (m.duration < 1) throw ScriptError(who + ": maneuver duration must be >= 1");
    if (m.start < end)
      throw ScriptError(who + ": maneuvers overlap or are out of order at frame " +
                        std::to_string(m.start));
    if (m.start + m.duration > s.frames)
      throw ScriptError(who + ": maneuver runs past the end of the trajectory");
    if (m.kind == ManeuverKind::LaneChange && m.duration < 2)
      throw ScriptError(who + ": lane change needs at least two frames");
    end = m.start + m.duration;
  }
}

} // namespace

SyntheticCorpus generate_synthetic(std::span<const SyntheticScript> scripts, double dt,
                                   std::uint64_t seed) {
  if (!(dt > 0.0)) throw ScriptError("dt must be positive");
  SyntheticCorpus corpus;
  corpus.trajectories.reserve(scripts.size());
  corpus.truth.reserve(scripts.size());

  for (std::size_t si = 0; si < scripts.size(); ++si) {
    const auto& s = scripts[si];
    check_script(s, si);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(si)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);

    const auto n = static_cast<std::size_t>(s.frames);
    std::vector<double> ax_cmd(n, 0.0), vy(n, 0.0), ay_cmd(n, 0.0);
    std::vector<CompositeLabel> labels(n, CompositeLabel{});
    for (const auto& m : s.maneuvers) {
      const CompositeLabel label = scripted_label(m);
      double a = 0.0;
      switch (m.kind) {
      case ManeuverKind::Cruise: a = 0.0; break;
      case ManeuverKind::Accelerate: a = std::abs(m.accel); break;
      case ManeuverKind::Decelerate:
      case ManeuverKind::ExtremeBrake: a = -std::abs(m.accel); break;
      case ManeuverKind::LaneChange: a = m.accel; break;
      }
      const double period = m.duration * dt;
      const double amp = m.direction * kLaneWidth / period;
      for (int k = 0; k < m.duration; ++k) {
        const auto i = static_cast<std::size_t>(m.start + k);
        labels[i] = label;
        ax_cmd[i] = a;
        if (m.kind == ManeuverKind::LaneChange) {
          // Raised-cosine pulse: the discrete sum over one period is exactly one lane.
          const double phase = 2.0 * std::numbers::pi * k / m.duration;
          vy[i] = amp * (1.0 - std::cos(phase));
          ay_cmd[i] = amp * (2.0 * std::numbers::pi / period) * std::sin(phase);
        }
      }
    }

    Trajectory traj;
    traj.vehicle_id = s.vehicle_id;
    traj.recording_id = s.recording_id;
    traj.dt = dt;
    traj.points.resize(n);
    double x = s.x0, y = s.y0, vx = s.vx0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& p = traj.points[i];
      p.frame = s.first_frame + static_cast<std::int64_t>(i);
      p.x = x;
      p.y = y;
      p.vx = vx;
      p.vy = vy[i];
      p.ax = ax_cmd[i] + (s.noise_sigma_accel > 0.0 ? s.noise_sigma_accel * noise(rng) : 0.0);
      p.ay = ay_cmd[i] + (s.noise_sigma_accel > 0.0 ? s.noise_sigma_accel * noise(rng) : 0.0);
      p.lane = s.lane0 + static_cast<int>(std::lround((y - s.y0) / kLaneWidth));
      const double vx_next = vx + p.ax * dt;
      x += 0.5 * (vx + vx_next) * dt;
      vx = vx_next;
      y += vy[i] * dt;
    }

    std::vector<ChangePoint> truth;
    for (std::size_t i = 1; i < n; ++i)
      if (labels[i] != labels[i - 1])
        truth.push_back({traj.points[i].frame, labels[i - 1], labels[i]});

    corpus.trajectories.push_back(std::move(traj));
    corpus.truth.push_back(std::move(truth));
  }
  return corpus;
}

SyntheticScript random_maneuver_script(std::mt19937_64& rng, std::int64_t vehicle_id,
                                       int recording_id, int frames, double noise_sigma) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  SyntheticScript s;
  s.vehicle_id = vehicle_id;
  s.recording_id = recording_id;
  s.frames = frames;
  s.noise_sigma_accel = noise_sigma;
  s.vx0 = uniform(24.0, 34.0);
  s.lane0 = 6 + uniform_int(0, 2);
  s.y0 = (s.lane0 - 6) * kLaneWidth + 0.5 * kLaneWidth;
  s.x0 = uniform(0.0, 50.0);

  double speed = s.vx0;
  int lane = s.lane0 - 6;
  int t = uniform_int(80, 160);
  while (true) {
    Maneuver m;
    m.start = t;
    const int pick = uniform_int(0, 9);
    if (pick < 3) {
      m.kind = speed < 34.0 ? ManeuverKind::Accelerate : ManeuverKind::Decelerate;
      m.accel = uniform(0.6, 1.2);
      m.duration = uniform_int(75, 150);
    } else if (pick < 6) {
      m.kind = speed > 22.0 ? ManeuverKind::Decelerate : ManeuverKind::Accelerate;
      m.accel = uniform(0.6, 1.5);
      m.duration = uniform_int(75, 150);
    } else if (pick < 9) {
      m.kind = ManeuverKind::LaneChange;
      m.direction = lane == 0 ? 1 : lane == 2 ? -1 : (uniform_int(0, 1) ? 1 : -1);
      const int flavour = uniform_int(0, 2);
      m.accel = flavour == 0 ? 0.0 : (flavour == 1 ? 1.0 : -1.0) * uniform(0.6, 1.0);
      m.duration = uniform_int(100, 150);
    } else {
      m.kind = ManeuverKind::ExtremeBrake;
      m.accel = uniform(3.0, 4.5);
      m.duration = uniform_int(25, 50);
    }
    if (m.start + m.duration + 80 > frames) break;
    const double signed_a = m.kind == ManeuverKind::Accelerate ? m.accel
                            : m.kind == ManeuverKind::LaneChange ? m.accel
                                                                 : -m.accel;
    speed += signed_a * m.duration * 0.04;
    if (m.kind == ManeuverKind::LaneChange) lane += m.direction;
    s.maneuvers.push_back(m);
    t = m.start + m.duration + uniform_int(100, 200);
  }
  return s;
}

namespace {
constexpr double kTypicalStyleShare = 0.5;
}

std::vector<SyntheticScript> archetype_scene(Archetype archetype, std::mt19937_64& rng,
                                             int recording_id, int frames, double noise_sigma) {
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto lane_y = [](int lane_index) { return (lane_index + 0.5) * kLaneWidth; };

  std::vector<SyntheticScript> scene;
  SyntheticScript ego;
  ego.vehicle_id = 1;
  ego.recording_id = recording_id;
  ego.frames = frames;
  ego.noise_sigma_accel = noise_sigma;
  ego.x0 = 200.0;
  ego.vx0 = uniform(26.0, 32.0);

  int ego_lane = 0;
  int dir = 1;
  Maneuver lc;
  lc.kind = ManeuverKind::LaneChange;
  lc.start = uniform_int(120, 160);
  lc.duration = uniform_int(100, 130);
  // Longitudinal style during the change: -1 brake, 0 hold, +1 accelerate.
  // The archetype's typical style is drawn half of the time.
  int typical = 0;
  switch (archetype) {
  case Archetype::Overtake:
    ego_lane = uniform_int(0, 1);
    dir = 1;
    typical = 1;
    break;
  case Archetype::Yield:
    ego_lane = uniform_int(0, 1);
    dir = 1;
    typical = -1;
    break;
  case Archetype::FreeChange:
    ego_lane = uniform_int(1, 2);
    dir = -1;
    typical = 0;
    break;
  }
  int style = typical;
  if (uniform(0.0, 1.0) >= kTypicalStyleShare) {
    const int other = uniform_int(0, 1);
    style = typical == -1 ? (other ? 1 : 0) : typical == 0 ? (other ? 1 : -1) : (other ? 0 : -1);
  }
  lc.accel = style * uniform(0.5, 0.8);
  lc.direction = dir;
  ego.lane0 = 6 + ego_lane;
  ego.y0 = lane_y(ego_lane);
  ego.maneuvers.push_back(lc);
  scene.push_back(ego);

  const double t_lc = lc.start * 0.04;
  std::int64_t next_id = 2;
  auto add = [&](int lane_index, double gap_at_lc, double vx) {
    SyntheticScript s;
    s.vehicle_id = next_id++;
    s.recording_id = recording_id;
    s.frames = frames;
    s.noise_sigma_accel = noise_sigma;
    s.lane0 = 6 + lane_index;
    s.y0 = lane_y(lane_index);
    s.vx0 = vx;
    // Place the vehicle so that its gap to the ego equals gap_at_lc at the lane-change onset.
    s.x0 = ego.x0 + ego.vx0 * t_lc + gap_at_lc - vx * t_lc;
    scene.push_back(s);
  };

  const int target = ego_lane + dir;
  switch (archetype) {
  case Archetype::Overtake:
    // Slow leader in the ego lane, open target lane.
    add(ego_lane, uniform(25.0, 40.0), ego.vx0 - uniform(4.0, 7.0));
    if (uniform_int(0, 1)) add(target, -uniform(50.0, 80.0), ego.vx0 - uniform(0.0, 2.0));
    break;
  case Archetype::Yield:
    // Slower vehicle in the target lane just ahead; the ego merges behind it.
    add(target, uniform(5.0, 15.0), ego.vx0 - uniform(4.0, 6.0));
    add(ego_lane, uniform(45.0, 70.0), ego.vx0 + uniform(-1.0, 1.0));
    break;
  case Archetype::FreeChange:
    add(target, uniform(40.0, 70.0), ego.vx0 + uniform(-1.0, 1.0));
    if (uniform_int(0, 1)) add(target, -uniform(40.0, 70.0), ego.vx0 + uniform(-1.0, 1.0));
    break;
  }
  const int extra = uniform_int(1, 5);
  for (int i = 0; i < extra; ++i) {
    const int lane = uniform_int(0, 2);
    const double gap = (uniform_int(0, 1) ? 1.0 : -1.0) * uniform(30.0, 110.0);
    add(lane, gap, ego.vx0 + uniform(-3.0, 3.0));
  }
  return scene;
}

Trajectory mirror_to_upper(const Trajectory& traj, int lanes) {
  Trajectory out = traj;
  for (auto& p : out.points) {
    p.x = -p.x;
    p.vx = -p.vx;
    p.ax = -p.ax;
    p.y = -p.y;
    p.vy = -p.vy;
    p.ay = -p.ay;
    p.lane = 2 * lanes + 4 - p.lane;
  }
  return out;
}

} // namespace hwscen
