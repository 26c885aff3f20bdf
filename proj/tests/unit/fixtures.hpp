#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "hwscen/core_types.hpp"
#include "hwscen/ingest.hpp"

namespace fx {

using namespace hwscen;

// Straight-line vehicle at constant speed on lane 6.
inline Trajectory cruise(std::int64_t id, int frames, double x0 = 0.0, double y0 = 0.0, double vx = 30.0,
                         std::int64_t first_frame = 0, int rec = 1) {
  Trajectory t;
  t.vehicle_id = id;
  t.recording_id = rec;
  for (int i = 0; i < frames; ++i) {
    TrackPoint p;
    p.frame = first_frame + i;
    p.x = x0 + vx * i * t.dt;
    p.y = y0;
    p.vx = vx;
    p.lane = 6;
    t.points.push_back(p);
  }
  return t;
}

inline Trajectory with_ax(std::vector<double> ax) {
  auto t = cruise(1, static_cast<int>(ax.size()));
  for (std::size_t i = 0; i < ax.size(); ++i) t.points[i].ax = ax[i];
  return t;
}

inline Trajectory with_vy(std::vector<double> vy) {
  auto t = cruise(1, static_cast<int>(vy.size()));
  for (std::size_t i = 0; i < vy.size(); ++i) t.points[i].vy = vy[i];
  return t;
}

// Valid record: ego present throughout, neighbour in slot 1 for the first 60
// frames, everything else padding.
inline ScenarioRecord valid_record(std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  ScenarioRecord r;
  r.provenance = {3, 17, 400};
  r.id = make_record_id(r.provenance);
  r.anchor = {400, CompositeLabel{}, CompositeLabel{Longitudinal::Accelerate, Lateral::LaneChange}};
  r.pseudo_class = PseudoClassLabel::from_index(r.anchor.after.index());
  for (int t = 0; t < kObsFrames; ++t) {
    r.tensor.set_present(0, t, true);
    for (int f = 0; f < kFeatures; ++f) r.tensor.at(0, f, t) = n01(rng);
    r.interaction.at(0, t) = 1.0;
    if (t < 60) {
      r.tensor.set_present(1, t, true);
      for (int f = 0; f < kFeatures; ++f) r.tensor.at(1, f, t) = n01(rng);
      r.interaction.at(1, t) = 1.0;
    }
  }
  return r;
}

} // namespace fx
