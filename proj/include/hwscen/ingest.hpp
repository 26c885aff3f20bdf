#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "hwscen/core_types.hpp"

namespace hwscen {

enum class Direction { PositiveX, NegativeX };

struct RecordingMeta {
  int recording_id = 0;
  double frame_rate = 25.0;
  int lanes_per_direction = 3;
  std::map<int, Direction> lane_direction;
};

struct Recording {
  RecordingMeta meta;
  std::vector<Trajectory> trajectories;
};

/// Lane layout of a highD recording with `lanes` lanes per carriageway:
/// upper lanes 2..lanes+1 drive towards -x, lower lanes lanes+3..2*lanes+2
/// towards +x.
RecordingMeta highd_layout(int recording_id, int lanes, double frame_rate = 25.0);

/// Reads a highD recordingMeta CSV (columns id, frameRate, upperLaneMarkings,
/// lowerLaneMarkings; markings separated by ';').
RecordingMeta parse_recording_meta(std::istream& is);
void write_recording_meta(std::ostream& os, const RecordingMeta& meta);

/// Reads a highD tracks CSV. Mandatory columns: frame, id, x, y, xVelocity,
/// yVelocity, xAcceleration, yAcceleration, laneId; all others are ignored.
/// Throws ParseError (with line number) on malformed rows and IntegrityError
/// (with vehicle id) on duplicate or missing frames.
std::vector<Trajectory> parse_tracks(std::istream& is, const RecordingMeta& meta);

/// Writes trajectories in the highD tracks layout (readable by parse_tracks).
void write_tracks(std::ostream& os, std::span<const Trajectory> trajectories);

/// Rotates -x carriageway trajectories by 180 degrees so that every vehicle
/// drives towards +x and "left" keeps its meaning. Throws ConfigError for lane
/// ids missing from the meta.
Trajectory normalize_direction(const Trajectory& traj, const RecordingMeta& meta);

/// Keeps the recordings with exactly three lanes per direction.
std::vector<Recording> filter_three_lane(std::vector<Recording> recordings);

// ---------------------------------------------------------------------------
// Synthetic corpora with scripted ground truth.

inline constexpr double kLaneWidth = 3.75;

enum class ManeuverKind { Cruise, Accelerate, Decelerate, LaneChange, ExtremeBrake };

struct Maneuver {
  int start = 0;    // frame offset from the start of the trajectory
  int duration = 1; // frames
  ManeuverKind kind = ManeuverKind::Cruise;
  double accel = 0.0; // magnitude for accelerate/decelerate/brake, signed for lane changes
  int direction = 1;  // lane changes: +1 towards +y, -1 towards -y
};

struct SyntheticScript {
  std::int64_t vehicle_id = 1;
  int recording_id = 0;
  std::int64_t first_frame = 0;
  int frames = 500;
  double noise_sigma_accel = 0.05;
  double x0 = 0.0, y0 = 0.0, vx0 = 30.0;
  int lane0 = 6;
  std::vector<Maneuver> maneuvers;
};

struct SyntheticCorpus {
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<ChangePoint>> truth; // one list per trajectory
};

/// Label a scripted maneuver should produce.
CompositeLabel scripted_label(const Maneuver& m);

/// Integrates every script into a trajectory and emits a ground-truth change
/// point wherever the scripted label changes. Deterministic in (scripts, dt,
/// seed). Throws ScriptError for overlapping or out-of-range maneuvers.
SyntheticCorpus generate_synthetic(std::span<const SyntheticScript> scripts, double dt,
                                   std::uint64_t seed);

/// Single-vehicle script alternating cruise gaps with random maneuvers.
SyntheticScript random_maneuver_script(std::mt19937_64& rng, std::int64_t vehicle_id,
                                       int recording_id, int frames, double noise_sigma);

/// Interaction archetypes around an ego lane change.
enum class Archetype { Overtake = 0, Yield = 1, FreeChange = 2 };
inline constexpr int kArchetypeCount = 3;

/// One recording worth of scripts: the ego (vehicle id 1) performs a lane
/// change shaped by the archetype while neighbours cruise around it. The
/// ego accelerates, holds or brakes during the change; the archetype's typical
/// choice is drawn half of the time.
std::vector<SyntheticScript> archetype_scene(Archetype archetype, std::mt19937_64& rng,
                                             int recording_id, int frames, double noise_sigma);

/// Converts a +x trajectory to raw -x carriageway coordinates (inverse of
/// normalize_direction for the highd_layout lane numbering).
Trajectory mirror_to_upper(const Trajectory& traj, int lanes = 3);

} // namespace hwscen
