#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hwscen {

inline constexpr int kSlots = 9;       // vehicle slots per scenario, slot 0 = ego
inline constexpr int kFeatures = 6;    // x, y, vx, vy, ax, ay
inline constexpr int kObsFrames = 100; // 4 s at 25 Hz
inline constexpr int kClasses = 10;    // 5 longitudinal x 2 lateral states
inline constexpr double kDefaultDt = 0.04;

enum Feature : int { kX = 0, kY = 1, kVx = 2, kVy = 3, kAx = 4, kAy = 5 };

struct TrackPoint {
  std::int64_t frame = 0;
  double x = 0.0, y = 0.0;
  double vx = 0.0, vy = 0.0;
  double ax = 0.0, ay = 0.0;
  int lane = 0;

  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct Trajectory {
  std::int64_t vehicle_id = 0;
  int recording_id = 0;
  std::vector<TrackPoint> points;
  double dt = kDefaultDt;
  // Set by normalize_direction when the source drove towards -x.
  bool mirrored = false;

  std::int64_t first_frame() const { return points.front().frame; }
  std::int64_t last_frame() const { return points.back().frame; }
  bool covers(std::int64_t frame) const {
    return !points.empty() && frame >= first_frame() && frame <= last_frame();
  }
  /// Point at an absolute frame index, or nullptr when outside the track.
  const TrackPoint* at(std::int64_t frame) const {
    return covers(frame) ? &points[static_cast<std::size_t>(frame - first_frame())] : nullptr;
  }
};

/// Every invariant violation of a trajectory (empty when valid).
std::vector<std::string> validate_trajectory(const Trajectory& traj);

enum class Longitudinal : std::uint8_t {
  Zero = 0,
  Accelerate = 1,
  Decelerate = 2,
  ExtremeAccelerate = 3,
  ExtremeDecelerate = 4,
};

enum class Lateral : std::uint8_t { KeepLane = 0, LaneChange = 1 };

struct CompositeLabel {
  Longitudinal lon = Longitudinal::Zero;
  Lateral lat = Lateral::KeepLane;

  /// Pseudo-class index in [0, kClasses): lon * 2 + lat.
  int index() const { return static_cast<int>(lon) * 2 + static_cast<int>(lat); }
  static CompositeLabel from_index(int index);

  friend auto operator<=>(const CompositeLabel&, const CompositeLabel&) = default;
};

std::string to_string(Longitudinal lon);
std::string to_string(Lateral lat);
/// Vocabulary string, e.g. "accelerate_lane_change".
std::string to_string(CompositeLabel label);
CompositeLabel parse_composite_label(std::string_view text);
Lateral parse_lateral(std::string_view text);

struct ChangePoint {
  std::int64_t frame = 0;
  CompositeLabel before;
  CompositeLabel after;

  friend bool operator==(const ChangePoint&, const ChangePoint&) = default;
};

/// Fixed-shape slots x features x frames array with a per-slot, per-frame
/// presence mask. Values are stored row-major in (slot, feature, frame).
struct ScenarioTensor {
  int slots = kSlots;
  int features = kFeatures;
  int frames = kObsFrames;
  std::vector<double> values;
  std::vector<std::uint8_t> presence;

  ScenarioTensor() : ScenarioTensor(kSlots, kFeatures, kObsFrames) {}
  ScenarioTensor(int n_slots, int n_features, int n_frames)
      : slots(n_slots), features(n_features), frames(n_frames),
        values(static_cast<std::size_t>(n_slots) * n_features * n_frames, 0.0),
        presence(static_cast<std::size_t>(n_slots) * n_frames, 0) {}

  double& at(int slot, int feature, int t) { return values[index(slot, feature, t)]; }
  double at(int slot, int feature, int t) const { return values[index(slot, feature, t)]; }
  bool present(int slot, int t) const { return presence[static_cast<std::size_t>(slot) * frames + t] != 0; }
  void set_present(int slot, int t, bool on) {
    presence[static_cast<std::size_t>(slot) * frames + t] = on ? 1 : 0;
  }
  bool slot_empty(int slot) const;

  std::size_t index(int slot, int feature, int t) const {
    return (static_cast<std::size_t>(slot) * features + feature) * frames + t;
  }

  friend bool operator==(const ScenarioTensor&, const ScenarioTensor&) = default;
};

struct PseudoClassLabel {
  std::array<double, kClasses> one_hot{};

  static PseudoClassLabel from_index(int index);
  /// Hot component, or -1 when the vector is not one-hot.
  int index() const;

  friend bool operator==(const PseudoClassLabel&, const PseudoClassLabel&) = default;
};

struct InteractionMatrix {
  int slots = kSlots;
  int frames = kObsFrames;
  std::vector<double> values = std::vector<double>(static_cast<std::size_t>(kSlots) * kObsFrames, 0.0);

  InteractionMatrix() = default;
  InteractionMatrix(int n_slots, int n_frames)
      : slots(n_slots), frames(n_frames),
        values(static_cast<std::size_t>(n_slots) * n_frames, 0.0) {}

  double& at(int slot, int t) { return values[static_cast<std::size_t>(slot) * frames + t]; }
  double at(int slot, int t) const { return values[static_cast<std::size_t>(slot) * frames + t]; }

  friend bool operator==(const InteractionMatrix&, const InteractionMatrix&) = default;
};

struct Provenance {
  int recording_id = 0;
  std::int64_t ego_id = 0;
  std::int64_t anchor_frame = 0;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct ScenarioRecord {
  std::string id;
  ScenarioTensor tensor;
  PseudoClassLabel pseudo_class;
  InteractionMatrix interaction;
  ChangePoint anchor;
  Provenance provenance;
  std::optional<std::string> augmentation_parent;

  friend bool operator==(const ScenarioRecord&, const ScenarioRecord&) = default;
};

/// "r<recording>_v<ego>_f<anchor>"
std::string make_record_id(const Provenance& p);

/// Every invariant violation found in the record; empty iff valid.
std::vector<std::string> validate_record(const ScenarioRecord& record);

} // namespace hwscen
