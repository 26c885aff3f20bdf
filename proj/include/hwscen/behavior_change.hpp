#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hwscen/core_types.hpp"

namespace hwscen {

struct ThresholdPair {
  double tau = 0.0; // m/s^2
  int frames = 1;   // consecutive frames above tau
};

struct DetectorConfig {
  std::vector<ThresholdPair> up_pairs{{0.2, 100}, {0.3, 50}, {0.4, 25}};
  double tau_down = 0.15;
  int n_down = 25;
  double tau_extreme = 2.5;
  double tau_lc = 2.0; // metres of accumulated lateral displacement
  int min_segment = 3;

  void validate() const; // throws ConfigError
};

struct Segment {
  std::int64_t start_frame = 0; // inclusive
  std::int64_t end_frame = 0;   // inclusive
  CompositeLabel label;

  std::int64_t length() const { return end_frame - start_frame + 1; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

/// Per-frame longitudinal state from the threshold/duration rules. Onsets are
/// placed at the first frame of the qualifying run (earliest pair wins) and the
/// return to Zero at the first frame of the quiet run; frames above
/// tau_extreme are Extreme regardless of the underlying state.
std::vector<Longitudinal> detect_longitudinal(std::span<const double> ax, const DetectorConfig& cfg);
std::vector<Longitudinal> detect_longitudinal(const Trajectory& traj, const DetectorConfig& cfg);

/// Splits the trajectory into maximal constant-sign(vy) intervals and labels
/// each by its accumulated displacement. Only `lat` of the labels is set.
std::vector<Segment> detect_lateral(const Trajectory& traj, const DetectorConfig& cfg);

struct PostprocessResult {
  std::vector<Segment> segments;
  std::vector<ChangePoint> change_points;
};

/// Merges longitudinal states and lateral segments into composite segments,
/// absorbs segments shorter than min_segment into their predecessor, merges
/// consecutive lane-change segments, and emits a change point per boundary.
PostprocessResult postprocess(std::span<const Longitudinal> states, std::span<const Segment> lateral,
                              std::int64_t first_frame, const DetectorConfig& cfg);

/// detect_longitudinal + detect_lateral + postprocess.
PostprocessResult detect_behavior(const Trajectory& traj, const DetectorConfig& cfg);

// --- EMA-energy baseline -----------------------------------------------------

struct EmaConfig {
  std::vector<int> windows{30, 60, 90};
  double alpha = 0.05;
  double peak_factor = 3.0; // threshold = peak_factor * median window energy
};

/// Windowed residual energy E_w(t) = sum_{|u-t| <= w/2} r(u)^2 / w of a signal
/// against its exponential moving average.
std::vector<double> ema_window_energy(std::span<const double> signal, int window, double alpha);

/// Candidate change frames (absolute frame indices), at least one per trajectory.
std::vector<std::int64_t> detect_ema(const Trajectory& traj, const EmaConfig& cfg);

// --- Evaluation --------------------------------------------------------------

struct DetectionMatch {
  long tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0;

  static DetectionMatch from_counts(long tp, long fp, long fn);
  DetectionMatch& operator+=(const DetectionMatch& other);
};

struct PredictedEvent {
  std::int64_t frame = 0;
  std::optional<CompositeLabel> label; // unset: label matching is skipped
};

struct TruthEvent {
  std::int64_t center = 0;
  CompositeLabel label;
};

/// Greedy one-to-one matching in temporal order. A truth window covers
/// [center - window/2, center + window/2).
DetectionMatch evaluate_detection(std::span<const PredictedEvent> predicted,
                                  std::span<const TruthEvent> truth, int window = 50);

} // namespace hwscen
