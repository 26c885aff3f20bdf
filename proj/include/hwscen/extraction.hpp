#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "hwscen/core_types.hpp"
#include "hwscen/dgsfm.hpp"

namespace hwscen {

struct ExtractionConfig {
  int pre_frames = 50;
  int post_frames = 75;
  int tensor_offset = -25; // tensor covers [t_c + offset, t_c + offset + T_obs)
  /// Allowed (before, after) lateral transitions; empty keeps everything.
  std::vector<std::pair<Lateral, Lateral>> class_filter;

  void validate() const;
  bool accepts(const ChangePoint& cp) const;
};

struct ExtractionResult {
  std::vector<ScenarioRecord> records;
  long skipped_window = 0; // anchor too close to the ego's track boundaries
  long filtered = 0;       // rejected by class_filter
};

using ChangePointMap = std::map<std::int64_t, std::vector<ChangePoint>>;

/// Builds one record per change point of every ego in a single recording.
/// Slot 0 holds the ego, slots 1.. the nearest other vehicles (same carriageway)
/// at the anchor that appear in the tensor window, in ascending distance.
/// Positions are relative to the ego position at the anchor frame.
ExtractionResult extract(std::span<const Trajectory> recording, const ChangePointMap& change_points,
                         const ExtractionConfig& cfg, const DgsfmConfig& dgsfm);

/// Inserts a constant-lane, low-lateral-acceleration segment of `donor` into
/// the first free slot, at least `min_gap` metres from the ego at every frame,
/// with a zero interaction row. Throws AugmentationError when no slot or no
/// qualifying donor segment exists.
ScenarioRecord augment_irrelevant(const ScenarioRecord& record, const Trajectory& donor,
                                  double min_gap, std::uint64_t seed);

/// Index of the slot inserted by augment_irrelevant (first slot empty in the
/// parent and occupied in the child), or -1.
int inserted_slot(const ScenarioRecord& parent, const ScenarioRecord& child);

/// Clears a slot back to padding (zero features, mask off, zero interaction).
ScenarioRecord remove_slot(const ScenarioRecord& record, int slot);

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle of record families (a record plus its augmented children);
/// train receives ceil(fraction * n) records, rounded up to whole families.
SplitResult split(std::span<const ScenarioRecord> records, double train_fraction, std::uint64_t seed);

} // namespace hwscen
