#pragma once

#include <span>
#include <vector>

#include "hwscen/core_types.hpp"

namespace hwscen {

struct Vec2 {
  double x = 0.0, y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
};

/// Egg-shaped potential: an anisotropic exponential whose range is stretched
/// ahead of the mover and compressed behind it.
struct EggPotentialParams {
  double amplitude = 1.0;
  double sigma = 10.0;          // metres
  double forward_stretch = 2.0; // >= 1
  double rear_compress = 0.5;   // in (0, 1]
  double lateral_scale = 0.6;   // > 0

  void validate() const;
};

struct DgsfmConfig {
  EggPotentialParams egg;
  double tau_sum = 0.5;
  int n_dg = 25;
  double dt = kDefaultDt;
  double softmax_temperature = 1.0;

  void validate() const;
};

struct AgentState {
  Vec2 position;
  Vec2 velocity;
};

/// Potential of the field centred at `self` (heading along `v_self`, or +x when
/// slower than 0.1 m/s) evaluated at `other`. Equals amplitude at the centre.
double v_egg(Vec2 other, Vec2 self, Vec2 v_self, const EggPotentialParams& egg);

struct BetaComponents {
  double a = 0.0; // intrusion of the neighbour into the ego's field
  double b = 0.0; // short-horizon change of the ego inside the neighbour's field
};

BetaComponents beta_components(const AgentState& ego, const AgentState& neighbour,
                               const DgsfmConfig& cfg);

/// Combined score tau_sum * a + (1 - tau_sum) * b.
double interaction_score(const BetaComponents& beta, double tau_sum);

/// Per-slot state over the scenario frames; `present[t]` false marks frames
/// where the slot holds no vehicle.
struct SlotTrack {
  std::vector<AgentState> states;
  std::vector<std::uint8_t> present;
};

/// Builds the interaction matrix: ego row 1, present neighbours softmax-normalised
/// per frame, absent slots 0. `slots[0]` is the ego and must be present throughout.
InteractionMatrix interaction_scores(std::span<const SlotTrack> slots, const DgsfmConfig& cfg);

/// Same, reading positions and velocities from a scenario tensor.
InteractionMatrix interaction_scores(const ScenarioTensor& tensor, const DgsfmConfig& cfg);

} // namespace hwscen
