#include "hwscen/dgsfm.hpp"

#include <algorithm>
#include <cmath>

#include "hwscen/errors.hpp"

namespace hwscen {

void EggPotentialParams::validate() const {
  if (!(amplitude > 0.0) || !(sigma > 0.0) || !(lateral_scale > 0.0))
    throw ConfigError("dgsfm: amplitude, sigma and lateral_scale must be positive");
  if (!(forward_stretch >= 1.0) || !(rear_compress > 0.0 && rear_compress <= 1.0))
    throw ConfigError("dgsfm: need forward_stretch >= 1 >= rear_compress > 0");
}

void DgsfmConfig::validate() const {
  egg.validate();
  if (!(tau_sum >= 0.0 && tau_sum <= 1.0)) throw ConfigError("dgsfm: tau_sum must lie in [0, 1]");
  if (n_dg < 1) throw ConfigError("dgsfm: n_dg must be >= 1");
  if (!(dt > 0.0)) throw ConfigError("dgsfm: dt must be positive");
  if (!(softmax_temperature > 0.0)) throw ConfigError("dgsfm: softmax_temperature must be positive");
}

double v_egg(Vec2 other, Vec2 self, Vec2 v_self, const EggPotentialParams& egg) {
  const double speed = std::hypot(v_self.x, v_self.y);
  Vec2 heading{1.0, 0.0};
  if (speed >= 0.1) heading = {v_self.x / speed, v_self.y / speed};
  const Vec2 d = other - self;
  const double d_long = d.x * heading.x + d.y * heading.y;
  const double d_lat = -d.x * heading.y + d.y * heading.x;
  const double s = d_long >= 0.0 ? egg.forward_stretch * egg.sigma : egg.rear_compress * egg.sigma;
  const double rho = std::hypot(d_long / s, d_lat / (egg.lateral_scale * egg.sigma));
  return egg.amplitude * std::exp(-rho);
}

BetaComponents beta_components(const AgentState& ego, const AgentState& neighbour,
                               const DgsfmConfig& cfg) {
  const double horizon = cfg.n_dg * cfg.dt;
  const Vec2 ego_ahead = ego.position + horizon * ego.velocity;
  const Vec2 nb_ahead = neighbour.position + horizon * neighbour.velocity;
  BetaComponents beta;
  beta.a = v_egg(neighbour.position, ego.position, ego.velocity, cfg.egg);
  beta.b = v_egg(ego_ahead, nb_ahead, neighbour.velocity, cfg.egg) -
           v_egg(ego.position, neighbour.position, neighbour.velocity, cfg.egg);
  return beta;
}

double interaction_score(const BetaComponents& beta, double tau_sum) {
  return tau_sum * beta.a + (1.0 - tau_sum) * beta.b;
}

InteractionMatrix interaction_scores(std::span<const SlotTrack> slots, const DgsfmConfig& cfg) {
  if (slots.empty()) throw ContractError("interaction_scores: need at least the ego slot");
  const int n_slots = static_cast<int>(slots.size());
  const int frames = static_cast<int>(slots[0].states.size());
  for (const auto& s : slots)
    if (static_cast<int>(s.states.size()) != frames || static_cast<int>(s.present.size()) != frames)
      throw ContractError("interaction_scores: slot tracks are not aligned");

  InteractionMatrix m(n_slots, frames);
  std::vector<double> logits(static_cast<std::size_t>(n_slots), 0.0);
  for (int t = 0; t < frames; ++t) {
    if (!slots[0].present[static_cast<std::size_t>(t)])
      throw ContractError("interaction_scores: ego must be present at every frame");
    m.at(0, t) = 1.0;
    const auto& ego = slots[0].states[static_cast<std::size_t>(t)];
    double max_logit = -INFINITY;
    for (int j = 1; j < n_slots; ++j) {
      if (!slots[static_cast<std::size_t>(j)].present[static_cast<std::size_t>(t)]) continue;
      const auto beta = beta_components(ego, slots[static_cast<std::size_t>(j)].states[static_cast<std::size_t>(t)], cfg);
      logits[static_cast<std::size_t>(j)] = interaction_score(beta, cfg.tau_sum) / cfg.softmax_temperature;
      max_logit = std::max(max_logit, logits[static_cast<std::size_t>(j)]);
    }
    if (max_logit == -INFINITY) continue;
    double total = 0.0;
    for (int j = 1; j < n_slots; ++j) {
      if (!slots[static_cast<std::size_t>(j)].present[static_cast<std::size_t>(t)]) continue;
      const double e = std::exp(logits[static_cast<std::size_t>(j)] - max_logit);
      m.at(j, t) = e;
      total += e;
    }
    for (int j = 1; j < n_slots; ++j)
      if (slots[static_cast<std::size_t>(j)].present[static_cast<std::size_t>(t)]) m.at(j, t) /= total;
  }
  return m;
}

InteractionMatrix interaction_scores(const ScenarioTensor& tensor, const DgsfmConfig& cfg) {
  if (tensor.features < 4) throw ContractError("interaction_scores: tensor lacks velocity features");
  std::vector<SlotTrack> slots(static_cast<std::size_t>(tensor.slots));
  for (int s = 0; s < tensor.slots; ++s) {
    auto& track = slots[static_cast<std::size_t>(s)];
    track.states.resize(static_cast<std::size_t>(tensor.frames));
    track.present.resize(static_cast<std::size_t>(tensor.frames));
    for (int t = 0; t < tensor.frames; ++t) {
      track.states[static_cast<std::size_t>(t)] = {{tensor.at(s, kX, t), tensor.at(s, kY, t)},
                                                   {tensor.at(s, kVx, t), tensor.at(s, kVy, t)}};
      track.present[static_cast<std::size_t>(t)] = tensor.present(s, t) ? 1 : 0;
    }
  }
  return interaction_scores(slots, cfg);
}

} // namespace hwscen
