#include "hwscen/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "hwscen/errors.hpp"
#include "hwscen/ingest.hpp"

namespace hwscen {

void ExtractionConfig::validate() const {
  if (pre_frames < 0 || post_frames < 0) throw ConfigError("extraction: negative window");
  if (pre_frames + post_frames + 1 < kObsFrames)
    throw ConfigError("extraction: window shorter than the tensor horizon");
  if (tensor_offset < -pre_frames || tensor_offset + kObsFrames - 1 > post_frames)
    throw ConfigError("extraction: tensor window must lie inside the extraction window");
}

bool ExtractionConfig::accepts(const ChangePoint& cp) const {
  if (class_filter.empty()) return true;
  return std::any_of(class_filter.begin(), class_filter.end(), [&](const auto& p) {
    return p.first == cp.before.lat && p.second == cp.after.lat;
  });
}

namespace {

double distance(const TrackPoint& a, const TrackPoint& b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Candidate {
  const Trajectory* traj;
  double dist;
};

} // namespace

ExtractionResult extract(std::span<const Trajectory> recording, const ChangePointMap& change_points,
                         const ExtractionConfig& cfg, const DgsfmConfig& dgsfm) {
  cfg.validate();
  ExtractionResult result;

  for (const auto& ego : recording) {
    auto found = change_points.find(ego.vehicle_id);
    if (found == change_points.end() || ego.points.empty()) continue;
    for (const auto& cp : found->second) {
      if (!cfg.accepts(cp)) {
        ++result.filtered;
        continue;
      }
      const std::int64_t tc = cp.frame;
      if (!ego.covers(tc - cfg.pre_frames) || !ego.covers(tc + cfg.post_frames)) {
        ++result.skipped_window;
        continue;
      }
      const std::int64_t t0 = tc + cfg.tensor_offset;
      const std::int64_t t1 = t0 + kObsFrames - 1;
      const TrackPoint& origin = *ego.at(tc);

      std::vector<Candidate> candidates;
      for (const auto& other : recording) {
        if (&other == &ego || other.vehicle_id == ego.vehicle_id || other.mirrored != ego.mirrored ||
            other.points.empty())
          continue;
        if (other.last_frame() < t0 || other.first_frame() > t1) continue;
        // Distance at the anchor, or at the present frame closest to it.
        std::int64_t f = std::clamp(tc, std::max(t0, other.first_frame()), std::min(t1, other.last_frame()));
        candidates.push_back({&other, distance(*other.at(f), *ego.at(f))});
      }
      std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.dist < b.dist || (a.dist == b.dist && a.traj->vehicle_id < b.traj->vehicle_id);
      });
      if (candidates.size() > static_cast<std::size_t>(kSlots - 1)) candidates.resize(kSlots - 1);

      ScenarioRecord rec;
      auto fill = [&](int slot, const Trajectory& tr) {
        for (int k = 0; k < kObsFrames; ++k) {
          const TrackPoint* p = tr.at(t0 + k);
          if (!p) continue;
          rec.tensor.set_present(slot, k, true);
          rec.tensor.at(slot, kX, k) = p->x - origin.x;
          rec.tensor.at(slot, kY, k) = p->y - origin.y;
          rec.tensor.at(slot, kVx, k) = p->vx;
          rec.tensor.at(slot, kVy, k) = p->vy;
          rec.tensor.at(slot, kAx, k) = p->ax;
          rec.tensor.at(slot, kAy, k) = p->ay;
        }
      };
      fill(0, ego);
      for (std::size_t i = 0; i < candidates.size(); ++i) fill(static_cast<int>(i) + 1, *candidates[i].traj);

      rec.interaction = interaction_scores(rec.tensor, dgsfm);
      rec.pseudo_class = PseudoClassLabel::from_index(cp.after.index());
      rec.anchor = cp;
      rec.provenance = {ego.recording_id, ego.vehicle_id, tc};
      rec.id = make_record_id(rec.provenance);
      result.records.push_back(std::move(rec));
    }
  }
  return result;
}

ScenarioRecord augment_irrelevant(const ScenarioRecord& record, const Trajectory& donor,
                                  double min_gap, std::uint64_t seed) {
  const auto& x = record.tensor;
  int slot = -1;
  for (int s = 1; s < x.slots; ++s) {
    if (x.slot_empty(s)) {
      slot = s;
      break;
    }
  }
  if (slot < 0) throw AugmentationError(record.id + ": no free pseudo-vehicle slot");
  for (int t = 0; t < x.frames; ++t) {
    bool any = false;
    for (int s = 1; s < x.slots && !any; ++s) any = x.present(s, t);
    if (!any)
      throw AugmentationError(record.id + ": frames without neighbours cannot host a zero-interaction vehicle");
  }

  const auto& pts = donor.points;
  const std::size_t T = static_cast<std::size_t>(x.frames);
  std::vector<std::size_t> starts;
  if (pts.size() >= T) {
    // Sliding check for windows with constant lane and |ay| < 0.1.
    std::size_t run_ok = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const bool ok = std::abs(pts[i].ay) < 0.1 && (run_ok == 0 || pts[i].lane == pts[i - 1].lane);
      run_ok = ok ? run_ok + 1 : (std::abs(pts[i].ay) < 0.1 ? 1 : 0);
      if (run_ok >= T) starts.push_back(i + 1 - T);
    }
  }
  if (starts.empty())
    throw AugmentationError("donor " + std::to_string(donor.vehicle_id) + " has no qualifying segment");

  std::mt19937_64 rng(seed);
  const std::size_t start = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];
  const double side = std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0;
  const double lane_offset = (std::uniform_int_distribution<int>(0, 2)(rng) - 1) * kLaneWidth;
  double gap = min_gap + std::uniform_real_distribution<double>(5.0, 20.0)(rng);

  const TrackPoint& d0 = pts[start];
  const double base_x = x.at(0, kX, 0), base_y = x.at(0, kY, 0) + lane_offset;
  auto min_distance = [&](double g) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < T; ++k) {
      const auto& p = pts[start + k];
      const double px = base_x + side * g + (p.x - d0.x);
      const double py = base_y + (p.y - d0.y);
      best = std::min(best, std::hypot(px - x.at(0, kX, static_cast<int>(k)), py - x.at(0, kY, static_cast<int>(k))));
    }
    return best;
  };
  int guard = 0;
  while (!(min_distance(gap) > min_gap)) {
    gap += 5.0;
    if (++guard > 2000) throw AugmentationError(record.id + ": cannot place donor beyond min_gap");
  }

  ScenarioRecord out = record;
  for (std::size_t k = 0; k < T; ++k) {
    const auto& p = pts[start + k];
    const int t = static_cast<int>(k);
    out.tensor.set_present(slot, t, true);
    out.tensor.at(slot, kX, t) = base_x + side * gap + (p.x - d0.x);
    out.tensor.at(slot, kY, t) = base_y + (p.y - d0.y);
    out.tensor.at(slot, kVx, t) = p.vx;
    out.tensor.at(slot, kVy, t) = p.vy;
    out.tensor.at(slot, kAx, t) = p.ax;
    out.tensor.at(slot, kAy, t) = p.ay;
    out.interaction.at(slot, t) = 0.0;
  }
  out.id = record.id + "_aug";
  out.augmentation_parent = record.id;
  return out;
}

int inserted_slot(const ScenarioRecord& parent, const ScenarioRecord& child) {
  for (int s = 1; s < parent.tensor.slots; ++s)
    if (parent.tensor.slot_empty(s) && !child.tensor.slot_empty(s)) return s;
  return -1;
}

ScenarioRecord remove_slot(const ScenarioRecord& record, int slot) {
  ScenarioRecord out = record;
  for (int t = 0; t < out.tensor.frames; ++t) {
    out.tensor.set_present(slot, t, false);
    for (int f = 0; f < out.tensor.features; ++f) out.tensor.at(slot, f, t) = 0.0;
    out.interaction.at(slot, t) = 0.0;
  }
  return out;
}

SplitResult split(std::span<const ScenarioRecord> records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("split: train_fraction must lie in (0, 1)");

  std::vector<std::string> family_order;
  std::unordered_map<std::string, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string key = records[i].augmentation_parent.value_or(records[i].id);
    auto [it, inserted] = families.try_emplace(key);
    if (inserted) family_order.push_back(key);
    it->second.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(family_order.begin(), family_order.end(), rng);

  const auto target = static_cast<std::size_t>(std::ceil(train_fraction * records.size() - 1e-9));
  SplitResult out;
  for (const auto& key : family_order) {
    auto& dest = out.train.size() < target ? out.train : out.validation;
    const auto& members = families[key];
    dest.insert(dest.end(), members.begin(), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

} // namespace hwscen
