#include "hwscen/core_types.hpp"

#include <cmath>
#include <sstream>

#include "hwscen/errors.hpp"

namespace hwscen {

const char* category_name(ErrorCategory c) noexcept {
  switch (c) {
  case ErrorCategory::Parse: return "parse error";
  case ErrorCategory::Integrity: return "integrity error";
  case ErrorCategory::Config: return "config error";
  case ErrorCategory::Script: return "script error";
  case ErrorCategory::State: return "state error";
  case ErrorCategory::Input: return "input error";
  case ErrorCategory::Augmentation: return "augmentation error";
  case ErrorCategory::Training: return "training error";
  case ErrorCategory::Contract: return "contract error";
  case ErrorCategory::Stage: return "stage error";
  case ErrorCategory::Format: return "format error";
  }
  return "error";
}

std::vector<std::string> validate_trajectory(const Trajectory& traj) {
  std::vector<std::string> out;
  if (traj.points.empty()) {
    out.emplace_back("trajectory is empty");
    return out;
  }
  if (!(traj.dt > 0.0)) out.emplace_back("dt must be positive");
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    const auto& p = traj.points[i];
    if (p.frame < 0) out.emplace_back("negative frame index at point " + std::to_string(i));
    if (i > 0 && p.frame != traj.points[i - 1].frame + 1)
      out.emplace_back("frame gap before point " + std::to_string(i));
    for (double v : {p.x, p.y, p.vx, p.vy, p.ax, p.ay}) {
      if (!std::isfinite(v)) {
        out.emplace_back("non-finite kinematics at point " + std::to_string(i));
        break;
      }
    }
  }
  return out;
}

CompositeLabel CompositeLabel::from_index(int index) {
  if (index < 0 || index >= kClasses)
    throw ContractError("pseudo-class index out of range: " + std::to_string(index));
  return {static_cast<Longitudinal>(index / 2), static_cast<Lateral>(index % 2)};
}

std::string to_string(Longitudinal lon) {
  switch (lon) {
  case Longitudinal::Zero: return "zero";
  case Longitudinal::Accelerate: return "accelerate";
  case Longitudinal::Decelerate: return "decelerate";
  case Longitudinal::ExtremeAccelerate: return "extreme_accelerate";
  case Longitudinal::ExtremeDecelerate: return "extreme_decelerate";
  }
  return "?";
}

std::string to_string(Lateral lat) {
  return lat == Lateral::KeepLane ? "keep_lane" : "lane_change";
}

std::string to_string(CompositeLabel label) {
  return to_string(label.lon) + "_" + to_string(label.lat);
}

CompositeLabel parse_composite_label(std::string_view text) {
  for (int i = 0; i < kClasses; ++i) {
    auto label = CompositeLabel::from_index(i);
    if (to_string(label) == text) return label;
  }
  throw ParseError("unknown composite label '" + std::string(text) + "'");
}

Lateral parse_lateral(std::string_view text) {
  if (text == "keep_lane" || text == "KeepLane" || text == "KL") return Lateral::KeepLane;
  if (text == "lane_change" || text == "LaneChange" || text == "LC") return Lateral::LaneChange;
  throw ParseError("unknown lateral state '" + std::string(text) + "'");
}

bool ScenarioTensor::slot_empty(int slot) const {
  for (int t = 0; t < frames; ++t)
    if (present(slot, t)) return false;
  return true;
}

PseudoClassLabel PseudoClassLabel::from_index(int index) {
  if (index < 0 || index >= kClasses)
    throw ContractError("pseudo-class index out of range: " + std::to_string(index));
  PseudoClassLabel label;
  label.one_hot[static_cast<std::size_t>(index)] = 1.0;
  return label;
}

int PseudoClassLabel::index() const {
  int hot = -1;
  for (int i = 0; i < kClasses; ++i) {
    double v = one_hot[static_cast<std::size_t>(i)];
    if (v == 1.0) {
      if (hot >= 0) return -1;
      hot = i;
    } else if (v != 0.0) {
      return -1;
    }
  }
  return hot;
}

std::string make_record_id(const Provenance& p) {
  std::ostringstream os;
  os << 'r' << p.recording_id << "_v" << p.ego_id << "_f" << p.anchor_frame;
  return os.str();
}

std::vector<std::string> validate_record(const ScenarioRecord& record) {
  std::vector<std::string> out;
  const auto& x = record.tensor;
  if (x.slots != kSlots || x.features != kFeatures || x.frames != kObsFrames ||
      x.values.size() != static_cast<std::size_t>(kSlots) * kFeatures * kObsFrames ||
      x.presence.size() != static_cast<std::size_t>(kSlots) * kObsFrames) {
    out.emplace_back("tensor shape: expected 9 x 6 x 100 with a 9 x 100 presence mask");
    return out;
  }
  const auto& m = record.interaction;
  if (m.slots != kSlots || m.frames != kObsFrames ||
      m.values.size() != static_cast<std::size_t>(kSlots) * kObsFrames) {
    out.emplace_back("interaction shape: expected 9 x 100");
    return out;
  }

  bool ego_missing = false, non_finite = false, padding_dirty = false;
  for (int t = 0; t < x.frames; ++t)
    if (!x.present(0, t)) ego_missing = true;
  for (int s = 0; s < x.slots; ++s)
    for (int f = 0; f < x.features; ++f)
      for (int t = 0; t < x.frames; ++t) {
        double v = x.at(s, f, t);
        if (!std::isfinite(v)) non_finite = true;
        if (!x.present(s, t) && v != 0.0) padding_dirty = true;
      }
  if (ego_missing) out.emplace_back("tensor: ego slot must be present at every frame");
  if (non_finite) out.emplace_back("tensor: non-finite feature value");
  if (padding_dirty) out.emplace_back("tensor: pseudo-vehicle cells must carry zero features");

  if (record.pseudo_class.index() < 0)
    out.emplace_back("pseudo_class: must be one-hot over 10 classes");

  bool ego_row = false, absent_row = false, range = false, sums = false;
  for (int t = 0; t < m.frames; ++t) {
    if (m.at(0, t) != 1.0) ego_row = true;
    double sum = 0.0;
    int present = 0;
    for (int s = 1; s < m.slots; ++s) {
      double v = m.at(s, t);
      if (!(v >= 0.0 && v <= 1.0)) range = true;
      if (x.present(s, t)) {
        sum += v;
        ++present;
      } else if (v != 0.0) {
        absent_row = true;
      }
    }
    if (present > 0 && std::abs(sum - 1.0) > 1e-9) sums = true;
  }
  if (ego_row) out.emplace_back("interaction: ego row must equal 1 at every frame");
  if (absent_row) out.emplace_back("interaction: absent-slot rows must equal 0");
  if (range) out.emplace_back("interaction: entries must lie in [0, 1]");
  if (sums) out.emplace_back("interaction: present neighbours must sum to 1 per frame");

  if (record.anchor.before == record.anchor.after)
    out.emplace_back("anchor: label_before must differ from label_after");
  return out;
}

} // namespace hwscen
