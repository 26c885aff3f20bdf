#include "hwscen/behavior_change.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hwscen/errors.hpp"

namespace hwscen {

void DetectorConfig::validate() const {
  if (up_pairs.empty()) throw ConfigError("detector: up_pairs must not be empty");
  double max_up = 0.0;
  for (const auto& p : up_pairs) {
    if (!(p.tau > 0.0) || p.frames < 1) throw ConfigError("detector: up pairs need tau > 0, n >= 1");
    max_up = std::max(max_up, p.tau);
  }
  if (!(tau_down > 0.0) || n_down < 1) throw ConfigError("detector: tau_down > 0, n_down >= 1");
  if (!(tau_extreme > max_up)) throw ConfigError("detector: tau_extreme must exceed every tau_up");
  if (!(tau_lc > 0.0)) throw ConfigError("detector: tau_lc must be positive");
  if (min_segment < 1) throw ConfigError("detector: min_segment must be >= 1");
}

std::vector<Longitudinal> detect_longitudinal(std::span<const double> ax, const DetectorConfig& cfg) {
  const std::size_t n = ax.size();
  std::vector<Longitudinal> out(n, Longitudinal::Zero);
  if (n == 0) return out;

  // onset[s][t]: a qualifying run of sign s starts at frame t.
  std::vector<std::uint8_t> onset_up(n, 0), onset_down(n, 0);
  for (const auto& pair : cfg.up_pairs) {
    for (int sign : {1, -1}) {
      auto& onset = sign > 0 ? onset_up : onset_down;
      std::size_t t = 0;
      while (t < n) {
        if (sign * ax[t] > pair.tau) {
          std::size_t end = t;
          while (end < n && sign * ax[end] > pair.tau) ++end;
          if (static_cast<long>(end - t) >= pair.frames) onset[t] = 1;
          t = end;
        } else {
          ++t;
        }
      }
    }
  }

  std::vector<int> quiet_from(n + 1, 0);
  for (std::size_t i = n; i-- > 0;)
    quiet_from[i] = std::abs(ax[i]) < cfg.tau_down ? quiet_from[i + 1] + 1 : 0;

  Longitudinal state = Longitudinal::Zero;
  for (std::size_t t = 0; t < n; ++t) {
    if (onset_up[t] && state != Longitudinal::Accelerate) {
      state = Longitudinal::Accelerate;
    } else if (onset_down[t] && state != Longitudinal::Decelerate) {
      state = Longitudinal::Decelerate;
    } else if (state != Longitudinal::Zero && quiet_from[t] >= cfg.n_down) {
      state = Longitudinal::Zero;
    }
    out[t] = state;
    if (ax[t] > cfg.tau_extreme) out[t] = Longitudinal::ExtremeAccelerate;
    if (ax[t] < -cfg.tau_extreme) out[t] = Longitudinal::ExtremeDecelerate;
  }
  return out;
}

std::vector<Longitudinal> detect_longitudinal(const Trajectory& traj, const DetectorConfig& cfg) {
  std::vector<double> ax(traj.points.size());
  std::transform(traj.points.begin(), traj.points.end(), ax.begin(),
                 [](const TrackPoint& p) { return p.ax; });
  return detect_longitudinal(ax, cfg);
}

std::vector<Segment> detect_lateral(const Trajectory& traj, const DetectorConfig& cfg) {
  std::vector<Segment> out;
  const auto& pts = traj.points;
  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  std::size_t i = 0;
  while (i < pts.size()) {
    const int s = sign(pts[i].vy);
    std::size_t j = i;
    double dy = 0.0;
    while (j < pts.size() && sign(pts[j].vy) == s) {
      dy += pts[j].vy * traj.dt;
      ++j;
    }
    Segment seg;
    seg.start_frame = pts[i].frame;
    seg.end_frame = pts[j - 1].frame;
    seg.label.lat = std::abs(dy) > cfg.tau_lc ? Lateral::LaneChange : Lateral::KeepLane;
    out.push_back(seg);
    i = j;
  }
  return out;
}

PostprocessResult postprocess(std::span<const Longitudinal> states, std::span<const Segment> lateral,
                              std::int64_t first_frame, const DetectorConfig& cfg) {
  PostprocessResult result;
  const auto n = static_cast<std::int64_t>(states.size());
  if (n == 0) return result;

  std::vector<Lateral> lat(static_cast<std::size_t>(n), Lateral::KeepLane);
  std::vector<std::uint8_t> covered(static_cast<std::size_t>(n), 0);
  for (const auto& seg : lateral) {
    if (seg.start_frame < first_frame || seg.end_frame >= first_frame + n || seg.start_frame > seg.end_frame)
      throw ContractError("postprocess: lateral segment outside the longitudinal frame range");
    for (auto f = seg.start_frame; f <= seg.end_frame; ++f) {
      lat[static_cast<std::size_t>(f - first_frame)] = seg.label.lat;
      covered[static_cast<std::size_t>(f - first_frame)] = 1;
    }
  }
  if (std::find(covered.begin(), covered.end(), 0) != covered.end())
    throw ContractError("postprocess: lateral segments do not cover the frame range");

  // Frame-wise composite labels, same-label runs merged and short runs absorbed.
  std::vector<Segment> segs;
  for (std::int64_t t = 0; t < n; ++t) {
    CompositeLabel label{states[static_cast<std::size_t>(t)], lat[static_cast<std::size_t>(t)]};
    const std::int64_t frame = first_frame + t;
    if (!segs.empty() && segs.back().label == label) {
      segs.back().end_frame = frame;
    } else {
      segs.push_back({frame, frame, label});
    }
  }

  std::vector<Segment> merged;
  for (const auto& seg : segs) {
    if (!merged.empty() && (merged.back().label == seg.label || seg.length() < cfg.min_segment)) {
      merged.back().end_frame = seg.end_frame;
    } else {
      merged.push_back(seg);
    }
  }
  // A short leading segment has no predecessor; fold it into its successor.
  if (merged.size() > 1 && merged.front().length() < cfg.min_segment) {
    merged[1].start_frame = merged[0].start_frame;
    merged.erase(merged.begin());
  }

  // Consecutive lane-change segments become one; the longer constituent's
  // longitudinal state survives.
  std::vector<Segment> final_segs;
  std::vector<std::int64_t> dominant_len;
  for (const auto& seg : merged) {
    if (!final_segs.empty() && final_segs.back().label == seg.label) {
      final_segs.back().end_frame = seg.end_frame;
      continue;
    }
    if (!final_segs.empty() && final_segs.back().label.lat == Lateral::LaneChange &&
        seg.label.lat == Lateral::LaneChange) {
      auto& prev = final_segs.back();
      if (seg.length() > dominant_len.back()) {
        prev.label.lon = seg.label.lon;
        dominant_len.back() = seg.length();
      }
      prev.end_frame = seg.end_frame;
      continue;
    }
    final_segs.push_back(seg);
    dominant_len.push_back(seg.length());
  }

  for (std::size_t i = 1; i < final_segs.size(); ++i)
    result.change_points.push_back(
        {final_segs[i].start_frame, final_segs[i - 1].label, final_segs[i].label});
  result.segments = std::move(final_segs);
  return result;
}

PostprocessResult detect_behavior(const Trajectory& traj, const DetectorConfig& cfg) {
  if (traj.points.empty()) return {};
  auto states = detect_longitudinal(traj, cfg);
  auto lateral = detect_lateral(traj, cfg);
  return postprocess(states, lateral, traj.first_frame(), cfg);
}

// -----------------------------------------------------------------------------

std::vector<double> ema_window_energy(std::span<const double> signal, int window, double alpha) {
  const std::size_t n = signal.size();
  std::vector<double> energy(n, 0.0);
  if (n == 0 || window < 1) return energy;
  std::vector<double> prefix(n + 1, 0.0);
  double ema = signal[0];
  for (std::size_t t = 0; t < n; ++t) {
    ema = alpha * signal[t] + (1.0 - alpha) * ema;
    const double r = signal[t] - ema;
    prefix[t + 1] = prefix[t] + r * r;
  }
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  for (std::size_t t = 0; t < n; ++t) {
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(t) - half);
    const auto hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n) - 1,
                                             static_cast<std::ptrdiff_t>(t) + half);
    energy[t] = (prefix[static_cast<std::size_t>(hi) + 1] - prefix[static_cast<std::size_t>(lo)]) / window;
  }
  return energy;
}

std::vector<std::int64_t> detect_ema(const Trajectory& traj, const EmaConfig& cfg) {
  const std::size_t n = traj.points.size();
  if (n == 0) return {};
  std::vector<double> ax(n), vy(n);
  for (std::size_t i = 0; i < n; ++i) {
    ax[i] = traj.points[i].ax;
    vy[i] = traj.points[i].vy;
  }

  struct Candidate {
    std::size_t t;
    double score;
  };
  std::vector<Candidate> candidates;
  Candidate global{0, -1.0};
  int min_window = 0;
  for (const auto* channel : {&ax, &vy}) {
    for (int w : cfg.windows) {
      if (w < 1 || static_cast<std::size_t>(w) > n) continue;
      min_window = min_window == 0 ? w : std::min(min_window, w);
      auto energy = ema_window_energy(*channel, w, cfg.alpha);
      auto sorted = energy;
      std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n / 2), sorted.end());
      const double threshold = cfg.peak_factor * sorted[n / 2];
      for (std::size_t t = 0; t < n; ++t)
        if (energy[t] > global.score) global = {t, energy[t]};
      for (std::size_t t = 1; t + 1 < n; ++t) {
        if (energy[t] > energy[t - 1] && energy[t] > energy[t + 1] && energy[t] > threshold)
          candidates.push_back({t, threshold > 0.0 ? energy[t] / threshold : energy[t]});
      }
    }
  }

  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.t < b.t || (a.t == b.t && a.score > b.score); });
  std::vector<Candidate> kept;
  for (const auto& c : candidates) {
    if (!kept.empty() && static_cast<long>(c.t - kept.back().t) < min_window) {
      if (c.score > kept.back().score) kept.back() = c;
      continue;
    }
    kept.push_back(c);
  }

  std::vector<std::int64_t> frames;
  for (const auto& c : kept) frames.push_back(traj.points[c.t].frame);
  if (frames.empty()) frames.push_back(traj.points[global.t].frame);
  return frames;
}

// -----------------------------------------------------------------------------

DetectionMatch DetectionMatch::from_counts(long tp, long fp, long fn) {
  DetectionMatch m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  return m;
}

DetectionMatch& DetectionMatch::operator+=(const DetectionMatch& other) {
  *this = from_counts(tp + other.tp, fp + other.fp, fn + other.fn);
  return *this;
}

DetectionMatch evaluate_detection(std::span<const PredictedEvent> predicted,
                                  std::span<const TruthEvent> truth, int window) {
  std::vector<PredictedEvent> preds(predicted.begin(), predicted.end());
  std::stable_sort(preds.begin(), preds.end(),
                   [](const PredictedEvent& a, const PredictedEvent& b) { return a.frame < b.frame; });
  std::vector<TruthEvent> truths(truth.begin(), truth.end());
  std::stable_sort(truths.begin(), truths.end(),
                   [](const TruthEvent& a, const TruthEvent& b) { return a.center < b.center; });

  const std::int64_t half = window / 2;
  std::vector<std::uint8_t> matched(truths.size(), 0);
  long tp = 0, fp = 0;
  for (const auto& p : preds) {
    bool hit = false;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (matched[i]) continue;
      const auto& t = truths[i];
      if (p.frame < t.center - half || p.frame >= t.center - half + window) continue;
      if (p.label && *p.label != t.label) continue;
      matched[i] = 1;
      hit = true;
      break;
    }
    hit ? ++tp : ++fp;
  }
  const long fn = static_cast<long>(std::count(matched.begin(), matched.end(), 0));
  return DetectionMatch::from_counts(tp, fp, fn);
}

} // namespace hwscen
