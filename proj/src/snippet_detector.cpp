#include "hwscen/snippet_detector.hpp"

#include "hwscen/errors.hpp"

namespace hwscen {

ScenarioTensor snippet_tensor(const Trajectory& traj, std::size_t start, int len) {
  if (start + static_cast<std::size_t>(len) > traj.points.size())
    throw ContractError("snippet_tensor: snippet exceeds trajectory");
  ScenarioTensor x(1, kFeatures, len);
  const auto& p0 = traj.points[start];
  for (int k = 0; k < len; ++k) {
    const auto& p = traj.points[start + static_cast<std::size_t>(k)];
    x.set_present(0, k, true);
    x.at(0, kX, k) = p.x - p0.x;
    x.at(0, kY, k) = p.y - p0.y;
    x.at(0, kVx, k) = p.vx;
    x.at(0, kVy, k) = p.vy;
    x.at(0, kAx, k) = p.ax;
    x.at(0, kAy, k) = p.ay;
  }
  return x;
}

std::vector<std::int64_t> changes_from_codes(std::span<const int> codes, int snippet_len, std::int64_t first_frame) {
  std::vector<std::int64_t> out;
  for (std::size_t i = 1; i < codes.size(); ++i)
    if (codes[i] != codes[i - 1]) out.push_back(first_frame + static_cast<std::int64_t>(i) * snippet_len);
  return out;
}

namespace {

Sample snippet_sample(const ScenarioTensor& x, const ModelParams& params) {
  Sample s;
  s.input = flatten_input(x, params);
  s.input_weight = Eigen::VectorXd::Ones(s.input.size());
  s.class_index = 0;
  s.interaction = Eigen::VectorXd::Ones(params.shape.interaction_dim());
  s.interaction_weight = Eigen::VectorXd::Zero(params.shape.interaction_dim());
  return s;
}

} // namespace

void SnippetDetector::fit(std::span<const Trajectory> trajs, const SnippetConfig& cfg) {
  if (cfg.snippet_len < 1) throw ConfigError("snippet: snippet_len must be >= 1");
  snippet_len_ = cfg.snippet_len;
  std::vector<ScenarioTensor> tensors;
  for (const auto& t : trajs)
    for (std::size_t s = 0; s + static_cast<std::size_t>(snippet_len_) <= t.points.size(); s += static_cast<std::size_t>(snippet_len_))
      tensors.push_back(snippet_tensor(t, s, snippet_len_));
  if (tensors.empty()) throw InputError("snippet: no trajectory is as long as one snippet");

  ModelShape shape{1, kFeatures, snippet_len_, kClasses};
  ModelParams params = init_params(shape, cfg.arch, cfg.train.seed);
  if (cfg.train.standardize) fit_standardization(tensors, params);
  std::vector<Sample> samples;
  samples.reserve(tensors.size());
  for (const auto& x : tensors) samples.push_back(snippet_sample(x, params));
  // Data-dependent codebook start, as in train().
  for (int q = 0; q < params.codebook_size(); ++q)
    params.weights.codebook.row(q) =
        encode_input(samples[static_cast<std::size_t>(q) * 7919 % samples.size()].input, params).transpose();
  model_ = train_samples(samples, std::move(params), cfg.train).params;
}

const ModelParams& SnippetDetector::params() const {
  if (!model_) throw StateError("snippet detector is not trained");
  return *model_;
}

std::vector<int> SnippetDetector::codes(const Trajectory& traj) const {
  const auto& p = params();
  std::vector<int> out;
  for (std::size_t s = 0; s + static_cast<std::size_t>(snippet_len_) <= traj.points.size(); s += static_cast<std::size_t>(snippet_len_)) {
    const auto z = encode(snippet_tensor(traj, s, snippet_len_), p);
    out.push_back(quantize(z, p.weights.codebook).index);
  }
  return out;
}

std::vector<std::int64_t> SnippetDetector::detect(const Trajectory& traj) const {
  const auto c = codes(traj);
  return changes_from_codes(c, snippet_len_, traj.points.empty() ? 0 : traj.first_frame());
}

std::vector<std::vector<std::int64_t>> detect_snippet_cluster(std::span<const Trajectory> trajs,
                                                              const SnippetDetector& detector) {
  std::vector<std::vector<std::int64_t>> out;
  out.reserve(trajs.size());
  for (const auto& t : trajs) out.push_back(detector.detect(t));
  return out;
}

} // namespace hwscen
