#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hwscen/core_types.hpp"
#include "hwscen/cvqvae.hpp"

namespace hwscen {

struct SnippetConfig {
  int snippet_len = 50;
  ModelConfig arch{16, {64}, 64};
  TrainConfig train{.lambda_cl = 0.0, .lambda_int = 0.0, .learning_rate = 0.05, .batch_size = 32, .epochs = 30};
};

/// Single-vehicle snippet tensor (1 slot x 6 features x len frames) with
/// positions relative to the snippet's first point.
ScenarioTensor snippet_tensor(const Trajectory& traj, std::size_t start, int len);

/// Boundary frames where consecutive snippet codes differ.
std::vector<std::int64_t> changes_from_codes(std::span<const int> codes, int snippet_len, std::int64_t first_frame);

class SnippetDetector {
 public:
  /// Trains a quantising autoencoder on every full snippet of `trajs`.
  void fit(std::span<const Trajectory> trajs, const SnippetConfig& cfg);
  bool trained() const { return model_.has_value(); }
  const ModelParams& params() const;

  /// Code index per consecutive non-overlapping snippet. StateError if untrained.
  std::vector<int> codes(const Trajectory& traj) const;
  std::vector<std::int64_t> detect(const Trajectory& traj) const;

 private:
  std::optional<ModelParams> model_;
  int snippet_len_ = 50;
};

std::vector<std::vector<std::int64_t>> detect_snippet_cluster(std::span<const Trajectory> trajs,
                                                              const SnippetDetector& detector);

} // namespace hwscen
