#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hwscen/behavior_change.hpp"
#include "hwscen/clustering.hpp"
#include "hwscen/cvqvae.hpp"

namespace hwscen {

/// Shannon entropy in bits, 0 log 0 = 0.
double entropy_bits(std::span<const double> probabilities);

struct EntropyResult {
  std::vector<double> per_cluster; // size Q; 0 for empty clusters
  std::vector<int> cluster_size;
  double h_avg = 0.0;               // unweighted mean over non-empty clusters
  int non_empty = 0;
};

/// Purity entropy of the empirical pseudo-class mix inside each cluster.
EntropyResult cluster_entropy(const ClusterAssignment& assignment, std::span<const int> class_index,
                              int classes = kClasses);
EntropyResult cluster_entropy(const ClusterAssignment& assignment, std::span<const PseudoClassLabel> labels);

/// Fraction of (parent id, child id) pairs that share a cluster.
double augmentation_accuracy(const ClusterAssignment& assignment, std::span<const std::string> ids,
                             std::span<const std::pair<std::string, std::string>> pairs);

/// Entropy of the classifier head's output at each used codebook vector,
/// averaged over non-empty clusters of a codebook assignment.
double classifier_entropy(const ClusterAssignment& assignment, const ModelParams& model);

struct DetectionRow {
  std::string method;
  DetectionMatch match;
};

struct ClusteringRow {
  Backend backend = Backend::Codebook;
  bool dk = false;
  double h_avg = 0.0;
  double accuracy = 0.0;
  std::optional<double> h_classifier;
};

struct Report {
  std::vector<DetectionRow> detection;
  std::vector<ClusteringRow> clustering;
};

nlohmann::json report_json(const Report& report);
Report report_from_json(const nlohmann::json& j);
/// Aligned text tables; best value per column is marked with '*'.
std::string report_text(const Report& report);

} // namespace hwscen
