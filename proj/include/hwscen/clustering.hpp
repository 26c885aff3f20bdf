#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hwscen/core_types.hpp"
#include "hwscen/cvqvae.hpp"

namespace hwscen {

enum class Backend { Codebook, KMeans, Hierarchical };
std::string to_string(Backend b);
Backend parse_backend(const std::string& s);

struct ClusterAssignment {
  Backend backend = Backend::Codebook;
  std::vector<int> labels; // one per record, each in [0, Q)
  int Q = 0;
};

/// Encoder outputs, one column per record.
Eigen::MatrixXd latents(std::span<const ScenarioRecord> records, const ModelParams& model);

ClusterAssignment assign_codebook(std::span<const ScenarioRecord> records, const ModelParams& model);

struct KMeansResult {
  ClusterAssignment assignment;
  Eigen::MatrixXd centroids; // d x k
  std::vector<double> inertia; // after each assignment step
  int iterations = 0;
  bool converged = false;
};

/// k-means++ seeding, then Lloyd iterations until the assignment stops
/// changing or max_iter is reached. Columns of `points` are samples.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter = 300);

enum class Linkage { Ward, Average, Complete };
std::string to_string(Linkage l);
Linkage parse_linkage(const std::string& s);

struct Merge {
  int a = 0, b = 0; // cluster ids, a < b; the merged cluster keeps id a
  double cost = 0.0;
  friend bool operator==(const Merge&, const Merge&) = default;
};

struct HierarchicalResult {
  ClusterAssignment assignment;
  std::vector<Merge> merges;
};

/// Agglomerative clustering by Lance-Williams updates. Cluster ids are the
/// index of their lowest member; ties go to the lexicographically lowest pair.
/// Ward costs are the increase in within-cluster sum of squares.
HierarchicalResult hierarchical(const Eigen::MatrixXd& points, int k, Linkage linkage = Linkage::Ward);

/// Renumbers labels by first appearance so partitions compare directly.
std::vector<int> canonical_labels(std::span<const int> labels);

void write_assignment_csv(std::ostream& os, std::span<const std::string> ids, const ClusterAssignment& a);

} // namespace hwscen
