#include "hwscen/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>
#include <unordered_map>

#include "hwscen/errors.hpp"

namespace hwscen {

std::string to_string(Backend b) {
  switch (b) {
    case Backend::Codebook: return "codebook";
    case Backend::KMeans: return "kmeans";
    case Backend::Hierarchical: return "hierarchical";
  }
  return "?";
}

Backend parse_backend(const std::string& s) {
  if (s == "codebook") return Backend::Codebook;
  if (s == "kmeans") return Backend::KMeans;
  if (s == "hierarchical") return Backend::Hierarchical;
  throw ConfigError("unknown clustering backend '" + s + "'");
}

std::string to_string(Linkage l) {
  switch (l) {
    case Linkage::Ward: return "ward";
    case Linkage::Average: return "average";
    case Linkage::Complete: return "complete";
  }
  return "?";
}

Linkage parse_linkage(const std::string& s) {
  if (s == "ward") return Linkage::Ward;
  if (s == "average") return Linkage::Average;
  if (s == "complete") return Linkage::Complete;
  throw ConfigError("unknown linkage '" + s + "'");
}

Eigen::MatrixXd latents(std::span<const ScenarioRecord> records, const ModelParams& model) {
  Eigen::MatrixXd z(model.arch.latent_dim, static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) z.col(static_cast<Eigen::Index>(i)) = encode(records[i].tensor, model);
  return z;
}

ClusterAssignment assign_codebook(std::span<const ScenarioRecord> records, const ModelParams& model) {
  ClusterAssignment a;
  a.backend = Backend::Codebook;
  a.Q = model.codebook_size();
  a.labels.reserve(records.size());
  for (const auto& r : records) a.labels.push_back(quantize(encode(r.tensor, model), model.weights.codebook).index);
  return a;
}

namespace {

int nearest_centroid(const Eigen::MatrixXd& c, const Eigen::MatrixXd& p, Eigen::Index i, double* dist) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    const double d = (p.col(i) - c.col(j)).squaredNorm();
    if (d < bd) {
      bd = d;
      best = static_cast<int>(j);
    }
  }
  if (dist) *dist = bd;
  return best;
}

} // namespace

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter) {
  const Eigen::Index n = points.cols();
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (n < k) throw InputError("kmeans: " + std::to_string(n) + " latents for k = " + std::to_string(k));
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  Eigen::MatrixXd c(points.rows(), k);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
  c.col(0) = points.col(first);
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], (points.col(i) - c.col(j - 1)).squaredNorm());
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[static_cast<std::size_t>(i)];
        if (r < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng);
    }
    c.col(j) = points.col(pick);
  }

  KMeansResult res;
  res.assignment.backend = Backend::KMeans;
  res.assignment.Q = k;
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int it = 0; it <= max_iter; ++it) {
    std::vector<int> next(static_cast<std::size_t>(n));
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      next[static_cast<std::size_t>(i)] = nearest_centroid(c, points, i, &dist[static_cast<std::size_t>(i)]);
      inertia += dist[static_cast<std::size_t>(i)];
    }
    res.inertia.push_back(inertia);
    if (next == labels) {
      res.converged = true;
      break;
    }
    labels = std::move(next);
    if (it == max_iter) break;
    res.iterations = it + 1;

    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(points.rows(), k);
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.col(labels[static_cast<std::size_t>(i)]) += points.col(i);
      ++count[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
    }
    for (int j = 0; j < k; ++j) {
      if (count[static_cast<std::size_t>(j)] > 0) {
        c.col(j) = sum.col(j) / count[static_cast<std::size_t>(j)];
        continue;
      }
      // Empty cluster: move it onto the point farthest from its centroid.
      const auto far = std::max_element(dist.begin(), dist.end()) - dist.begin();
      c.col(j) = points.col(far);
      dist[static_cast<std::size_t>(far)] = 0.0;
    }
  }
  res.assignment.labels = std::move(labels);
  res.centroids = std::move(c);
  return res;
}

HierarchicalResult hierarchical(const Eigen::MatrixXd& points, int k, Linkage linkage) {
  const auto n = static_cast<int>(points.cols());
  if (k < 1) throw ConfigError("hierarchical: k must be >= 1");
  if (n < k) throw InputError("hierarchical: " + std::to_string(n) + " latents for k = " + std::to_string(k));

  // d(i, j) for i < j, stored in a full matrix for simple updates.
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double sq = (points.col(i) - points.col(j)).squaredNorm();
      d(i, j) = linkage == Linkage::Ward ? 0.5 * sq : std::sqrt(sq);
    }
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<char> active(static_cast<std::size_t>(n), 1);
  std::vector<int> owner(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) owner[static_cast<std::size_t>(i)] = i;

  HierarchicalResult res;
  for (int clusters = n; clusters > k; --clusters) {
    int bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        if (d(i, j) < best) {
          best = d(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    const double ni = size[static_cast<std::size_t>(bi)], nj = size[static_cast<std::size_t>(bj)];
    for (int m = 0; m < n; ++m) {
      if (!active[static_cast<std::size_t>(m)] || m == bi || m == bj) continue;
      const double nm = size[static_cast<std::size_t>(m)];
      double v = 0.0;
      switch (linkage) {
        case Linkage::Ward:
          v = ((ni + nm) * d(m, bi) + (nj + nm) * d(m, bj) - nm * best) / (ni + nj + nm);
          break;
        case Linkage::Average:
          v = (ni * d(m, bi) + nj * d(m, bj)) / (ni + nj);
          break;
        case Linkage::Complete:
          v = std::max(d(m, bi), d(m, bj));
          break;
      }
      d(m, bi) = d(bi, m) = v;
    }
    size[static_cast<std::size_t>(bi)] += size[static_cast<std::size_t>(bj)];
    active[static_cast<std::size_t>(bj)] = 0;
    for (auto& o : owner)
      if (o == bj) o = bi;
    res.merges.push_back({bi, bj, best});
  }

  std::unordered_map<int, int> label_of;
  for (int i = 0; i < n; ++i)
    if (active[static_cast<std::size_t>(i)]) label_of.emplace(i, static_cast<int>(label_of.size()));
  res.assignment.backend = Backend::Hierarchical;
  res.assignment.Q = k;
  res.assignment.labels.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) res.assignment.labels.push_back(label_of.at(owner[static_cast<std::size_t>(i)]));
  return res;
}

std::vector<int> canonical_labels(std::span<const int> labels) {
  std::unordered_map<int, int> map;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(map.try_emplace(l, static_cast<int>(map.size())).first->second);
  return out;
}

void write_assignment_csv(std::ostream& os, std::span<const std::string> ids, const ClusterAssignment& a) {
  if (ids.size() != a.labels.size()) throw ContractError("assignment: id count does not match labels");
  os << "record_id,backend,label\n";
  for (std::size_t i = 0; i < ids.size(); ++i) os << ids[i] << ',' << to_string(a.backend) << ',' << a.labels[i] << '\n';
}

} // namespace hwscen
