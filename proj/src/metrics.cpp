#include "hwscen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>

#include "hwscen/errors.hpp"

namespace hwscen {

double entropy_bits(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities)
    if (p > 0.0) h -= p * std::log2(p);
  return h;
}

EntropyResult cluster_entropy(const ClusterAssignment& assignment, std::span<const int> class_index, int classes) {
  if (assignment.labels.empty()) throw InputError("cluster_entropy: empty assignment");
  if (assignment.labels.size() != class_index.size())
    throw InputError("cluster_entropy: assignment and labels cover different records");
  const int Q = assignment.Q;
  std::vector<std::vector<int>> counts(static_cast<std::size_t>(Q), std::vector<int>(static_cast<std::size_t>(classes), 0));
  EntropyResult r;
  r.cluster_size.assign(static_cast<std::size_t>(Q), 0);
  r.per_cluster.assign(static_cast<std::size_t>(Q), 0.0);
  for (std::size_t i = 0; i < class_index.size(); ++i) {
    const int q = assignment.labels[i], c = class_index[i];
    if (q < 0 || q >= Q) throw InputError("cluster_entropy: label out of range");
    if (c < 0 || c >= classes) throw InputError("cluster_entropy: class index out of range");
    ++counts[static_cast<std::size_t>(q)][static_cast<std::size_t>(c)];
    ++r.cluster_size[static_cast<std::size_t>(q)];
  }
  double sum = 0.0;
  for (int q = 0; q < Q; ++q) {
    const int n = r.cluster_size[static_cast<std::size_t>(q)];
    if (n == 0) continue;
    std::vector<double> p;
    for (int c : counts[static_cast<std::size_t>(q)]) p.push_back(static_cast<double>(c) / n);
    r.per_cluster[static_cast<std::size_t>(q)] = entropy_bits(p);
    sum += r.per_cluster[static_cast<std::size_t>(q)];
    ++r.non_empty;
  }
  r.h_avg = sum / r.non_empty;
  return r;
}

EntropyResult cluster_entropy(const ClusterAssignment& assignment, std::span<const PseudoClassLabel> labels) {
  std::vector<int> idx;
  idx.reserve(labels.size());
  for (const auto& l : labels) idx.push_back(l.index());
  return cluster_entropy(assignment, idx, kClasses);
}

double augmentation_accuracy(const ClusterAssignment& assignment, std::span<const std::string> ids,
                             std::span<const std::pair<std::string, std::string>> pairs) {
  if (ids.size() != assignment.labels.size()) throw InputError("augmentation_accuracy: id count mismatch");
  if (pairs.empty()) throw InputError("augmentation_accuracy: no augmented pairs");
  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < ids.size(); ++i) label_of.emplace(ids[i], assignment.labels[i]);
  long hits = 0;
  for (const auto& [parent, child] : pairs) {
    auto p = label_of.find(parent), c = label_of.find(child);
    if (p == label_of.end()) throw InputError("augmentation_accuracy: record " + parent + " not assigned");
    if (c == label_of.end()) throw InputError("augmentation_accuracy: record " + child + " not assigned");
    hits += p->second == c->second;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

double classifier_entropy(const ClusterAssignment& assignment, const ModelParams& model) {
  if (assignment.labels.empty()) throw InputError("classifier_entropy: empty assignment");
  std::vector<char> used(static_cast<std::size_t>(model.codebook_size()), 0);
  for (int q : assignment.labels) used.at(static_cast<std::size_t>(q)) = 1;
  double sum = 0.0;
  int n = 0;
  for (int q = 0; q < model.codebook_size(); ++q) {
    if (!used[static_cast<std::size_t>(q)]) continue;
    const Eigen::VectorXd p = classify(model.weights.codebook.row(q).transpose(), model);
    sum += entropy_bits(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
    ++n;
  }
  return sum / n;
}

// --- report -----------------------------------------------------------------

namespace {

std::string fixed3(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w, bool left = false) {
  if (s.size() >= w) return s;
  return left ? s + std::string(w - s.size(), ' ') : std::string(w - s.size(), ' ') + s;
}

std::string backend_title(Backend b) {
  switch (b) {
    case Backend::Codebook: return "CVQ-VAE";
    case Backend::KMeans: return "k-means";
    case Backend::Hierarchical: return "Hierarchical";
  }
  return "?";
}

} // namespace

nlohmann::json report_json(const Report& report) {
  nlohmann::json j;
  j["format"] = "hwscen-report";
  j["version"] = 1;
  j["detection"] = nlohmann::json::array();
  for (const auto& r : report.detection)
    j["detection"].push_back({{"method", r.method},
                              {"precision", r.match.precision},
                              {"recall", r.match.recall},
                              {"tp", r.match.tp},
                              {"fp", r.match.fp},
                              {"fn", r.match.fn}});
  if (!report.clustering.empty()) {
    j["clustering"] = nlohmann::json::array();
    for (const auto& r : report.clustering) {
      nlohmann::json row{{"backend", to_string(r.backend)},
                         {"dk", r.dk},
                         {"purity", r.h_avg},
                         {"accuracy", r.accuracy}};
      if (r.h_classifier) row["purity_classifier"] = *r.h_classifier;
      j["clustering"].push_back(row);
    }
  }
  return j;
}

Report report_from_json(const nlohmann::json& j) {
  Report r;
  try {
    for (const auto& d : j.at("detection")) {
      DetectionRow row;
      row.method = d.at("method");
      row.match = DetectionMatch::from_counts(d.at("tp"), d.at("fp"), d.at("fn"));
      r.detection.push_back(row);
    }
    if (j.contains("clustering"))
      for (const auto& c : j.at("clustering")) {
        ClusteringRow row;
        row.backend = parse_backend(c.at("backend"));
        row.dk = c.at("dk");
        row.h_avg = c.at("purity");
        // null: no augmented pairs were evaluated
        row.accuracy = c.at("accuracy").is_null() ? std::nan("") : c.at("accuracy").get<double>();
        if (c.contains("purity_classifier")) row.h_classifier = c.at("purity_classifier").get<double>();
        r.clustering.push_back(row);
      }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  return r;
}

std::string report_text(const Report& report) {
  std::ostringstream os;
  os << "Behavior-change detection\n";
  double best_p = -1.0, best_r = -1.0;
  for (const auto& d : report.detection) {
    best_p = std::max(best_p, d.match.precision);
    best_r = std::max(best_r, d.match.recall);
  }
  os << pad("Method", 14, true) << pad("Precision ↑", 14) << pad("Recall ↑", 12) << pad("TP", 7) << pad("FP", 7)
     << pad("FN", 7) << '\n';
  for (const auto& d : report.detection) {
    auto mark = [](double v, double best) { return fixed3(v) + (v == best ? "*" : " "); };
    os << pad(d.method, 14, true) << pad(mark(d.match.precision, best_p), 12) << pad(mark(d.match.recall, best_r), 12)
       << pad(std::to_string(d.match.tp), 7) << pad(std::to_string(d.match.fp), 7)
       << pad(std::to_string(d.match.fn), 7) << '\n';
  }
  if (report.clustering.empty()) return os.str();

  // backend -> (no DK, DK) cells
  std::map<Backend, std::pair<const ClusteringRow*, const ClusteringRow*>> rows;
  for (const auto& c : report.clustering) {
    auto& slot = rows[c.backend];
    (c.dk ? slot.second : slot.first) = &c;
  }
  double best[4] = {INFINITY, -INFINITY, INFINITY, -INFINITY};
  for (const auto& [b, pr] : rows)
    for (int side = 0; side < 2; ++side) {
      const ClusteringRow* r = side ? pr.second : pr.first;
      if (!r) continue;
      best[side * 2] = std::min(best[side * 2], r->h_avg);
      best[side * 2 + 1] = std::max(best[side * 2 + 1], r->accuracy);
    }
  os << "\nClustering: cluster purity (lower is better) and augmentation accuracy (higher is better)\n";
  os << pad("", 14, true) << pad("no DK", 24) << pad("DK", 24) << '\n';
  os << pad("Backend", 14, true) << pad("purity ↓", 14) << pad("accuracy ↑", 14) << pad("purity ↓", 14)
     << pad("accuracy ↑", 14) << '\n';
  for (const auto& [b, pr] : rows) {
    os << pad(backend_title(b), 14, true);
    for (int side = 0; side < 2; ++side) {
      const ClusteringRow* r = side ? pr.second : pr.first;
      if (!r) {
        os << pad("-", 12) << pad("-", 12);
        continue;
      }
      os << pad(fixed3(r->h_avg) + (r->h_avg == best[side * 2] ? "*" : " "), 12)
         << pad(fixed3(r->accuracy) + (r->accuracy == best[side * 2 + 1] ? "*" : " "), 12);
    }
    os << '\n';
  }
  bool any_cls = false;
  for (const auto& c : report.clustering) any_cls |= c.h_classifier.has_value();
  if (any_cls) {
    os << "\nClassifier-based purity (codebook backend)\n";
    for (const auto& c : report.clustering)
      if (c.h_classifier) os << pad(c.dk ? "DK" : "no DK", 14, true) << fixed3(*c.h_classifier) << '\n';
  }
  return os.str();
}

} // namespace hwscen
