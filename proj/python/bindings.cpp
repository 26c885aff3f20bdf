#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <iostream>
#include <sstream>

#include "hwscen/behavior_change.hpp"
#include "hwscen/clustering.hpp"
#include "hwscen/config.hpp"
#include "hwscen/cvqvae.hpp"
#include "hwscen/dgsfm.hpp"
#include "hwscen/errors.hpp"
#include "hwscen/metrics.hpp"
#include "hwscen/stages.hpp"

namespace py = pybind11;
using namespace hwscen;

namespace {

Config config_from(const std::string& json_text, const std::vector<std::string>& overrides) {
  Config cfg = json_text.empty() ? Config{} : config_from_json(nlohmann::json::parse(json_text));
  for (const auto& o : overrides) apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

py::dict match_dict(const DetectionMatch& m) {
  py::dict d;
  d["tp"] = m.tp;
  d["fp"] = m.fp;
  d["fn"] = m.fn;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  return d;
}

std::vector<std::string> lines(const std::vector<StageSummary>& log) {
  std::vector<std::string> out;
  for (const auto& s : log) out.push_back(s.line());
  return out;
}

} // namespace

PYBIND11_MODULE(_hwscen, m) {
  m.doc() = "Highway scenario mining core";
  py::register_exception<Error>(m, "HwscenError", PyExc_RuntimeError);

  m.def("detection_from_counts", [](long tp, long fp, long fn) { return match_dict(DetectionMatch::from_counts(tp, fp, fn)); },
        py::arg("tp"), py::arg("fp"), py::arg("fn"));

  m.def(
      "detect_longitudinal",
      [](const std::vector<double>& ax) {
        std::vector<std::string> out;
        for (auto s : detect_longitudinal(ax, DetectorConfig{})) out.push_back(to_string(s));
        return out;
      },
      py::arg("ax"), "Per-frame longitudinal state names for an acceleration series.");

  m.def(
      "cluster_entropy",
      [](const std::vector<int>& labels, const std::vector<int>& classes, int clusters) {
        ClusterAssignment a{Backend::Codebook, labels, clusters};
        const auto r = cluster_entropy(a, classes);
        py::dict d;
        d["h_avg"] = r.h_avg;
        d["per_cluster"] = r.per_cluster;
        d["non_empty"] = r.non_empty;
        return d;
      },
      py::arg("labels"), py::arg("classes"), py::arg("clusters"));

  m.def(
      "quantize",
      [](const Eigen::VectorXd& z, const Eigen::MatrixXd& codebook) {
        const auto q = quantize(z, codebook);
        return py::make_tuple(q.index, q.z_q);
      },
      py::arg("z"), py::arg("codebook"), "Nearest codebook row; ties go to the lowest index.");

  m.def(
      "v_egg",
      [](std::pair<double, double> other, std::pair<double, double> self, std::pair<double, double> v) {
        return v_egg({other.first, other.second}, {self.first, self.second}, {v.first, v.second}, EggPotentialParams{});
      },
      py::arg("other"), py::arg("self_pos"), py::arg("velocity"));

  m.def(
      "beta",
      [](std::pair<double, double> ego_pos, std::pair<double, double> ego_vel, std::pair<double, double> nb_pos,
         std::pair<double, double> nb_vel) {
        const AgentState ego{{ego_pos.first, ego_pos.second}, {ego_vel.first, ego_vel.second}};
        const AgentState nb{{nb_pos.first, nb_pos.second}, {nb_vel.first, nb_vel.second}};
        const auto b = beta_components(ego, nb, DgsfmConfig{});
        return py::make_tuple(b.a, b.b);
      },
      py::arg("ego_pos"), py::arg("ego_vel"), py::arg("nb_pos"), py::arg("nb_vel"));

  // Points are rows here, as in numpy; the core takes columns.
  m.def(
      "kmeans",
      [](const Eigen::MatrixXd& points, int k, std::uint64_t seed) {
        const auto r = kmeans(points.transpose(), k, seed);
        py::dict d;
        d["labels"] = r.assignment.labels;
        d["centroids"] = Eigen::MatrixXd(r.centroids.transpose());
        d["inertia"] = r.inertia;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0);

  m.def(
      "hierarchical",
      [](const Eigen::MatrixXd& points, int k, const std::string& linkage) {
        const auto r = hierarchical(points.transpose(), k, parse_linkage(linkage));
        std::vector<std::tuple<int, int, double>> merges;
        for (const auto& mg : r.merges) merges.emplace_back(mg.a, mg.b, mg.cost);
        py::dict d;
        d["labels"] = r.assignment.labels;
        d["merges"] = merges;
        return d;
      },
      py::arg("points"), py::arg("k"), py::arg("linkage") = "ward");

  m.def("_default_config", [] { return config_to_json(Config{}).dump(); });

  m.def(
      "_run_pipeline",
      [](const std::string& out_dir, const std::string& config_json, const std::vector<std::string>& overrides) {
        const auto cfg = config_from(config_json, overrides);
        std::ostringstream sink;
        auto* old = std::cout.rdbuf(sink.rdbuf());
        try {
          const auto log = run_pipeline(cfg, out_dir);
          std::cout.rdbuf(old);
          return lines(log);
        } catch (...) {
          std::cout.rdbuf(old);
          throw;
        }
      },
      py::arg("out_dir"), py::arg("config_json"), py::arg("overrides"));

  m.def(
      "_run_gradcheck",
      [](const std::string& out_json, const std::string& config_json) {
        return run_gradcheck(config_from(config_json, {}), out_json).line();
      },
      py::arg("out_json"), py::arg("config_json"));
}
