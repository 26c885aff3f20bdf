#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hwscen/config.hpp"
#include "hwscen/errors.hpp"
#include "hwscen/stages.hpp"

namespace fs = std::filesystem;
using namespace hwscen;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  int jobs = 0;
  std::string dir = "out";
};

Config resolve(const Common& c) {
  Config cfg = c.config.empty() ? Config{} : load_config(c.config);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.jobs > 0) cfg.jobs = c.jobs;
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON config file");
  sub->add_option("--set", c.overrides, "Override section.key=value (repeatable)");
  sub->add_option("--jobs", c.jobs, "Worker threads");
  sub->add_option("--dir", c.dir, "Artifact directory")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Highway scenario mining: detection, extraction, quantised clustering"};
  app.require_subcommand(1);

  Common c;
  std::string raw, truth, variant = "dk";
  std::vector<std::string> clustering;

  auto* synth = app.add_subcommand("synth", "Generate synthetic recordings and ground truth");
  add_common(synth, c);
  auto* ingest = app.add_subcommand("ingest", "Parse recordings, keep three-lane ones, normalise direction");
  add_common(ingest, c);
  ingest->add_option("--raw", raw, "Recordings directory (default <dir>/raw)");
  auto* detect = app.add_subcommand("detect", "Detect behaviour changes");
  add_common(detect, c);
  detect->add_option("--truth", truth, "Ground-truth CSV (default <dir>/truth.csv if present)");
  auto* extract = app.add_subcommand("extract", "Build scenario records around change points");
  add_common(extract, c);
  auto* augment = app.add_subcommand("augment", "Split records and add irrelevant-vehicle variants");
  add_common(augment, c);
  auto* trn = app.add_subcommand("train", "Train the quantised autoencoder");
  add_common(trn, c);
  auto* cluster = app.add_subcommand("cluster", "Cluster latents with every configured backend");
  add_common(cluster, c);
  auto* evaluate = app.add_subcommand("evaluate", "Purity and augmentation accuracy");
  add_common(evaluate, c);
  for (auto* s : {trn, cluster, evaluate}) s->add_option("--variant", variant, "Model subdirectory")->capture_default_str();
  auto* report = app.add_subcommand("report", "Assemble the comparison tables");
  add_common(report, c);
  report->add_option("--clustering", clustering, "Evaluation JSON files (default <dir>/{nodk,dk}/clustering.json)");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check on a toy model");
  add_common(gradcheck, c);
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage");
  add_common(pipeline, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const Config cfg = resolve(c);
    const fs::path d = c.dir;
    std::optional<StageSummary> s;
    if (*synth) {
      s = run_synth(cfg, d / "raw", d / "truth.csv");
    } else if (*ingest) {
      s = run_ingest(cfg, raw.empty() ? d / "raw" : fs::path(raw), d / "trajectories.csv");
    } else if (*detect) {
      std::optional<fs::path> t;
      if (!truth.empty()) t = truth;
      else if (fs::exists(d / "truth.csv")) t = d / "truth.csv";
      s = run_detect(cfg, d / "trajectories.csv", t, d / "change_points.csv", d / "detection.json");
    } else if (*extract) {
      s = run_extract(cfg, d / "trajectories.csv", d / "change_points.csv", d / "dataset.hwd");
    } else if (*augment) {
      s = run_augment(cfg, d / "trajectories.csv", d / "dataset.hwd", d / "dataset_aug.hwd", d / "split.csv");
    } else if (*trn) {
      s = run_train(cfg, d / "dataset_aug.hwd", d / "split.csv", d / variant / "model.ckpt", d / variant / "loss.csv");
    } else if (*cluster) {
      s = run_cluster(cfg, d / "dataset_aug.hwd", d / "split.csv", d / variant / "model.ckpt",
                      d / variant / "assignments.csv");
    } else if (*evaluate) {
      s = run_evaluate(cfg, d / "dataset_aug.hwd", d / variant / "assignments.csv", d / variant / "model.ckpt",
                       d / variant / "clustering.json");
    } else if (*report) {
      std::vector<fs::path> evals(clustering.begin(), clustering.end());
      if (evals.empty())
        for (const char* v : {"nodk", "dk"})
          if (fs::exists(d / v / "clustering.json")) evals.push_back(d / v / "clustering.json");
      std::optional<fs::path> det;
      if (fs::exists(d / "detection.json")) det = d / "detection.json";
      s = run_report(det, evals, d / "report.json", d / "report.txt");
    } else if (*gradcheck) {
      s = run_gradcheck(cfg, d / "gradcheck.json");
      std::cout << s->line() << '\n';
      return s->get("pass") == "1" ? 0 : 1;
    } else if (*pipeline) {
      run_pipeline(cfg, d);
      std::cout << std::ifstream(d / "report.txt").rdbuf();
      return 0;
    }
    if (s) std::cout << s->line() << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
