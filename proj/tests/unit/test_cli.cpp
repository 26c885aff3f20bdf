#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hwscen/config.hpp"
#include "hwscen/errors.hpp"
#include "hwscen/stages.hpp"

using namespace hwscen;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("hwscen_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Config tiny() {
  Config c;
  c.synth.scenes = 8;
  c.model.codebook_size = 4;
  c.model.latent_dim = 4;
  c.model.hidden = {16};
  c.train.epochs = 3;
  c.extraction.augment_count = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Silence {
  std::streambuf* out = std::cout.rdbuf();
  std::streambuf* err = std::cerr.rdbuf();
  std::ostringstream out_buf, err_buf;
  Silence() {
    std::cout.rdbuf(out_buf.rdbuf());
    std::cerr.rdbuf(err_buf.rdbuf());
  }
  ~Silence() {
    std::cout.rdbuf(out);
    std::cerr.rdbuf(err);
  }
};

} // namespace

TEST_CASE("config parsing") {
  auto j = config_to_json(Config{});
  CHECK_NOTHROW(config_from_json(j));
  CHECK(config_to_json(config_from_json(j)) == j);

  auto bad = j;
  bad["train"]["learning_rat"] = 0.1;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  bad = j;
  bad["colour"] = 1;
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);

  Config c;
  apply_override(c, "train.epochs=7");
  apply_override(c, "seed=9");
  apply_override(c, "synth.kind=random");
  apply_override(c, "extraction.class_filter=[\"KL->LC\"]");
  CHECK(c.train.epochs == 7);
  CHECK(c.seed == 9);
  CHECK(c.synth.kind == "random");
  REQUIRE(c.extraction.window.class_filter.size() == 1);
  CHECK(c.extraction.window.class_filter[0] == std::pair{Lateral::KeepLane, Lateral::LaneChange});
  CHECK_THROWS_AS(apply_override(c, "train.nope=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.epochs"), ConfigError);
  CHECK_THROWS_AS(parse_class_filter("KL-LC"), ConfigError);

  CHECK(stage_seed(c, SeedStage::Train) == 14);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), StageError);

  Config v;
  v.jobs = 0;
  CHECK_THROWS_AS(v.validate(), ConfigError);
}

TEST_CASE("a stage without its input names the missing path") {
  const auto d = scratch("missing");
  try {
    run_detect(tiny(), d / "trajectories.csv", std::nullopt, d / "cp.csv", d / "det.json");
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find((d / "trajectories.csv").string()) != std::string::npos);
  }
  CHECK_THROWS_AS(run_train(tiny(), d / "dataset_aug.hwd", d / "split.csv", d / "m.ckpt", d / "l.csv"), StageError);
}

TEST_CASE("class filter that matches nothing leaves an empty dataset") {
  const auto d = scratch("filter");
  Silence quiet;
  auto c = tiny();
  run_synth(c, d / "raw", d / "truth.csv");
  run_ingest(c, d / "raw", d / "trajectories.csv");
  run_detect(c, d / "trajectories.csv", std::nullopt, d / "cp.csv", d / "det.json");
  // Keep only the returns to the lane, so no change point goes KL -> LC.
  {
    std::ifstream in(d / "cp.csv");
    std::ofstream out(d / "cp_long.csv");
    std::string line;
    std::getline(in, line);
    out << line << '\n';
    while (std::getline(in, line))
      if (line.find("lane_change,") != std::string::npos) out << line << '\n';
  }
  c.extraction.class_filter = {"KL->LC"};
  c.extraction.window.class_filter = {parse_class_filter("KL->LC")};
  const auto s = run_extract(c, d / "trajectories.csv", d / "cp_long.csv", d / "ds.hwd");
  CHECK(s.get("records") == "0");
  CHECK(quiet.err_buf.str().find("no scenarios extracted") != std::string::npos);
  CHECK(fs::exists(d / "ds.hwd"));
}

TEST_CASE("pipeline equals the stages run one by one and reruns are byte-identical") {
  const auto c = tiny();
  const auto a = scratch("pipe_a");
  const auto b = scratch("pipe_b");
  Silence quiet;
  run_pipeline(c, a);

  run_synth(c, b / "raw", b / "truth.csv");
  run_ingest(c, b / "raw", b / "trajectories.csv");
  run_detect(c, b / "trajectories.csv", b / "truth.csv", b / "change_points.csv", b / "detection.json");
  run_extract(c, b / "trajectories.csv", b / "change_points.csv", b / "dataset.hwd");
  run_augment(c, b / "trajectories.csv", b / "dataset.hwd", b / "dataset_aug.hwd", b / "split.csv");
  Config nodk = c;
  nodk.train.lambda_cl = nodk.train.lambda_int = 0.0;
  for (const auto& [name, vc] : {std::pair{std::string("nodk"), nodk}, std::pair{std::string("dk"), c}}) {
    const auto v = b / name;
    run_train(vc, b / "dataset_aug.hwd", b / "split.csv", v / "model.ckpt", v / "loss.csv");
    run_cluster(vc, b / "dataset_aug.hwd", b / "split.csv", v / "model.ckpt", v / "assignments.csv");
    run_evaluate(vc, b / "dataset_aug.hwd", v / "assignments.csv", v / "model.ckpt", v / "clustering.json");
  }
  run_report(b / "detection.json", {b / "nodk" / "clustering.json", b / "dk" / "clustering.json"}, b / "report.json",
             b / "report.txt");

  for (const char* f : {"truth.csv", "trajectories.csv", "change_points.csv", "detection.json", "dataset.hwd",
                        "dataset_aug.hwd", "split.csv", "nodk/model.ckpt", "dk/model.ckpt", "dk/assignments.csv",
                        "dk/clustering.json", "report.json", "report.txt"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }

  // Rerunning one stage in place rewrites identical bytes.
  const auto before = slurp(a / "dk" / "model.ckpt");
  run_train(c, a / "dataset_aug.hwd", a / "split.csv", a / "dk" / "model.ckpt", a / "dk" / "loss.csv");
  CHECK(slurp(a / "dk" / "model.ckpt") == before);

  // More threads, same bytes.
  auto c4 = c;
  c4.jobs = 4;
  const auto e = scratch("pipe_jobs");
  run_pipeline(c4, e);
  CHECK(slurp(a / "dk" / "assignments.csv") == slurp(e / "dk" / "assignments.csv"));
  CHECK(slurp(a / "report.json") == slurp(e / "report.json"));
}

#ifdef HWSCEN_BIN
TEST_CASE("command line exit codes") {
  const auto d = scratch("cli");
  const std::string bin = HWSCEN_BIN;
  auto run = [&](const std::string& args) {
    const int st = std::system((bin + " " + args + " > " + (d / "log.txt").string() + " 2>&1").c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  };
  CHECK(run("detect --dir " + d.string()) == static_cast<int>(ErrorCategory::Stage));
  CHECK(slurp(d / "log.txt").find("error [") != std::string::npos);
  CHECK(run("synth --dir " + d.string() + " --set train.bogus=1") == static_cast<int>(ErrorCategory::Config));
  CHECK(run("nosuchcommand") != 0);
  CHECK(run("synth --dir " + d.string() + " --set synth.scenes=2") == 0);
  CHECK(fs::exists(d / "truth.csv"));
  CHECK(run("gradcheck --dir " + d.string()) == 0);
  CHECK(fs::exists(d / "gradcheck.json"));
}
#endif
