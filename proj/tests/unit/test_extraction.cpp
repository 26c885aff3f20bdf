#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fixtures.hpp"
#include "hwscen/behavior_change.hpp"
#include "hwscen/errors.hpp"
#include "hwscen/extraction.hpp"

using namespace hwscen;

namespace {

const ChangePoint kCp{200, CompositeLabel{}, CompositeLabel{Longitudinal::Zero, Lateral::LaneChange}};

ChangePointMap one(std::int64_t id, ChangePoint cp = kCp) { return {{id, {cp}}}; }

// Ego 1 plus one neighbour per entry of `gaps` (metres ahead, lane offset).
std::vector<Trajectory> scene(const std::vector<std::pair<double, double>>& gaps, int frames = 400) {
  std::vector<Trajectory> out{fx::cruise(1, frames)};
  std::int64_t id = 10;
  for (auto [dx, dy] : gaps) out.push_back(fx::cruise(id++, frames, dx, dy));
  return out;
}

} // namespace

TEST_CASE("lonely ego gets padding only") {
  const auto trajs = scene({});
  const auto r = extract(trajs, one(1), ExtractionConfig{}, DgsfmConfig{});
  REQUIRE(r.records.size() == 1);
  const auto& rec = r.records[0];
  CHECK(validate_record(rec).empty());
  for (int s = 1; s < kSlots; ++s) {
    CHECK(rec.tensor.slot_empty(s));
    for (int t = 0; t < kObsFrames; ++t) CHECK(rec.interaction.at(s, t) == 0.0);
  }
  // Ego sits at the origin at the anchor (tensor frame 25).
  CHECK(rec.tensor.at(0, kX, 25) == 0.0);
  CHECK(rec.tensor.at(0, kY, 25) == 0.0);
  CHECK(rec.pseudo_class.index() == kCp.after.index());
  CHECK(rec.id == "r1_v1_f200");
}

TEST_CASE("eight nearest neighbours fill the slots in distance order") {
  const std::vector<std::pair<double, double>> gaps{{90, 0},  {-12, 3.75}, {45, -3.75}, {7, 3.75}, {-60, 0},
                                                    {30, 0},  {-33, -3.75}, {150, 0},  {-5, -3.75}, {70, 3.75}};
  const auto trajs = scene(gaps);
  const auto r = extract(trajs, one(1), ExtractionConfig{}, DgsfmConfig{});
  REQUIRE(r.records.size() == 1);
  const auto& rec = r.records[0];
  std::vector<double> dist;
  for (auto [dx, dy] : gaps) dist.push_back(std::hypot(dx, dy));
  auto sorted = dist;
  std::sort(sorted.begin(), sorted.end());
  for (int s = 1; s < kSlots; ++s) {
    const double d = std::hypot(rec.tensor.at(s, kX, 25), rec.tensor.at(s, kY, 25));
    CHECK(d == doctest::Approx(sorted[static_cast<std::size_t>(s - 1)]).epsilon(1e-9));
  }
  CHECK(validate_record(rec).empty());
  // Deterministic slot assignment.
  const auto again = extract(trajs, one(1), ExtractionConfig{}, DgsfmConfig{});
  CHECK(again.records[0] == rec);
}

TEST_CASE("windows that leave the track are skipped") {
  const auto trajs = scene({{20, 0}});
  ChangePoint early = kCp;
  early.frame = 30;
  const auto r = extract(trajs, one(1, early), ExtractionConfig{}, DgsfmConfig{});
  CHECK(r.records.empty());
  CHECK(r.skipped_window == 1);
  ChangePoint late = kCp;
  late.frame = 340;
  CHECK(extract(trajs, one(1, late), ExtractionConfig{}, DgsfmConfig{}).skipped_window == 1);
}

TEST_CASE("partially present neighbours are masked per frame") {
  auto trajs = scene({});
  trajs.push_back(fx::cruise(20, 60, 30.0, 3.75, 30.0, 190));
  const auto r = extract(trajs, one(1), ExtractionConfig{}, DgsfmConfig{});
  REQUIRE(r.records.size() == 1);
  const auto& rec = r.records[0];
  // Tensor covers frames 175..274; the neighbour lives in 190..249.
  CHECK_FALSE(rec.tensor.present(1, 14));
  CHECK(rec.tensor.present(1, 15));
  CHECK(rec.tensor.present(1, 74));
  CHECK_FALSE(rec.tensor.present(1, 75));
  CHECK(validate_record(rec).empty());
}

TEST_CASE("class filter") {
  ExtractionConfig cfg;
  cfg.class_filter = {{Lateral::KeepLane, Lateral::LaneChange}};
  const auto trajs = scene({{20, 0}});
  ChangePointMap cps{{1,
                      {{120, CompositeLabel{}, CompositeLabel{Longitudinal::Accelerate, Lateral::KeepLane}},
                       kCp,
                       {260, CompositeLabel{Longitudinal::Zero, Lateral::LaneChange}, CompositeLabel{}}}}};
  const auto r = extract(trajs, cps, cfg, DgsfmConfig{});
  REQUIRE(r.records.size() == 1);
  CHECK(r.filtered == 2);
  for (const auto& rec : r.records) {
    CHECK(rec.anchor.before.lat == Lateral::KeepLane);
    CHECK(rec.anchor.after.lat == Lateral::LaneChange);
  }
}

TEST_CASE("extracted corpus records are all valid") {
  std::mt19937_64 rng(8);
  for (int a = 0; a < 6; ++a) {
    const auto scripts = archetype_scene(static_cast<Archetype>(a % kArchetypeCount), rng, a + 1, 400, 0.05);
    const auto corpus = generate_synthetic(scripts, 0.04, 100 + a);
    ChangePointMap cps;
    for (const auto& t : corpus.trajectories) {
      const auto r = detect_behavior(t, DetectorConfig{});
      if (!r.change_points.empty()) cps[t.vehicle_id] = r.change_points;
    }
    for (const auto& rec : extract(corpus.trajectories, cps, ExtractionConfig{}, DgsfmConfig{}).records)
      CHECK(validate_record(rec).empty());
  }
}

TEST_CASE("augmentation") {
  const auto trajs = scene({{25, 3.75}, {-30, 0}});
  const auto parent = extract(trajs, one(1), ExtractionConfig{}, DgsfmConfig{}).records.at(0);
  const auto donor = fx::cruise(99, 300, 500.0, 0.0, 27.0);
  const auto child = augment_irrelevant(parent, donor, 80.0, 3);

  const int slot = inserted_slot(parent, child);
  REQUIRE(slot == 3);
  CHECK(child.augmentation_parent == parent.id);
  CHECK(child.pseudo_class == parent.pseudo_class);
  CHECK(validate_record(child).empty());
  double min_d = 1e300;
  for (int t = 0; t < kObsFrames; ++t) {
    CHECK(child.interaction.at(slot, t) == 0.0);
    min_d = std::min(min_d, std::hypot(child.tensor.at(slot, kX, t) - child.tensor.at(0, kX, t),
                                       child.tensor.at(slot, kY, t) - child.tensor.at(0, kY, t)));
  }
  CHECK(min_d > 80.0);
  for (int s = 0; s < slot; ++s)
    for (int t = 0; t < kObsFrames; ++t) {
      CHECK(child.interaction.at(s, t) == parent.interaction.at(s, t));
      CHECK(child.tensor.at(s, kX, t) == parent.tensor.at(s, kX, t));
    }

  auto restored = remove_slot(child, slot);
  restored.id = parent.id;
  restored.augmentation_parent.reset();
  CHECK(restored == parent);

  SUBCASE("donor with lateral motion everywhere") {
    auto wobbly = donor;
    for (auto& p : wobbly.points) p.ay = 0.5;
    CHECK_THROWS_AS(augment_irrelevant(parent, wobbly, 80.0, 1), AugmentationError);
  }
  SUBCASE("no free slot") {
    auto full = parent;
    for (int s = 1; s < kSlots; ++s)
      for (int t = 0; t < kObsFrames; ++t) full.tensor.set_present(s, t, true);
    CHECK_THROWS_AS(augment_irrelevant(full, donor, 80.0, 1), AugmentationError);
  }
}

TEST_CASE("split") {
  std::vector<ScenarioRecord> recs;
  for (int i = 0; i < 100; ++i) {
    ScenarioRecord r;
    r.id = "r" + std::to_string(i);
    recs.push_back(r);
  }
  auto s = split(recs, 0.85, 1);
  CHECK(s.train.size() == 85);
  CHECK(s.validation.size() == 15);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  CHECK(all.size() == 100);
  CHECK(split(recs, 0.85, 1).train == s.train);

  std::vector<ScenarioRecord> single(recs.begin(), recs.begin() + 1);
  CHECK(split(single, 0.85, 3).train.size() == 1);

  for (int i = 0; i < 10; ++i) {
    ScenarioRecord child;
    child.id = recs[static_cast<std::size_t>(i * 7)].id + "_aug";
    child.augmentation_parent = recs[static_cast<std::size_t>(i * 7)].id;
    recs.push_back(child);
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto fam = split(recs, 0.85, seed);
    std::set<std::string> train_ids;
    for (auto i : fam.train) train_ids.insert(recs[i].id);
    for (const auto& r : recs)
      if (r.augmentation_parent) CHECK(train_ids.count(r.id) == train_ids.count(*r.augmentation_parent));
  }
  CHECK_THROWS(split(recs, 1.0, 0));
}
