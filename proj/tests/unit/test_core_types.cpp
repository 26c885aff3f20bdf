#include <doctest.h>

#include <limits>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "hwscen/dataset_io.hpp"
#include "hwscen/errors.hpp"

using namespace hwscen;

TEST_CASE("composite label and class index form a bijection") {
  std::set<int> seen;
  std::set<std::string> names;
  for (int i = 0; i < kClasses; ++i) {
    const auto label = CompositeLabel::from_index(i);
    CHECK(label.index() == i);
    CHECK(parse_composite_label(to_string(label)) == label);
    seen.insert(label.index());
    names.insert(to_string(label));
    const auto one_hot = PseudoClassLabel::from_index(i);
    CHECK(one_hot.index() == i);
  }
  CHECK(seen.size() == 10);
  CHECK(names.size() == 10);
  CHECK_THROWS_AS(CompositeLabel::from_index(10), ContractError);
  CHECK_THROWS_AS(parse_composite_label("sideways_keep_lane"), ParseError);
}

TEST_CASE("validate_record") {
  const auto good = fx::valid_record();
  CHECK(validate_record(good).empty());

  SUBCASE("ego row at 0.5") {
    auto r = good;
    r.interaction.at(0, 10) = 0.5;
    const auto v = validate_record(r);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("ego row") != std::string::npos);
  }
  SUBCASE("dirty padding") {
    auto r = good;
    r.tensor.at(4, kVx, 20) = 0.25;
    const auto v = validate_record(r);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("zero features") != std::string::npos);
  }
  SUBCASE("neighbour sums") {
    auto r = good;
    r.interaction.at(1, 3) = 0.7;
    CHECK(validate_record(r).size() == 1);
  }
  SUBCASE("anchor without a change") {
    auto r = good;
    r.anchor.after = r.anchor.before;
    r.pseudo_class = PseudoClassLabel::from_index(r.anchor.after.index());
    CHECK(validate_record(r).size() == 1);
  }
}

TEST_CASE("validate_trajectory flags gaps") {
  auto t = fx::cruise(1, 5);
  CHECK(validate_trajectory(t).empty());
  t.points[3].frame += 1;
  CHECK_FALSE(validate_trajectory(t).empty());
}

TEST_CASE("real formatting round-trips exactly") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    CHECK(parse_real(format_real(v)) == v);
  }
  CHECK(parse_real(format_real(0.1)) == 0.1);
  CHECK(parse_real(format_real(std::numeric_limits<double>::denorm_min())) ==
        std::numeric_limits<double>::denorm_min());
}

TEST_CASE("dataset round trip is bit-identical") {
  Dataset ds;
  for (std::uint64_t s = 1; s <= 4; ++s) {
    auto r = fx::valid_record(s);
    r.provenance.anchor_frame += static_cast<std::int64_t>(s);
    r.anchor.frame = r.provenance.anchor_frame;
    r.id = make_record_id(r.provenance);
    ds.records.push_back(r);
  }
  ds.records[3].augmentation_parent = ds.records[0].id;
  std::stringstream ss;
  write_dataset(ss, ds);
  const auto back = read_dataset(ss);
  REQUIRE(back.records.size() == ds.records.size());
  for (std::size_t i = 0; i < ds.records.size(); ++i) CHECK(back.records[i] == ds.records[i]);

  std::stringstream again;
  write_dataset(again, back);
  std::stringstream first;
  write_dataset(first, ds);
  CHECK(again.str() == first.str());
}

TEST_CASE("dataset reader rejects unknown versions") {
  Dataset ds;
  ds.records.push_back(fx::valid_record());
  std::stringstream ss;
  write_dataset(ss, ds);
  auto text = ss.str();
  const std::string field = std::string("version=") + kDatasetVersion;
  const auto pos = text.find(field);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, field.size(), "version=999");
  std::stringstream bad(text);
  CHECK_THROWS_AS(read_dataset(bad), FormatError);
}
