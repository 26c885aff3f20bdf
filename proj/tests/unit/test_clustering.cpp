#include <doctest.h>

#include <numeric>
#include <set>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "fixtures.hpp"
#include "hwscen/clustering.hpp"
#include "hwscen/errors.hpp"

using namespace hwscen;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian(int d, int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, scale);
  return MatrixXd::NullaryExpr(d, n, [&] { return n01(rng); });
}

MatrixXd blobs(int per, std::mt19937_64& rng) {
  MatrixXd p = gaussian(3, 2 * per, rng, 0.1);
  for (int i = per; i < 2 * per; ++i) p(0, i) += 1.0;
  return p;
}

bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
  return true;
}

} // namespace

TEST_CASE("codebook assignment") {
  const auto model = init_params(ModelShape{}, ModelConfig{6, {8}, 8}, 4);
  std::vector<ScenarioRecord> recs{fx::valid_record(1), fx::valid_record(2), fx::valid_record(1)};
  auto m = model;
  m.weights.codebook.row(5) = encode(recs[1].tensor, model).transpose();
  const auto a = assign_codebook(recs, m);
  CHECK(a.Q == 8);
  CHECK(a.labels[1] == 5);
  CHECK(a.labels[0] == a.labels[2]);
  const auto z = latents(recs, m);
  for (int i = 0; i < 3; ++i) {
    int best = 0;
    for (int q = 1; q < 8; ++q)
      if ((m.weights.codebook.row(q).transpose() - z.col(i)).squaredNorm() <
          (m.weights.codebook.row(best).transpose() - z.col(i)).squaredNorm())
        best = q;
    CHECK(a.labels[static_cast<std::size_t>(i)] == best);
  }
}

TEST_CASE("k-means") {
  std::mt19937_64 rng(3);
  SUBCASE("one point per cluster") {
    const auto p = gaussian(4, 6, rng);
    const auto r = kmeans(p, 6, 1);
    CHECK(r.inertia.back() == 0.0);
    CHECK(std::set<int>(r.assignment.labels.begin(), r.assignment.labels.end()).size() == 6);
  }
  SUBCASE("two blobs") {
    const auto p = blobs(30, rng);
    const auto r = kmeans(p, 2, 9);
    std::vector<int> truth(60, 0);
    std::fill(truth.begin() + 30, truth.end(), 1);
    CHECK(same_partition(r.assignment.labels, truth));
    CHECK(r.converged);
  }
  SUBCASE("fixed point and monotone inertia") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto p = gaussian(5, 80, rng);
      const auto r = kmeans(p, 7, s);
      CHECK(r.converged);
      CHECK(oracle::is_fixed_point(p, r));
      for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] + 1e-12);
    }
  }
  SUBCASE("duplicates force empty-cluster reseeding") {
    MatrixXd p(2, 8);
    p << 0, 0, 0, 0, 0, 0, 5, 5, 0, 0, 0, 0, 0, 0, 5, 6;
    const auto r = kmeans(p, 3, 2);
    CHECK(r.assignment.labels.size() == 8);
    for (int l : r.assignment.labels) CHECK((l >= 0 && l < 3));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kmeans(gaussian(2, 3, rng), 4, 1), InputError);
  }
  SUBCASE("input order does not change well-separated partitions") {
    const auto p = blobs(20, rng);
    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd q(p.rows(), p.cols());
    for (int i = 0; i < 40; ++i) q.col(i) = p.col(perm[static_cast<std::size_t>(i)]);
    const auto a = kmeans(p, 2, 5).assignment.labels;
    const auto b = kmeans(q, 2, 5).assignment.labels;
    std::vector<int> back(40);
    for (int i = 0; i < 40; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = b[static_cast<std::size_t>(i)];
    CHECK(same_partition(a, back));
  }
}

TEST_CASE("hierarchical") {
  SUBCASE("n equals k") {
    std::mt19937_64 rng(1);
    const auto r = hierarchical(gaussian(2, 5, rng), 5);
    CHECK(r.merges.empty());
    CHECK(canonical_labels(r.assignment.labels) == std::vector<int>{0, 1, 2, 3, 4});
  }
  SUBCASE("collinear") {
    MatrixXd p(1, 3);
    p << 0, 1, 10;
    const auto r = hierarchical(p, 2);
    REQUIRE(r.merges.size() == 1);
    CHECK(r.merges[0] == Merge{0, 1, 0.5});
    CHECK(r.assignment.labels[0] == r.assignment.labels[1]);
    CHECK(r.assignment.labels[2] != r.assignment.labels[0]);
    // Next Ward step costs 2/3 * 9.5^2.
    const auto all = hierarchical(p, 1);
    CHECK(all.merges[1].cost == doctest::Approx(2.0 / 3.0 * 9.5 * 9.5));
  }
  SUBCASE("ties go to the lowest pair") {
    MatrixXd p(1, 4);
    p << 0, 1, 2, 3;
    const auto r = hierarchical(p, 3);
    CHECK(r.merges[0].a == 0);
    CHECK(r.merges[0].b == 1);
  }
  SUBCASE("matches the naive oracle for every linkage") {
    std::mt19937_64 rng(77);
    for (auto link : {Linkage::Ward, Linkage::Average, Linkage::Complete})
      for (int rep = 0; rep < 5; ++rep) {
        const int n = 5 + static_cast<int>(rng() % 30);
        const int k = 1 + static_cast<int>(rng() % 4);
        const auto p = gaussian(3, n, rng);
        CHECK(oracle::same_merges(hierarchical(p, k, link).merges, oracle::agglomerate(p, k, link)));
      }
  }
  SUBCASE("input order does not change the partition") {
    std::mt19937_64 rng(5);
    const auto p = gaussian(4, 25, rng);
    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    MatrixXd q(p.rows(), p.cols());
    for (int i = 0; i < 25; ++i) q.col(i) = p.col(perm[static_cast<std::size_t>(i)]);
    const auto a = hierarchical(p, 4).assignment.labels;
    const auto b = hierarchical(q, 4).assignment.labels;
    std::vector<int> back(25);
    for (int i = 0; i < 25; ++i) back[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = b[static_cast<std::size_t>(i)];
    CHECK(same_partition(a, back));
  }
  SUBCASE("errors") {
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(hierarchical(gaussian(2, 2, rng), 3), InputError);
  }
}

TEST_CASE("backend names and assignment files") {
  for (auto b : {Backend::Codebook, Backend::KMeans, Backend::Hierarchical}) CHECK(parse_backend(to_string(b)) == b);
  for (auto l : {Linkage::Ward, Linkage::Average, Linkage::Complete}) CHECK(parse_linkage(to_string(l)) == l);
  CHECK_THROWS_AS(parse_backend("dbscan"), ConfigError);
  ClusterAssignment a{Backend::KMeans, {2, 0, 2}, 3};
  const std::vector<std::string> ids{"a", "b", "c"};
  std::ostringstream os;
  write_assignment_csv(os, ids, a);
  CHECK(os.str() == "record_id,backend,label\na,kmeans,2\nb,kmeans,0\nc,kmeans,2\n");
  const std::vector<int> raw{7, 7, 3, 9, 3};
  CHECK(canonical_labels(raw) == std::vector<int>{0, 0, 1, 2, 1});
}
