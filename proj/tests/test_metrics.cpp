#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "dydec/metrics.hpp"
#include "helpers.hpp"

using namespace dydec;

namespace {

PolyphonyVector vec(std::vector<int> p) { return {std::move(p), 0.01}; }

}  // namespace

TEST_CASE("polyphony metrics on [2, 3, 3, 2, 4, 1]") {
  const PolyphonyVector v = vec({2, 3, 3, 2, 4, 1});
  CHECK(ratio_polyp(v) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(max_polyp(v) == 4);
  CHECK(mean_polyp(v) == doctest::Approx(9.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("polyphony metrics: trivial vectors") {
  CHECK(ratio_polyp(vec({0, 0, 0})) == 0.0);
  CHECK(ratio_polyp(vec({2, 2})) == 1.0);
  CHECK(max_polyp(vec({0, 0})) == 0);
  CHECK(max_polyp(vec({0, 1, 2, 5})) == 5);
  CHECK(mean_polyp(vec({1, 1, 1})) == 0.0);
  CHECK(mean_polyp(vec({7})) == 6.0);
}

TEST_CASE("polyphony_vector: simple label sets") {
  const PolyphonyVector whole = polyphony_vector(std::vector<EventLabel>{{0.0, 2.0, 0}}, 20, 2.0);
  for (int p : whole.p) CHECK(p == 1);

  const PolyphonyVector disjoint =
      polyphony_vector(std::vector<EventLabel>{{0.05, 0.4, 0}, {0.6, 0.95, 0}}, 10, 1.0);
  CHECK(max_polyp(disjoint) == 1);

  const PolyphonyVector three =
      polyphony_vector(std::vector<EventLabel>{{0.0, 0.48, 0}, {0.41, 1.0, 0}, {0.42, 0.47, 0}}, 10, 1.0);
  CHECK(std::count(three.p.begin(), three.p.end(), 3) == 1);
  CHECK(three.p[3] == 1);
  CHECK(three.p[4] == 3);
  CHECK(three.p[5] == 1);
}

TEST_CASE("polyphony metrics: bounds and refinement invariance") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> p(1 + rng() % 40);
    for (int& x : p) x = static_cast<int>(rng() % 6);
    const PolyphonyVector v = vec(p);
    std::vector<int> dup;
    for (int x : p) dup.insert(dup.end(), {x, x});
    const PolyphonyVector d{dup, 0.005};
    CHECK(ratio_polyp(d) == ratio_polyp(v));
    CHECK(max_polyp(d) == max_polyp(v));
    CHECK(mean_polyp(d) == doctest::Approx(mean_polyp(v)).epsilon(1e-15));
    CHECK(ratio_polyp(v) >= 0.0);
    CHECK(ratio_polyp(v) <= 1.0);
    if (max_polyp(v) >= 1) CHECK(mean_polyp(v) <= max_polyp(v) - 1);
  }
}

TEST_CASE("mae, mse and accu_rate") {
  const std::vector<double> y{2, 4}, yh{3, 6};
  CHECK(mae(y, yh) == doctest::Approx(1.5));
  CHECK(mse(y, yh) == doctest::Approx(std::sqrt(2.5)));
  CHECK(mae(y, y) == 0.0);
  CHECK(mse(y, y) == 0.0);
  CHECK(accu_rate(y, y, 0) == 1.0);
  const std::vector<double> off{3, 5};
  CHECK(accu_rate(y, off, 0) == 0.0);
  CHECK(accu_rate(y, off, 1) == 1.0);
  CHECK(accu_rate(y, std::vector<double>{2.4, 3.6}, 0) == 1.0);
}

TEST_CASE("RMS error is never below MAE") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(1 + rng() % 50);
    const Vector a = testutil::random_vector(n, rng, 0, 10), b = testutil::random_vector(n, rng, 0, 10);
    std::vector<double> va(a.begin(), a.end()), vb(b.begin(), b.end());
    CHECK(mse(va, vb) >= mae(va, vb) - 1e-12);
  }
}

TEST_CASE("stratified_report") {
  std::vector<ClipResult> r{{"a", 2, 2.5, 0.0, 1, 0.0},
                            {"b", 3, 3.0, 0.2, 1, 0.1},
                            {"c", 5, 3.0, 0.65, 3, 0.9},
                            {"d", 4, 4.4, 0.5, 3, 0.7}};
  SUBCASE("max-polyp bins with an empty middle bin") {
    const StratifiedReport rep = stratified_report(r, Stratum::max_polyp);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].population == 2);
    CHECK(*rep.rows[0].mae == doctest::Approx(0.25));
    CHECK(rep.rows[1].population == 0);
    CHECK(!rep.rows[1].mae.has_value());
    CHECK(*rep.rows[2].mae == doctest::Approx(1.2));
    CHECK(*rep.rows[2].mse == doctest::Approx(std::sqrt((4.0 + 0.16) / 2.0)));
    CHECK(*rep.overall.mae == doctest::Approx((0.5 + 0 + 2 + 0.4) / 4));
    const std::string csv = report_csv(rep);
    CHECK(csv.find("n/a") != std::string::npos);
    CHECK(csv.find("MSE (RMS)") != std::string::npos);
  }
  SUBCASE("single stratum equals the global metrics") {
    std::vector<ClipResult> one(r.begin(), r.begin() + 2);
    const StratifiedReport rep = stratified_report(one, Stratum::max_polyp);
    REQUIRE(rep.rows.size() == 1);
    CHECK(*rep.rows[0].mae == *rep.overall.mae);
    CHECK(*rep.rows[0].mse == *rep.overall.mse);
  }
  SUBCASE("ratio deciles") {
    const StratifiedReport rep = stratified_report(r, Stratum::ratio_polyp);
    REQUIRE(rep.rows.size() == 10);
    CHECK(rep.rows[0].population == 1);
    CHECK(rep.rows[2].population == 1);
    CHECK(rep.rows[5].population == 1);
    CHECK(rep.rows[6].population == 1);
    const auto j = nlohmann::json::parse(report_json(rep));
    CHECK(j.is_object());
  }
  CHECK(parse_stratum("mean") == Stratum::mean_polyp);
  CHECK_THROWS_AS(parse_stratum("median"), Error);
}
