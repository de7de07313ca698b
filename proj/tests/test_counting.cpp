#include <doctest.h>

#include "dydec/counting.hpp"
#include "helpers.hpp"

using namespace dydec;

namespace {

std::vector<EventLabel> random_labels(std::mt19937_64& rng, double clip_len, int max_events) {
  std::uniform_int_distribution<int> count(0, max_events);
  std::uniform_real_distribution<double> u(0.0, clip_len);
  std::vector<EventLabel> out(static_cast<std::size_t>(count(rng)));
  for (auto& e : out) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    if (b - a < 1e-6) b = std::min(clip_len, a + 1e-3);
    e = {a, b, std::nullopt};
  }
  return out;
}

}  // namespace

TEST_CASE("density: one event over 20 whole frames") {
  const std::vector<EventLabel> l{{1.0, 3.0, 0}};
  const DensityVector d = make_density_target(l, 50, 5.0);
  CHECK(d.frame_duration == doctest::Approx(0.1));
  for (int i = 0; i < 50; ++i) CHECK(d.values[i] == doctest::Approx(i >= 10 && i < 30 ? 0.05 : 0.0).epsilon(1e-12));
  CHECK(count_from_density(d) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("density: no events is the zero vector") {
  const DensityVector d = make_density_target(std::vector<EventLabel>{}, 12, 2.0);
  CHECK(d.values.size() == 12);
  CHECK(d.values.isZero());
  CHECK(count_from_density(d) == 0.0);
}

TEST_CASE("density: event straddling a frame boundary splits its mass") {
  const std::vector<EventLabel> l{{0.95, 1.05, std::nullopt}};
  const DensityVector d = make_density_target(l, 50, 5.0);
  CHECK(d.values[9] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(d.values[10] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(d.values.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("density: mass is conserved for random label sets") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const auto labels = random_labels(rng, 5.0, 12);
    const int frames = 1 + static_cast<int>(rng() % 200);
    const DensityVector d = make_density_target(labels, frames, 5.0);
    CHECK(std::abs(count_from_density(d) - static_cast<double>(labels.size())) < 1e-9);
    CHECK(d.values.minCoeff() >= 0.0);
  }
}

TEST_CASE("density: shifting labels by one frame shifts the vector") {
  const std::vector<EventLabel> l{{0.33, 1.71, 0}, {2.0, 2.05, 0}};
  std::vector<EventLabel> s = l;
  for (auto& e : s) {
    e.t_start += 0.25;
    e.t_end += 0.25;
  }
  const DensityVector a = make_density_target(l, 20, 5.0);
  const DensityVector b = make_density_target(s, 20, 5.0);
  CHECK(b.values[0] == doctest::Approx(0.0));
  for (int i = 0; i < 19; ++i) CHECK(b.values[i + 1] == doctest::Approx(a.values[i]).epsilon(1e-12));
}

TEST_CASE("count_from_density: constant prediction") {
  const DensityVector d{Vector::Constant(50, 0.1), 0.1};
  CHECK(count_from_density(d) == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("labels outside the clip are rejected") {
  CHECK_THROWS_AS(make_density_target(std::vector<EventLabel>{{-0.1, 1.0, 0}}, 10, 5.0), Error);
  CHECK_THROWS_AS(make_density_target(std::vector<EventLabel>{{1.0, 5.1, 0}}, 10, 5.0), Error);
  CHECK_THROWS_AS(make_density_target(std::vector<EventLabel>{{2.0, 2.0, 0}}, 10, 5.0), Error);
  CHECK_THROWS_AS(make_density_target(std::vector<EventLabel>{}, 0, 5.0), Error);
}

TEST_CASE("mse_density_loss: identity, constant offset and a loop oracle") {
  std::mt19937_64 rng(12);
  const Vector x = testutil::random_vector(40, rng);
  const LossAndGrad same = mse_density_loss(x, x);
  CHECK(same.loss == 0.0);
  CHECK(same.grad.isZero());

  CHECK(mse_density_loss(Vector(x.array() + 0.3), x).loss == doctest::Approx(0.09).epsilon(1e-12));

  const Vector y = testutil::random_vector(40, rng);
  double loss = 0.0;
  for (int i = 0; i < 40; ++i) loss += (x[i] - y[i]) * (x[i] - y[i]);
  loss /= 40.0;
  const LossAndGrad r = mse_density_loss(x, y);
  CHECK(std::abs(r.loss - loss) < 1e-12);
  for (int i = 0; i < 40; ++i) CHECK(std::abs(r.grad[i] - 2.0 * (x[i] - y[i]) / 40.0) < 1e-12);
  CHECK_THROWS_AS(mse_density_loss(x, Vector(Vector::Zero(39))), Error);
}

TEST_CASE("regress_count_head") {
  CHECK(regress_count_head(Vector::Zero(10), {3.0, -0.25}) == -0.25);
  CHECK(regress_count_head(Vector::Constant(10, 1.7), {1.0, 0.0}) == doctest::Approx(1.7));
  Vector s(4);
  s << 0.5, 1.5, 2.0, 0.0;
  // mean = 1.0
  CHECK(regress_count_head(s, {2.5, 0.75}) == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("label files round trip") {
  const auto dir = testutil::temp_dir("labels");
  std::vector<ClipLabels> clips{{"a", 5.0, {{0.1, 0.2, 3}, {1.0, 4.5, std::nullopt}}}, {"b", 2.0, {}}};
  write_labels_jsonl((dir / "l.jsonl").string(), clips);
  const auto back = read_labels_jsonl((dir / "l.jsonl").string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].clip_id == "a");
  CHECK(back[0].events[0].class_id == 3);
  CHECK(!back[0].events[1].class_id.has_value());
  CHECK(back[0].events[1].t_end == 4.5);
  CHECK(back[1].events.empty());
  CHECK_THROWS_AS(read_labels_jsonl((dir / "missing.jsonl").string()), Error);
}
