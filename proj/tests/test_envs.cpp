#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "nn2sdt/envs.hpp"
#include "nn2sdt/errors.hpp"

using namespace nn2sdt;

namespace {

constexpr double kPi = std::numbers::pi;

double at(const AffineFunc& f, double x) {
  const double v[] = {x};
  return f(v);
}

std::vector<double> sample(const Box& b, std::mt19937_64& rng) {
  std::vector<double> x(b.dim());
  for (std::size_t k = 0; k < b.dim(); ++k) x[k] = std::uniform_real_distribution<double>(b.lower[k], b.upper[k])(rng);
  return x;
}

// Samples 10^3 states (corners included) and checks each successor lies in
// the image box.
void check_containment(const EnvModel& env, const Box& b, std::size_t action, std::uint64_t seed) {
  const Box image = env.box_step(b, action);
  std::mt19937_64 rng(seed);
  for (int s = 0; s < 1000; ++s) {
    auto x = sample(b, rng);
    if (s < (1 << b.dim()))
      for (std::size_t k = 0; k < b.dim(); ++k) x[k] = (s >> k) & 1 ? b.upper[k] : b.lower[k];
    const auto y = env.step(x, action);
    REQUIRE_MESSAGE(image.contains(y), env.name() << " action " << action << " sample " << s);
  }
}

}  // namespace

TEST_CASE("mountaincar pointwise step") {
  const MountainCarParams p;
  const std::vector<double> x{-0.5, 0.0};
  const auto idle = mountaincar_step(p, x, 1);
  CHECK(idle[0] == -0.5);
  CHECK(idle[1] == doctest::Approx(-0.0025 * std::cos(-1.5)).epsilon(1e-15));

  // 0.001 - 0.0025 cos(1.5), cos(1.5) = 0.0707372016677029...
  const auto right = mountaincar_step(p, x, 2);
  CHECK(std::abs(right[1] - 0.0008231569958307428) <= 1e-12);
  CHECK(std::abs(right[1] - 0.0008232) <= 1e-7);

  const auto left = mountaincar_step(p, x, 0);
  CHECK(std::abs((right[1] - left[1]) - 2 * p.alpha) <= 1e-15);
}

TEST_CASE("mountaincar position uses the velocity before its update") {
  MountainCarParams p;
  const std::vector<double> x{-0.5, 0.01};
  const auto y = mountaincar_step(p, x, 2);
  CHECK(y[0] == -0.5 + 0.01);
  p.gym_order = true;
  const auto z = mountaincar_step(p, x, 2);
  CHECK(z[0] == -0.5 + z[1]);
  CHECK(z[1] == y[1]);
}

TEST_CASE("mountaincar clipping") {
  const MountainCarParams p;
  const auto fast = mountaincar_step(p, std::vector<double>{kPi / 3, 0.0699}, 2);
  CHECK(fast[1] == 0.07);
  const auto wall = mountaincar_step(p, std::vector<double>{-1.19, -0.05}, 0);
  CHECK(wall[0] == -1.2);
  CHECK(wall[1] == 0.0);
  MountainCarParams free = p;
  free.clip = false;
  const auto through = mountaincar_step(free, std::vector<double>{-1.19, -0.05}, 0);
  CHECK(through[0] == doctest::Approx(-1.24));
  CHECK(through[1] < 0.0);
}

TEST_CASE("cartpole pointwise step") {
  const CartPoleParams p;
  const std::vector<double> x{0.0, 0.0, 0.05, 0.0};
  const auto y = cartpole_step(p, x, 1);
  CHECK(y[0] == 0.0);
  CHECK(y[2] == 0.05);
  CHECK(std::abs(y[1] - 0.194370546605301) <= 1e-12);
  CHECK(std::abs(y[3] - -0.2764975752871551) <= 1e-12);

  // The two coupled equations of motion hold for the recovered accelerations.
  const double total = p.mass_cart + p.mass_pole, pml = p.mass_pole * p.length;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int s = 0; s < 1000; ++s) {
    const std::vector<double> z{u(rng), u(rng), u(rng), 2 * u(rng)};
    const int a = s % 2;
    const auto n = cartpole_step(p, z, a);
    const double xacc = (n[1] - z[1]) / p.tau, tacc = (n[3] - z[3]) / p.tau;
    const double f = a == 1 ? p.force : -p.force;
    const double th = z[2];
    CHECK(total * xacc == doctest::Approx(f + pml * (z[3] * z[3] * std::sin(th) - tacc * std::cos(th))).epsilon(1e-9));
    CHECK(4.0 / 3.0 * p.length * tacc ==
          doctest::Approx(p.gravity * std::sin(th) - xacc * std::cos(th)).epsilon(1e-9).scale(1.0));
    CHECK(n[0] == z[0] + p.tau * z[1]);
    CHECK(n[2] == z[2] + p.tau * z[3]);
  }
}

TEST_CASE("cartpole upright equilibrium and mirror symmetry") {
  const CartPoleParams p;
  const std::vector<double> zero{0, 0, 0, 0};
  const double total = p.mass_cart + p.mass_pole;
  const auto r = cartpole_step(p, zero, 1);
  const double theta_acc = -(p.force / total) / (p.length * (4.0 / 3.0 - p.mass_pole / total));
  CHECK(r[3] == doctest::Approx(p.tau * theta_acc).epsilon(1e-14));
  const auto l = cartpole_step(p, zero, 0);
  for (int k = 0; k < 4; ++k) CHECK(l[k] == -r[k]);

  for (double th : {0.01, 0.05, 0.2, 1.0}) {
    const auto a = cartpole_step(p, std::vector<double>{0, 0, th, 0}, 1);
    const auto b = cartpole_step(p, std::vector<double>{0, 0, -th, 0}, 0);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(a[k] + b[k]) <= 1e-12);
  }
}

TEST_CASE("cos_bounds on [0, pi/2]") {
  const auto b = cos_bounds(0.0, kPi / 2);
  for (double x : {0.0, 0.3, kPi / 4, 1.2, kPi / 2}) {
    CHECK(at(b.lower, x) == doctest::Approx(1 - 2 * x / kPi).epsilon(1e-14));
    CHECK(at(b.upper, x) ==
          doctest::Approx(std::cos(kPi / 4) - std::sin(kPi / 4) * (x - kPi / 4)).epsilon(1e-14));
  }
  CHECK(at(b.lower, kPi / 4) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(at(b.upper, kPi / 4) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
}

TEST_CASE("cos_bounds convex regime swaps roles") {
  const auto b = cos_bounds(kPi / 2, 3 * kPi / 2);
  CHECK(at(b.lower, kPi) == doctest::Approx(-1.0).epsilon(1e-14));  // tangent at the midpoint
  CHECK(std::abs(at(b.upper, kPi)) <= 1e-15);                        // chord through the zeros
}

TEST_CASE("cos_bounds degenerate bracket and errors") {
  const double a = 0.7;
  const auto b = cos_bounds(a, a);
  CHECK(at(b.lower, a) == doctest::Approx(std::cos(a)).epsilon(1e-15));
  CHECK(at(b.upper, a) == doctest::Approx(std::cos(a)).epsilon(1e-15));
  CHECK_THROWS_AS(cos_bounds(1.0, 0.5), StructuralError);
  CHECK_THROWS_AS(cos_bounds(1.0, 2.0), StructuralError);  // straddles pi/2
}

TEST_CASE("cos_bounds soundness sweep") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> shift(-3, 3);
  for (int s = 0; s < 10000; ++s) {
    const double base = (s % 2 == 0 ? -kPi / 2 : kPi / 2) + 2 * kPi * shift(rng);
    double l = base + kPi * u(rng), r = base + kPi * u(rng);
    if (l > r) std::swap(l, r);
    const auto b = cos_bounds(l, r);
    const double x = l + (r - l) * u(rng);
    REQUIRE(at(b.lower, x) <= std::cos(x) + 1e-12);
    REQUIRE(std::cos(x) <= at(b.upper, x) + 1e-12);
  }
}

TEST_CASE("cos_bounds enclosure shrinks with the bracket") {
  double previous = 1e9;
  for (double w : {1e-1, 1e-2, 1e-3, 1e-4}) {
    const double l = 0.4, r = 0.4 + w;
    const auto b = cos_bounds(l, r);
    double gap = 0.0;
    for (int k = 0; k <= 100; ++k) {
      const double x = l + w * k / 100;
      gap = std::max(gap, at(b.upper, x) - at(b.lower, x));
    }
    CHECK(gap < previous / 10);
    previous = gap;
  }
}

TEST_CASE("cos enclosure over arbitrary brackets") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(-10.0, 10.0), w(0.0, 4.0);
  for (int s = 0; s < 2000; ++s) {
    const double lo = c(rng);
    const Interval a(lo, lo + w(rng) * (s % 3 == 0 ? 0.01 : 1.0));
    const Interval e = cos_enclosure(a);
    const Interval exact = cos(a);
    for (int k = 0; k <= 20; ++k) {
      const double x = a.lo + a.width() * k / 20;
      REQUIRE(e.contains(std::cos(x)));
      REQUIRE(exact.contains(std::cos(x)));
      REQUIRE(sin(a).contains(std::sin(x)));
    }
  }
  CHECK(cos_enclosure(Interval(-kPi / 2, kPi / 2)).hi == 1.0);
  CHECK(cos_enclosure(Interval(0.0, 7.0)) == Interval(-1.0, 1.0));
}

TEST_CASE("interval arithmetic") {
  const Interval a(-1.0, 2.0), b(3.0, 4.0);
  CHECK((a + b).contains(Interval(2.0, 6.0)));
  CHECK((a - b).contains(Interval(-5.0, -1.0)));
  CHECK((a * b).contains(Interval(-4.0, 8.0)));
  CHECK((a / b).contains(Interval(-1.0 / 3.0, 2.0 / 3.0)));
  CHECK(sqr(a).lo == 0.0);
  CHECK(sqr(a).contains(4.0));
  CHECK_THROWS_AS(b / a, StructuralError);
  CHECK_THROWS_AS(Interval(1.0, 0.0), StructuralError);
  CHECK(cos(Interval(-0.1, 0.1)).hi == 1.0);
  CHECK(sin(Interval(1.0, 2.0)).hi == 1.0);
  CHECK(cos(Interval(3.0, 3.3)).lo == -1.0);
}

TEST_CASE("mountaincar box image") {
  const auto env = EnvModel::mountaincar();
  const Box b({-0.11, 0.0}, {-0.1, 0.0});
  const Box image = env.box_step(b, 3);
  CHECK(image.lower[0] >= -0.11 - 1e-15);
  CHECK(image.upper[0] <= -0.1 + 1e-15);
  check_containment(env, b, 3, 0);
}

TEST_CASE("box_step containment") {
  const auto mc = EnvModel::mountaincar();
  const std::vector<Box> mc_boxes{
      Box({-0.6, -0.01}, {-0.4, 0.01}),   Box({-1.2, -0.07}, {-1.0, 0.0}),  // wall reset
      Box({0.3, 0.06}, {0.6, 0.07}),      Box({-1.2, -0.07}, {0.6, 0.07}),  // full state space
      Box({-0.55, 0.0}, {-0.5, 0.0}),     Box({-2.0, -0.2}, {1.0, 0.2}),
  };
  for (std::size_t i = 0; i < mc_boxes.size(); ++i)
    for (std::size_t a = 1; a <= 3; ++a) check_containment(mc, mc_boxes[i], a, 10 * i + a);

  MountainCarParams gym;
  gym.gym_order = true;
  for (std::size_t i = 0; i < mc_boxes.size(); ++i)
    for (std::size_t a = 1; a <= 3; ++a) check_containment(EnvModel(gym), mc_boxes[i], a, 100 + 10 * i + a);

  const auto cp = EnvModel::cartpole();
  const std::vector<Box> cp_boxes{
      Box({-0.1, 0.0, -0.1, 0.0}, {0.0, 0.0, 0.0, 0.0}),
      Box({-1.0, -1.0, -0.2, -1.0}, {1.0, 1.0, 0.2, 1.0}),
      Box({-2.0, -3.0, -1.5, -3.0}, {2.0, 3.0, 1.5, 3.0}),
      Box({0.0, 0.0, 3.0, 0.0}, {0.1, 0.1, 3.3, 0.1}),
  };
  for (std::size_t i = 0; i < cp_boxes.size(); ++i)
    for (std::size_t a = 1; a <= 2; ++a) check_containment(cp, cp_boxes[i], a, 200 + 10 * i + a);
}

TEST_CASE("point boxes map to the point successor") {
  const auto mc = EnvModel::mountaincar();
  const std::vector<double> x{-0.5, 0.003};
  const Box img = mc.box_step(Box::point(x), 2);
  const auto y = mc.step(x, 2);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(img.contains(y));
    CHECK(img.width(k) <= 1e-9);
  }
  const auto cp = EnvModel::cartpole();
  const std::vector<double> z{0.1, -0.2, 0.05, 0.3};
  const Box cimg = cp.box_step(Box::point(z), 1);
  CHECK(cimg.contains(cp.step(z, 1)));
  for (std::size_t k = 0; k < 4; ++k) CHECK(cimg.width(k) <= 1e-9);
}

TEST_CASE("box_step is monotone") {
  const auto mc = EnvModel::mountaincar();
  const Box small({-0.6, -0.01}, {-0.5, 0.0}), large({-0.7, -0.02}, {-0.45, 0.01});
  for (std::size_t a = 1; a <= 3; ++a) CHECK(mc.box_step(large, a).contains(mc.box_step(small, a)));
  const auto cp = EnvModel::cartpole();
  const Box cs({-0.1, 0.0, -0.1, 0.0}, {0.0, 0.1, 0.0, 0.1}), cl({-0.2, -0.1, -0.2, -0.1}, {0.1, 0.2, 0.1, 0.2});
  for (std::size_t a = 1; a <= 2; ++a) CHECK(cp.box_step(cl, a).contains(cp.box_step(cs, a)));
}

TEST_CASE("environment config") {
  const auto env = env_from_json(nlohmann::json::parse(R"({"name": "mountaincar", "beta": 0.003, "gym_order": true})"));
  CHECK(env.mountaincar_params().beta == 0.003);
  CHECK(env.mountaincar_params().gym_order);
  CHECK(env.mountaincar_params().alpha == 0.001);
  CHECK(env_from_json(env_to_json(env)).mountaincar_params().beta == 0.003);
  CHECK(env_from_json("cartpole").cartpole_params().force == 10.0);
  CHECK(env_from_json("cartpole").state_dim() == 4);
  CHECK_THROWS_WITH_AS(env_from_json(nlohmann::json::parse(R"({"name": "cartpole", "mass": 1})")),
                       "env.mass: unknown cartpole parameter", ParseError);
  CHECK_THROWS_WITH_AS(env_from_json(nlohmann::json::parse(R"({"name": "mountaincar", "alpha": "x"})")),
                       "env.alpha: expected a number", ParseError);
  CHECK_THROWS_AS(env_from_json("acrobot"), ParseError);
  CHECK_THROWS_AS(EnvModel::mountaincar().step(std::vector<double>{0, 0}, 4), StructuralError);
}
