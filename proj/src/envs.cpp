#include "nn2sdt/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "nn2sdt/errors.hpp"

namespace nn2sdt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Slack for deciding whether a bracket touches an extremum or a regime
// boundary; pi itself is only known to about 1e-16.
constexpr double kAngleSlack = 1e-12;
// Absolute widening of cosine enclosures; covers libm and affine evaluation
// error for values of magnitude at most a few units.
constexpr double kTrigSlack = 1e-15;

double down(double v) { return std::nextafter(v, -kInf); }
double up(double v) { return std::nextafter(v, kInf); }

Interval outward(double lo, double hi) { return {down(lo), up(hi)}; }

// True when offset + 2k*pi lies in [lo, hi] (slightly enlarged) for some k.
bool hits(double lo, double hi, double offset) {
  const double k = std::ceil((lo - kAngleSlack - offset) / kTwoPi);
  return offset + k * kTwoPi <= hi + kAngleSlack;
}

Interval trig_range(const Interval& a, double max_at, double min_at, double (*f)(double)) {
  if (a.width() >= kTwoPi) return {-1.0, 1.0};
  const double fl = f(a.lo), fh = f(a.hi);
  double lo = std::min(fl, fh) - kTrigSlack;
  double hi = std::max(fl, fh) + kTrigSlack;
  if (hits(a.lo, a.hi, max_at)) hi = 1.0;
  if (hits(a.lo, a.hi, min_at)) lo = -1.0;
  return {std::max(lo, -1.0), std::min(hi, 1.0)};
}

double as_double(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_number()) throw ParseError(std::string(key) + ": expected a number");
  return v.get<double>();
}

bool as_bool(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_boolean()) throw ParseError(std::string(key) + ": expected true or false");
  return v.get<bool>();
}

void check_action(int u, int count) {
  if (u < 0 || u >= count) throw StructuralError("control input out of range");
}

}  // namespace

Interval::Interval(double l, double h) : lo(l), hi(h) {
  if (!(l <= h)) throw StructuralError("interval lower bound exceeds upper bound");
}

Interval operator+(const Interval& a, const Interval& b) { return outward(a.lo + b.lo, a.hi + b.hi); }
Interval operator-(const Interval& a, const Interval& b) { return outward(a.lo - b.hi, a.hi - b.lo); }
Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }

Interval operator*(const Interval& a, const Interval& b) {
  const double p[] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return outward(*std::min_element(p, p + 4), *std::max_element(p, p + 4));
}

Interval operator*(double s, const Interval& a) { return Interval::point(s) * a; }

Interval operator/(const Interval& a, const Interval& b) {
  if (b.contains(0.0)) throw StructuralError("interval division by an interval containing zero");
  const double p[] = {a.lo / b.lo, a.lo / b.hi, a.hi / b.lo, a.hi / b.hi};
  return outward(*std::min_element(p, p + 4), *std::max_element(p, p + 4));
}

Interval sqr(const Interval& a) {
  const double l = a.lo * a.lo, h = a.hi * a.hi;
  if (a.contains(0.0)) return {0.0, up(std::max(l, h))};
  return {down(std::min(l, h)), up(std::max(l, h))};
}

Interval cos(const Interval& a) {
  return trig_range(a, 0.0, kPi, [](double v) { return std::cos(v); });
}

Interval sin(const Interval& a) {
  return trig_range(a, kPi / 2, -kPi / 2, [](double v) { return std::sin(v); });
}

Interval hull(const Interval& a, const Interval& b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

Interval clamp(const Interval& a, double lo, double hi) {
  return {std::clamp(a.lo, lo, hi), std::clamp(a.hi, lo, hi)};
}

CosBounds cos_bounds(double x_l, double x_r) {
  if (!(x_l <= x_r)) throw StructuralError("cos_bounds: bracket lower end exceeds upper end");
  const double k = std::round((x_l + x_r) / 2.0 / kPi);
  if (x_l < (k - 0.5) * kPi - kAngleSlack || x_r > (k + 0.5) * kPi + kAngleSlack)
    throw StructuralError("cos_bounds: bracket crosses a concavity boundary");

  const double m = (x_l + x_r) / 2.0;
  const double tangent_slope = -std::sin(m);
  const AffineFunc tangent({tangent_slope}, std::cos(m) - tangent_slope * m);
  const double chord_slope = x_l == x_r ? -std::sin(x_l) : (std::cos(x_r) - std::cos(x_l)) / (x_r - x_l);
  const AffineFunc chord({chord_slope}, std::cos(x_l) - chord_slope * x_l);

  const bool concave = std::fmod(std::abs(k), 2.0) == 0.0;
  return concave ? CosBounds{chord, tangent} : CosBounds{tangent, chord};
}

Interval cos_enclosure(const Interval& a) {
  if (a.width() >= kTwoPi) return {-1.0, 1.0};
  double lo = kInf, hi = -kInf;
  double left = a.lo;
  while (true) {
    // Next odd multiple of pi/2 strictly above `left`.
    double cut = (std::floor(left / kPi - 0.5) + 1.5) * kPi;
    if (cut <= left) cut += kPi;
    const double right = std::min(cut, a.hi);
    const auto b = cos_bounds(left, right);
    const double l[] = {left}, r[] = {right};
    lo = std::min({lo, b.lower(l), b.lower(r)});
    hi = std::max({hi, b.upper(l), b.upper(r)});
    if (right >= a.hi) break;
    left = right;
  }
  // The affine forms carry absolute rounding error proportional to |x|.
  const double slack = 8 * kTrigSlack * (1.0 + std::max(std::abs(a.lo), std::abs(a.hi)));
  return {std::max(lo - slack, -1.0), std::min(hi + slack, 1.0)};
}

std::vector<double> mountaincar_step(const MountainCarParams& p, std::span<const double> x, int u) {
  if (x.size() != 2) throw StructuralError("mountaincar state must have 2 components");
  check_action(u, 3);
  double vel = x[1] + p.alpha * (u - 1) - p.beta * std::cos(p.gamma * x[0]);
  if (p.clip) vel = std::clamp(vel, -p.vel_max, p.vel_max);
  double pos = x[0] + (p.gym_order ? vel : x[1]);
  if (p.clip) {
    pos = std::clamp(pos, p.pos_min, p.pos_max);
    if (pos == p.pos_min && vel < 0.0) vel = 0.0;
  }
  return {pos, vel};
}

Box mountaincar_box_step(const MountainCarParams& p, const Box& b, int u) {
  if (b.dim() != 2) throw StructuralError("mountaincar box must have 2 components");
  check_action(u, 3);
  const Interval pos(b.lower[0], b.upper[0]), vel(b.lower[1], b.upper[1]);
  const Interval gp = p.gamma * pos;
  Interval v = vel + Interval::point(p.alpha * (u - 1)) - p.beta * cos_enclosure(gp);
  // alpha * (u - 1) is exact for u - 1 in {-1, 0, 1}.
  if (p.clip) v = clamp(v, -p.vel_max, p.vel_max);
  Interval x = pos + (p.gym_order ? v : vel);
  if (p.clip) {
    x = clamp(x, p.pos_min, p.pos_max);
    if (x.lo <= p.pos_min && v.lo < 0.0) v.hi = std::max(v.hi, 0.0);
  }
  return Box({x.lo, v.lo}, {x.hi, v.hi});
}

std::vector<double> cartpole_step(const CartPoleParams& p, std::span<const double> x, int u) {
  if (x.size() != 4) throw StructuralError("cartpole state must have 4 components");
  check_action(u, 2);
  const double force = u == 1 ? p.force : -p.force;
  const double total = p.mass_pole + p.mass_cart;
  const double pml = p.mass_pole * p.length;
  const double s = std::sin(x[2]), c = std::cos(x[2]);
  const double temp = (force + pml * x[3] * x[3] * s) / total;
  const double theta_acc = (p.gravity * s - c * temp) / (p.length * (4.0 / 3.0 - p.mass_pole * c * c / total));
  const double x_acc = temp - pml * theta_acc * c / total;
  return {x[0] + p.tau * x[1], x[1] + p.tau * x_acc, x[2] + p.tau * x[3], x[3] + p.tau * theta_acc};
}

Box cartpole_box_step(const CartPoleParams& p, const Box& b, int u) {
  if (b.dim() != 4) throw StructuralError("cartpole box must have 4 components");
  check_action(u, 2);
  const Interval x(b.lower[0], b.upper[0]), xd(b.lower[1], b.upper[1]);
  const Interval th(b.lower[2], b.upper[2]), thd(b.lower[3], b.upper[3]);
  const Interval force = Interval::point(u == 1 ? p.force : -p.force);
  const Interval total = Interval::point(p.mass_pole) + Interval::point(p.mass_cart);
  const Interval pml = Interval::point(p.mass_pole) * Interval::point(p.length);
  const Interval s = sin(th), c = cos(th);
  const Interval temp = (force + pml * sqr(thd) * s) / total;
  const Interval denom =
      Interval::point(p.length) * (Interval::point(4.0) / Interval::point(3.0) - Interval::point(p.mass_pole) * sqr(c) / total);
  if (denom.contains(0.0)) throw StructuralError("cartpole: angular acceleration denominator contains zero");
  const Interval theta_acc = (Interval::point(p.gravity) * s - c * temp) / denom;
  const Interval x_acc = temp - pml * theta_acc * c / total;
  const Interval tau = Interval::point(p.tau);
  const Interval r[] = {x + tau * xd, xd + tau * x_acc, th + tau * thd, thd + tau * theta_acc};
  return Box({r[0].lo, r[1].lo, r[2].lo, r[3].lo}, {r[0].hi, r[1].hi, r[2].hi, r[3].hi});
}

std::string EnvModel::name() const { return is_mountaincar() ? "mountaincar" : "cartpole"; }
std::size_t EnvModel::state_dim() const noexcept { return is_mountaincar() ? 2 : 4; }
std::size_t EnvModel::action_count() const noexcept { return is_mountaincar() ? 3 : 2; }

std::vector<double> EnvModel::step(std::span<const double> x, std::size_t action) const {
  if (action < 1 || action > action_count()) throw StructuralError("action out of range");
  const int u = static_cast<int>(action) - 1;
  return is_mountaincar() ? mountaincar_step(mountaincar_params(), x, u) : cartpole_step(cartpole_params(), x, u);
}

Box EnvModel::box_step(const Box& b, std::size_t action) const {
  if (action < 1 || action > action_count()) throw StructuralError("action out of range");
  const int u = static_cast<int>(action) - 1;
  return is_mountaincar() ? mountaincar_box_step(mountaincar_params(), b, u)
                          : cartpole_box_step(cartpole_params(), b, u);
}

EnvModel env_from_json(const nlohmann::json& doc) {
  if (doc.is_string()) return env_from_json(nlohmann::json{{"name", doc}});
  if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string())
    throw ParseError("env.name: expected \"mountaincar\" or \"cartpole\"");
  const auto name = doc["name"].get<std::string>();
  try {
    if (name == "mountaincar") {
      MountainCarParams p;
      for (const auto& [key, value] : doc.items()) {
        if (key == "name") continue;
        else if (key == "alpha") p.alpha = as_double(doc, "alpha");
        else if (key == "beta") p.beta = as_double(doc, "beta");
        else if (key == "gamma") p.gamma = as_double(doc, "gamma");
        else if (key == "pos_min") p.pos_min = as_double(doc, "pos_min");
        else if (key == "pos_max") p.pos_max = as_double(doc, "pos_max");
        else if (key == "vel_max") p.vel_max = as_double(doc, "vel_max");
        else if (key == "clip") p.clip = as_bool(doc, "clip");
        else if (key == "gym_order") p.gym_order = as_bool(doc, "gym_order");
        else throw ParseError(key + ": unknown mountaincar parameter");
      }
      if (!(p.pos_min < p.pos_max) || !(p.vel_max > 0.0)) throw ParseError("mountaincar: empty state bounds");
      return EnvModel(p);
    }
    if (name == "cartpole") {
      CartPoleParams p;
      for (const auto& [key, value] : doc.items()) {
        if (key == "name") continue;
        else if (key == "gravity") p.gravity = as_double(doc, "gravity");
        else if (key == "mass_cart") p.mass_cart = as_double(doc, "mass_cart");
        else if (key == "mass_pole") p.mass_pole = as_double(doc, "mass_pole");
        else if (key == "length") p.length = as_double(doc, "length");
        else if (key == "force") p.force = as_double(doc, "force");
        else if (key == "tau") p.tau = as_double(doc, "tau");
        else throw ParseError(key + ": unknown cartpole parameter");
      }
      if (!(p.mass_cart > 0.0) || !(p.mass_pole >= 0.0) || !(p.length > 0.0))
        throw ParseError("cartpole: masses and length must be positive");
      return EnvModel(p);
    }
  } catch (const ParseError& e) {
    throw ParseError("env." + std::string(e.what()));
  }
  throw ParseError("env.name: unknown environment \"" + name + "\"");
}

nlohmann::json env_to_json(const EnvModel& env) {
  if (env.is_mountaincar()) {
    const auto& p = env.mountaincar_params();
    return {{"name", "mountaincar"}, {"alpha", p.alpha},     {"beta", p.beta},       {"gamma", p.gamma},
            {"pos_min", p.pos_min},  {"pos_max", p.pos_max}, {"vel_max", p.vel_max}, {"clip", p.clip},
            {"gym_order", p.gym_order}};
  }
  const auto& p = env.cartpole_params();
  return {{"name", "cartpole"},   {"gravity", p.gravity}, {"mass_cart", p.mass_cart}, {"mass_pole", p.mass_pole},
          {"length", p.length}, {"force", p.force},     {"tau", p.tau}};
}

}  // namespace nn2sdt
