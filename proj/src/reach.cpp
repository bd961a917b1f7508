#include "nn2sdt/reach.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

#include "nn2sdt/errors.hpp"
#include "nn2sdt/io.hpp"
#include "nn2sdt/transform.hpp"

namespace nn2sdt {

namespace {

using Clock = std::chrono::steady_clock;

// Reach boxes past this magnitude leave the range the LP kernel handles.
constexpr double kBlowUp = kAmbientBound / 10;

bool blown_up(const Box& b) {
  for (std::size_t k = 0; k < b.dim(); ++k)
    if (!(std::abs(b.lower[k]) < kBlowUp && std::abs(b.upper[k]) < kBlowUp)) return true;
  return false;
}

void collect_sdt(const SoftDecisionTree& tree, std::size_t node, const Polyhedron& domain, double eps,
                 std::vector<RegionAction>& out) {
  const auto& n = tree.nodes()[node];
  if (const auto* leaf = std::get_if<LeafNode>(&n)) {
    out.push_back({leaf->action(), domain});
    return;
  }
  const auto& inner = std::get<InnerNode>(n);
  auto left = domain.with({inner.split, Relation::leq});
  auto right = domain.with({inner.split, Relation::gt});
  // The parent is non-empty, so one side being empty makes the other side
  // equal to the parent.
  if (!is_feasible(left, eps)) return collect_sdt(tree, inner.right, right, eps, out);
  if (!is_feasible(right, eps)) return collect_sdt(tree, inner.left, left, eps, out);
  collect_sdt(tree, inner.left, left, eps, out);
  collect_sdt(tree, inner.right, right, eps, out);
}

struct PatternSearch {
  const NeuralNetwork& net;
  double eps;
  std::size_t max_patterns;
  std::size_t patterns = 0;
  std::vector<RegionAction> out;

  void visit(ActivationTable table, const Polyhedron& domain) {
    table.refine(net, domain, eps, true);
    if (const auto r = try_rule1(table)) {
      const auto [l, i] = *r;
      const AffineFunc& g = *table.pre(l, i);
      // Both sides are feasible: that is what a crossing phase records.
      visit(table.child(l, i, Phase::inactive), domain.with({g, Relation::leq}));
      visit(table.child(l, i, Phase::active), domain.with({g, Relation::gt}));
      return;
    }
    if (++patterns > max_patterns)
      throw ResourceLimit("activation pattern enumeration exceeded " + std::to_string(max_patterns) + " patterns");
    const auto outputs = table.outputs();
    for (std::size_t i = 1; i <= outputs.size(); ++i) {
      auto w = winner_region(outputs, i, domain);
      if (is_feasible(w, eps)) out.push_back({i, std::move(w)});
    }
  }
};

std::optional<Box> trim_arrived(const Goal& goal, Box b) {
  if (goal.kind != Goal::Kind::reach) return b;
  if (b.lower[goal.index] >= goal.threshold) return std::nullopt;
  b.upper[goal.index] = std::min(b.upper[goal.index], goal.threshold);
  return b;
}

std::vector<Box> subdivide(const Box& b, std::size_t k) {
  std::vector<Box> out{b};
  if (k <= 1) return out;
  for (std::size_t d = 0; d < b.dim(); ++d) {
    if (b.width(d) == 0.0) continue;
    std::vector<Box> next;
    for (const auto& piece : out)
      for (std::size_t j = 0; j < k; ++j) {
        Box p = piece;
        p.lower[d] = j == 0 ? b.lower[d] : b.lower[d] + b.width(d) * static_cast<double>(j) / static_cast<double>(k);
        p.upper[d] =
            j + 1 == k ? b.upper[d] : b.lower[d] + b.width(d) * static_cast<double>(j + 1) / static_cast<double>(k);
        next.push_back(std::move(p));
      }
    out = std::move(next);
  }
  return out;
}

struct SubResult {
  std::vector<TraceEntry> entries;
  bool verified = false;
  std::size_t resolved = 0;
  std::size_t stopped = 0;
  bool timed_out = false;
};

SubResult run_sub(const EnvModel& env, const Controller& ctrl, const Specification& spec, const Box& start,
                  Clock::time_point deadline, double eps) {
  SubResult r;
  const Goal& goal = spec.goal;
  Box full = start;
  std::optional<Box> pending = trim_arrived(goal, full);
  bool arrived_all = !pending;
  r.entries.push_back({0, full, pending});

  std::size_t t = 0;
  bool stopped_early = false;
  while (t < spec.horizon) {
    if (Clock::now() > deadline) {
      r.timed_out = stopped_early = true;
      break;
    }
    const std::size_t n = std::min(spec.step, spec.horizon - t);
    for (std::size_t j = 0; j < n; ++j) {
      const bool same = pending && *pending == full;
      full = reach_step(env, ctrl, full, 1, eps);
      if (pending) {
        pending = trim_arrived(goal, same ? full : reach_step(env, ctrl, *pending, 1, eps));
        if (!pending && !arrived_all) {
          arrived_all = true;
          r.resolved = t + j + 1;
        }
      }
    }
    t += n;
    r.entries.push_back({t, full, pending});
    if (blown_up(full)) {
      stopped_early = true;
      break;
    }
  }
  r.stopped = t;

  if (goal.kind == Goal::Kind::reach) {
    r.verified = arrived_all;
  } else if (!stopped_early) {
    const double lo = full.lower[goal.index], hi = full.upper[goal.index];
    r.verified = std::max(std::abs(lo), std::abs(hi)) < goal.threshold;
    r.resolved = spec.horizon;
  }
  return r;
}

}  // namespace

std::vector<RegionAction> region_actions_sdt(const SoftDecisionTree& tree, const Box& b, double eps) {
  if (b.dim() != tree.input_dim()) throw StructuralError("box dimension differs from the tree input dimension");
  std::vector<RegionAction> out;
  const auto domain = b.polyhedron();
  if (!is_feasible(domain, eps)) return out;
  collect_sdt(tree, 0, domain, eps, out);
  return out;
}

std::vector<RegionAction> region_actions_nn(const NeuralNetwork& net, const Box& b, double eps,
                                            std::size_t max_patterns) {
  if (b.dim() != net.input_dim()) throw StructuralError("box dimension differs from the network input dimension");
  PatternSearch search{net, eps, max_patterns, 0, {}};
  const auto domain = b.polyhedron();
  if (!is_feasible(domain, eps)) return {};
  search.visit(ActivationTable(net), domain);
  return std::move(search.out);
}

std::size_t Controller::input_dim() const {
  return std::visit([](const auto& c) { return c.input_dim(); }, impl_);
}

std::size_t Controller::action_count() const {
  return std::visit([](const auto& c) { return c.action_count(); }, impl_);
}

std::size_t Controller::act(std::span<const double> x) const {
  if (const auto* t = std::get_if<SoftDecisionTree>(&impl_)) return sdt_eval(*t, x);
  return nn_output(std::get<NeuralNetwork>(impl_), x);
}

std::vector<RegionAction> Controller::region_actions(const Box& b, double eps) const {
  if (const auto* t = std::get_if<SoftDecisionTree>(&impl_)) return region_actions_sdt(*t, b, eps);
  return region_actions_nn(std::get<NeuralNetwork>(impl_), b, eps);
}

Controller load_controller(const std::filesystem::path& path) {
  const auto doc = read_json_file(path);
  try {
    if (doc.is_object() && doc.contains("root")) return Controller::sdt(tree_from_json(doc));
    if (doc.is_object() && doc.contains("widths")) return Controller::nn(network_from_json(doc));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  throw ParseError(path.string() + ": neither a tree (\"root\") nor a network (\"widths\")");
}

Box bounding_box(const Polyhedron& region, const Box& within) {
  Box out = within;
  for (std::size_t k = 0; k < within.dim(); ++k) {
    const auto e = AffineFunc::coordinate(within.dim(), k);
    const auto hi = maximize(e, region);
    const auto lo = maximize(-e, region);
    if (hi.status != LpOutcome::Status::optimal || lo.status != LpOutcome::Status::optimal) continue;
    const double u = hi.value + 1e-9 * (1.0 + std::abs(hi.value));
    const double l = -lo.value - 1e-9 * (1.0 + std::abs(lo.value));
    if (l > u) continue;
    out.lower[k] = std::clamp(l, within.lower[k], within.upper[k]);
    out.upper[k] = std::clamp(u, within.lower[k], within.upper[k]);
  }
  return out;
}

Box reach_step(const EnvModel& env, const Controller& ctrl, const Box& b, std::size_t s, double eps) {
  if (s == 0) throw StructuralError("reach_step needs s >= 1");
  Box cur = b;
  for (std::size_t j = 0; j < s; ++j) {
    const auto regions = ctrl.region_actions(cur, eps);
    if (regions.empty()) throw InternalError("controller regions do not cover a non-empty box");
    std::map<std::size_t, Box> by_action;
    const bool single = std::all_of(regions.begin(), regions.end(),
                                    [&](const auto& r) { return r.action == regions.front().action; });
    if (single) {
      by_action.emplace(regions.front().action, cur);
    } else {
      for (const auto& r : regions) {
        const Box bb = bounding_box(r.region, cur);
        auto [it, fresh] = by_action.emplace(r.action, bb);
        if (!fresh) it->second = hull(it->second, bb);
      }
    }
    std::optional<Box> next;
    for (const auto& [action, box] : by_action) {
      const Box img = env.box_step(box, action);
      next = next ? hull(*next, img) : img;
    }
    cur = std::move(*next);
  }
  return cur;
}

bool Goal::satisfied(std::span<const double> x) const {
  return kind == Kind::reach ? x[index] >= threshold : std::abs(x[index]) < threshold;
}

void validate(const Specification& spec, const EnvModel& env) {
  if (spec.initial.dim() != env.state_dim()) throw StructuralError("initial box dimension differs from the state");
  if (spec.goal.index >= env.state_dim()) throw StructuralError("goal coordinate out of range");
  if (spec.step < 1) throw StructuralError("step must be at least 1");
  if (spec.step > spec.horizon) throw StructuralError("step exceeds the horizon");
  if (spec.subdivision < 1) throw StructuralError("subdivision must be at least 1");
  bool volume = false;
  for (std::size_t k = 0; k < spec.initial.dim(); ++k) volume = volume || spec.initial.width(k) > 0.0;
  if (!volume) throw StructuralError("initial box is a single point");
}

Specification default_spec(const EnvModel& env) {
  Specification s;
  if (env.is_mountaincar()) {
    s.initial = Box({-0.11, 0.0}, {-0.1, 0.0});
    s.goal = {Goal::Kind::reach, 0, 0.5};
    s.horizon = 200;
  } else {
    s.initial = Box({-0.1, 0.0, -0.1, 0.0}, {0.0, 0.0, 0.0, 0.0});
    s.goal = {Goal::Kind::safe_at_horizon, 2, std::numbers::pi / 15};
    s.horizon = 25;
  }
  return s;
}

SpecFile spec_from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("env")) throw ParseError("spec.env: missing");
  SpecFile f{env_from_json(doc["env"]), {}};
  f.spec = default_spec(f.env);
  auto& s = f.spec;
  const auto number = [&](const std::string& key) {
    if (!doc[key].is_number()) throw ParseError("spec." + key + ": expected a number");
    return doc[key].get<double>();
  };
  const auto count = [&](const std::string& key) {
    if (!doc[key].is_number_unsigned()) throw ParseError("spec." + key + ": expected a non-negative integer");
    return doc[key].get<std::size_t>();
  };
  // Both benchmarks vary the position coordinate; CartPole also varies theta
  // over the same interval.
  const std::vector<std::size_t> varied = f.env.is_mountaincar() ? std::vector<std::size_t>{0}
                                                                 : std::vector<std::size_t>{0, 2};
  for (const auto& [key, value] : doc.items()) {
    if (key == "env") continue;
    else if (key == "i_l") for (auto k : varied) s.initial.lower[k] = number(key);
    else if (key == "i_u") for (auto k : varied) s.initial.upper[k] = number(key);
    else if (key == "goal") s.goal.threshold = number(key);
    else if (key == "horizon") s.horizon = count(key);
    else if (key == "step") s.step = count(key);
    else if (key == "subdivision") s.subdivision = count(key);
    else if (key == "time_budget") s.time_budget = number(key);
    else if (key == "simulations") s.simulations = count(key);
    else if (key == "seed") s.seed = count(key);
    else throw ParseError("spec." + key + ": unknown key");
  }
  for (std::size_t k = 0; k < s.initial.dim(); ++k)
    if (!(s.initial.lower[k] <= s.initial.upper[k])) throw ParseError("spec.i_l: exceeds the upper end of the initial set");
  try {
    validate(s, f.env);
  } catch (const StructuralError& e) {
    throw ParseError(std::string("spec: ") + e.what());
  }
  return f;
}

SpecFile load_spec(const std::filesystem::path& path) {
  try {
    return spec_from_json(read_json_file(path));
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ParseError(path.string() + ": " + msg);
  }
}

nlohmann::json spec_to_json(const SpecFile& f) {
  const auto& s = f.spec;
  const std::size_t k = 0;
  return {{"env", env_to_json(f.env)},   {"i_l", s.initial.lower[k]},     {"i_u", s.initial.upper[k]},
          {"goal", s.goal.threshold},    {"horizon", s.horizon},          {"step", s.step},
          {"subdivision", s.subdivision}, {"time_budget", s.time_budget}, {"simulations", s.simulations},
          {"seed", s.seed}};
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::verified: return "verified";
    case Verdict::unknown: return "unknown";
    case Verdict::falsified: return "falsified";
  }
  return "?";
}

std::vector<std::vector<double>> rollout(const EnvModel& env, const Controller& ctrl, std::span<const double> x0,
                                         std::size_t steps) {
  std::vector<std::vector<double>> traj;
  traj.reserve(steps + 1);
  traj.emplace_back(x0.begin(), x0.end());
  for (std::size_t t = 0; t < steps; ++t) traj.push_back(env.step(traj.back(), ctrl.act(traj.back())));
  return traj;
}

std::vector<std::vector<double>> sample_initial_states(const Box& b, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  const std::size_t corners = b.dim() < 20 ? std::size_t{1} << b.dim() : 0;
  for (std::size_t s = 0; s < count; ++s) {
    std::vector<double> x(b.dim());
    for (std::size_t k = 0; k < b.dim(); ++k) {
      if (s < corners) x[k] = (s >> k) & 1 ? b.upper[k] : b.lower[k];
      else x[k] = std::uniform_real_distribution<double>(b.lower[k], b.upper[k])(rng);
    }
    out.push_back(std::move(x));
  }
  return out;
}

bool trajectory_satisfies(const Goal& goal, std::span<const std::vector<double>> trajectory, std::size_t horizon) {
  if (trajectory.size() < horizon + 1) throw StructuralError("trajectory shorter than the horizon");
  if (goal.kind == Goal::Kind::safe_at_horizon) return goal.satisfied(trajectory[horizon]);
  for (std::size_t t = 0; t <= horizon; ++t)
    if (goal.satisfied(trajectory[t])) return true;
  return false;
}

ReachTrace rra_verify(const EnvModel& env, const Controller& ctrl, const Specification& spec,
                      const VerifyOptions& options) {
  validate(spec, env);
  if (ctrl.input_dim() != env.state_dim()) throw StructuralError("controller input dimension differs from the state");
  if (ctrl.action_count() != env.action_count()) throw StructuralError("controller action count differs from the environment");

  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(spec.time_budget));
  const auto pieces = subdivide(spec.initial, spec.subdivision);
  std::vector<SubResult> results(pieces.size());
  std::vector<std::exception_ptr> errors(pieces.size());
  const auto n = static_cast<std::ptrdiff_t>(pieces.size());
#pragma omp parallel for schedule(dynamic) if (options.parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      results[i] = run_sub(env, ctrl, spec, pieces[i], deadline, options.eps);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ReachTrace trace;
  trace.sub_boxes = pieces.size();
  std::size_t len = results.front().entries.size();
  for (const auto& r : results) len = std::min(len, r.entries.size());
  for (std::size_t m = 0; m < len; ++m) {
    TraceEntry e = results.front().entries[m];
    for (std::size_t i = 1; i < results.size(); ++i) {
      const auto& o = results[i].entries[m];
      e.box = hull(e.box, o.box);
      if (o.pending) e.pending = e.pending ? hull(*e.pending, *o.pending) : *o.pending;
    }
    trace.boxes.push_back(std::move(e));
  }

  bool all = true;
  std::size_t unresolved = spec.horizon;
  for (const auto& r : results) {
    trace.timed_out = trace.timed_out || r.timed_out;
    if (r.verified) {
      ++trace.sub_boxes_verified;
      trace.resolved_time = std::max(trace.resolved_time, r.resolved);
    } else {
      all = false;
      unresolved = std::min(unresolved, r.stopped);
    }
  }
  trace.verdict = all ? Verdict::verified : Verdict::unknown;
  if (!all) {
    trace.resolved_time = 0;
    trace.unresolved_time = unresolved;
  }

  for (const auto& x0 : sample_initial_states(spec.initial, spec.simulations, spec.seed)) {
    auto traj = rollout(env, ctrl, x0, spec.horizon);
    if (!trajectory_satisfies(spec.goal, traj, spec.horizon)) {
      trace.verdict = Verdict::falsified;
      trace.trajectory = std::move(traj);
      break;
    }
  }
  trace.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return trace;
}

nlohmann::json trace_to_json(const ReachTrace& trace) {
  nlohmann::json boxes = nlohmann::json::array();
  for (const auto& e : trace.boxes) {
    nlohmann::json j{{"t", e.t}, {"lower", e.box.lower}, {"upper", e.box.upper}};
    if (e.pending) j["pending"] = {{"lower", e.pending->lower}, {"upper", e.pending->upper}};
    else j["pending"] = nullptr;
    boxes.push_back(std::move(j));
  }
  nlohmann::json j{{"verdict", to_string(trace.verdict)},
                   {"timed_out", trace.timed_out},
                   {"sub_boxes", trace.sub_boxes},
                   {"sub_boxes_verified", trace.sub_boxes_verified},
                   {"seconds", trace.seconds},
                   {"boxes", std::move(boxes)}};
  if (trace.verdict == Verdict::verified) j["resolved_time"] = trace.resolved_time;
  if (trace.verdict == Verdict::unknown) j["unresolved_time"] = trace.unresolved_time;
  if (trace.verdict == Verdict::falsified) j["trajectory"] = trace.trajectory;
  return j;
}

std::string trace_to_csv(const ReachTrace& trace) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t d = trace.boxes.empty() ? 0 : trace.boxes.front().box.dim();
  out << "t";
  for (const char* prefix : {"lower", "upper", "pending_lower", "pending_upper"})
    for (std::size_t k = 0; k < d; ++k) out << ',' << prefix << '_' << k;
  out << '\n';
  for (const auto& e : trace.boxes) {
    out << e.t;
    for (double v : e.box.lower) out << ',' << v;
    for (double v : e.box.upper) out << ',' << v;
    for (std::size_t k = 0; k < 2 * d; ++k) {
      out << ',';
      if (e.pending) out << (k < d ? e.pending->lower[k] : e.pending->upper[k - d]);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<BenchRow> bench(const EnvModel& env, const NeuralNetwork& net, const SoftDecisionTree& tree,
                            const Specification& spec, const std::vector<std::size_t>& s_values) {
  const Controller ctrls[] = {Controller::sdt(tree), Controller::nn(net)};
  const auto states = sample_initial_states(spec.initial, 1000, spec.seed);
  std::vector<BenchRow> rows;
  for (std::size_t s : s_values) {
    Specification sp = spec;
    sp.step = s;
    for (const auto& c : ctrls) {
      BenchRow row{c.kind(), s};
      const auto trace = rra_verify(env, c, sp, {.parallel = false});
      row.verdict = trace.verdict;
      row.seconds = trace.seconds;
      std::size_t sink = 0;
      const auto t0 = Clock::now();
      constexpr int kRepeats = 20;
      for (int r = 0; r < kRepeats; ++r)
        for (const auto& x : states) sink += c.act(x);
      const double us = std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
      row.inference_us = us / static_cast<double>(kRepeats * states.size());
      static volatile std::size_t keep;
      keep = sink;
      (void)keep;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string bench_to_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "controller,s,verdict,seconds,inference_us\n";
  for (const auto& r : rows) out << r.controller << ',' << r.s << ',' << to_string(r.verdict) << ',' << r.seconds << ',' << r.inference_us << '\n';
  return out.str();
}

}  // namespace nn2sdt
