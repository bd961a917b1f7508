#pragma once

// Recursive reachability analysis of a closed loop: rectangle
// over-approximations of the reachable states driven by either controller
// representation, plus simulation-based falsification.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nn2sdt/box.hpp"
#include "nn2sdt/envs.hpp"
#include "nn2sdt/lp.hpp"
#include "nn2sdt/network.hpp"
#include "nn2sdt/tree.hpp"

namespace nn2sdt {

struct RegionAction {
  std::size_t action = 0;
  Polyhedron region{0};
};

/// Leaves whose domain meets B, each with its domain intersected with B.
std::vector<RegionAction> region_actions_sdt(const SoftDecisionTree& tree, const Box& b, double eps = kDefaultEps);

/// Depth-first enumeration of hidden sign patterns feasible within B, each
/// refined into the argmax winner regions. Throws ResourceLimit past
/// `max_patterns`.
std::vector<RegionAction> region_actions_nn(const NeuralNetwork& net, const Box& b, double eps = kDefaultEps,
                                            std::size_t max_patterns = 1'000'000);

/// A policy in either representation.
class Controller {
 public:
  static Controller sdt(SoftDecisionTree tree) { return Controller(std::move(tree)); }
  static Controller nn(NeuralNetwork net) { return Controller(std::move(net)); }

  bool is_sdt() const noexcept { return std::holds_alternative<SoftDecisionTree>(impl_); }
  std::string kind() const { return is_sdt() ? "sdt" : "nn"; }
  std::size_t input_dim() const;
  std::size_t action_count() const;

  std::size_t act(std::span<const double> x) const;
  std::vector<RegionAction> region_actions(const Box& b, double eps = kDefaultEps) const;

 private:
  explicit Controller(SoftDecisionTree t) : impl_(std::move(t)) {}
  explicit Controller(NeuralNetwork n) : impl_(std::move(n)) {}

  std::variant<SoftDecisionTree, NeuralNetwork> impl_;
};

/// Tree files have a "root" key, network files a "widths" key.
Controller load_controller(const std::filesystem::path& path);

/// Smallest box around `region` (closure), clipped to `within` and widened
/// by a small relative margin against LP rounding.
Box bounding_box(const Polyhedron& region, const Box& within);

/// s-fold composition of: split B by action, take each action's bounding
/// box, step it, and join the images.
Box reach_step(const EnvModel& env, const Controller& ctrl, const Box& b, std::size_t s, double eps = kDefaultEps);

struct Goal {
  enum class Kind {
    reach,             // state[index] >= threshold at some t <= T
    safe_at_horizon,   // |state[index]| < threshold at t = T
  };
  Kind kind = Kind::reach;
  std::size_t index = 0;
  double threshold = 0.0;

  bool satisfied(std::span<const double> x) const;
};

struct Specification {
  Box initial;
  Goal goal;
  std::size_t horizon = 0;
  std::size_t step = 1;
  std::size_t subdivision = 1;  // pieces per non-degenerate initial dimension
  double time_budget = 600.0;   // seconds
  std::size_t simulations = 1000;
  std::uint64_t seed = 0;
};

/// Checks s >= 1, s <= T and that the initial box has positive volume in at
/// least one coordinate.
void validate(const Specification& spec, const EnvModel& env);

/// Defaults for the two benchmarks: MountainCar starts in [i_l, i_u] x {0}
/// and must reach pos >= g; CartPole starts with x and theta in [i_l, 0] and
/// must end with |theta| < g.
Specification default_spec(const EnvModel& env);

struct SpecFile {
  EnvModel env;
  Specification spec;
};

/// {"env": name or config, "i_l", "i_u", "goal", "horizon", "step",
///  "subdivision", "time_budget", "simulations", "seed"}; missing keys take
/// the benchmark defaults.
SpecFile spec_from_json(const nlohmann::json& doc);
SpecFile load_spec(const std::filesystem::path& path);
nlohmann::json spec_to_json(const SpecFile& file);

enum class Verdict { verified, unknown, falsified };
std::string to_string(Verdict v);

struct TraceEntry {
  std::size_t t = 0;
  Box box;                     // all reachable states
  std::optional<Box> pending;  // states that have not reached the goal yet
};

struct ReachTrace {
  std::vector<TraceEntry> boxes;
  Verdict verdict = Verdict::unknown;
  std::size_t resolved_time = 0;    // verified: time the property was established
  std::size_t unresolved_time = 0;  // unknown: time the analysis stopped
  bool timed_out = false;
  std::vector<std::vector<double>> trajectory;  // falsified: the counterexample
  std::size_t sub_boxes = 0;
  std::size_t sub_boxes_verified = 0;
  double seconds = 0.0;
};

/// `steps + 1` states starting at x0.
std::vector<std::vector<double>> rollout(const EnvModel& env, const Controller& ctrl, std::span<const double> x0,
                                         std::size_t steps);

/// Uniform samples from `b`; the first 2^d are its corners.
std::vector<std::vector<double>> sample_initial_states(const Box& b, std::size_t count, std::uint64_t seed);

/// True when the trajectory meets the goal within the horizon.
bool trajectory_satisfies(const Goal& goal, std::span<const std::vector<double>> trajectory, std::size_t horizon);

struct VerifyOptions {
  bool parallel = true;  // sub-boxes run as OpenMP iterations
  double eps = kDefaultEps;
};

/// Rectangle reachability plus simulation. A violating rollout makes the
/// verdict falsified whatever the rectangles say.
ReachTrace rra_verify(const EnvModel& env, const Controller& ctrl, const Specification& spec,
                      const VerifyOptions& options = {});

nlohmann::json trace_to_json(const ReachTrace& trace);
/// One row per recorded time: t,lower..., upper..., pending flag and bounds.
std::string trace_to_csv(const ReachTrace& trace);

struct BenchRow {
  std::string controller;
  std::size_t s = 0;
  Verdict verdict = Verdict::unknown;
  double seconds = 0.0;
  double inference_us = 0.0;
};

/// rra_verify timings for the tree and the network per s (single-threaded),
/// with mean single-state inference time.
std::vector<BenchRow> bench(const EnvModel& env, const NeuralNetwork& net, const SoftDecisionTree& tree,
                            const Specification& spec, const std::vector<std::size_t>& s_values);

/// Header controller,s,verdict,seconds,inference_us.
std::string bench_to_csv(const std::vector<BenchRow>& rows);

}  // namespace nn2sdt
