// nn2sdt: transform, certify, verify and benchmark network controllers.
//
// Exit status: 0 success (verified, pass or unknown), 1 property failure
// (mismatch, falsified, timing check), 2 usage or input error, 3 resource
// limit (node or pattern watchdog, time budget).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nn2sdt/certify.hpp"
#include "nn2sdt/errors.hpp"
#include "nn2sdt/io.hpp"
#include "nn2sdt/reach.hpp"
#include "nn2sdt/transform.hpp"

namespace fs = std::filesystem;
using namespace nn2sdt;

namespace {

constexpr int kOk = 0;
constexpr int kPropertyFailure = 1;
constexpr int kUsage = 2;
constexpr int kResource = 3;

struct Global {
  std::uint64_t seed = 0;
  double eps = kDefaultEps;
  double time_budget = 600.0;
  std::string out;
  std::string format = "text";
  bool seed_given = false;
  bool budget_given = false;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw ParseError(path + ": no such file");
}

// Writes to `path` atomically, or to stdout when path is empty.
void emit(const std::string& path, const std::string& content) {
  if (path.empty()) std::cout << content;
  else write_file_atomic(path, content);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

int cmd_transform(const Global& g, const std::string& net_path, std::string tree_path, std::size_t max_nodes) {
  require_file(net_path);
  const auto net = load_network(net_path);
  if (tree_path.empty()) {
    const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
    tree_path = (dir / (fs::path(net_path).stem().string() + "_sdt.json")).string();
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto tree = transform(net, {.eps = g.eps, .max_nodes = max_nodes});
  const double secs = seconds_since(t0);
  save_tree(tree, tree_path);

  const auto a = audit_size(tree, net.widths());
  const auto bound = [](const SizeBound& b) { return b.saturated ? std::string(">=2^64") : std::to_string(b.value); };
  if (g.format == "json") {
    std::cout << nlohmann::json{{"tree", tree_path},
                                {"leaves", a.leaves},
                                {"nodes", a.nodes},
                                {"bound", bound(a.bound)},
                                {"naive", bound(a.naive)},
                                {"reduction", a.reduction_ratio},
                                {"seconds", secs}}
                     .dump()
              << "\n";
  } else {
    std::printf("leaves %zu nodes %zu bound %s naive %s reduction %.1f%% time %.3fs -> %s\n", a.leaves, a.nodes,
                bound(a.bound).c_str(), bound(a.naive).c_str(), 100.0 * a.reduction_ratio, secs, tree_path.c_str());
  }
  return kOk;
}

int cmd_certify(const Global& g, const std::string& net_path, const std::string& tree_path, std::vector<double> lower,
                std::vector<double> upper, double radius, std::size_t samples, bool audit_splits) {
  require_file(net_path);
  require_file(tree_path);
  const auto net = load_network(net_path);
  const auto tree = load_tree(tree_path);
  if (tree.input_dim() != net.input_dim() || tree.action_count() != net.action_count())
    throw StructuralError("network and tree shapes differ");
  if (lower.empty()) lower.assign(net.input_dim(), -radius);
  if (upper.empty()) upper.assign(net.input_dim(), radius);
  if (lower.size() != net.input_dim() || upper.size() != net.input_dim())
    throw StructuralError("--lower/--upper must have one entry per input");
  const Box region(lower, upper);

  CertifyReport report;
  report.equivalence = sample_equivalence(net, tree, region, {samples, g.seed, 2});
  report.leaves = certify_leaves(net, tree, g.eps);
  if (audit_splits) report.splits = certify_splits(net, tree, g.eps);
  emit(g.out, g.format == "json" ? report_to_json(report).dump(1) + "\n" : report_to_text(report));
  return report.pass() ? kOk : kPropertyFailure;
}

int cmd_verify(const Global& g, const std::string& spec_path, const std::string& ctrl_path, std::size_t step,
               std::size_t subdivision, std::size_t simulations) {
  require_file(spec_path);
  require_file(ctrl_path);
  auto file = load_spec(spec_path);
  const auto ctrl = load_controller(ctrl_path);
  auto& spec = file.spec;
  if (step) spec.step = step;
  if (subdivision) spec.subdivision = subdivision;
  if (simulations) spec.simulations = simulations;
  if (g.seed_given) spec.seed = g.seed;
  if (g.budget_given) spec.time_budget = g.time_budget;
  validate(spec, file.env);

  const auto trace = rra_verify(file.env, ctrl, spec, {.eps = g.eps});
  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  write_file_atomic(dir / "trace.json", trace_to_json(trace).dump(1) + "\n");
  write_file_atomic(dir / "trace.csv", trace_to_csv(trace));

  std::printf("%s (%s controller, s=%zu, %zu/%zu sub-boxes verified, %.3fs)\n", to_string(trace.verdict).c_str(),
              ctrl.kind().c_str(), spec.step, trace.sub_boxes_verified, trace.sub_boxes, trace.seconds);
  if (trace.verdict == Verdict::falsified) return kPropertyFailure;
  if (trace.timed_out) {
    std::fprintf(stderr, "time budget of %gs exhausted\n", spec.time_budget);
    return kResource;
  }
  return kOk;
}

int cmd_bench(const Global& g, const std::string& net_path, const std::string& spec_path, std::string tree_path,
              const std::vector<std::size_t>& s_values, bool waive_timing) {
  require_file(net_path);
  require_file(spec_path);
  if (!tree_path.empty()) require_file(tree_path);
  const auto net = load_network(net_path);
  auto file = load_spec(spec_path);
  if (g.seed_given) file.spec.seed = g.seed;
  if (g.budget_given) file.spec.time_budget = g.time_budget;
  const auto tree = tree_path.empty() ? transform(net, {.eps = g.eps}) : load_tree(tree_path);

  const auto rows = bench(file.env, net, tree, file.spec, s_values);
  emit(g.out, bench_to_csv(rows));

  int status = kOk;
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2) {
    if (rows[i].verdict != rows[i + 1].verdict) {
      std::fprintf(stderr, "s=%zu: tree and network verdicts differ\n", rows[i].s);
      status = kPropertyFailure;
    }
    const bool deep = net.depth() >= 4;  // two or more hidden layers
    if (deep && rows[i].seconds > rows[i + 1].seconds) {
      std::fprintf(stderr, "s=%zu: tree path %.4fs slower than network path %.4fs%s\n", rows[i].s, rows[i].seconds,
                   rows[i + 1].seconds, waive_timing ? " (waived)" : "");
      if (!waive_timing) status = kPropertyFailure;
    }
  }
  return status;
}

int cmd_gen(const Global& g, const std::vector<std::size_t>& widths) {
  const auto net = random_network(widths, g.seed);
  if (g.out.empty()) std::cout << network_to_json(net).dump(1) << "\n";
  else save_network(net, g.out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact network-to-tree transformation, certification and reachability."};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--eps", g.eps, "Strict-inequality margin for LP feasibility")->check(CLI::PositiveNumber);
  app.add_option("--time-budget", g.time_budget, "Verification wall-clock budget in seconds")
      ->check(CLI::PositiveNumber)
      ->each([&](const std::string&) { g.budget_given = true; });
  app.add_option("--out", g.out, "Output file (transform, certify, bench, gen) or directory (verify)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));

  std::string net_path, tree_path, spec_path, ctrl_path;
  std::size_t max_nodes = 1'000'000, samples = 100'000, step = 0, subdivision = 0, simulations = 0;
  std::vector<double> lower, upper;
  double radius = 10.0;
  bool audit_splits = false, waive_timing = false;
  std::vector<std::size_t> s_values{1, 2}, widths;

  auto* tr = app.add_subcommand("transform", "Build the equivalent tree of a network");
  tr->add_option("network", net_path, "Network JSON")->required();
  tr->add_option("tree", tree_path, "Output tree JSON (default <out>/<network>_sdt.json)");
  tr->add_option("--max-nodes", max_nodes, "Node watchdog");

  auto* ce = app.add_subcommand("certify", "Check a tree against a network");
  ce->add_option("network", net_path, "Network JSON")->required();
  ce->add_option("tree", tree_path, "Tree JSON")->required();
  ce->add_option("--lower", lower, "Sampling box lower corner")->delimiter(',');
  ce->add_option("--upper", upper, "Sampling box upper corner")->delimiter(',');
  ce->add_option("--radius", radius, "Sampling cube half-width when no corners are given")->check(CLI::PositiveNumber);
  ce->add_option("--samples", samples, "Uniform samples");
  ce->add_flag("--audit-splits", audit_splits, "Also recompute every split from the network");

  auto* ve = app.add_subcommand("verify", "Reachability verification of a closed loop");
  ve->add_option("spec", spec_path, "Specification JSON")->required();
  ve->add_option("controller", ctrl_path, "Tree or network JSON")->required();
  ve->add_option("--step", step, "Override the spec step s")->check(CLI::PositiveNumber);
  ve->add_option("--subdivision", subdivision, "Override the initial-set subdivision")->check(CLI::PositiveNumber);
  ve->add_option("--simulations", simulations, "Override the number of falsification rollouts");

  auto* be = app.add_subcommand("bench", "Time verification with the tree and with the network");
  be->add_option("network", net_path, "Network JSON")->required();
  be->add_option("spec", spec_path, "Specification JSON")->required();
  be->add_option("--tree", tree_path, "Certified tree (default: transform the network)");
  be->add_option("--s", s_values, "Step values")->delimiter(',');
  be->add_flag("--waive-timing", waive_timing, "Report but do not fail when the tree path is slower");

  auto* ge = app.add_subcommand("gen", "Random network with the given widths");
  ge->add_option("--widths", widths, "Layer widths, input first")->delimiter(',')->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*tr) return cmd_transform(g, net_path, tree_path, max_nodes);
    if (*ce) return cmd_certify(g, net_path, tree_path, lower, upper, radius, samples, audit_splits);
    if (*ve) return cmd_verify(g, spec_path, ctrl_path, step, subdivision, simulations);
    if (*be) return cmd_bench(g, net_path, spec_path, tree_path, s_values, waive_timing);
    if (*ge) return cmd_gen(g, widths);
  } catch (const ResourceLimit& e) {
    std::fprintf(stderr, "resource limit: %s\n", e.what());
    return kResource;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kUsage;
  } catch (const StructuralError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kUsage;
  } catch (const InternalError& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
