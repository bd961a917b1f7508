#include "nn2sdt/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "nn2sdt/errors.hpp"

namespace nn2sdt {

namespace {

std::mt19937_64 node_rng(std::uint64_t seed, std::size_t node) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(node), static_cast<std::uint32_t>(node >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> random_direction(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> d(n);
  for (double& v : d) v = g(rng);
  return d;
}

void project(const AffineFunc& g, std::vector<double>& x) {
  double nn = 0.0;
  for (double w : g.weights) nn += w * w;
  if (nn == 0.0) return;
  const double s = g(x) / nn;
  for (std::size_t k = 0; k < x.size(); ++k) x[k] -= s * g.weights[k];
}

std::vector<std::size_t> inner_nodes(const SoftDecisionTree& tree) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (std::holds_alternative<InnerNode>(tree.node(i))) out.push_back(i);
  return out;
}

std::vector<std::vector<double>> points_on_split(const SoftDecisionTree& tree, const std::vector<std::size_t>& parents,
                                                 std::size_t node, const Box& region, std::size_t per_split,
                                                 std::uint64_t seed) {
  std::vector<std::vector<double>> pts;
  const auto& g = std::get<InnerNode>(tree.node(node)).split;
  Polyhedron p = node_domain(tree, parents, node).intersect(region.polyhedron());
  p.add({g, Relation::leq});
  p.add({-g, Relation::leq});
  const auto f = check_feasibility(p);
  if (!f.feasible) return pts;
  pts.push_back(f.witness);
  auto rng = node_rng(seed, node);
  while (pts.size() < per_split) {
    const auto r = maximize(AffineFunc(random_direction(rng, tree.input_dim()), 0.0), p);
    if (r.status != LpOutcome::Status::optimal) break;
    pts.push_back(r.witness);
  }
  double wn = 0.0;
  for (double w : g.weights) wn = std::hypot(wn, w);
  std::vector<std::vector<double>> out;
  for (auto& x : pts) {
    project(g, x);
    double scale = 1.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    const double step = 1e-6 * scale / wn;
    out.push_back(x);
    for (double side : {-1.0, 1.0}) {
      auto y = x;
      for (std::size_t k = 0; k < y.size(); ++k) y[k] += side * step * g.weights[k];
      out.push_back(std::move(y));
    }
  }
  return out;
}

std::vector<std::vector<double>> boundary_points_impl(const SoftDecisionTree& tree, const Box& region,
                                                      std::size_t per_split, std::uint64_t seed, bool parallel) {
  if (per_split == 0) return {};
  const auto parents = parent_indices(tree);
  const auto inner = inner_nodes(tree);
  std::vector<std::vector<std::vector<double>>> per_node(inner.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (std::size_t k = 0; k < inner.size(); ++k)
    per_node[k] = points_on_split(tree, parents, inner[k], region, per_split, seed);
  std::vector<std::vector<double>> out;
  for (auto& v : per_node)
    for (auto& x : v) out.push_back(std::move(x));
  return out;
}

EquivalenceReport sample_equivalence_impl(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                          const SampleOptions& options, bool parallel) {
  if (net.input_dim() != tree.input_dim() || region.dim() != net.input_dim())
    throw StructuralError("network, tree and region differ in input dimension");
  if (net.action_count() != tree.action_count()) throw StructuralError("network and tree differ in action count");
  std::vector<std::vector<double>> xs;
  xs.reserve(options.samples);
  std::mt19937_64 rng(options.seed);
  for (std::size_t s = 0; s < options.samples; ++s) {
    std::vector<double> x(region.dim());
    for (std::size_t k = 0; k < x.size(); ++k)
      x[k] = std::uniform_real_distribution<double>(region.lower[k], region.upper[k])(rng);
    xs.push_back(std::move(x));
  }
  const std::size_t uniform = xs.size();
  for (auto& x : boundary_points_impl(tree, region, options.points_per_split, options.seed, parallel))
    xs.push_back(std::move(x));

  std::vector<std::size_t> nn(xs.size()), sdt(xs.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t s = 0; s < xs.size(); ++s) {
    nn[s] = nn_output(net, xs[s]);
    sdt[s] = sdt_eval(tree, xs[s]);
  }
  EquivalenceReport report;
  report.samples_tested = uniform;
  report.boundary_samples_tested = xs.size() - uniform;
  for (std::size_t s = 0; s < xs.size(); ++s) {
    if (nn[s] == sdt[s]) continue;
    Mismatch m{xs[s], nn[s], sdt[s], s >= uniform, tie_closeness(net, tree, xs[s], nn[s], sdt[s])};
    (m.closeness <= kBandTolerance ? report.band_disagreements : report.mismatches).push_back(std::move(m));
  }
  return report;
}

LeafCertificate certify_leaf(const NeuralNetwork& net, const LeafDomain& leaf, double eps) {
  LeafCertificate c;
  c.node = leaf.node;
  c.action = leaf.action;
  if (!is_feasible(leaf.domain, eps)) {
    c.reason = "leaf domain is empty";
    return c;
  }
  const auto table = build_activation_table(net, leaf.domain, eps);
  if (!table.output_defined()) {
    c.reason = "a hidden neuron changes sign inside the leaf domain";
    return c;
  }
  const auto outputs = table.outputs();
  const std::size_t i = leaf.action;
  for (std::size_t j = 1; j <= outputs.size(); ++j) {
    if (j == i) continue;
    // j < i beats i on ties; j > i needs a strict win.
    const HalfSpace beats = j < i ? HalfSpace{output_split(outputs, j, i), Relation::leq}
                                  : HalfSpace{output_split(outputs, i, j), Relation::gt};
    const auto f = check_feasibility(leaf.domain.with(beats), eps);
    if (f.feasible) {
      c.competitor = j;
      c.witness = f.witness;
      c.reason = "output " + std::to_string(j) + " can beat output " + std::to_string(i);
      return c;
    }
  }
  c.pass = true;
  return c;
}

std::vector<LeafCertificate> certify_leaves_impl(const NeuralNetwork& net, const SoftDecisionTree& tree, double eps,
                                                 bool parallel) {
  if (net.input_dim() != tree.input_dim() || net.action_count() != tree.action_count())
    throw StructuralError("network and tree differ in shape");
  const auto leaves = leaf_domains(tree);
  std::vector<LeafCertificate> out(leaves.size());
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::size_t k = 0; k < leaves.size(); ++k) out[k] = certify_leaf(net, leaves[k], eps);
  return out;
}

std::string pair_text(std::size_t a, std::size_t b) { return "(" + std::to_string(a) + ", " + std::to_string(b) + ")"; }

SplitCertificate certify_split(const NeuralNetwork& net, const SoftDecisionTree& tree,
                               const std::vector<std::size_t>& parents, std::size_t node, double eps) {
  SplitCertificate c;
  c.node = node;
  const auto& inner = std::get<InnerNode>(tree.node(node));
  const Polyhedron domain = node_domain(tree, parents, node);
  if (!is_feasible(domain, eps)) {
    c.reason = "node domain is empty";
    return c;
  }
  const auto table = build_activation_table(net, domain, eps);
  const auto r1 = try_rule1(table);
  const auto& prov = inner.provenance;
  switch (prov.rule) {
    case SplitRule::none: c.reason = "split has no provenance"; return c;
    case SplitRule::relu: {
      if (!r1) {
        c.reason = "no neuron crosses zero on this node's domain";
        return c;
      }
      if (*r1 != std::pair{prov.first, prov.second}) {
        c.reason = "first crossing neuron is " + pair_text(r1->first, r1->second) + ", provenance names " +
                   pair_text(prov.first, prov.second);
        return c;
      }
      if (inner.split != *table.pre(prov.first, prov.second)) {
        c.reason = "split differs from the pre-activation of neuron " + pair_text(prov.first, prov.second);
        return c;
      }
      break;
    }
    case SplitRule::output: {
      if (r1) {
        c.reason = "output split where neuron " + pair_text(r1->first, r1->second) + " still crosses zero";
        return c;
      }
      const auto r2 = try_rule2(table, domain, eps);
      if (!r2 || *r2 != std::pair{prov.first, prov.second}) {
        c.reason = "output pair " + pair_text(prov.first, prov.second) + " is not the first pair of competing outputs";
        return c;
      }
      if (inner.split != output_split(table.outputs(), prov.first, prov.second)) {
        c.reason = "split differs from F_" + std::to_string(prov.second) + " - F_" + std::to_string(prov.first);
        return c;
      }
      break;
    }
  }
  c.pass = true;
  return c;
}

}  // namespace

double tie_closeness(const NeuralNetwork& net, const SoftDecisionTree& tree, std::span<const double> x,
                     std::size_t nn_action, std::size_t sdt_action) {
  auto rel = [](double q, double mag) { return mag > 0.0 ? std::abs(q) / mag : (q == 0.0 ? 0.0 : 1.0); };
  double best = std::numeric_limits<double>::infinity();
  // Forward pass carrying the magnitude sum alongside each value.
  std::vector<double> h(x.begin(), x.end()), mh(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) mh[k] = std::abs(x[k]);
  for (std::size_t l = 2; l <= net.depth(); ++l) {
    const Matrix& w = net.weight(l);
    const auto b = net.bias(l);
    std::vector<double> z(w.rows), mz(w.rows);
    for (std::size_t i = 0; i < w.rows; ++i) {
      double acc = 0.0, mag = 0.0;
      for (std::size_t j = 0; j < w.cols; ++j) {
        acc += w(i, j) * h[j];
        mag += std::abs(w(i, j)) * mh[j];
      }
      z[i] = acc + b[i];
      mz[i] = mag + std::abs(b[i]);
    }
    if (l == net.depth()) {
      const std::size_t a = nn_action - 1, c = sdt_action - 1;
      best = std::min(best, rel(z[a] - z[c], mz[a] + mz[c]));
      break;
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
      best = std::min(best, rel(z[i], mz[i]));
      if (!(z[i] > 0.0)) z[i] = mz[i] = 0.0;
    }
    h = std::move(z);
    mh = std::move(mz);
  }
  std::size_t i = 0;
  while (const auto* inner = std::get_if<InnerNode>(&tree.node(i))) {
    const double g = inner->split(x);
    double mag = std::abs(inner->split.bias);
    for (std::size_t k = 0; k < x.size(); ++k) mag += std::abs(inner->split.weights[k] * x[k]);
    best = std::min(best, rel(g, mag));
    i = g <= 0.0 ? inner->left : inner->right;
  }
  return best;
}

std::vector<std::vector<double>> boundary_points(const SoftDecisionTree& tree, const Box& region, std::size_t per_split,
                                                 std::uint64_t seed) {
  return boundary_points_impl(tree, region, per_split, seed, false);
}

EquivalenceReport sample_equivalence(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                     const SampleOptions& options) {
  return sample_equivalence_impl(net, tree, region, options, true);
}

EquivalenceReport sample_equivalence_serial(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                            const SampleOptions& options) {
  return sample_equivalence_impl(net, tree, region, options, false);
}

std::vector<LeafCertificate> certify_leaves(const NeuralNetwork& net, const SoftDecisionTree& tree, double eps) {
  return certify_leaves_impl(net, tree, eps, true);
}

std::vector<LeafCertificate> certify_leaves_serial(const NeuralNetwork& net, const SoftDecisionTree& tree, double eps) {
  return certify_leaves_impl(net, tree, eps, false);
}

std::vector<SplitCertificate> certify_splits(const NeuralNetwork& net, const SoftDecisionTree& tree, double eps) {
  if (net.input_dim() != tree.input_dim() || net.action_count() != tree.action_count())
    throw StructuralError("network and tree differ in shape");
  const auto parents = parent_indices(tree);
  const auto inner = inner_nodes(tree);
  std::vector<SplitCertificate> out(inner.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::size_t k = 0; k < inner.size(); ++k) out[k] = certify_split(net, tree, parents, inner[k], eps);
  return out;
}

SizeAudit audit_size(const SoftDecisionTree& tree, const std::vector<std::size_t>& widths) {
  if (widths.size() < 2 || widths.front() != tree.input_dim() || widths.back() != tree.action_count())
    throw StructuralError("widths do not match the tree");
  SizeAudit a;
  a.leaves = tree.leaf_count();
  a.nodes = tree.size();
  a.bound = size_bound(widths);
  a.naive = naive_full_split(widths);
  a.within_bound = a.leaves <= a.bound.value;
  a.reduction_ratio = 1.0 - static_cast<double>(a.leaves) / static_cast<double>(a.naive.value);
  return a;
}

LeafAffineCheck check_leaf_affine(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                  std::size_t per_leaf, std::uint64_t seed, double eps) {
  LeafAffineCheck out;
  const auto leaves = leaf_domains(tree);
  const Polyhedron box = region.polyhedron();
  for (const auto& leaf : leaves) {
    const Polyhedron d = leaf.domain.intersect(box);
    const auto f = check_feasibility(d, eps);
    if (!f.feasible) continue;
    const auto table = build_activation_table(net, leaf.domain, eps);
    if (!table.output_defined()) throw InternalError("leaf without defined outputs");
    const auto outputs = table.outputs();
    std::vector<std::vector<double>> pts{f.witness};
    auto rng = node_rng(seed, leaf.node);
    for (std::size_t k = 1; k < per_leaf; ++k) {
      const auto r = maximize(AffineFunc(random_direction(rng, net.input_dim()), 0.0), d);
      if (r.status != LpOutcome::Status::optimal) break;
      // Pull the vertex toward the interior witness.
      std::vector<double> x(r.witness.size());
      const double t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = t * r.witness[j] + (1.0 - t) * f.witness[j];
      pts.push_back(std::move(x));
    }
    for (const auto& x : pts) {
      const auto truth = layer_characteristic(net, net.depth(), x);
      for (std::size_t i = 0; i < truth.size(); ++i) {
        const double err = std::abs(outputs[i](x) - truth[i]) / std::max(1.0, std::abs(truth[i]));
        out.max_relative_error = std::max(out.max_relative_error, err);
      }
      ++out.points;
    }
  }
  return out;
}

std::vector<Mutant> make_mutants(const SoftDecisionTree& tree, std::size_t max_count, std::uint64_t seed) {
  std::vector<std::size_t> sites;
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (std::holds_alternative<InnerNode>(tree.node(i)) || tree.action_count() > 1) sites.push_back(i);
  if (sites.size() > max_count) {
    std::mt19937_64 rng(seed);
    std::shuffle(sites.begin(), sites.end(), rng);
    sites.resize(max_count);
    std::sort(sites.begin(), sites.end());
  }
  std::vector<Mutant> out;
  out.reserve(sites.size());
  for (std::size_t i : sites) {
    auto nodes = tree.nodes();
    MutationKind kind;
    if (auto* inner = std::get_if<InnerNode>(&nodes[i])) {
      inner->split = -inner->split;
      kind = MutationKind::split_negation;
    } else {
      auto& q = std::get<LeafNode>(nodes[i]).q;
      const std::size_t a = std::get<LeafNode>(nodes[i]).action();
      q[a - 1] = 0;
      q[a % q.size()] = 1;
      kind = MutationKind::leaf_flip;
    }
    out.push_back({kind, i, SoftDecisionTree(tree.input_dim(), tree.action_count(), std::move(nodes))});
  }
  return out;
}

std::size_t CertifyReport::failed_leaves() const noexcept {
  return static_cast<std::size_t>(std::count_if(leaves.begin(), leaves.end(), [](const auto& c) { return !c.pass; }));
}

std::size_t CertifyReport::failed_splits() const noexcept {
  return static_cast<std::size_t>(std::count_if(splits.begin(), splits.end(), [](const auto& c) { return !c.pass; }));
}

CertifyReport certify(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                      const SampleOptions& options, double eps) {
  CertifyReport r;
  r.equivalence = sample_equivalence(net, tree, region, options);
  r.leaves = certify_leaves(net, tree, eps);
  r.splits = certify_splits(net, tree, eps);
  return r;
}

nlohmann::json report_to_json(const CertifyReport& report) {
  nlohmann::json j;
  j["verdict"] = report.pass() ? "PASS" : "FAIL";
  j["samples_tested"] = report.equivalence.samples_tested;
  j["boundary_samples_tested"] = report.equivalence.boundary_samples_tested;
  j["mismatches"] = nlohmann::json::array();
  for (const auto& m : report.equivalence.mismatches)
    j["mismatches"].push_back(
        {{"x", m.x}, {"nn_action", m.nn_action}, {"sdt_action", m.sdt_action}, {"on_boundary", m.on_boundary}});
  j["band_disagreements"] = report.equivalence.band_disagreements.size();
  j["leaves"] = report.leaves.size();
  j["leaf_failures"] = nlohmann::json::array();
  for (const auto& c : report.leaves)
    if (!c.pass)
      j["leaf_failures"].push_back({{"node", c.node},
                                    {"action", c.action},
                                    {"reason", c.reason},
                                    {"competitor", c.competitor},
                                    {"witness", c.witness}});
  j["splits"] = report.splits.size();
  j["split_failures"] = nlohmann::json::array();
  for (const auto& c : report.splits)
    if (!c.pass) j["split_failures"].push_back({{"node", c.node}, {"reason", c.reason}});
  return j;
}

std::string report_to_text(const CertifyReport& report) {
  std::ostringstream os;
  os << "verdict: " << (report.pass() ? "PASS" : "FAIL") << "\n";
  os << "samples: " << report.equivalence.samples_tested << " uniform, " << report.equivalence.boundary_samples_tested
     << " on or next to split hyperplanes, " << report.equivalence.mismatches.size() << " mismatches, "
     << report.equivalence.band_disagreements.size() << " rounding ties\n";
  os << "leaves: " << report.leaves.size() << " certified, " << report.failed_leaves() << " failed\n";
  os << "splits: " << report.splits.size() << " checked, " << report.failed_splits() << " failed\n";
  std::size_t shown = 0;
  for (const auto& m : report.equivalence.mismatches) {
    if (shown++ == 5) break;
    os << "  mismatch at (";
    for (std::size_t k = 0; k < m.x.size(); ++k) os << (k ? ", " : "") << m.x[k];
    os << "): network " << m.nn_action << ", tree " << m.sdt_action << "\n";
  }
  for (const auto& c : report.leaves)
    if (!c.pass && shown++ < 10) os << "  leaf " << c.node << ": " << c.reason << "\n";
  for (const auto& c : report.splits)
    if (!c.pass && shown++ < 15) os << "  split " << c.node << ": " << c.reason << "\n";
  return os.str();
}

}  // namespace nn2sdt
