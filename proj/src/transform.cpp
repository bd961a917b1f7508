#include "nn2sdt/transform.hpp"

#include <atomic>
#include <exception>
#include <limits>
#include <memory>
#include <string>

#include "nn2sdt/errors.hpp"

namespace nn2sdt {

ActivationTable::ActivationTable(const NeuralNetwork& net) {
  const std::size_t L = net.depth();
  pre_.resize(L - 1);
  for (std::size_t l = 2; l <= L; ++l) pre_[l - 2].resize(net.width(l));
  phase_.resize(L - 2);
  for (std::size_t l = 2; l < L; ++l) phase_[l - 2].assign(net.width(l), Phase::unknown);
  compute_row(net, 2);
}

const std::optional<AffineFunc>& ActivationTable::pre(std::size_t layer, std::size_t neuron) const {
  if (layer < 2 || layer > depth() || neuron < 1 || neuron > pre_[layer - 2].size())
    throw StructuralError("activation table index (" + std::to_string(layer) + ", " + std::to_string(neuron) +
                          ") out of range");
  return pre_[layer - 2][neuron - 1];
}

Phase ActivationTable::phase(std::size_t layer, std::size_t neuron) const {
  if (layer < 2 || layer >= depth() || neuron < 1 || neuron > phase_[layer - 2].size())
    throw StructuralError("no phase for (" + std::to_string(layer) + ", " + std::to_string(neuron) + ")");
  return phase_[layer - 2][neuron - 1];
}

std::optional<AffineFunc> ActivationTable::post(std::size_t layer, std::size_t neuron) const {
  switch (phase(layer, neuron)) {
    case Phase::active: return pre(layer, neuron);
    case Phase::inactive: return AffineFunc::constant(pre_.front().front()->dim(), 0.0);
    default: return std::nullopt;
  }
}

bool ActivationTable::output_defined() const { return pre_.back().front().has_value(); }

std::vector<AffineFunc> ActivationTable::outputs() const {
  if (!output_defined()) throw InternalError("output pre-activations are undefined");
  std::vector<AffineFunc> out;
  out.reserve(pre_.back().size());
  for (const auto& f : pre_.back()) out.push_back(*f);
  return out;
}

void ActivationTable::compute_row(const NeuralNetwork& net, std::size_t layer) {
  const Matrix& w = net.weight(layer);
  const auto b = net.bias(layer);
  auto& row = pre_[layer - 2];
  if (layer == 2) {
    // Same arithmetic as layer_feedforward, so first-layer splits agree bitwise.
    for (std::size_t i = 0; i < w.rows; ++i) {
      const auto r = w.row(i);
      row[i] = AffineFunc(std::vector<double>(r.begin(), r.end()), b[i]);
    }
    return;
  }
  const std::size_t n = net.input_dim();
  const auto& below = pre_[layer - 3];
  const auto& phases = phase_[layer - 3];
  for (std::size_t i = 0; i < w.rows; ++i) {
    AffineFunc f = AffineFunc::constant(n, 0.0);
    for (std::size_t j = 0; j < w.cols; ++j) {
      if (phases[j] != Phase::active) continue;  // inactive posts are 0
      const AffineFunc& g = *below[j];
      for (std::size_t k = 0; k < n; ++k) f.weights[k] += w(i, j) * g.weights[k];
      f.bias += w(i, j) * g.bias;
    }
    f.bias += b[i];
    row[i] = std::move(f);
  }
}

void ActivationTable::refine(const NeuralNetwork& net, const Polyhedron& domain, double eps, bool stop_at_crossing) {
  const std::size_t L = depth();
  for (std::size_t l = 2; l <= L; ++l) {
    if (!pre_[l - 2].front()) {
      for (Phase p : phase_[l - 3])
        if (p != Phase::active && p != Phase::inactive) return;
      compute_row(net, l);
    }
    if (l == L) return;
    bool decided = true;
    auto& phases = phase_[l - 2];
    for (std::size_t i = 0; i < phases.size(); ++i) {
      if (phases[i] == Phase::unknown) {
        const AffineFunc& f = *pre_[l - 2][i];
        const bool le = is_feasible(domain.with({f, Relation::leq}), eps);
        const bool gt = is_feasible(domain.with({f, Relation::gt}), eps);
        if (!le && !gt)
          throw InternalError("neuron (" + std::to_string(l) + ", " + std::to_string(i + 1) +
                              ") has no feasible side on a feasible domain");
        phases[i] = le && gt ? Phase::crossing : (le ? Phase::inactive : Phase::active);
      }
      if (phases[i] == Phase::crossing) {
        decided = false;
        if (stop_at_crossing) return;
      }
    }
    if (!decided) return;
  }
}

ActivationTable ActivationTable::child() const {
  ActivationTable t = *this;
  for (auto& layer : t.phase_)
    for (Phase& p : layer)
      if (p == Phase::crossing) p = Phase::unknown;
  return t;
}

ActivationTable ActivationTable::child(std::size_t layer, std::size_t neuron, Phase known) const {
  if (phase(layer, neuron) != Phase::crossing) throw InternalError("split on a neuron that does not cross");
  ActivationTable t = child();
  t.phase_[layer - 2][neuron - 1] = known;
  return t;
}

ActivationTable build_activation_table(const NeuralNetwork& net, const Polyhedron& domain, double eps) {
  if (domain.dim() != net.input_dim()) throw StructuralError("domain dimension does not match the network");
  ActivationTable t(net);
  t.refine(net, domain, eps, false);
  return t;
}

std::optional<std::pair<std::size_t, std::size_t>> try_rule1(const ActivationTable& table) {
  for (std::size_t l = 2; l < table.depth(); ++l) {
    if (!table.pre(l, 1)) return std::nullopt;
    for (std::size_t i = 1; i <= table.width(l); ++i)
      if (table.phase(l, i) == Phase::crossing) return std::pair{l, i};
  }
  return std::nullopt;
}

AffineFunc output_split(const std::vector<AffineFunc>& outputs, std::size_t i1, std::size_t i2) {
  return outputs.at(i2 - 1) - outputs.at(i1 - 1);
}

Polyhedron winner_region(const std::vector<AffineFunc>& outputs, std::size_t i, const Polyhedron& domain) {
  Polyhedron p = domain;
  for (std::size_t j = 1; j <= outputs.size(); ++j) {
    if (j < i) p.add({output_split(outputs, j, i), Relation::gt});
    if (j > i) p.add({output_split(outputs, i, j), Relation::leq});
  }
  return p;
}

std::optional<std::pair<std::size_t, std::size_t>> try_rule2(const ActivationTable& table, const Polyhedron& domain,
                                                             double eps) {
  const auto outputs = table.outputs();
  std::size_t first = 0;
  for (std::size_t i = 1; i <= outputs.size(); ++i) {
    if (!is_feasible(winner_region(outputs, i, domain), eps)) continue;
    if (first != 0) return std::pair{first, i};
    first = i;
  }
  return std::nullopt;
}

std::size_t make_leaf(const ActivationTable& table, const Polyhedron& domain, double eps) {
  const auto outputs = table.outputs();
  for (std::size_t i = 1; i <= outputs.size(); ++i) {
    bool wins = true;
    for (std::size_t j = 1; j <= outputs.size() && wins; ++j) {
      if (j < i) wins = !is_feasible(domain.with({output_split(outputs, j, i), Relation::leq}), eps);
      if (j > i) wins = !is_feasible(domain.with({output_split(outputs, i, j), Relation::gt}), eps);
    }
    if (wins) return i;
  }
  throw InternalError("no output wins on the whole leaf domain");
}

namespace {

struct Context {
  Polyhedron domain;
  ActivationTable table;
};

struct Proto {
  std::size_t action = 0;  // leaf when nonzero
  AffineFunc split;
  Provenance provenance;
  std::unique_ptr<Proto> left;
  std::unique_ptr<Proto> right;
};

class Builder {
 public:
  Builder(const NeuralNetwork& net, const TransformOptions& options) : net_(net), options_(options) {}

  std::unique_ptr<Proto> build(Context ctx, std::size_t depth, bool parallel) {
    if (count_.fetch_add(1, std::memory_order_relaxed) >= options_.max_nodes)
      throw ResourceLimit("transform exceeded " + std::to_string(options_.max_nodes) + " nodes");
    auto node = std::make_unique<Proto>();
    auto children = expand(ctx, *node);
    if (!children) return node;
    Context& lctx = children->first;
    Context& rctx = children->second;
    if (parallel && depth < options_.parallel_depth) {
      std::exception_ptr lerr, rerr;
#pragma omp task default(shared)
      {
        try {
          node->left = build(std::move(lctx), depth + 1, true);
        } catch (...) {
          lerr = std::current_exception();
        }
      }
      try {
        node->right = build(std::move(rctx), depth + 1, true);
      } catch (...) {
        rerr = std::current_exception();
      }
#pragma omp taskwait
      if (lerr) std::rethrow_exception(lerr);
      if (rerr) std::rethrow_exception(rerr);
    } else {
      node->left = build(std::move(lctx), depth + 1, false);
      node->right = build(std::move(rctx), depth + 1, false);
    }
    return node;
  }

 private:
  std::optional<std::pair<Context, Context>> expand(Context& ctx, Proto& node) const {
    const double eps = options_.eps;
    ctx.table.refine(net_, ctx.domain, eps, true);
    if (const auto r1 = try_rule1(ctx.table)) {
      const auto [l, i] = *r1;
      const auto& g = ctx.table.pre(l, i);
      if (!g) throw InternalError("split on an undefined pre-activation");
      node.split = *g;
      node.provenance = Provenance::relu(l, i);
      return std::pair{Context{ctx.domain.with({*g, Relation::leq}), ctx.table.child(l, i, Phase::inactive)},
                       Context{ctx.domain.with({*g, Relation::gt}), ctx.table.child(l, i, Phase::active)}};
    }
    if (const auto r2 = try_rule2(ctx.table, ctx.domain, eps)) {
      const auto [i1, i2] = *r2;
      node.split = output_split(ctx.table.outputs(), i1, i2);
      node.provenance = Provenance::output(i1, i2);
      return std::pair{Context{ctx.domain.with({node.split, Relation::leq}), ctx.table.child()},
                       Context{ctx.domain.with({node.split, Relation::gt}), ctx.table.child()}};
    }
    node.action = make_leaf(ctx.table, ctx.domain, eps);
    return std::nullopt;
  }

  const NeuralNetwork& net_;
  const TransformOptions& options_;
  std::atomic<std::size_t> count_{0};
};

void flatten(const Proto& p, std::size_t actions, std::vector<SdtNode>& out) {
  if (p.action != 0) {
    LeafNode leaf;
    leaf.q.assign(actions, 0);
    leaf.q[p.action - 1] = 1;
    out.emplace_back(std::move(leaf));
    return;
  }
  const std::size_t self = out.size();
  out.emplace_back(InnerNode{p.split, p.provenance, 0, 0});
  std::get<InnerNode>(out[self]).left = out.size();
  flatten(*p.left, actions, out);
  std::get<InnerNode>(out[self]).right = out.size();
  flatten(*p.right, actions, out);
}

SoftDecisionTree finish(const NeuralNetwork& net, const Proto& root) {
  std::vector<SdtNode> nodes;
  flatten(root, net.action_count(), nodes);
  return SoftDecisionTree(net.input_dim(), net.action_count(), std::move(nodes));
}

}  // namespace

SoftDecisionTree transform_serial(const NeuralNetwork& net, const TransformOptions& options) {
  Builder b(net, options);
  const auto root = b.build(Context{Polyhedron(net.input_dim()), ActivationTable(net)}, 0, false);
  return finish(net, *root);
}

SoftDecisionTree transform(const NeuralNetwork& net, const TransformOptions& options) {
  Builder b(net, options);
  std::unique_ptr<Proto> root;
  std::exception_ptr err;
#pragma omp parallel default(shared)
#pragma omp single
  {
    try {
      root = b.build(Context{Polyhedron(net.input_dim()), ActivationTable(net)}, 0, true);
    } catch (...) {
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return finish(net, *root);
}

namespace {

constexpr std::uint64_t kMax = std::numeric_limits<std::uint64_t>::max();

SizeBound mul(SizeBound a, SizeBound b) {
  SizeBound r{0, a.saturated || b.saturated};
  if (__builtin_mul_overflow(a.value, b.value, &r.value)) r = {kMax, true};
  if (r.saturated) r.value = kMax;
  return r;
}

SizeBound add(SizeBound a, SizeBound b) {
  SizeBound r{0, a.saturated || b.saturated};
  if (__builtin_add_overflow(a.value, b.value, &r.value)) r = {kMax, true};
  if (r.saturated) r.value = kMax;
  return r;
}

SizeBound pow2(std::size_t e) { return e >= 64 ? SizeBound{kMax, true} : SizeBound{std::uint64_t{1} << e, false}; }

SizeBound binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return {0, false};
  k = std::min(k, n - k);
  unsigned __int128 c = 1;
  for (std::uint64_t j = 1; j <= k; ++j) {
    c = c * (n - k + j) / j;  // exact: c holds C(n-k+j, j)
    if (c > kMax) return {kMax, true};
  }
  return {static_cast<std::uint64_t>(c), false};
}

void check_widths(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw StructuralError("need at least two layers");
  for (std::size_t w : widths)
    if (w == 0) throw StructuralError("layer widths must be positive");
}

}  // namespace

SizeBound size_bound(const std::vector<std::size_t>& widths) {
  check_widths(widths);
  SizeBound total{1, false};
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) {
    SizeBound sum{0, false};
    for (std::size_t k = 0; k <= widths.front(); ++k) sum = add(sum, binomial(widths[l], k));
    total = mul(total, sum);
  }
  return mul(total, pow2(widths.back()));
}

SizeBound naive_full_split(const std::vector<std::size_t>& widths) {
  check_widths(widths);
  std::size_t hidden = 0;
  for (std::size_t l = 1; l + 1 < widths.size(); ++l) hidden += widths[l];
  return mul(pow2(hidden), pow2(widths.back() - 1));
}

}  // namespace nn2sdt
