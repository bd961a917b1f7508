// Serial reference kernels against their OpenMP versions. Each pair must
// produce identical results; the table reports wall time and speedup.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "nn2sdt/certify.hpp"
#include "nn2sdt/reach.hpp"
#include "nn2sdt/transform.hpp"

using namespace nn2sdt;

namespace {

double time_of(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool failed = false;

void row(const std::string& name, double serial, double parallel, bool same) {
  std::printf("%-34s %10.3f %10.3f %8.2fx  %s\n", name.c_str(), serial, parallel, serial / parallel,
              same ? "identical" : "DIFFERENT");
  failed = failed || !same;
}

bool same_boxes(const ReachTrace& a, const ReachTrace& b) {
  if (a.boxes.size() != b.boxes.size() || a.verdict != b.verdict) return false;
  for (std::size_t m = 0; m < a.boxes.size(); ++m)
    if (!(a.boxes[m].box == b.boxes[m].box)) return false;
  return true;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-34s %10s %10s %9s\n", "kernel", "serial s", "openmp s", "speedup");

  for (const auto& widths : {std::vector<std::size_t>{2, 64, 3}, {3, 16, 16, 3}, {4, 8, 8, 2}}) {
    const auto net = random_network(widths, 0);
    std::string shape;
    for (auto w : widths) shape += (shape.empty() ? "" : ",") + std::to_string(w);

    SoftDecisionTree a = SoftDecisionTree::leaf(1, 1, 1), b = a;
    const double ts = time_of([&] { a = transform_serial(net); });
    const double tp = time_of([&] { b = transform(net); });
    row("transform (" + shape + ")", ts, tp, a.nodes() == b.nodes());

    const Box region = Box::cube(net.input_dim(), 10.0);
    EquivalenceReport ea, eb;
    const SampleOptions opts{100000, 0, 2};
    const double ss = time_of([&] { ea = sample_equivalence_serial(net, a, region, opts); });
    const double sp = time_of([&] { eb = sample_equivalence(net, a, region, opts); });
    row("sample_equivalence (" + shape + ")", ss, sp,
        ea.mismatches.size() == eb.mismatches.size() && ea.boundary_samples_tested == eb.boundary_samples_tested);

    std::vector<LeafCertificate> la, lb;
    const double cs = time_of([&] { la = certify_leaves_serial(net, a); });
    const double cp = time_of([&] { lb = certify_leaves(net, a); });
    bool same = la.size() == lb.size();
    for (std::size_t i = 0; same && i < la.size(); ++i) same = la[i].pass == lb[i].pass && la[i].node == lb[i].node;
    row("certify_leaves (" + shape + ")", cs, cp, same);
  }

  const auto env = EnvModel::mountaincar();
  const auto net = random_network({2, 16, 16, 3}, 0);
  auto spec = default_spec(env);
  spec.subdivision = 16;
  spec.simulations = 0;
  for (const auto& ctrl : {Controller::sdt(transform(net)), Controller::nn(net)}) {
    ReachTrace ra, rb;
    const double rs = time_of([&] { ra = rra_verify(env, ctrl, spec, {.parallel = false}); });
    const double rp = time_of([&] { rb = rra_verify(env, ctrl, spec, {.parallel = true}); });
    row("rra_verify k=16 (" + ctrl.kind() + ")", rs, rp, same_boxes(ra, rb));
  }
  return failed ? 1 : 0;
}
