#include "tox2/quadrature.hpp"

#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace tox2 {

namespace {

constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
// Gauss weights for the odd-indexed Kronrod nodes (the 7-point Gauss rule).
constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double lo;
  double hi;
  double value;
  double error;
  int depth;
  bool operator<(const Segment& other) const { return error < other.error; }
};

Segment gk15(const std::function<double(double)>& f, double lo, double hi, int depth, int& evals) {
  const double center = 0.5 * (lo + hi);
  const double half = 0.5 * (hi - lo);
  const double fc = f(center);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kKronrodNodes[j];
    const double fsum = f(center - dx) + f(center + dx);
    kronrod += kKronrodWeights[j] * fsum;
    if (j % 2 == 1) gauss += kGaussWeights[j / 2] * fsum;
  }
  evals += 15;
  return {lo, hi, kronrod * half, std::fabs((kronrod - gauss) * half), depth};
}

}  // namespace

QuadratureResult integrate_adaptive(const std::function<double(double)>& f, double lo, double hi,
                                    double rel_tol, int max_depth) {
  QuadratureResult out;
  if (hi <= lo) return out;
  std::priority_queue<Segment> work;
  work.push(gk15(f, lo, hi, 0, out.evaluations));
  double total = work.top().value;
  double total_err = work.top().error;
  std::vector<Segment> done;
  constexpr int kMaxSegments = 4000;
  while (!work.empty() && total_err > rel_tol * std::fabs(total) && total_err > 1e-300 &&
         static_cast<int>(work.size() + done.size()) < kMaxSegments) {
    const Segment worst = work.top();
    work.pop();
    if (worst.depth >= max_depth) {
      done.push_back(worst);
      continue;
    }
    const double mid = 0.5 * (worst.lo + worst.hi);
    const Segment left = gk15(f, worst.lo, mid, worst.depth + 1, out.evaluations);
    const Segment right = gk15(f, mid, worst.hi, worst.depth + 1, out.evaluations);
    total += left.value + right.value - worst.value;
    total_err += left.error + right.error - worst.error;
    work.push(left);
    work.push(right);
  }
  // re-sum from scratch to shed accumulated update round-off
  double value = 0.0;
  double error = 0.0;
  for (const auto& s : done) {
    value += s.value;
    error += s.error;
  }
  while (!work.empty()) {
    value += work.top().value;
    error += work.top().error;
    work.pop();
  }
  out.value = value;
  out.error = error;
  return out;
}

}  // namespace tox2
