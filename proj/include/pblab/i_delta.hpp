#pragma once

#include <functional>
#include <vector>

#include "pblab/convex_delta.hpp"

namespace pblab {

// Moment term of the generic bound: the supremum over the Bernoulli
// parameter r of E[e^{n Delta(X/n, r)}], X ~ Bin(n, r), taken over a
// uniform r-grid. log_value is authoritative; value may overflow to inf
// for comparators with a large additive offset.
struct IDeltaResult {
    double value = 0.0;
    double log_value = 0.0;
    double argmax_r = 0.0;
    double grid_spacing = 0.0;
    bool ok = true; // false if some Delta evaluation was non-finite
};

using DeltaFn = std::function<double(double, double)>;

// Grid evaluation of the moment term; per-r sums run in log space with
// log-binomial weights. At r = 0 and r = 1 only the degenerate k term
// contributes (0^0 = 1). OpenMP over the r-grid; the per-r values do not
// depend on the schedule, and the final argmax pass is serial.
IDeltaResult i_delta_eval(const DeltaFn& delta_fn, int n, double spacing);

// Serial reference implementation, kept for tests and the benchmark.
IDeltaResult i_delta_eval_serial(const DeltaFn& delta_fn, int n, double spacing);

// Fast path for the trained comparator (no std::function indirection).
IDeltaResult i_delta_eval(const ConvexDeltaParams& params, int n, double spacing);
IDeltaResult i_delta_eval_serial(const ConvexDeltaParams& params, int n, double spacing);

// Gradient of log I_Delta(n) with respect to the comparator parameters,
// holding r fixed at the maximizer (the derivative through the argmax
// vanishes or can be dropped at a binding constraint): a softmax-weighted
// sum of n * dDelta/dtheta(k/n, r*).
ParamGrad i_delta_grad_params(const ConvexDeltaParams& params, int n, double argmax_r);

// Exact moment value for Delta = kl: sum_k C(n,k) (k/n)^k (1-k/n)^{n-k},
// the r-independent form of the summand, accumulated in log space.
double i_kl_exact(int n);

} // namespace pblab
