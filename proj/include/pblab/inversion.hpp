#pragma once

#include <functional>

#include "pblab/convex_delta.hpp"
#include "pblab/i_delta.hpp"

namespace pblab {

// Result of the extended partial inversion. When no upcrossing of the
// level was found up to the scan ceiling, failed is set, value holds the
// ceiling, and the gradient contribution must be zeroed by the caller.
struct InversionResult {
    double value = 1.0;
    bool failed = false;
    bool refined = true; // false when grid-only mode returned a grid point
};

struct InversionOptions {
    double grid_spacing = 1e-4;
    double refine_tol = 1e-10;
    bool grid_only = false;    // skip bisection refinement (grid replication mode)
    double hint = -1.0;        // scan a window around this point first, if >= 0
    double hint_window = 0.05;
};

// B[Delta(q,.), c] = sup{p in [0,1] : Delta(q,p) <= c} for Delta convex in
// p. Scans the grid for the last upcrossing of c and bisection-refines
// between the bracketing points; returns 1 when the whole domain is in
// the sublevel set and also when the sublevel set is empty (sup of the
// empty set is taken to be 1).
double invert_bound(const DeltaFn& delta_fn, double q, double c,
                    const InversionOptions& opts = {});
double invert_bound(const CachedDelta& delta, double q, double c,
                    const InversionOptions& opts = {});

// Extension to p >= 0 ignoring the p <= 1 cap, used during training so a
// vacuous bound still produces a gradient. Scans [0, u0], doubling the
// ceiling until an upcrossing appears or the cap is hit.
InversionResult invert_bound_extended(const DeltaFn& delta_fn, double q, double c, double u0,
                                      double cap = 8.0, const InversionOptions& opts = {});
InversionResult invert_bound_extended(const CachedDelta& delta, double q, double c, double u0,
                                      double cap = 8.0, const InversionOptions& opts = {});

// Serial references for the benchmark and kernel tests.
InversionResult invert_bound_extended_serial(const CachedDelta& delta, double q, double c,
                                             double u0, double cap = 8.0,
                                             const InversionOptions& opts = {});

// Implicit-function derivative of the inverse at the upcrossing x:
//   d/dtheta f^{-1}(c) = (dc/dtheta - dDelta/dtheta at x) / (dDelta/dp at x).
// Throws if the crossing is numerically flat (slope <= 1e-12); callers
// zero the gradient and log in that case.
ParamGrad invert_derivative(const ConvexDeltaParams& params, double q, double c,
                            const ParamGrad& dc_dparams, double x);

} // namespace pblab
