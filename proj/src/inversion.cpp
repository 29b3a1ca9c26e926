#include "pblab/inversion.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pblab {

namespace {

// Refine the root of Delta(q,p) = c on [lo, hi] where Delta(q,lo) <= c < Delta(q,hi).
template <class Delta>
double refine(const Delta& delta_fn, double q, double c, double lo, double hi, double tol) {
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (delta_fn(q, mid) <= c) lo = mid;
        else hi = mid;
    }
    return lo;
}

// Scan [lo, hi] at the requested spacing; return the index of the last
// upcrossing bracket, or -1. all_below / any_below describe the sweep.
struct ScanResult {
    long long upcross = -1;
    bool any_below = false;
    bool end_below = false;
};

template <class Delta>
ScanResult scan_grid(const Delta& delta_fn, double q, double c, double lo, double hi,
                     double spacing, bool parallel) {
    const long long M = std::max<long long>(1, std::llround((hi - lo) / spacing));
    std::vector<double> vals(M + 1);
#pragma omp parallel for schedule(static) if (parallel && M >= 4096)
    for (long long i = 0; i <= M; ++i)
        vals[i] = delta_fn(q, lo + (hi - lo) * double(i) / double(M));

    ScanResult res;
    int upcrossings = 0;
    bool below = vals[0] <= c;
    res.any_below = below;
    for (long long i = 1; i <= M; ++i) {
        const bool b = vals[i] <= c;
        if (below && !b) {
            res.upcross = i - 1;
            ++upcrossings;
        }
        below = b;
        res.any_below = res.any_below || b;
    }
    // convexity: the sublevel set in p is an interval
    assert(upcrossings <= 1);
    (void)upcrossings;
    res.end_below = below;
    return res;
}

template <class Delta>
double invert_impl(const Delta& delta_fn, double q, double c, const InversionOptions& opts,
                   bool parallel) {
    const ScanResult scan = scan_grid(delta_fn, q, c, 0.0, 1.0, opts.grid_spacing, parallel);
    if (scan.end_below) return 1.0;        // sublevel set reaches p = 1
    if (scan.upcross < 0) return 1.0;      // empty sublevel set: sup of empty set
    const long long M = std::llround(1.0 / opts.grid_spacing);
    const double lo = double(scan.upcross) / double(M);
    if (opts.grid_only) return lo;
    const double hi = double(scan.upcross + 1) / double(M);
    return refine(delta_fn, q, c, lo, hi, opts.refine_tol);
}

template <class Delta>
InversionResult extended_impl(const Delta& delta_fn, double q, double c, double u0, double cap,
                              const InversionOptions& opts, bool parallel) {
    if (!(u0 > 0.0)) throw std::invalid_argument("invert_bound_extended: u0 <= 0");

    // windowed scan around a caller hint; valid because a convex function
    // has at most one upcrossing, so finding one in the window settles it
    if (opts.hint >= 0.0) {
        const double lo = std::max(0.0, opts.hint - opts.hint_window);
        const double hi = opts.hint + opts.hint_window;
        const ScanResult scan = scan_grid(delta_fn, q, c, lo, hi, opts.grid_spacing, false);
        if (scan.upcross >= 0) {
            const long long M = std::max<long long>(1, std::llround((hi - lo) / opts.grid_spacing));
            const double a = lo + (hi - lo) * double(scan.upcross) / double(M);
            InversionResult res;
            if (opts.grid_only) {
                res.value = a;
                res.refined = false;
            } else {
                const double b = lo + (hi - lo) * double(scan.upcross + 1) / double(M);
                res.value = refine(delta_fn, q, c, a, b, opts.refine_tol);
            }
            return res;
        }
    }

    double u = u0;
    while (true) {
        const ScanResult scan = scan_grid(delta_fn, q, c, 0.0, u, opts.grid_spacing, parallel);
        if (scan.upcross >= 0) {
            // an upcrossing with the end still below would mean two crossings
            assert(!scan.end_below);
            const long long M = std::max<long long>(1, std::llround(u / opts.grid_spacing));
            const double lo = u * double(scan.upcross) / double(M);
            InversionResult res;
            if (opts.grid_only) {
                res.value = lo;
                res.refined = false;
            } else {
                const double hi = u * double(scan.upcross + 1) / double(M);
                res.value = refine(delta_fn, q, c, lo, hi, opts.refine_tol);
            }
            return res;
        }
        if (u >= cap) {
            InversionResult res;
            res.value = u;
            res.failed = true;
            return res;
        }
        u = std::min(2.0 * u, cap);
    }
}

} // namespace

double invert_bound(const DeltaFn& delta_fn, double q, double c, const InversionOptions& opts) {
    auto wrap = [&](double qq, double pp) { return delta_fn(qq, pp); };
    return invert_impl(wrap, q, c, opts, false);
}

double invert_bound(const CachedDelta& delta, double q, double c, const InversionOptions& opts) {
    return invert_impl(delta, q, c, opts, true);
}

InversionResult invert_bound_extended(const DeltaFn& delta_fn, double q, double c, double u0,
                                      double cap, const InversionOptions& opts) {
    auto wrap = [&](double qq, double pp) { return delta_fn(qq, pp); };
    return extended_impl(wrap, q, c, u0, cap, opts, false);
}

InversionResult invert_bound_extended(const CachedDelta& delta, double q, double c, double u0,
                                      double cap, const InversionOptions& opts) {
    return extended_impl(delta, q, c, u0, cap, opts, true);
}

InversionResult invert_bound_extended_serial(const CachedDelta& delta, double q, double c,
                                             double u0, double cap, const InversionOptions& opts) {
    return extended_impl(delta, q, c, u0, cap, opts, false);
}

ParamGrad invert_derivative(const ConvexDeltaParams& params, double q, double c,
                            const ParamGrad& dc_dparams, double x) {
    (void)c;
    const double slope = delta_grad_p(params, q, x);
    if (!(slope > 1e-12))
        throw std::runtime_error("invert_derivative: flat crossing, slope <= 1e-12");
    ParamGrad grad = delta_grad_params(params, q, x);
    for (std::size_t i = 0; i < grad.size(); ++i)
        grad[i] = (dc_dparams[i] - grad[i]) / slope;
    return grad;
}

} // namespace pblab
