#include "pblab/i_delta.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pblab/scalar_bounds.hpp"

namespace pblab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log sum_k exp(lw[k] + n*Delta(k/n, r)) at one interior grid point.
template <class Delta>
double per_r_log_sum(const Delta& delta_fn, int n, double r, const std::vector<double>& lch,
                     std::vector<double>& scratch, bool& ok) {
    const double lr = std::log(r), l1r = std::log1p(-r);
    double m = kNegInf;
    for (int k = 0; k <= n; ++k) {
        const double d = delta_fn(double(k) / n, r);
        if (!std::isfinite(d)) { ok = false; return kNegInf; }
        scratch[k] = lch[k] + k * lr + (n - k) * l1r + n * d;
        if (scratch[k] > m) m = scratch[k];
    }
    double s = 0.0;
    for (int k = 0; k <= n; ++k) s += std::exp(scratch[k] - m);
    return m + std::log(s);
}

template <class Delta>
IDeltaResult eval_impl(const Delta& delta_fn, int n, double spacing, bool parallel) {
    if (n <= 0) throw std::invalid_argument("i_delta_eval: n <= 0");
    if (!(spacing > 0.0 && spacing <= 1e-3))
        throw std::invalid_argument("i_delta_eval: spacing must be in (0, 1e-3]");
    const long long M = std::llround(1.0 / spacing);
    std::vector<double> lch(n + 1);
    for (int k = 0; k <= n; ++k) lch[k] = log_choose(n, k);

    std::vector<double> log_sums(M + 1);
    bool ok = true;

    // endpoints: only k = 0 (resp. k = n) has nonzero binomial weight
    const double d00 = delta_fn(0.0, 0.0), d11 = delta_fn(1.0, 1.0);
    if (!std::isfinite(d00) || !std::isfinite(d11)) ok = false;
    log_sums[0] = n * d00;
    log_sums[M] = n * d11;

#pragma omp parallel if (parallel)
    {
        std::vector<double> scratch(n + 1);
        bool local_ok = true;
#pragma omp for schedule(static) nowait
        for (long long i = 1; i < M; ++i)
            log_sums[i] = per_r_log_sum(delta_fn, n, double(i) / double(M), lch, scratch, local_ok);
        if (!local_ok) {
#pragma omp atomic write
            ok = false;
        }
    }

    IDeltaResult res;
    res.grid_spacing = 1.0 / double(M);
    res.ok = ok;
    long long best = 0;
    for (long long i = 1; i <= M; ++i)
        if (log_sums[i] > log_sums[best]) best = i;
    res.log_value = log_sums[best];
    res.value = std::exp(res.log_value);
    res.argmax_r = double(best) / double(M);
    return res;
}

} // namespace

IDeltaResult i_delta_eval(const DeltaFn& delta_fn, int n, double spacing) {
    return eval_impl(delta_fn, n, spacing, true);
}

IDeltaResult i_delta_eval_serial(const DeltaFn& delta_fn, int n, double spacing) {
    return eval_impl(delta_fn, n, spacing, false);
}

IDeltaResult i_delta_eval(const ConvexDeltaParams& params, int n, double spacing) {
    return eval_impl(CachedDelta(params), n, spacing, true);
}

IDeltaResult i_delta_eval_serial(const ConvexDeltaParams& params, int n, double spacing) {
    return eval_impl(CachedDelta(params), n, spacing, false);
}

ParamGrad i_delta_grad_params(const ConvexDeltaParams& params, int n, double argmax_r) {
    ParamGrad grad(params.size(), 0.0);
    if (argmax_r <= 0.0) {
        delta_grad_params_accum(params, 0.0, 0.0, double(n), grad);
        return grad;
    }
    if (argmax_r >= 1.0) {
        delta_grad_params_accum(params, 1.0, 1.0, double(n), grad);
        return grad;
    }
    const double lr = std::log(argmax_r), l1r = std::log1p(-argmax_r);
    std::vector<double> t(n + 1);
    double m = kNegInf;
    for (int k = 0; k <= n; ++k) {
        t[k] = log_choose(n, k) + k * lr + (n - k) * l1r +
               n * delta_eval(params, double(k) / n, argmax_r);
        if (t[k] > m) m = t[k];
    }
    double z = 0.0;
    for (int k = 0; k <= n; ++k) z += std::exp(t[k] - m);
    for (int k = 0; k <= n; ++k) {
        const double w = std::exp(t[k] - m) / z;
        delta_grad_params_accum(params, double(k) / n, argmax_r, w * double(n), grad);
    }
    return grad;
}

double i_kl_exact(int n) {
    if (n <= 0) throw std::invalid_argument("i_kl_exact: n <= 0");
    // each term is a binomial pmf value at its own mean, so all lie in (0,1]
    double s = 2.0; // k = 0 and k = n terms are exactly 1
    for (int k = 1; k < n; ++k) {
        const double q = double(k) / n;
        s += std::exp(log_choose(n, k) + k * std::log(q) + (n - k) * std::log1p(-q));
    }
    return s;
}

} // namespace pblab
