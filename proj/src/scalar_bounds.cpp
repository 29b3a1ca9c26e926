#include "pblab/scalar_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pblab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBisectTol = 1e-10;
constexpr int kLogFactTableSize = 10001;

const std::vector<double>& log_factorial_table() {
    static const std::vector<double> table = [] {
        std::vector<double> t(kLogFactTableSize);
        t[0] = 0.0;
        for (int i = 1; i < kLogFactTableSize; ++i) t[i] = t[i - 1] + std::log(double(i));
        return t;
    }();
    return table;
}

double log_sum_exp(const double* vals, int count) {
    double m = -kInf;
    for (int i = 0; i < count; ++i) m = std::max(m, vals[i]);
    if (m == -kInf) return -kInf;
    double s = 0.0;
    for (int i = 0; i < count; ++i) s += std::exp(vals[i] - m);
    return m + std::log(s);
}

} // namespace

RiskValue::RiskValue(double v) : v_(v) {
    if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument("RiskValue outside [0,1]");
}

BoundBudget::BoundBudget(double kl, int n_, double d)
    : kl_divergence(kl), n(n_), delta(d) {
    if (!(kl >= 0.0)) throw std::invalid_argument("BoundBudget: kl_divergence < 0");
    if (n <= 0) throw std::invalid_argument("BoundBudget: n <= 0");
    if (!(d > 0.0 && d < 1.0)) throw std::invalid_argument("BoundBudget: delta outside (0,1)");
    alpha = (kl_divergence + std::log(1.0 / delta)) / double(n);
}

double log_choose(int n, int k) {
    if (k < 0 || k > n) return -kInf;
    const auto& t = log_factorial_table();
    if (n < kLogFactTableSize) return t[n] - t[k] - t[n - k];
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double binomial_cdf(int k, int m, double p) {
    if (k < 0) return 0.0;
    if (k >= m) return 1.0;
    if (p <= 0.0) return 1.0;
    if (p >= 1.0) return 0.0;
    const double lp = std::log(p), l1p = std::log1p(-p);
    std::vector<double> terms(k + 1);
    for (int i = 0; i <= k; ++i)
        terms[i] = log_choose(m, i) + i * lp + (m - i) * l1p;
    double ls = log_sum_exp(terms.data(), k + 1);
    return std::min(1.0, std::exp(ls));
}

double kl_bernoulli(RiskValue qv, RiskValue pv) {
    const double q = qv.value(), p = pv.value();
    if (q == p) return 0.0;
    double s = 0.0;
    if (q > 0.0) {
        if (p == 0.0) return kInf;
        s += q * std::log(q / p);
    }
    if (q < 1.0) {
        if (p == 1.0) return kInf;
        s += (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
    }
    return std::max(s, 0.0);
}

RiskValue kl_inverse_upper(RiskValue qv, double c) {
    if (!(c >= 0.0)) throw std::invalid_argument("kl_inverse_upper: c < 0");
    const double q = qv.value();
    if (c == 0.0 || q == 1.0) return qv;
    double lo = q, hi = 1.0;
    while (hi - lo > kBisectTol) {
        const double mid = 0.5 * (lo + hi);
        if (kl_bernoulli(qv, RiskValue(mid)) <= c) lo = mid;
        else hi = mid;
    }
    return RiskValue(lo);
}

double catoni_value(RiskValue q, RiskValue p, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("catoni_value: beta <= 0");
    // 1 + p(e^-beta - 1) = 1 + p*expm1(-beta), strictly positive for p in [0,1].
    return -std::log1p(p.value() * std::expm1(-beta)) - beta * q.value();
}

double catoni_inverse_unclipped(double q, double alpha, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("catoni_inverse: beta <= 0");
    return std::expm1(-(beta * q + alpha)) / std::expm1(-beta);
}

RiskValue catoni_inverse(RiskValue q, const BoundBudget& budget, double beta) {
    return RiskValue(std::min(1.0, catoni_inverse_unclipped(q.value(), budget.alpha, beta)));
}

double catoni_beta_star(RiskValue qv, RiskValue pv) {
    const double q = qv.value(), p = pv.value();
    if (!(q > 0.0)) throw std::invalid_argument("catoni_beta_star: q = 0 has no finite maximizer");
    if (!(q < p)) throw std::invalid_argument("catoni_beta_star: requires q < p");
    if (!(p < 1.0)) throw std::invalid_argument("catoni_beta_star: requires p < 1");
    return std::log((1.0 - q) / (1.0 - p)) + std::log(p / q);
}

RiskValue binomial_tail_inverse(int m, int k, double delta) {
    if (m <= 0) throw std::invalid_argument("binomial_tail_inverse: m <= 0");
    if (k < 0 || k > m) throw std::invalid_argument("binomial_tail_inverse: k outside [0,m]");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("binomial_tail_inverse: delta outside (0,1)");
    if (k == m) return RiskValue(1.0);
    // BinCDF(k; m, .) decreases from 1 to 0; the sup is the unique root at delta.
    double lo = 0.0, hi = 1.0;
    while (hi - lo > kBisectTol) {
        const double mid = 0.5 * (lo + hi);
        if (binomial_cdf(k, m, mid) >= delta) lo = mid;
        else hi = mid;
    }
    return RiskValue(lo);
}

RiskValue chernoff_test_bound(RiskValue q_test, int m, double delta) {
    if (m <= 0) throw std::invalid_argument("chernoff_test_bound: m <= 0");
    if (!(delta > 0.0 && delta < 1.0))
        throw std::invalid_argument("chernoff_test_bound: delta outside (0,1)");
    return kl_inverse_upper(q_test, std::log(1.0 / delta) / double(m));
}

double i_kl_exact(int n); // i_delta.cpp

RiskValue pac_bayes_kl_bound(RiskValue q, const BoundBudget& budget, IKlMode i_mode) {
    const double log_i = (i_mode == IKlMode::maurer_2sqrtN)
                             ? std::log(2.0 * std::sqrt(double(budget.n)))
                             : std::log(i_kl_exact(budget.n));
    const double c = (budget.kl_divergence + log_i + std::log(1.0 / budget.delta)) / double(budget.n);
    return kl_inverse_upper(q, c);
}

RiskValue conjectured_kl_bound(RiskValue q, const BoundBudget& budget) {
    return kl_inverse_upper(q, budget.alpha);
}

RiskValue occam_bound(OccamKind kind, RiskValue q, int n, double prior_mass, double delta) {
    if (n <= 0) throw std::invalid_argument("occam_bound: n <= 0");
    if (!(prior_mass > 0.0 && prior_mass <= 1.0))
        throw std::invalid_argument("occam_bound: prior_mass outside (0,1]");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("occam_bound: delta outside (0,1)");
    if (kind == OccamKind::binomial) {
        const double count = q.value() * double(n);
        const double rounded = std::round(count);
        if (std::abs(count - rounded) > 1e-9)
            throw std::invalid_argument("occam_bound: binomial kind requires integer n*q");
        return binomial_tail_inverse(n, int(rounded), prior_mass * delta);
    }
    const double c = (std::log(1.0 / prior_mass) + std::log(1.0 / delta)) / double(n);
    return kl_inverse_upper(q, c);
}

} // namespace pblab
