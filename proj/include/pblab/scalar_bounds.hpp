#pragma once

#include <cstdint>
#include <limits>

namespace pblab {

// A risk, empirical risk, or probability. Construction rejects values
// outside [0,1]; all bound routines below are total on valid inputs.
class RiskValue {
public:
    RiskValue() : v_(0.0) {}
    explicit RiskValue(double v);
    double value() const { return v_; }
    operator double() const { return v_; }

private:
    double v_;
};

// Everything a high-probability bound needs besides the empirical risk:
// KL(Q||P), the risk-set size, the failure probability, and the derived
// per-sample budget alpha = (kl + log(1/delta)) / n.
struct BoundBudget {
    double kl_divergence;
    int n;
    double delta;
    double alpha;

    BoundBudget(double kl_divergence, int n, double delta);
};

// log(n choose k); table-backed for n <= 10^4, lgamma beyond.
double log_choose(int n, int k);

// Binomial CDF P(X <= k), X ~ Bin(m, p), summed in log space.
double binomial_cdf(int k, int m, double p);

// kl(q,p) = q log(q/p) + (1-q) log((1-q)/(1-p)), with 0 log 0 = 0 and
// +inf when the support condition fails.
double kl_bernoulli(RiskValue q, RiskValue p);

// sup{p in [q,1] : kl(q,p) <= c}, found by bisection on the increasing
// branch to 1e-10 absolute.
RiskValue kl_inverse_upper(RiskValue q, double c);

// C_beta(q,p) = -log(1 + p(e^-beta - 1)) - beta q.
double catoni_value(RiskValue q, RiskValue p, double beta);

// Closed-form inversion of C_beta at level budget.alpha, clipped to 1.
RiskValue catoni_inverse(RiskValue q, const BoundBudget& budget, double beta);

// Same expression without the clip; may exceed 1. Used when optimizing
// the expected bound over beta, where the closed form is the object of
// interest rather than a probability.
double catoni_inverse_unclipped(double q, double alpha, double beta);

// The unique beta > 0 with C_beta(q,p) = kl(q,p); requires 0 < q < p < 1.
double catoni_beta_star(RiskValue q, RiskValue p);

// sup{p : delta <= BinCDF(k; m, p)} via bisection on the decreasing CDF.
RiskValue binomial_tail_inverse(int m, int k, double delta);

// kl-inversion at budget log(1/delta)/m.
RiskValue chernoff_test_bound(RiskValue q_test, int m, double delta);

enum class IKlMode { maurer_2sqrtN, exact };

// kl-inversion at (KL + log(I/delta))/n with I = 2 sqrt(n) or the exact
// moment value.
RiskValue pac_bayes_kl_bound(RiskValue q, const BoundBudget& budget, IKlMode i_mode);

// kl-inversion at budget.alpha, i.e. the same bound with the moment term
// dropped. Coincides with the Chernoff test bound when KL = 0.
RiskValue conjectured_kl_bound(RiskValue q, const BoundBudget& budget);

enum class OccamKind { binomial, chernoff };

// Union-bound (Occam) versions of the two test set bounds; prior_mass is
// the weight the countable prior puts on the selected hypothesis.
// Binomial kind requires n*q to be an integer error count.
RiskValue occam_bound(OccamKind kind, RiskValue q, int n, double prior_mass, double delta);

} // namespace pblab
