#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "pblab/convex_delta.hpp"
#include "pblab/scalar_bounds.hpp"
#include "pblab/synthetic_tasks.hpp"

namespace pblab {

// Fixed Gaussian-basis feature map: centers evenly spaced over the input
// interval at a fixed density (16 per unit by default, K = 64 on [-2,2]).
struct FeatureMap {
    std::vector<double> centers;
    double lengthscale;

    explicit FeatureMap(double lengthscale, double lo = -2.0, double hi = 2.0, int per_unit = 16);
    int dim() const { return int(centers.size()); }
    void features(double x, double* out) const;
    Eigen::VectorXd features(double x) const;
};

// Gaussian measure over linear-model weights, held as mean plus a
// lower-triangular Cholesky factor with strictly positive diagonal.
struct GaussianMeasure {
    Eigen::VectorXd mean;
    Eigen::MatrixXd chol; // lower triangular

    static GaussianMeasure isotropic(int dim, double sigma);
    void validate() const; // throws unless diag(chol) >= 1e-8
};

// Feature matrix and labels for one part of a dataset; built once so the
// per-step optimizer work is pure linear algebra.
struct DataMatrix {
    Eigen::MatrixXd phi; // m x K
    Eigen::VectorXd y;   // +-1
    int rows() const { return int(y.size()); }
};

DataMatrix build_data_matrix(const std::vector<LabeledPoint>& points, const FeatureMap& fmap);

// Closed-form empirical Gibbs risk: mean over points of
// Phi(-y mu' phi / sqrt(phi' Sigma phi)), with the per-point variance
// floored at 1e-12.
double gibbs_risk(const GaussianMeasure& q, const DataMatrix& data);
double gibbs_risk(const GaussianMeasure& q, const std::vector<LabeledPoint>& points,
                  const FeatureMap& fmap);

// Fused value and gradient with respect to (mean, chol); gradients are
// accumulated into caller buffers scaled by `scale`.
double gibbs_risk_grad(const GaussianMeasure& q, const DataMatrix& data, double scale,
                       Eigen::VectorXd& grad_mean, Eigen::MatrixXd& grad_chol);

// KL(Q || P) between Gaussians via triangular solves on the factors.
double kl_gaussians(const GaussianMeasure& q, const GaussianMeasure& p);

// Fused value and gradient with respect to Q's (mean, chol).
double kl_gaussians_grad(const GaussianMeasure& q, const GaussianMeasure& p, double scale,
                         Eigen::VectorXd& grad_mean, Eigen::MatrixXd& grad_chol);

// Zero-one risk of the deterministic classifier x -> sign(mean' phi(x)),
// with sign(0) = +1. Also returns the integer error count for the
// binomial tail bound.
struct BayesRisk {
    double risk;
    int errors;
};
BayesRisk bayes_classifier_risk(const GaussianMeasure& q, const std::vector<LabeledPoint>& points,
                                const FeatureMap& fmap);

struct LearnerConfig {
    double sigma0 = 1.0;
    double feature_lengthscale = 0.2;
    int prior_iterations = 500;
    double prior_learning_rate = 0.05;
    int posterior_max_steps = 3000;
    double posterior_learning_rate = 3e-4;
    int posterior_check_every = 100;
    double posterior_min_improvement = 1e-4;
    double delta = 0.1;
    std::uint64_t seed = 0;
};

// Data-dependent prior: N(0, sigma0^2 I) for an empty prior set, else the
// mean is fit to the prior-set Gibbs risk with the covariance frozen at
// sigma0^2 I. Never sees the risk set.
GaussianMeasure fit_prior_ddp(const std::vector<LabeledPoint>& prior_set, const FeatureMap& fmap,
                              const LearnerConfig& config);

// Which bound a posterior is optimized against / reported with.
struct BoundSpec {
    enum class Kind { catoni, pac_bayes_kl, conjectured_kl, learned_convex, chernoff_test, binomial_test };
    Kind kind = Kind::conjectured_kl;
    double beta = 2.0;                               // catoni
    const ConvexDeltaParams* delta_params = nullptr; // learned_convex
    double log_i_delta = 0.0;                        // learned_convex, fine grid

    static const char* name(Kind kind);
};

// Bound value at (empirical risk, KL) with derivatives for the chain rule
// through the posterior parameters. `value` is clipped to <= 1 for
// reporting; `unclipped` drives the optimization so a vacuous bound still
// yields a gradient.
struct BoundValue {
    double value;
    double unclipped;
    double d_qhat;
    double d_kl;
};
// crossing_io, when given, carries the previous upcrossing location as a
// scan hint for the learned-convex inversion and receives the new one.
BoundValue pac_bayes_bound_value(const BoundSpec& spec, double q_hat, double kl, int n,
                                 double delta, double* crossing_io = nullptr);

// Posterior initialized at the prior, then (mean, chol) optimized to
// minimize the selected bound on the risk set; off-diagonal entries are
// free and the diagonal is optimized in log space. Early-stops once a
// 100-step window improves the bound by less than 1e-4. Returns the best
// iterate.
GaussianMeasure optimize_posterior_bound(const std::vector<LabeledPoint>& risk_set,
                                         const GaussianMeasure& prior, const BoundSpec& spec,
                                         const FeatureMap& fmap, const LearnerConfig& config);

// Test-set route: minimize the train-set Gibbs risk over mean and
// covariance, same optimizer settings, starting from N(0, sigma0^2 I).
GaussianMeasure erm_train(const std::vector<LabeledPoint>& train_set, const FeatureMap& fmap,
                          const LearnerConfig& config);

// Per-task evaluation result.
struct BoundRecord {
    std::string bound_kind;
    double bound_value;
    double empirical_risk_on_bound_set;
    double kl_value; // NaN for test-set methods
    double heldout_risk;
    double proportion;
    int n;
    std::uint64_t seed;
};

// Full pipeline for one task and one method: split, fit, optimize, bound.
// PAC-Bayes methods use a prior/risk split and report the Gibbs heldout
// risk; test-set methods use a train/test split, a deterministic
// classifier, and the error-count bounds. Splits are keyed by (seed,
// task_index, proportion, split mode) so methods sharing a split mode see
// identical splits.
BoundRecord evaluate_task(const Task& task, std::uint64_t task_index, double proportion,
                          const BoundSpec& spec, const FeatureMap& fmap,
                          const LearnerConfig& config);

} // namespace pblab
