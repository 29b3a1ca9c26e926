#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pblab/convex_delta.hpp"
#include "pblab/scalar_bounds.hpp"

namespace pblab {

// Finite weighted set of (empirical risk, KL) pairs over which expected
// bounds are taken. Weights are normalized at construction.
struct RiskKlAtom {
    double q;
    double kl;
    double weight;
};

class RiskKlDistribution {
public:
    explicit RiskKlDistribution(std::vector<RiskKlAtom> atoms);
    const std::vector<RiskKlAtom>& atoms() const { return atoms_; }

private:
    std::vector<RiskKlAtom> atoms_;
};

struct TrainConfig {
    int n = 30;
    double delta = 0.1;
    int hidden_width = 256;
    long long iterations = 100000;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double coarse_spacing = 1e-3;
    double fine_spacing = 1e-5;
    long long trace_every = 100;
    double inversion_ceiling = 1.0; // initial u for the extended inversion
    double stop_at_gap = 0.0;       // stop once fine objective - conjectured <= this; 0 disables
    std::uint64_t seed = 0;
};

struct TraceRow {
    long long iteration;
    double objective;       // fine-grid expected bound, clipped to [0,1] per atom
    double gap_conjectured; // objective - expected conjectured bound
    double gap_best_catoni; // objective - optimal expected Catoni bound
};

struct TrainTrace {
    std::vector<TraceRow> rows;
};

struct TrainResult {
    ConvexDeltaParams params; // best fine-grid iterate seen
    TrainTrace trace;
    double best_objective = 0.0;
    long long skipped_steps = 0;
    bool aborted = false; // 100 consecutive non-finite gradients
};

struct ExpectedBoundResult {
    double reported = 0.0;   // per-atom inversion clipped to <= 1
    double unclipped = 0.0;  // raw extended-inversion values, for gradients
    long long failures = 0;  // atoms whose inversion hit the ceiling
};

// E over atoms of the inverted bound for this comparator: log I_Delta(n)
// is computed once on the given r-grid, then each atom is inverted at
// level (KL + log(1/delta))/n + log I / n.
ExpectedBoundResult expected_delta_bound(const ConvexDeltaParams& params,
                                         const RiskKlDistribution& dist, int n, double delta,
                                         double spacing);

// Same computation for an arbitrary comparator callable (value only; the
// parametric overload is the one the optimizer differentiates).
ExpectedBoundResult expected_delta_bound(const std::function<double(double, double)>& delta_fn,
                                         const RiskKlDistribution& dist, int n, double delta,
                                         double spacing);

// E over atoms of the conjectured PAC-Bayes-kl bound.
double expected_conjectured(const RiskKlDistribution& dist, int n, double delta);

// E over atoms of the exact-moment PAC-Bayes-kl bound.
double expected_pac_bayes_kl_exact(const RiskKlDistribution& dist, int n, double delta);

struct CatoniOptimum {
    double beta_star;
    double value; // unclipped closed-form expectation at beta_star
};

// Minimizes beta -> E[closed-form Catoni inversion] on a log-spaced grid
// in [1e-3, 50] followed by golden-section refinement. The closed form is
// used without the clip at 1 so the minimizer matches the analytic one.
CatoniOptimum optimal_catoni_expected(const RiskKlDistribution& dist, int n, double delta);

// First-order minimization of the expected bound over the comparator
// parameters: per step, the coarse-grid moment term, its envelope
// gradient, and the implicit-function derivative of each atom's
// inversion. The trace records the fine-grid objective.
TrainResult train_delta(const TrainConfig& config, const RiskKlDistribution& dist);

// Closed forms for the q = 1/2 almost surely case.
struct HalfRiskAnalytics {
    double u;               // E[e^-alpha]
    double optimal_catoni;  // (1 + sqrt(1 - u^2)) / 2
    double beta_star;
    double conjectured;     // (1 + E sqrt(1 - e^-2alpha)) / 2
    double phi_entropy_gap; // Jensen slack; equals optimal_catoni - conjectured
};

struct AlphaAtom {
    double alpha;
    double weight;
};

HalfRiskAnalytics halfrisk_analytics(const std::vector<AlphaAtom>& alpha_atoms);

// Golden-section minimization of a unimodal scalar function on [lo, hi].
double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol);

} // namespace pblab
