#include "pblab/delta_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pblab/adam.hpp"
#include "pblab/i_delta.hpp"
#include "pblab/inversion.hpp"

namespace pblab {

RiskKlDistribution::RiskKlDistribution(std::vector<RiskKlAtom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("RiskKlDistribution: no atoms");
    double total = 0.0;
    for (const auto& a : atoms_) {
        if (!(a.q >= 0.0 && a.q <= 1.0)) throw std::invalid_argument("RiskKlDistribution: q outside [0,1]");
        if (!(a.kl >= 0.0)) throw std::invalid_argument("RiskKlDistribution: negative kl");
        if (!(a.weight > 0.0)) throw std::invalid_argument("RiskKlDistribution: nonpositive weight");
        total += a.weight;
    }
    for (auto& a : atoms_) a.weight /= total;
}

ExpectedBoundResult expected_delta_bound(const ConvexDeltaParams& params,
                                         const RiskKlDistribution& dist, int n, double delta,
                                         double spacing) {
    const IDeltaResult idelta = i_delta_eval(params, n, spacing);
    const CachedDelta cached(params);
    const double log_term = std::log(1.0 / delta);
    ExpectedBoundResult out;
    for (const auto& atom : dist.atoms()) {
        const double c = (atom.kl + log_term + idelta.log_value) / double(n);
        const InversionResult inv = invert_bound_extended(cached, atom.q, c, 1.0);
        if (inv.failed) ++out.failures;
        out.unclipped += atom.weight * inv.value;
        out.reported += atom.weight * std::min(1.0, inv.value);
    }
    return out;
}

ExpectedBoundResult expected_delta_bound(const std::function<double(double, double)>& delta_fn,
                                         const RiskKlDistribution& dist, int n, double delta,
                                         double spacing) {
    const IDeltaResult idelta = i_delta_eval(delta_fn, n, spacing);
    const double log_term = std::log(1.0 / delta);
    ExpectedBoundResult out;
    for (const auto& atom : dist.atoms()) {
        const double c = (atom.kl + log_term + idelta.log_value) / double(n);
        const InversionResult inv = invert_bound_extended(delta_fn, atom.q, c, 1.0);
        if (inv.failed) ++out.failures;
        out.unclipped += atom.weight * inv.value;
        out.reported += atom.weight * std::min(1.0, inv.value);
    }
    return out;
}

double expected_conjectured(const RiskKlDistribution& dist, int n, double delta) {
    double s = 0.0;
    for (const auto& atom : dist.atoms())
        s += atom.weight * conjectured_kl_bound(RiskValue(atom.q), BoundBudget(atom.kl, n, delta));
    return s;
}

double expected_pac_bayes_kl_exact(const RiskKlDistribution& dist, int n, double delta) {
    double s = 0.0;
    for (const auto& atom : dist.atoms())
        s += atom.weight *
             pac_bayes_kl_bound(RiskValue(atom.q), BoundBudget(atom.kl, n, delta), IKlMode::exact);
    return s;
}

double golden_section_min(const std::function<double(double)>& f, double lo, double hi,
                          double tol) {
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 <= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = f(x2);
        }
    }
    return 0.5 * (a + b);
}

CatoniOptimum optimal_catoni_expected(const RiskKlDistribution& dist, int n, double delta) {
    const double log_term = std::log(1.0 / delta);
    auto objective = [&](double beta) {
        double s = 0.0;
        for (const auto& atom : dist.atoms()) {
            const double alpha = (atom.kl + log_term) / double(n);
            s += atom.weight * catoni_inverse_unclipped(atom.q, alpha, beta);
        }
        return s;
    };

    // bracket on a log-spaced grid, then refine
    const double lo = 1e-3, hi = 50.0;
    const int grid_points = 400;
    int best = 0;
    double best_val = objective(lo);
    std::vector<double> betas(grid_points + 1);
    for (int i = 0; i <= grid_points; ++i) {
        betas[i] = lo * std::pow(hi / lo, double(i) / grid_points);
        const double v = objective(betas[i]);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    const double a = betas[std::max(0, best - 1)];
    const double b = betas[std::min(grid_points, best + 1)];
    const double beta_star = golden_section_min(objective, a, b, 1e-6);
    return {beta_star, objective(beta_star)};
}

TrainResult train_delta(const TrainConfig& config, const RiskKlDistribution& dist) {
    if (config.iterations < 0) throw std::invalid_argument("train_delta: negative iterations");

    TrainResult result;
    ConvexDeltaParams params = init_delta_params(config.hidden_width, config.seed);
    AdamState adam(params.size(), config.learning_rate, config.adam_beta1, config.adam_beta2,
                   config.adam_epsilon);

    const double conj = expected_conjectured(dist, config.n, config.delta);
    const double best_catoni = optimal_catoni_expected(dist, config.n, config.delta).value;
    const double log_term = std::log(1.0 / config.delta);
    const double n = double(config.n);

    auto record = [&](long long iter) {
        const ExpectedBoundResult fine =
            expected_delta_bound(params, dist, config.n, config.delta, config.fine_spacing);
        // no comparator can undercut the conjectured floor in expectation
        if (fine.reported < conj - 1e-9)
            throw std::logic_error("train_delta: fine-grid objective fell below the conjectured floor");
        result.trace.rows.push_back(
            {iter, fine.reported, fine.reported - conj, fine.reported - best_catoni});
        if (fine.reported < result.best_objective || result.trace.rows.size() == 1) {
            result.best_objective = fine.reported;
            result.params = params;
        }
        return fine.reported;
    };

    record(0);
    if (config.iterations == 0) return result;

    ParamGrad grad(params.size());
    std::vector<double> hints(dist.atoms().size(), -1.0);
    long long consecutive_skips = 0;
    long long total_skips = 0;

    for (long long iter = 1; iter <= config.iterations; ++iter) {
        const IDeltaResult idelta = i_delta_eval(params, config.n, config.coarse_spacing);
        const ParamGrad grad_log_i = i_delta_grad_params(params, config.n, idelta.argmax_r);
        const CachedDelta cached(params);

        std::fill(grad.begin(), grad.end(), 0.0);
        bool finite = idelta.ok;
        for (std::size_t a = 0; finite && a < dist.atoms().size(); ++a) {
            const auto& atom = dist.atoms()[a];
            const double c = (atom.kl + log_term + idelta.log_value) / n;
            InversionOptions opts;
            opts.hint = hints[a];
            const InversionResult inv =
                invert_bound_extended(cached, atom.q, c, config.inversion_ceiling, 8.0, opts);
            hints[a] = inv.failed ? -1.0 : inv.value;
            if (inv.failed) continue; // contributes the cap, gradient zero
            const double slope = cached.grad_p(atom.q, inv.value);
            if (!(slope > 1e-12)) continue; // flat crossing: zero this atom's gradient
            const double w = atom.weight / slope;
            // (dc/dtheta - dDelta/dtheta at x) / slope, fused into the accumulator
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += w * grad_log_i[i] / n;
            delta_grad_params_accum(params, atom.q, inv.value, -w, grad);
        }
        if (finite)
            for (double g : grad)
                if (!std::isfinite(g)) { finite = false; break; }

        if (!finite) {
            ++total_skips;
            if (consecutive_skips == 0)
                std::fprintf(stderr, "train_delta: non-finite gradient at iteration %lld, skipping\n",
                             iter);
            if (++consecutive_skips >= 100) {
                result.aborted = true;
                break;
            }
            continue;
        }
        consecutive_skips = 0;
        adam.step(params.data(), grad);

        if (iter % config.trace_every == 0 || iter == config.iterations) {
            record(iter);
            if (config.stop_at_gap > 0.0 && result.best_objective - conj <= config.stop_at_gap)
                break;
        }
    }
    result.skipped_steps = total_skips;
    return result;
}

HalfRiskAnalytics halfrisk_analytics(const std::vector<AlphaAtom>& alpha_atoms) {
    if (alpha_atoms.empty()) throw std::invalid_argument("halfrisk_analytics: no atoms");
    double total = 0.0;
    for (const auto& a : alpha_atoms) {
        if (!(a.alpha > 0.0)) throw std::invalid_argument("halfrisk_analytics: alpha <= 0");
        if (!(a.weight > 0.0)) throw std::invalid_argument("halfrisk_analytics: weight <= 0");
        total += a.weight;
    }

    HalfRiskAnalytics out{};
    double mean_s = 0.0; // E sqrt(1 - e^{-2 alpha}), shared by both closed forms
    for (const auto& a : alpha_atoms) {
        const double w = a.weight / total;
        out.u += w * std::exp(-a.alpha);
        mean_s += w * std::sqrt(-std::expm1(-2.0 * a.alpha));
    }
    out.conjectured = 0.5 * (1.0 + mean_s);
    const double root = std::sqrt(1.0 - out.u * out.u);
    out.optimal_catoni = 0.5 * (1.0 + root);
    out.beta_star = 2.0 * std::log(out.u / (1.0 - root));
    // E[phi(e^-alpha)] - phi(E[e^-alpha]) with phi(x) = 1 - sqrt(1-x^2)/2
    out.phi_entropy_gap = (1.0 - 0.5 * mean_s) - (1.0 - 0.5 * root);

    if (std::abs((out.optimal_catoni - out.conjectured) - out.phi_entropy_gap) > 1e-12)
        throw std::logic_error("halfrisk_analytics: phi-entropy identity violated");
    return out;
}

} // namespace pblab
