#include "pblab/gibbs_learner.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "pblab/adam.hpp"
#include "pblab/i_delta.hpp"
#include "pblab/inversion.hpp"

namespace pblab {

namespace {

constexpr double kVarianceFloor = 1e-12;
constexpr double kCholDiagFloor = 1e-8;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

} // namespace

FeatureMap::FeatureMap(double lengthscale_, double lo, double hi, int per_unit)
    : lengthscale(lengthscale_) {
    if (!(lengthscale > 0.0)) throw std::invalid_argument("FeatureMap: lengthscale <= 0");
    if (!(hi > lo) || per_unit <= 0) throw std::invalid_argument("FeatureMap: bad grid");
    const int count = int(std::llround((hi - lo) * per_unit));
    centers.resize(count);
    const double step = (hi - lo) / count;
    for (int k = 0; k < count; ++k) centers[k] = lo + (k + 0.5) * step;
}

void FeatureMap::features(double x, double* out) const {
    const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
    for (std::size_t k = 0; k < centers.size(); ++k) {
        const double d = x - centers[k];
        out[k] = std::exp(-d * d * inv);
    }
}

Eigen::VectorXd FeatureMap::features(double x) const {
    Eigen::VectorXd out(dim());
    features(x, out.data());
    return out;
}

GaussianMeasure GaussianMeasure::isotropic(int dim, double sigma) {
    if (!(sigma >= kCholDiagFloor)) throw std::invalid_argument("GaussianMeasure: sigma too small");
    GaussianMeasure g;
    g.mean = Eigen::VectorXd::Zero(dim);
    g.chol = sigma * Eigen::MatrixXd::Identity(dim, dim);
    return g;
}

void GaussianMeasure::validate() const {
    if (mean.size() != chol.rows() || chol.rows() != chol.cols())
        throw std::invalid_argument("GaussianMeasure: shape mismatch");
    for (Eigen::Index i = 0; i < chol.rows(); ++i)
        if (!(chol(i, i) >= kCholDiagFloor))
            throw std::invalid_argument("GaussianMeasure: factor diagonal below floor");
}

DataMatrix build_data_matrix(const std::vector<LabeledPoint>& points, const FeatureMap& fmap) {
    DataMatrix data;
    data.phi.resize(Eigen::Index(points.size()), fmap.dim());
    data.y.resize(Eigen::Index(points.size()));
    std::vector<double> buf(fmap.dim());
    for (std::size_t i = 0; i < points.size(); ++i) {
        fmap.features(points[i].x, buf.data());
        for (int k = 0; k < fmap.dim(); ++k) data.phi(Eigen::Index(i), k) = buf[k];
        data.y[Eigen::Index(i)] = points[i].y;
    }
    return data;
}

double gibbs_risk(const GaussianMeasure& q, const DataMatrix& data) {
    if (data.rows() == 0) throw std::invalid_argument("gibbs_risk: empty data");
    const Eigen::MatrixXd g = data.phi * q.chol; // row i = (chol' phi_i)'
    const Eigen::VectorXd score = data.phi * q.mean;
    double risk = 0.0;
    for (int i = 0; i < data.rows(); ++i) {
        const double var = std::max(kVarianceFloor, g.row(i).squaredNorm());
        risk += normal_cdf(-data.y[i] * score[i] / std::sqrt(var));
    }
    return risk / data.rows();
}

double gibbs_risk(const GaussianMeasure& q, const std::vector<LabeledPoint>& points,
                  const FeatureMap& fmap) {
    return gibbs_risk(q, build_data_matrix(points, fmap));
}

double gibbs_risk_grad(const GaussianMeasure& q, const DataMatrix& data, double scale,
                       Eigen::VectorXd& grad_mean, Eigen::MatrixXd& grad_chol) {
    if (data.rows() == 0) throw std::invalid_argument("gibbs_risk_grad: empty data");
    const Eigen::MatrixXd g = data.phi * q.chol;
    const Eigen::VectorXd score = data.phi * q.mean;
    const double w = scale / data.rows();
    double risk = 0.0;
    for (int i = 0; i < data.rows(); ++i) {
        const double var_raw = g.row(i).squaredNorm();
        const bool floored = var_raw < kVarianceFloor;
        const double s = std::sqrt(std::max(kVarianceFloor, var_raw));
        const double u = -data.y[i] * score[i] / s;
        risk += normal_cdf(u);
        const double dens = normal_pdf(u);
        grad_mean.noalias() += (w * dens * (-data.y[i] / s)) * data.phi.row(i).transpose();
        if (!floored) {
            // d u / d chol = (-u / s^2) * tril(phi_i g_i')
            const double cu = w * dens * (-u) / (s * s);
            grad_chol.triangularView<Eigen::Lower>() +=
                (cu * data.phi.row(i).transpose()) * g.row(i);
        }
    }
    return risk / data.rows();
}

double kl_gaussians(const GaussianMeasure& q, const GaussianMeasure& p) {
    q.validate();
    p.validate();
    if (q.mean.size() != p.mean.size()) throw std::invalid_argument("kl_gaussians: dim mismatch");
    const auto lp = p.chol.triangularView<Eigen::Lower>();
    const Eigen::MatrixXd a = lp.solve(q.chol);
    const Eigen::VectorXd b = lp.solve(q.mean - p.mean);
    const double logdet_p = p.chol.diagonal().array().log().sum();
    const double logdet_q = q.chol.diagonal().array().log().sum();
    const double kl = 0.5 * (a.squaredNorm() + b.squaredNorm() - double(q.mean.size())) +
                      logdet_p - logdet_q;
    return std::max(0.0, kl);
}

double kl_gaussians_grad(const GaussianMeasure& q, const GaussianMeasure& p, double scale,
                         Eigen::VectorXd& grad_mean, Eigen::MatrixXd& grad_chol) {
    q.validate();
    p.validate();
    const auto lp = p.chol.triangularView<Eigen::Lower>();
    const auto lpt = p.chol.transpose().triangularView<Eigen::Upper>();
    const Eigen::MatrixXd a = lp.solve(q.chol);
    const Eigen::VectorXd b = lp.solve(q.mean - p.mean);
    const double logdet_p = p.chol.diagonal().array().log().sum();
    const double logdet_q = q.chol.diagonal().array().log().sum();
    const double kl = 0.5 * (a.squaredNorm() + b.squaredNorm() - double(q.mean.size())) +
                      logdet_p - logdet_q;

    grad_mean.noalias() += scale * lpt.solve(b);
    Eigen::MatrixXd sig_inv_lq = lpt.solve(a); // Sigma_P^{-1} L_Q
    sig_inv_lq.diagonal().array() -= q.chol.diagonal().array().inverse();
    grad_chol.triangularView<Eigen::Lower>() += scale * sig_inv_lq;
    return kl;
}

BayesRisk bayes_classifier_risk(const GaussianMeasure& q, const std::vector<LabeledPoint>& points,
                                const FeatureMap& fmap) {
    if (points.empty()) throw std::invalid_argument("bayes_classifier_risk: empty data");
    std::vector<double> buf(fmap.dim());
    int errors = 0;
    for (const auto& pt : points) {
        fmap.features(pt.x, buf.data());
        double score = 0.0;
        for (int k = 0; k < fmap.dim(); ++k) score += q.mean[k] * buf[k];
        const int pred = score >= 0.0 ? +1 : -1;
        if (pred != pt.y) ++errors;
    }
    return {double(errors) / double(points.size()), errors};
}

GaussianMeasure fit_prior_ddp(const std::vector<LabeledPoint>& prior_set, const FeatureMap& fmap,
                              const LearnerConfig& config) {
    GaussianMeasure prior = GaussianMeasure::isotropic(fmap.dim(), config.sigma0);
    if (prior_set.empty()) return prior;

    const DataMatrix data = build_data_matrix(prior_set, fmap);
    std::vector<double> x(fmap.dim(), 0.0);
    AdamState adam(x.size(), config.prior_learning_rate);
    Eigen::VectorXd grad_mean(fmap.dim());
    Eigen::MatrixXd grad_chol = Eigen::MatrixXd::Zero(fmap.dim(), fmap.dim());
    std::vector<double> g(x.size());
    for (int it = 0; it < config.prior_iterations; ++it) {
        grad_mean.setZero();
        gibbs_risk_grad(prior, data, 1.0, grad_mean, grad_chol);
        for (int k = 0; k < fmap.dim(); ++k) g[k] = grad_mean[k];
        adam.step(x, g);
        for (int k = 0; k < fmap.dim(); ++k) prior.mean[k] = x[k];
    }
    return prior;
}

const char* BoundSpec::name(Kind kind) {
    switch (kind) {
        case Kind::catoni: return "catoni";
        case Kind::pac_bayes_kl: return "pac_bayes_kl";
        case Kind::conjectured_kl: return "conjectured_kl";
        case Kind::learned_convex: return "learned_convex";
        case Kind::chernoff_test: return "chernoff_test";
        case Kind::binomial_test: return "binomial_test";
    }
    return "unknown";
}

BoundValue pac_bayes_bound_value(const BoundSpec& spec, double q_hat, double kl, int n,
                                 double delta, double* crossing_io) {
    BoundValue out{};
    const double ln_inv_delta = std::log(1.0 / delta);
    switch (spec.kind) {
        case BoundSpec::Kind::catoni: {
            const double alpha = (kl + ln_inv_delta) / n;
            const double e = std::exp(-(spec.beta * q_hat + alpha));
            const double denom = -std::expm1(-spec.beta);
            out.unclipped = (1.0 - e) / denom;
            out.value = std::min(1.0, out.unclipped);
            out.d_qhat = spec.beta * e / denom;
            out.d_kl = e / (denom * n);
            return out;
        }
        case BoundSpec::Kind::pac_bayes_kl:
        case BoundSpec::Kind::conjectured_kl: {
            const double log_i = (spec.kind == BoundSpec::Kind::pac_bayes_kl)
                                     ? std::log(2.0 * std::sqrt(double(n)))
                                     : 0.0;
            const double c = (kl + ln_inv_delta + log_i) / n;
            const double p = kl_inverse_upper(RiskValue(q_hat), c).value();
            out.value = out.unclipped = p;
            const double slope = (p - q_hat) / std::max(p * (1.0 - p), 1e-300);
            if (slope > 1e-300) {
                const double qf = std::max(q_hat, 1e-300);
                const double d_q = std::log(qf * (1.0 - p)) - std::log(p * (1.0 - qf));
                out.d_qhat = -d_q / slope;
                out.d_kl = 1.0 / (slope * n);
            }
            return out;
        }
        case BoundSpec::Kind::learned_convex: {
            if (spec.delta_params == nullptr)
                throw std::invalid_argument("learned_convex bound without parameters");
            const double c = (kl + ln_inv_delta + spec.log_i_delta) / n;
            const CachedDelta cached(*spec.delta_params);
            InversionOptions opts;
            if (crossing_io != nullptr) opts.hint = *crossing_io;
            const InversionResult inv = invert_bound_extended(cached, q_hat, c, 1.0, 8.0, opts);
            if (crossing_io != nullptr) *crossing_io = inv.failed ? -1.0 : inv.value;
            out.unclipped = inv.value;
            out.value = std::min(1.0, inv.value);
            if (!inv.failed) {
                const double slope = cached.grad_p(q_hat, inv.value);
                if (slope > 1e-12) {
                    out.d_qhat = -delta_grad_q(*spec.delta_params, q_hat, inv.value) / slope;
                    out.d_kl = 1.0 / (slope * n);
                }
            }
            return out;
        }
        default:
            throw std::invalid_argument("pac_bayes_bound_value: not a PAC-Bayes bound");
    }
}

namespace {

// Flat packing of (mean, chol) with the diagonal in log space.
struct PosteriorPacking {
    int dim;

    std::size_t size() const { return std::size_t(dim) + std::size_t(dim) * (dim + 1) / 2; }

    void pack(const GaussianMeasure& g, std::vector<double>& x) const {
        x.resize(size());
        std::size_t at = 0;
        for (int k = 0; k < dim; ++k) x[at++] = g.mean[k];
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < r; ++c) x[at++] = g.chol(r, c);
            x[at++] = std::log(g.chol(r, r));
        }
    }

    void unpack(const std::vector<double>& x, GaussianMeasure& g) const {
        std::size_t at = 0;
        for (int k = 0; k < dim; ++k) g.mean[k] = x[at++];
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < r; ++c) g.chol(r, c) = x[at++];
            g.chol(r, r) = std::exp(x[at++]);
        }
    }

    // gradient wrt packed coordinates from (grad_mean, grad_chol)
    void pack_grad(const GaussianMeasure& g, const Eigen::VectorXd& grad_mean,
                   const Eigen::MatrixXd& grad_chol, std::vector<double>& out) const {
        out.resize(size());
        std::size_t at = 0;
        for (int k = 0; k < dim; ++k) out[at++] = grad_mean[k];
        for (int r = 0; r < dim; ++r) {
            for (int c = 0; c < r; ++c) out[at++] = grad_chol(r, c);
            out[at++] = grad_chol(r, r) * g.chol(r, r); // chain through exp
        }
    }

    void clamp_diag(std::vector<double>& x) const {
        // small margin so exp() rounding cannot land below the floor
        const double floor = std::log(kCholDiagFloor) + 1e-9;
        std::size_t at = std::size_t(dim);
        for (int r = 0; r < dim; ++r) {
            at += std::size_t(r);
            x[at] = std::max(x[at], floor);
            ++at;
        }
    }
};

struct Objective {
    double value;        // reported (clipped) objective
    double q_hat;
    double kl;
    bool finite;
};

// Shared loop for posterior-bound optimization and plain risk minimization.
template <class Eval>
GaussianMeasure optimize_measure(GaussianMeasure init, const LearnerConfig& config,
                                 const Eval& eval) {
    if (config.posterior_max_steps <= 0) return init;
    const int dim = int(init.mean.size());
    PosteriorPacking packing{dim};
    std::vector<double> x, grad;
    packing.pack(init, x);

    GaussianMeasure current = init;
    Eigen::VectorXd grad_mean(dim);
    Eigen::MatrixXd grad_chol(dim, dim);

    AdamState adam(packing.size(), config.posterior_learning_rate);
    std::vector<double> best_x = x;
    double best_val = std::numeric_limits<double>::infinity();
    double window_best = std::numeric_limits<double>::infinity();
    int reverts = 0;
    std::vector<double> prev_x = x;

    for (int step = 0; step <= config.posterior_max_steps; ++step) {
        packing.unpack(x, current);
        grad_mean.setZero();
        grad_chol.setZero();
        const Objective obj = eval(current, grad_mean, grad_chol);
        packing.pack_grad(current, grad_mean, grad_chol, grad);

        bool finite = obj.finite && std::isfinite(obj.value);
        if (finite)
            for (double gv : grad)
                if (!std::isfinite(gv)) { finite = false; break; }

        if (!finite) {
            if (++reverts >= 3) break;
            x = prev_x;
            adam.set_learning_rate(0.5 * adam.learning_rate());
            continue;
        }

        if (obj.value < best_val) {
            best_val = obj.value;
            best_x = x;
        }
        if (step > 0 && config.posterior_check_every > 0 &&
            step % config.posterior_check_every == 0) {
            if (best_val > window_best - config.posterior_min_improvement) break;
            window_best = best_val;
        }
        if (step == 0) window_best = best_val;
        if (step == config.posterior_max_steps) break;

        prev_x = x;
        adam.step(x, grad);
        packing.clamp_diag(x);
    }

    packing.unpack(best_x, current);
    return current;
}

} // namespace

GaussianMeasure optimize_posterior_bound(const std::vector<LabeledPoint>& risk_set,
                                         const GaussianMeasure& prior, const BoundSpec& spec,
                                         const FeatureMap& fmap, const LearnerConfig& config) {
    if (risk_set.empty()) throw std::invalid_argument("optimize_posterior_bound: empty risk set");
    const DataMatrix data = build_data_matrix(risk_set, fmap);
    const int n = int(risk_set.size());

    double crossing = -1.0;
    auto eval = [&](const GaussianMeasure& q, Eigen::VectorXd& gm, Eigen::MatrixXd& gc) {
        Objective obj{};
        obj.q_hat = gibbs_risk(q, data);
        obj.kl = kl_gaussians(q, prior);
        const BoundValue bv =
            pac_bayes_bound_value(spec, obj.q_hat, obj.kl, n, config.delta, &crossing);
        gibbs_risk_grad(q, data, bv.d_qhat, gm, gc);
        kl_gaussians_grad(q, prior, bv.d_kl, gm, gc);
        obj.value = bv.value;
        obj.finite = std::isfinite(bv.unclipped);
        return obj;
    };
    return optimize_measure(prior, config, eval);
}

GaussianMeasure erm_train(const std::vector<LabeledPoint>& train_set, const FeatureMap& fmap,
                          const LearnerConfig& config) {
    if (train_set.empty()) throw std::invalid_argument("erm_train: empty train set");
    const DataMatrix data = build_data_matrix(train_set, fmap);
    auto eval = [&](const GaussianMeasure& q, Eigen::VectorXd& gm, Eigen::MatrixXd& gc) {
        Objective obj{};
        obj.value = gibbs_risk_grad(q, data, 1.0, gm, gc);
        obj.q_hat = obj.value;
        obj.kl = 0.0;
        obj.finite = true;
        return obj;
    };
    return optimize_measure(GaussianMeasure::isotropic(fmap.dim(), config.sigma0), config, eval);
}

namespace {

std::vector<LabeledPoint> gather(const Task& task, const std::vector<int>& idx) {
    std::vector<LabeledPoint> out;
    out.reserve(idx.size());
    for (int i : idx) out.push_back(task.dataset[std::size_t(i)]);
    return out;
}

} // namespace

BoundRecord evaluate_task(const Task& task, std::uint64_t task_index, double proportion,
                          const BoundSpec& spec, const FeatureMap& fmap,
                          const LearnerConfig& config) {
    const bool test_set_method = spec.kind == BoundSpec::Kind::chernoff_test ||
                                 spec.kind == BoundSpec::Kind::binomial_test;
    const SplitMode mode = test_set_method ? SplitMode::train_test : SplitMode::prior_risk;
    const std::uint64_t prop_key = std::uint64_t(std::llround(proportion * 1000.0));
    RngStream split_rng(config.seed,
                        combine_stream_ids(task_index, prop_key, std::uint64_t(mode), 0x73706c69));
    const Split split = split_dataset(task, proportion, mode, split_rng);

    BoundRecord record;
    record.bound_kind = BoundSpec::name(spec.kind);
    record.proportion = proportion;
    record.n = int(task.dataset.size());
    record.seed = config.seed;

    if (test_set_method) {
        const std::vector<LabeledPoint> train = gather(task, split.first_part);
        const std::vector<LabeledPoint> test = gather(task, split.second_part);
        const GaussianMeasure q = train.empty()
                                      ? GaussianMeasure::isotropic(fmap.dim(), config.sigma0)
                                      : erm_train(train, fmap, config);
        const BayesRisk test_risk = bayes_classifier_risk(q, test, fmap);
        const int m = int(test.size());
        if (spec.kind == BoundSpec::Kind::binomial_test)
            record.bound_value = binomial_tail_inverse(m, test_risk.errors, config.delta).value();
        else
            record.bound_value =
                chernoff_test_bound(RiskValue(test_risk.risk), m, config.delta).value();
        record.empirical_risk_on_bound_set = test_risk.risk;
        record.kl_value = std::numeric_limits<double>::quiet_NaN();
        record.heldout_risk = bayes_classifier_risk(q, task.heldout, fmap).risk;
        return record;
    }

    const std::vector<LabeledPoint> prior_part = gather(task, split.first_part);
    const std::vector<LabeledPoint> risk_part = gather(task, split.second_part);
    const GaussianMeasure prior = fit_prior_ddp(prior_part, fmap, config);
    const GaussianMeasure q = optimize_posterior_bound(risk_part, prior, spec, fmap, config);

    const int n_risk = int(risk_part.size());
    const double q_hat = gibbs_risk(q, risk_part, fmap);
    const double kl = kl_gaussians(q, prior);
    record.bound_value = pac_bayes_bound_value(spec, q_hat, kl, n_risk, config.delta).value;
    record.empirical_risk_on_bound_set = q_hat;
    record.kl_value = kl;
    record.heldout_risk = gibbs_risk(q, task.heldout, fmap);
    return record;
}

} // namespace pblab
