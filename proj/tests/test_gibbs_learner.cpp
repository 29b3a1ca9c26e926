#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pblab/gibbs_learner.hpp"
#include "pblab/rng.hpp"
#include "pblab/scalar_bounds.hpp"

using namespace pblab;

namespace {

GaussianMeasure random_measure(int dim, std::uint64_t seed, double mean_scale = 1.0) {
    GaussianMeasure g = GaussianMeasure::isotropic(dim, 1.0);
    RngStream rng(seed, 55);
    for (int i = 0; i < dim; ++i) g.mean[i] = mean_scale * rng.next_gaussian();
    for (int r = 0; r < dim; ++r) {
        for (int c = 0; c < r; ++c) g.chol(r, c) = 0.3 * rng.next_gaussian();
        g.chol(r, r) = std::exp(0.4 * rng.next_gaussian());
    }
    return g;
}

std::vector<LabeledPoint> random_points(int count, std::uint64_t seed) {
    std::vector<LabeledPoint> pts(count);
    RngStream rng(seed, 56);
    for (auto& p : pts) {
        p.x = rng.next_uniform(-2.0, 2.0);
        p.y = rng.next_double() < 0.5 ? -1 : 1;
    }
    return pts;
}

// Separable layout: negatives on the left, positives on the right.
std::vector<LabeledPoint> separable_points(int count, std::uint64_t seed) {
    std::vector<LabeledPoint> pts(count);
    RngStream rng(seed, 57);
    for (auto& p : pts) {
        const bool pos = rng.next_double() < 0.5;
        p.x = pos ? rng.next_uniform(0.4, 2.0) : rng.next_uniform(-2.0, -0.4);
        p.y = pos ? 1 : -1;
    }
    return pts;
}

} // namespace

TEST_CASE("feature map grid") {
    const FeatureMap fmap(0.2);
    CHECK(fmap.dim() == 64);
    for (int k = 1; k < fmap.dim(); ++k) CHECK(fmap.centers[k] > fmap.centers[k - 1]);
    CHECK(fmap.centers.front() == doctest::Approx(-2.0 + 0.5 / 16.0));
    CHECK(fmap.centers.back() == doctest::Approx(2.0 - 0.5 / 16.0));
    const Eigen::VectorXd phi = fmap.features(0.3);
    for (int k = 0; k < fmap.dim(); ++k) {
        CHECK(phi[k] > 0.0);
        CHECK(phi[k] <= 1.0);
    }
}

TEST_CASE("gibbs risk of the zero-mean measure is exactly one half") {
    const FeatureMap fmap(0.2);
    const GaussianMeasure q = GaussianMeasure::isotropic(fmap.dim(), 1.0);
    CHECK(gibbs_risk(q, random_points(40, 1), fmap) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("vanishing covariance drives the risk to the deterministic error") {
    const FeatureMap fmap(0.2);
    const auto pts = separable_points(30, 2);
    // mean that classifies separable data by sign of x
    GaussianMeasure q = GaussianMeasure::isotropic(fmap.dim(), 1e-7);
    for (int k = 0; k < fmap.dim(); ++k) q.mean[k] = fmap.centers[k] > 0 ? 1.0 : -1.0;
    const double risk = gibbs_risk(q, pts, fmap);
    CHECK(risk < 1e-6);
    const BayesRisk bayes = bayes_classifier_risk(q, pts, fmap);
    CHECK(bayes.errors == 0);
    CHECK(std::abs(risk - bayes.risk) < 1e-6);
}

TEST_CASE("gibbs risk agrees with Monte Carlo over weight draws") {
    const FeatureMap fmap(0.25, -2.0, 2.0, 2); // K = 8 keeps the MC cheap
    const GaussianMeasure q = random_measure(fmap.dim(), 3);
    const auto pts = random_points(30, 4);
    const double closed = gibbs_risk(q, pts, fmap);

    RngStream rng(5, 58);
    const int draws = 1000000;
    double mc = 0.0;
    Eigen::VectorXd z(fmap.dim());
    const DataMatrix data = build_data_matrix(pts, fmap);
    for (int d = 0; d < draws; ++d) {
        for (int k = 0; k < fmap.dim(); ++k) z[k] = rng.next_gaussian();
        const Eigen::VectorXd w = q.mean + q.chol * z;
        double errors = 0.0;
        for (int i = 0; i < data.rows(); ++i) {
            const double score = data.phi.row(i).dot(w);
            if ((score >= 0.0 ? 1.0 : -1.0) != data.y[i]) errors += 1.0;
        }
        mc += errors / data.rows();
    }
    mc /= draws;
    const double se = std::sqrt(0.25 / double(draws));
    CHECK(std::abs(closed - mc) < 3.0 * se + 1e-4);
}

TEST_CASE("bayes classifier ties go to the positive class") {
    const FeatureMap fmap(0.2);
    const GaussianMeasure q = GaussianMeasure::isotropic(fmap.dim(), 1.0); // mean zero: score 0
    std::vector<LabeledPoint> pts = {{0.0, 1}, {0.5, -1}, {-0.5, -1}, {1.0, 1}};
    const BayesRisk r = bayes_classifier_risk(q, pts, fmap);
    CHECK(r.errors == 2); // the two negative labels are misclassified as +1
    CHECK(r.risk == doctest::Approx(0.5));
}

TEST_CASE("kl between gaussians") {
    const int dim = 8;
    SUBCASE("zero at equality") {
        const GaussianMeasure q = random_measure(dim, 6);
        CHECK(kl_gaussians(q, q) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("isotropic closed form") {
        GaussianMeasure q = GaussianMeasure::isotropic(dim, 0.7);
        const GaussianMeasure p = GaussianMeasure::isotropic(dim, 0.7);
        RngStream rng(7, 59);
        for (int i = 0; i < dim; ++i) q.mean[i] = rng.next_gaussian();
        CHECK(kl_gaussians(q, p) ==
              doctest::Approx(q.mean.squaredNorm() / (2.0 * 0.7 * 0.7)).epsilon(1e-12));
    }
    SUBCASE("nonnegative on random pairs, zero only at equality") {
        for (int i = 0; i < 20; ++i) {
            const GaussianMeasure q = random_measure(dim, 100 + i);
            const GaussianMeasure p = random_measure(dim, 200 + i);
            CHECK(kl_gaussians(q, p) > 0.0);
        }
    }
    SUBCASE("matches Monte Carlo for the log density ratio") {
        const GaussianMeasure q = random_measure(dim, 8, 0.5);
        const GaussianMeasure p = random_measure(dim, 9, 0.5);
        const double closed = kl_gaussians(q, p);
        // E_q[log q(w) - log p(w)] by sampling w ~ q
        RngStream rng(10, 60);
        const int draws = 200000;
        const double logdet_q = q.chol.diagonal().array().log().sum();
        const double logdet_p = p.chol.diagonal().array().log().sum();
        double acc = 0.0;
        Eigen::VectorXd z(dim);
        for (int d = 0; d < draws; ++d) {
            for (int k = 0; k < dim; ++k) z[k] = rng.next_gaussian();
            const Eigen::VectorXd w = q.mean + q.chol * z;
            const Eigen::VectorXd zp =
                p.chol.triangularView<Eigen::Lower>().solve(w - p.mean);
            acc += -logdet_q - 0.5 * z.squaredNorm() + logdet_p + 0.5 * zp.squaredNorm();
        }
        acc /= draws;
        CHECK(std::abs(acc - closed) < 0.05 * std::max(1.0, closed));
    }
    SUBCASE("non positive definite factors are rejected") {
        GaussianMeasure bad = GaussianMeasure::isotropic(dim, 1.0);
        bad.chol(3, 3) = 0.0;
        const GaussianMeasure p = GaussianMeasure::isotropic(dim, 1.0);
        CHECK_THROWS(kl_gaussians(bad, p));
    }
}

TEST_CASE("gibbs risk gradient matches finite differences") {
    const FeatureMap fmap(0.3, -2.0, 2.0, 3); // K = 12
    GaussianMeasure q = random_measure(fmap.dim(), 11);
    const auto pts = random_points(15, 12);
    const DataMatrix data = build_data_matrix(pts, fmap);

    Eigen::VectorXd gm = Eigen::VectorXd::Zero(fmap.dim());
    Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(fmap.dim(), fmap.dim());
    gibbs_risk_grad(q, data, 1.0, gm, gc);

    const double h = 1e-6;
    RngStream rng(13, 61);
    for (int trial = 0; trial < 24; ++trial) {
        const int i = int(rng.next_below(std::uint64_t(fmap.dim())));
        const double saved = q.mean[i];
        q.mean[i] = saved + h;
        const double up = gibbs_risk(q, data);
        q.mean[i] = saved - h;
        const double down = gibbs_risk(q, data);
        q.mean[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (std::abs(fd) < 1e-12) continue;
        CHECK(gm[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int trial = 0; trial < 24; ++trial) {
        const int r = int(rng.next_below(std::uint64_t(fmap.dim())));
        const int c = int(rng.next_below(std::uint64_t(r) + 1));
        const double saved = q.chol(r, c);
        q.chol(r, c) = saved + h;
        const double up = gibbs_risk(q, data);
        q.chol(r, c) = saved - h;
        const double down = gibbs_risk(q, data);
        q.chol(r, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        if (std::abs(fd) < 1e-10) continue;
        CHECK(gc(r, c) == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("gaussian kl gradient matches finite differences") {
    const int dim = 10;
    GaussianMeasure q = random_measure(dim, 14);
    const GaussianMeasure p = random_measure(dim, 15);

    Eigen::VectorXd gm = Eigen::VectorXd::Zero(dim);
    Eigen::MatrixXd gc = Eigen::MatrixXd::Zero(dim, dim);
    kl_gaussians_grad(q, p, 1.0, gm, gc);

    const double h = 1e-6;
    RngStream rng(16, 62);
    for (int trial = 0; trial < 20; ++trial) {
        const int i = int(rng.next_below(std::uint64_t(dim)));
        const double saved = q.mean[i];
        q.mean[i] = saved + h;
        const double up = kl_gaussians(q, p);
        q.mean[i] = saved - h;
        const double down = kl_gaussians(q, p);
        q.mean[i] = saved;
        CHECK(gm[i] == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-5));
    }
    for (int trial = 0; trial < 20; ++trial) {
        const int r = int(rng.next_below(std::uint64_t(dim)));
        const int c = int(rng.next_below(std::uint64_t(r) + 1));
        const double saved = q.chol(r, c);
        q.chol(r, c) = saved + h;
        const double up = kl_gaussians(q, p);
        q.chol(r, c) = saved - h;
        const double down = kl_gaussians(q, p);
        q.chol(r, c) = saved;
        CHECK(gc(r, c) == doctest::Approx((up - down) / (2.0 * h)).epsilon(1e-4));
    }
}

TEST_CASE("empty prior set gives the isotropic prior exactly") {
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    config.sigma0 = 1.3;
    const GaussianMeasure prior = fit_prior_ddp({}, fmap, config);
    CHECK(prior.mean.isZero(0.0));
    CHECK(prior.chol.isApprox(1.3 * Eigen::MatrixXd::Identity(fmap.dim(), fmap.dim()), 0.0));
}

TEST_CASE("prior fitting reaches low risk on separable data and never sees the risk set") {
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    const auto prior_pts = separable_points(12, 17);
    const GaussianMeasure prior = fit_prior_ddp(prior_pts, fmap, config);
    CHECK(gibbs_risk(prior, prior_pts, fmap) < 0.1);

    // determinism / taint: the fit is a pure function of the prior set
    const GaussianMeasure again = fit_prior_ddp(prior_pts, fmap, config);
    CHECK(again.mean == prior.mean);
    CHECK(again.chol == prior.chol);
}

TEST_CASE("zero posterior steps return the prior and the chernoff reduction holds") {
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    config.posterior_max_steps = 0;
    const auto risk_pts = random_points(30, 18);
    const GaussianMeasure prior = GaussianMeasure::isotropic(fmap.dim(), 1.0);
    BoundSpec spec;
    spec.kind = BoundSpec::Kind::conjectured_kl;
    const GaussianMeasure q = optimize_posterior_bound(risk_pts, prior, spec, fmap, config);
    CHECK(q.mean == prior.mean);
    CHECK(q.chol == prior.chol);

    const double q_hat = gibbs_risk(q, risk_pts, fmap);
    const double kl = kl_gaussians(q, prior);
    CHECK(kl == 0.0);
    const double bound = pac_bayes_bound_value(spec, q_hat, kl, 30, config.delta).value;
    CHECK(bound ==
          doctest::Approx(chernoff_test_bound(RiskValue(q_hat), 30, config.delta).value())
              .epsilon(1e-12));
}

TEST_CASE("posterior optimization only improves the bound") {
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    config.posterior_max_steps = 400;
    TaskConfig tc;
    tc.seed = 77;
    int improved = 0, total = 0;
    for (std::uint64_t t = 0; t < 20; ++t) {
        const Task task = sample_task(tc, t);
        RngStream rng(tc.seed, combine_stream_ids(t, 1));
        const Split split = split_dataset(task, 0.4, SplitMode::prior_risk, rng);
        std::vector<LabeledPoint> prior_pts, risk_pts;
        for (int i : split.first_part) prior_pts.push_back(task.dataset[std::size_t(i)]);
        for (int i : split.second_part) risk_pts.push_back(task.dataset[std::size_t(i)]);
        const GaussianMeasure prior = fit_prior_ddp(prior_pts, fmap, config);
        BoundSpec spec;
        spec.kind = BoundSpec::Kind::catoni;
        spec.beta = 2.0;
        const int n = int(risk_pts.size());
        const double before =
            pac_bayes_bound_value(spec, gibbs_risk(prior, risk_pts, fmap), 0.0, n, config.delta)
                .value;
        const GaussianMeasure q = optimize_posterior_bound(risk_pts, prior, spec, fmap, config);
        const double after = pac_bayes_bound_value(spec, gibbs_risk(q, risk_pts, fmap),
                                                   kl_gaussians(q, prior), n, config.delta)
                                 .value;
        CHECK(after <= before + 1e-9);
        ++total;
        if (after < before - 1e-6) ++improved;
    }
    CHECK(improved >= int(0.9 * total));
}

TEST_CASE("erm training fits separable data and shrinks the covariance") {
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    const auto train = separable_points(20, 19);
    const GaussianMeasure q = erm_train(train, fmap, config);
    CHECK(gibbs_risk(q, train, fmap) < 0.05);

    // entropy (log det) decreases relative to the isotropic start
    const double logdet_q = q.chol.diagonal().array().log().sum();
    const double logdet_init = std::log(config.sigma0) * fmap.dim();
    CHECK(logdet_q < logdet_init);

    // deterministic
    const GaussianMeasure q2 = erm_train(train, fmap, config);
    CHECK(q2.mean == q.mean);
}

TEST_CASE("split randomization does not bias the downstream bound distribution") {
    // spot-check of exchangeability: two independent split randomizations
    // over the same tasks give statistically indistinguishable mean bounds
    TaskConfig tc;
    tc.seed = 31;
    tc.heldout_size = 10; // unused here, keeps generation cheap
    tc.balance_size = 100;
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    const int T = 48;
    double mean[2] = {0.0, 0.0}, sq[2] = {0.0, 0.0};
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < T; ++t) {
        const Task task = sample_task(tc, std::uint64_t(t));
        for (int variant = 0; variant < 2; ++variant) {
            RngStream rng(1000 + std::uint64_t(variant), std::uint64_t(t));
            const Split split = split_dataset(task, 0.4, SplitMode::prior_risk, rng);
            std::vector<LabeledPoint> prior_pts, risk_pts;
            for (int i : split.first_part) prior_pts.push_back(task.dataset[std::size_t(i)]);
            for (int i : split.second_part) risk_pts.push_back(task.dataset[std::size_t(i)]);
            const GaussianMeasure prior = fit_prior_ddp(prior_pts, fmap, config);
            const double q_hat = gibbs_risk(prior, risk_pts, fmap);
            const double bound =
                catoni_inverse(RiskValue(q_hat), BoundBudget(0.0, int(risk_pts.size()), 0.1), 2.0)
                    .value();
#pragma omp critical
            {
                mean[variant] += bound;
                sq[variant] += bound * bound;
            }
        }
    }
    for (int v = 0; v < 2; ++v) {
        mean[v] /= T;
        sq[v] = sq[v] / T - mean[v] * mean[v];
    }
    const double se = std::sqrt((sq[0] + sq[1]) / T);
    CHECK(std::abs(mean[0] - mean[1]) <= 3.0 * se + 1e-12);
}

TEST_CASE("evaluate_task end to end") {
    TaskConfig tc;
    tc.seed = 5;
    const Task task = sample_task(tc, 9);
    const FeatureMap fmap(0.2);
    LearnerConfig config;
    config.seed = 5;

    SUBCASE("proportion zero with no posterior steps reduces to the whole-set chernoff") {
        LearnerConfig frozen = config;
        frozen.posterior_max_steps = 0;
        BoundSpec spec;
        spec.kind = BoundSpec::Kind::conjectured_kl;
        const BoundRecord rec = evaluate_task(task, 9, 0.0, spec, fmap, frozen);
        const GaussianMeasure prior = GaussianMeasure::isotropic(fmap.dim(), frozen.sigma0);
        const double q_hat = gibbs_risk(prior, task.dataset, fmap);
        CHECK(rec.bound_value ==
              doctest::Approx(chernoff_test_bound(RiskValue(q_hat), 30, 0.1).value())
                  .epsilon(1e-9));
        CHECK(rec.kl_value == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("binomial never exceeds chernoff on the shared split and classifier") {
        for (double prop : {0.2, 0.4, 0.6}) {
            BoundSpec binom;
            binom.kind = BoundSpec::Kind::binomial_test;
            BoundSpec chern;
            chern.kind = BoundSpec::Kind::chernoff_test;
            const BoundRecord rb = evaluate_task(task, 9, prop, binom, fmap, config);
            const BoundRecord rc = evaluate_task(task, 9, prop, chern, fmap, config);
            CHECK(rb.empirical_risk_on_bound_set ==
                  doctest::Approx(rc.empirical_risk_on_bound_set).epsilon(1e-15));
            CHECK(rb.heldout_risk == doctest::Approx(rc.heldout_risk).epsilon(1e-15));
            CHECK(rb.bound_value <= rc.bound_value + 1e-12);
        }
    }

    SUBCASE("records stay in range and rerun identically") {
        for (auto kind : {BoundSpec::Kind::catoni, BoundSpec::Kind::pac_bayes_kl,
                          BoundSpec::Kind::conjectured_kl, BoundSpec::Kind::chernoff_test,
                          BoundSpec::Kind::binomial_test}) {
            BoundSpec spec;
            spec.kind = kind;
            spec.beta = 2.0;
            LearnerConfig quick = config;
            quick.posterior_max_steps = 150;
            const BoundRecord a = evaluate_task(task, 9, 0.4, spec, fmap, quick);
            CHECK(a.bound_value >= 0.0);
            CHECK(a.bound_value <= 1.0);
            CHECK(a.heldout_risk >= 0.0);
            CHECK(a.heldout_risk <= 1.0);
            CHECK(a.n == 30);
            const BoundRecord b = evaluate_task(task, 9, 0.4, spec, fmap, quick);
            CHECK(a.bound_value == b.bound_value);
            CHECK(a.heldout_risk == b.heldout_risk);
        }
    }

    SUBCASE("prior is a function of the prior split only") {
        RngStream rng(11, 22);
        const Split split = split_dataset(task, 0.4, SplitMode::prior_risk, rng);
        Task perturbed = task;
        for (int i : split.second_part) {
            perturbed.dataset[std::size_t(i)].x = -perturbed.dataset[std::size_t(i)].x;
            perturbed.dataset[std::size_t(i)].y = -perturbed.dataset[std::size_t(i)].y;
        }
        std::vector<LabeledPoint> prior_pts, prior_pts_perturbed;
        for (int i : split.first_part) {
            prior_pts.push_back(task.dataset[std::size_t(i)]);
            prior_pts_perturbed.push_back(perturbed.dataset[std::size_t(i)]);
        }
        const GaussianMeasure p1 = fit_prior_ddp(prior_pts, fmap, config);
        const GaussianMeasure p2 = fit_prior_ddp(prior_pts_perturbed, fmap, config);
        CHECK(p1.mean == p2.mean);
        CHECK(p1.chol == p2.chol);
    }
}
