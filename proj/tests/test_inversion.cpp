#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "pblab/i_delta.hpp"
#include "pblab/inversion.hpp"
#include "pblab/rng.hpp"
#include "pblab/scalar_bounds.hpp"

using namespace pblab;

namespace {

ConvexDeltaParams random_params(int hidden, std::uint64_t seed) {
    ConvexDeltaParams p(hidden);
    RngStream rng(seed, 33);
    p.a0() = 0.2 * rng.next_gaussian();
    p.a_q() = -1.0 + 0.3 * rng.next_gaussian();
    p.a_p() = 1.0 + 0.3 * rng.next_gaussian();
    for (int h = 0; h < hidden; ++h) {
        p.weight_q(h) = rng.next_gaussian();
        p.weight_p(h) = rng.next_gaussian();
        p.bias(h) = rng.next_gaussian();
        p.output_raw(h) = -2.0 + 0.5 * rng.next_gaussian();
    }
    return p;
}

} // namespace

TEST_CASE("inversion of the kl comparator agrees with the dedicated routine") {
    auto kl_fn = [](double q, double x) {
        return kl_bernoulli(RiskValue(std::clamp(q, 0.0, 1.0)),
                            RiskValue(std::clamp(x, 0.0, 1.0)));
    };
    RngStream rng(6, 0);
    for (int i = 0; i < 1000; ++i) {
        const double q = rng.next_double();
        const double c = rng.next_double() * 2.0;
        const double a = invert_bound(kl_fn, q, c);
        const double b = kl_inverse_upper(RiskValue(q), c).value();
        CHECK(std::abs(a - b) < 2e-6);
    }
}

TEST_CASE("inversion of the closed-form comparator matches its analytic inverse") {
    RngStream rng(61, 0);
    for (int i = 0; i < 300; ++i) {
        const double beta = 0.2 + 4.0 * rng.next_double();
        const double q = rng.next_double();
        const double alpha = 0.02 + rng.next_double();
        auto fn = [beta](double qq, double x) {
            return catoni_value(RiskValue(std::clamp(qq, 0.0, 1.0)),
                                RiskValue(std::clamp(x, 0.0, 1.0)), beta);
        };
        const double scanned = invert_bound(fn, q, alpha);
        const double closed = std::min(1.0, catoni_inverse_unclipped(q, alpha, beta));
        CHECK(std::abs(scanned - closed) < 2e-6);
    }
}

TEST_CASE("whole-domain sublevel set returns one") {
    auto fn = [](double, double x) { return x - 10.0; };
    CHECK(invert_bound(fn, 0.5, 0.0) == 1.0);
    CHECK(invert_bound(fn, 0.5, 1e9) == 1.0);
}

TEST_CASE("empty sublevel set returns one by the sup convention") {
    auto fn = [](double, double x) { return x + 10.0; };
    CHECK(invert_bound(fn, 0.5, 0.0) == 1.0);
}

TEST_CASE("grid-only mode returns the grid point below the refined value") {
    auto fn = [](double, double x) { return x; };
    InversionOptions grid_only;
    grid_only.grid_only = true;
    const double coarse = invert_bound(fn, 0.0, 0.61723, grid_only);
    const double fine = invert_bound(fn, 0.0, 0.61723);
    CHECK(coarse <= fine);
    CHECK(fine - coarse < 1e-4 + 1e-12);
    CHECK(fine == doctest::Approx(0.61723).epsilon(1e-9));
}

TEST_CASE("extended inversion equals capped inversion when interior") {
    const ConvexDeltaParams params = random_params(16, 5);
    const CachedDelta cached(params);
    RngStream rng(9, 0);
    int interior = 0;
    for (int i = 0; i < 200; ++i) {
        const double q = rng.next_double();
        const double c = cached(q, 0.0) + rng.next_double() * (cached(q, 1.0) - cached(q, 0.0));
        const double capped = invert_bound(cached, q, c);
        if (capped >= 1.0) continue;
        ++interior;
        const auto ext = invert_bound_extended(cached, q, c, 1.0);
        CHECK_FALSE(ext.failed);
        CHECK(ext.value == doctest::Approx(capped).epsilon(1e-9));
    }
    CHECK(interior > 50);
}

TEST_CASE("extended inversion crosses past one for an affine comparator") {
    auto fn = [](double, double x) { return x - 2.0; };
    const auto res = invert_bound_extended(fn, 0.0, 0.0, 1.0);
    CHECK_FALSE(res.failed);
    CHECK(res.value == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("a comparator decreasing over the whole range fails with the cap") {
    auto fn = [](double, double x) { return -x; };
    const auto res = invert_bound_extended(fn, 0.0, -100.0, 1.0, 8.0);
    CHECK(res.failed);
    CHECK(res.value == 8.0);
}

TEST_CASE("hinted scan finds the same upcrossing") {
    const ConvexDeltaParams params = random_params(32, 7);
    const CachedDelta cached(params);
    RngStream rng(14, 0);
    for (int i = 0; i < 100; ++i) {
        const double q = rng.next_double();
        const double c = cached(q, 0.0) + rng.next_double() * 2.0;
        const auto plain = invert_bound_extended(cached, q, c, 1.0);
        if (plain.failed) continue;
        InversionOptions opts;
        opts.hint = plain.value + 0.003 * rng.next_gaussian();
        const auto hinted = invert_bound_extended(cached, q, c, 1.0, 8.0, opts);
        CHECK_FALSE(hinted.failed);
        CHECK(hinted.value == doctest::Approx(plain.value).epsilon(1e-9));
    }
}

TEST_CASE("inversion is monotone in the level and antitone in the comparator") {
    const ConvexDeltaParams params = random_params(16, 19);
    const CachedDelta cached(params);
    RngStream rng(23, 0);
    for (int i = 0; i < 100; ++i) {
        const double q = rng.next_double();
        const double c = cached(q, 0.0) + rng.next_double();
        const double v1 = invert_bound(cached, q, c);
        const double v2 = invert_bound(cached, q, c + 0.1);
        CHECK(v2 >= v1 - 1e-12);

        // pointwise-larger comparator never gives a larger bound, except
        // through the vacuous sup-of-empty-set convention (which returns 1
        // when the lifted sublevel set vanishes entirely)
        ConvexDeltaParams lifted = params;
        lifted.a0() += 0.05;
        const CachedDelta lifted_cached(lifted);
        const double lifted_inv = invert_bound(lifted_cached, q, c);
        if (lifted_inv < 1.0 || v1 >= 1.0) CHECK(lifted_inv <= v1 + 1e-12);
    }
}

TEST_CASE("rectified comparator inverts to the same value when below one") {
    const ConvexDeltaParams params = random_params(16, 29);
    const CachedDelta cached(params);
    std::vector<double> grid;
    for (int i = 0; i <= 20000; ++i) grid.push_back(i / 20000.0);
    RngStream rng(31, 0);
    for (int i = 0; i < 20; ++i) {
        const double q = rng.next_double();
        const double c = cached(q, 0.0) + rng.next_double();
        const double plain = invert_bound(cached, q, c);
        if (plain >= 1.0) continue;
        const GridFunction rect = monotone_rectify(params, q, grid);
        // invert the rectified table by scanning for the last point below c
        double rect_inv = 1.0;
        bool any = false;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (rect.values[j] <= c) {
                any = true;
            } else {
                rect_inv = any ? grid[j - 1] : 1.0;
                break;
            }
        }
        CHECK(std::abs(rect_inv - plain) < 2e-4);
    }
}

TEST_CASE("rectification never loosens the bound when the moment term is recomputed") {
    const int n = 10;
    const double kl = 1.0, delta = 0.1;
    const double alpha = (kl + std::log(1.0 / delta)) / n;
    const long long M = 10000;

    for (int draw = 0; draw < 3; ++draw) {
        ConvexDeltaParams params = random_params(12, 900 + draw);
        params.a_p() = -0.8; // trough shape: the raw comparator decreases first

        std::vector<double> grid(M + 1);
        for (long long i = 0; i <= M; ++i) grid[std::size_t(i)] = double(i) / double(M);

        // rectified comparator, memoized per q before any parallel use
        std::map<double, GridFunction> memo;
        const double q0 = 0.15;
        for (int k = 0; k <= n; ++k)
            memo.emplace(double(k) / n, monotone_rectify(params, double(k) / n, grid));
        memo.emplace(q0, monotone_rectify(params, q0, grid));
        auto rect = [&](double q, double p) {
            const auto it = memo.find(q);
            REQUIRE(it != memo.end());
            const double pos = std::clamp(p, 0.0, 1.0) * double(M);
            const std::size_t i = std::min<std::size_t>(std::size_t(pos), std::size_t(M) - 1);
            const double u = pos - double(i);
            return (1.0 - u) * it->second.values[i] + u * it->second.values[i + 1];
        };
        auto raw = [&](double q, double p) { return delta_eval(params, q, p); };

        const double log_i_raw = i_delta_eval(DeltaFn(raw), n, 1e-3).log_value;
        const double log_i_rect = i_delta_eval(DeltaFn(rect), n, 1e-3).log_value;
        CHECK(log_i_rect <= log_i_raw + 1e-9); // pointwise smaller comparator

        const double bound_raw = invert_bound(DeltaFn(raw), q0, alpha + log_i_raw / n);
        const double bound_rect = invert_bound(DeltaFn(rect), q0, alpha + log_i_rect / n);
        CHECK(bound_rect <= bound_raw + 5e-4);
    }
}

TEST_CASE("implicit-function derivative for an affine comparator") {
    // Delta = a_p * p, level c, inverse p = c / a_p:
    // d p / d a_p = -c / a_p^2 = -x / a_p
    ConvexDeltaParams p(0);
    p.a_p() = 2.0;
    const double c = 0.8;
    const double x = c / 2.0;
    ParamGrad zero(p.size(), 0.0);
    const ParamGrad g = invert_derivative(p, 0.3, c, zero, x);
    CHECK(g[2] == doctest::Approx(-x / 2.0).epsilon(1e-12));
}

TEST_CASE("implicit-function derivative matches finite differences of the composed map") {
    ConvexDeltaParams params = random_params(8, 47);
    const double q = 0.25;

    // c depends on the parameters through the moment term, as in training
    const int n = 10;
    auto composed = [&](const ConvexDeltaParams& theta) {
        const double log_i = i_delta_eval(theta, n, 1e-3).log_value;
        const double c = 0.25 + log_i / n;
        const auto inv = invert_bound_extended(CachedDelta(theta), q, c, 1.0);
        REQUIRE_FALSE(inv.failed);
        return inv.value;
    };

    const double log_i = i_delta_eval(params, n, 1e-3).log_value;
    const ParamGrad grad_log_i = i_delta_grad_params(params, n, i_delta_eval(params, n, 1e-3).argmax_r);
    const double c = 0.25 + log_i / n;
    const auto inv = invert_bound_extended(CachedDelta(params), q, c, 1.0);
    REQUIRE_FALSE(inv.failed);
    ParamGrad dc(params.size());
    for (std::size_t i = 0; i < dc.size(); ++i) dc[i] = grad_log_i[i] / n;
    const ParamGrad grad = invert_derivative(params, q, c, dc, inv.value);

    RngStream rng(3, 1);
    const double h = 1e-5;
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t i = rng.next_below(params.size());
        const double saved = params[i];
        params[i] = saved + h;
        const double up = composed(params);
        params[i] = saved - h;
        const double down = composed(params);
        params[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        if (std::abs(fd) < 1e-8) continue; // relative comparison is meaningless
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-3));
    }
}

TEST_CASE("flat crossings are rejected") {
    ConvexDeltaParams p(0);
    p.a_p() = 1e-14;
    ParamGrad zero(p.size(), 0.0);
    CHECK_THROWS(invert_derivative(p, 0.0, 0.0, zero, 0.5));
}

TEST_CASE("parallel and serial extended scans agree exactly") {
    const ConvexDeltaParams params = random_params(32, 53);
    const CachedDelta cached(params);
    RngStream rng(77, 0);
    for (int i = 0; i < 50; ++i) {
        const double q = rng.next_double();
        const double c = cached(q, 0.0) + 2.0 * rng.next_double();
        const auto a = invert_bound_extended(cached, q, c, 1.0);
        const auto b = invert_bound_extended_serial(cached, q, c, 1.0);
        CHECK(a.value == b.value);
        CHECK(a.failed == b.failed);
    }
}
