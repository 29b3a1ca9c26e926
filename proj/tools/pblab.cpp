// Command-line front end: scalar bound queries, comparator training runs,
// the synthetic meta experiment, the half-risk worked example, and a quick
// self-check against the brute-force oracles.

#include <CLI11.hpp>
#include <omp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pblab/config.hpp"
#include "pblab/delta_optimizer.hpp"
#include "pblab/gibbs_learner.hpp"
#include "pblab/i_delta.hpp"
#include "pblab/inversion.hpp"
#include "pblab/meta_experiment.hpp"
#include "pblab/scalar_bounds.hpp"
#include "pblab/svg.hpp"

using namespace pblab;

namespace {

void print_value(double v) { std::printf("%.12g\n", v); }

int cmd_bounds(const std::string& kind, double q, double kl, int n, int m, int k, double delta,
               double beta, double prior_mass) {
    try {
        if (kind == "binomial") {
            print_value(binomial_tail_inverse(m, k, delta).value());
        } else if (kind == "chernoff") {
            print_value(chernoff_test_bound(RiskValue(q), m, delta).value());
        } else if (kind == "catoni") {
            print_value(catoni_inverse(RiskValue(q), BoundBudget(kl, n, delta), beta).value());
        } else if (kind == "kl") {
            print_value(
                pac_bayes_kl_bound(RiskValue(q), BoundBudget(kl, n, delta), IKlMode::maurer_2sqrtN)
                    .value());
        } else if (kind == "kl-exact") {
            print_value(
                pac_bayes_kl_bound(RiskValue(q), BoundBudget(kl, n, delta), IKlMode::exact).value());
        } else if (kind == "conjectured") {
            print_value(conjectured_kl_bound(RiskValue(q), BoundBudget(kl, n, delta)).value());
        } else if (kind == "occam-binomial") {
            print_value(occam_bound(OccamKind::binomial, RiskValue(q), n, prior_mass, delta).value());
        } else if (kind == "occam-chernoff") {
            print_value(occam_bound(OccamKind::chernoff, RiskValue(q), n, prior_mass, delta).value());
        } else {
            std::fprintf(stderr, "bounds: unknown kind '%s'\n", kind.c_str());
            return 2;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bounds: %s\n", e.what());
        return 2;
    }
    return 0;
}

int cmd_train_delta(const std::string& config_path) {
    ConfigFile cfg;
    try {
        cfg = ConfigFile::parse_file(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "train-delta: %s\n", e.what());
        return 2;
    }

    std::vector<RiskKlAtom> atoms;
    for (const auto& line : cfg.get_all("dist", "atom")) {
        const auto toks = split_tokens(line);
        if (toks.size() != 3) {
            std::fprintf(stderr, "train-delta: atom lines need 'q kl weight'\n");
            return 2;
        }
        atoms.push_back({std::stod(toks[0]), std::stod(toks[1]), std::stod(toks[2])});
    }
    if (atoms.empty()) {
        std::fprintf(stderr, "train-delta: config declares no atoms\n");
        return 2;
    }

    TrainConfig tc;
    tc.n = int(cfg.get_int("train", "n", tc.n));
    tc.delta = cfg.get_double("train", "delta", tc.delta);
    tc.hidden_width = int(cfg.get_int("train", "hidden", tc.hidden_width));
    tc.iterations = cfg.get_int("train", "iterations", tc.iterations);
    tc.learning_rate = cfg.get_double("train", "learning_rate", tc.learning_rate);
    tc.coarse_spacing = cfg.get_double("train", "coarse_spacing", tc.coarse_spacing);
    tc.fine_spacing = cfg.get_double("train", "fine_spacing", tc.fine_spacing);
    tc.trace_every = cfg.get_int("train", "trace_every", tc.trace_every);
    tc.stop_at_gap = cfg.get_double("train", "stop_at_gap", tc.stop_at_gap);
    tc.seed = cfg.get_u64("train", "seed", tc.seed);

    const std::string out_dir = cfg.get("output", "dir", "out/train_delta");
    const bool plots = cfg.get_int("output", "plots", 1) != 0;
    std::filesystem::create_directories(out_dir);

    RiskKlDistribution dist(atoms);
    const TrainResult res = train_delta(tc, dist);

    const double conj = expected_conjectured(dist, tc.n, tc.delta);
    const CatoniOptimum cat = optimal_catoni_expected(dist, tc.n, tc.delta);

    {
        std::ofstream os(out_dir + "/trace.csv");
        os << "iteration,objective,gap_conjectured,gap_best_catoni\n";
        char buf[160];
        for (const auto& row : res.trace.rows) {
            std::snprintf(buf, sizeof buf, "%lld,%.12g,%.12g,%.12g\n", row.iteration,
                          row.objective, row.gap_conjectured, row.gap_best_catoni);
            os << buf;
        }
    }
    save_delta_params_file(res.params, out_dir + "/delta_params.txt");
    {
        std::ofstream os(out_dir + "/summary.csv");
        os << "final_objective,expected_conjectured,optimal_catoni,beta_star\n";
        char buf[200];
        std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g,%.12g\n", res.best_objective, conj,
                      cat.value, cat.beta_star);
        os << buf;
    }
    if (plots) {
        SvgPlot plot;
        plot.title = "Expected bound gaps during training";
        plot.x_label = "iteration";
        plot.y_label = "gap";
        plot.log_x = true;
        SvgSeries conj_series{"objective - conjectured", "#1f77b4", {}, {}, {}, false};
        SvgSeries cat_series{"objective - best Catoni", "#ff7f0e", {}, {}, {}, false};
        for (const auto& row : res.trace.rows) {
            if (row.iteration == 0) continue; // log axis
            conj_series.x.push_back(double(row.iteration));
            conj_series.y.push_back(row.gap_conjectured);
            cat_series.x.push_back(double(row.iteration));
            cat_series.y.push_back(row.gap_best_catoni);
        }
        plot.series = {conj_series, cat_series};
        write_svg_plot(plot, out_dir + "/trace.svg");
    }

    std::printf("final_objective %.12g\n", res.best_objective);
    std::printf("expected_conjectured %.12g\n", conj);
    std::printf("optimal_catoni %.12g\n", cat.value);
    std::printf("beta_star %.12g\n", cat.beta_star);
    if (res.aborted) {
        std::fprintf(stderr, "train-delta: aborted after 100 consecutive non-finite steps\n");
        return 3;
    }
    return 0;
}

int cmd_meta(const std::string& config_path, bool resume, bool no_plots) {
    MetaConfig mc;
    try {
        mc = parse_meta_config(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "meta: %s\n", e.what());
        return 2;
    }
    mc.resume = resume;
    if (no_plots) mc.plots = false;
    try {
        const MetaResult res = run_meta(mc);
        std::printf("records %s\n", res.records_path.c_str());
        std::printf("aggregate %s\n", res.aggregate_path.c_str());
        std::printf("sigma0 %.6g lengthscale %.6g\n", res.chosen_sigma0, res.chosen_lengthscale);
        for (const auto& [prop, beta] : res.beta_star_by_proportion)
            std::printf("beta_star[%.2f] %.6g\n", prop, beta);
        for (const auto& a : res.aggregates)
            std::printf("%s p=%.2f bound %.4f +-%.4f heldout %.4f violation %.4f\n",
                        a.method.c_str(), a.proportion, a.mean_bound, a.two_se_bound,
                        a.mean_heldout, a.violation_rate);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "meta: %s\n", e.what());
        return 3;
    }
    return 0;
}

int cmd_worked_example(int n, double delta, const std::string& kls_str,
                       const std::string& weights_str) {
    std::vector<double> kls, weights;
    for (const auto& tok : split_tokens(kls_str)) kls.push_back(std::stod(tok));
    for (const auto& tok : split_tokens(weights_str)) weights.push_back(std::stod(tok));
    if (weights.empty()) weights.assign(kls.size(), 1.0);
    if (kls.empty() || kls.size() != weights.size()) {
        std::fprintf(stderr, "worked-example: need matching --kls and --weights\n");
        return 2;
    }
    std::vector<AlphaAtom> atoms;
    for (std::size_t i = 0; i < kls.size(); ++i)
        atoms.push_back({(kls[i] + std::log(1.0 / delta)) / n, weights[i]});
    const HalfRiskAnalytics h = halfrisk_analytics(atoms);
    std::printf("u %.12g\n", h.u);
    std::printf("optimal_catoni %.12g\n", h.optimal_catoni);
    std::printf("beta_star %.12g\n", h.beta_star);
    std::printf("conjectured %.12g\n", h.conjectured);
    std::printf("phi_entropy_gap %.12g\n", h.phi_entropy_gap);
    if (kls.size() == 2 && std::abs(kls[0] - 1.0) < 1e-12 && std::abs(kls[1] - 100.0) < 1e-12 &&
        n == 30 && std::abs(delta - 0.1) < 1e-12) {
        std::printf("warning: the previously reported value 0.836 for the expected kl bound in "
                    "this example lies below the conjectured lower bound %.3f and cannot be "
                    "reproduced; it is treated as unverifiable\n",
                    h.conjectured);
    }
    return 0;
}

// Quick oracle suite: a trimmed version of the acceptance checks that runs
// in seconds and exercises each oracle path once.
int cmd_selfcheck() {
    int failures = 0;
    auto check = [&](bool ok, const char* what) {
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", what);
        if (!ok) ++failures;
    };

    {
        RngStream rng(7, 1);
        double worst = 0.0;
        for (int i = 0; i < 50; ++i) {
            const double q = rng.next_double();
            const double c = rng.next_double() * 2.0;
            const double fast = kl_inverse_upper(RiskValue(q), c).value();
            double best = q;
            for (int j = 0; j <= 1000000; ++j) {
                const double p = q + (1.0 - q) * double(j) * 1e-6;
                if (kl_bernoulli(RiskValue(q), RiskValue(std::min(1.0, p))) <= c)
                    best = std::min(1.0, p);
                else
                    break;
            }
            worst = std::max(worst, std::abs(fast - best));
        }
        check(worst < 2e-6, "kl inversion matches 1e-6 grid oracle");
    }
    {
        bool ok = true;
        for (int n : {10, 30})
            for (double beta : {0.5, 1.0, 2.0, 5.0}) {
                const auto res = i_delta_eval(
                    [beta](double q, double p) {
                        return catoni_value(RiskValue(q), RiskValue(p), beta);
                    },
                    n, 1e-3);
                ok = ok && std::abs(res.value - 1.0) < 1e-3;
            }
        check(ok, "moment term equals 1 for the closed-form comparator family");
    }
    {
        bool ok = std::abs(i_kl_exact(1) - 2.0) < 1e-12 && std::abs(i_kl_exact(2) - 2.5) < 1e-12;
        for (int n = 1; n <= 100; ++n) ok = ok && i_kl_exact(n) <= 2.0 * std::sqrt(double(n)) + 1e-12;
        check(ok, "exact kl moment values and the 2*sqrt(n) cap");
    }
    {
        RiskKlDistribution d({{0.02, 1.0, 1.0}});
        const auto opt = optimal_catoni_expected(d, 30, 0.1);
        check(std::abs(opt.beta_star - 2.2379) < 0.01, "single-atom optimal beta");
    }
    {
        const double a1 = (1.0 + std::log(10.0)) / 30.0, a2 = (100.0 + std::log(10.0)) / 30.0;
        const auto h = halfrisk_analytics({{a1, 0.5}, {a2, 0.5}});
        check(std::abs(h.optimal_catoni - 0.943) < 1e-3 && std::abs(h.beta_star - 2.803) < 3e-3,
              "half-risk closed forms");
    }
    std::printf("%s\n", failures == 0 ? "selfcheck passed" : "selfcheck FAILED");
    return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("PBLAB_THREADS")) {
        const int threads = std::atoi(env);
        if (threads > 0) omp_set_num_threads(threads);
    }

    CLI::App app{"PAC-Bayes and test-set bound workbench"};
    app.require_subcommand(1);

    auto* bounds = app.add_subcommand("bounds", "evaluate one scalar bound");
    std::string kind;
    double q = 0.0, kl = 0.0, delta = 0.1, beta = 1.0, prior_mass = 1.0;
    int n = 30, m = 30, k = 0;
    bounds->add_option("--kind", kind,
                       "binomial|chernoff|catoni|kl|kl-exact|conjectured|occam-binomial|occam-chernoff")
        ->required();
    bounds->add_option("--q", q, "empirical risk");
    bounds->add_option("--kl", kl, "KL divergence");
    bounds->add_option("--n", n, "risk-set size");
    bounds->add_option("--m", m, "test-set size");
    bounds->add_option("--k", k, "test-set error count");
    bounds->add_option("--delta", delta, "failure probability");
    bounds->add_option("--beta", beta, "Catoni parameter");
    bounds->add_option("--prior-mass", prior_mass, "prior mass of the hypothesis");

    auto* train = app.add_subcommand("train-delta", "train the convex comparator on an atom distribution");
    std::string train_config;
    train->add_option("config", train_config, "config file")->required();

    auto* meta = app.add_subcommand("meta", "run the synthetic meta experiment");
    std::string meta_config;
    bool resume = false, no_plots = false;
    meta->add_option("config", meta_config, "config file")->required();
    meta->add_flag("--resume", resume, "append missing rows only");
    meta->add_flag("--no-plots", no_plots, "skip SVG emission");

    auto* worked = app.add_subcommand("worked-example", "closed forms for the half-risk example");
    int we_n = 30;
    double we_delta = 0.1;
    std::string we_kls = "1 100", we_weights = "";
    worked->add_option("--n", we_n, "risk-set size");
    worked->add_option("--delta", we_delta, "failure probability");
    worked->add_option("--kls", we_kls, "KL atoms (space separated)");
    worked->add_option("--weights", we_weights, "atom weights (space separated)");

    auto* selfcheck = app.add_subcommand("selfcheck", "run the quick oracle suite");

    CLI11_PARSE(app, argc, argv);

    if (bounds->parsed()) return cmd_bounds(kind, q, kl, n, m, k, delta, beta, prior_mass);
    if (train->parsed()) return cmd_train_delta(train_config);
    if (meta->parsed()) return cmd_meta(meta_config, resume, no_plots);
    if (worked->parsed()) return cmd_worked_example(we_n, we_delta, we_kls, we_weights);
    if (selfcheck->parsed()) return cmd_selfcheck();
    return 2;
}
