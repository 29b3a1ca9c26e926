#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pblab/delta_optimizer.hpp"
#include "pblab/gibbs_learner.hpp"
#include "pblab/synthetic_tasks.hpp"

namespace pblab {

// Config-driven meta experiment: generate tasks, select the bound
// parameters on the meta-train set, evaluate every (method, proportion)
// on the meta-test set.
struct MetaConfig {
    int n = 30;
    double delta = 0.1;
    std::vector<double> proportions = {0.0, 0.2, 0.4, 0.6, 0.8};
    std::vector<BoundSpec::Kind> methods = {
        BoundSpec::Kind::catoni,       BoundSpec::Kind::pac_bayes_kl,
        BoundSpec::Kind::conjectured_kl, BoundSpec::Kind::learned_convex,
        BoundSpec::Kind::chernoff_test,  BoundSpec::Kind::binomial_test};

    int meta_test_tasks = 512;
    int atom_tasks = 256;  // meta-train tasks pooled into the (q, KL) atom distribution
    int atom_bins = 8;     // pooled pairs are clustered to this many weighted atoms
    int sweep_tasks = 48;  // meta-train tasks per hyperparameter candidate; 0 disables
    double pilot_beta = 2.0;

    TaskConfig task;        // seed is taken from `seed` below
    LearnerConfig learner;  // sigma0 / feature_lengthscale may be replaced by the sweep

    int delta_hidden = 128;
    long long delta_iterations = 3000;
    double delta_learning_rate = 1e-3;

    std::string out_dir = "out/meta";
    bool plots = true;
    bool resume = false;
    std::uint64_t seed = 1;
};

struct MetaAggregate {
    std::string method;
    double proportion;
    int tasks;
    double mean_bound;
    double two_se_bound;
    double mean_heldout;
    double two_se_heldout;
    double violation_rate; // fraction with bound < heldout - 3*sqrt(0.25/heldout_size)
};

struct MetaRow {
    std::uint64_t task;
    BoundRecord record;
};

struct MetaResult {
    std::vector<MetaRow> rows;
    std::vector<MetaAggregate> aggregates;
    double chosen_sigma0;
    double chosen_lengthscale;
    std::map<double, double> beta_star_by_proportion;
    std::string records_path;
    std::string aggregate_path;
};

MetaResult run_meta(const MetaConfig& config);

MetaConfig parse_meta_config(const std::string& path);

// (q, KL) pairs pooled from pilot runs, clustered to a small weighted
// distribution that the beta selection and the comparator training use.
RiskKlDistribution cluster_atoms(const std::vector<std::pair<double, double>>& pairs, int bins,
                                 std::uint64_t seed);

} // namespace pblab
