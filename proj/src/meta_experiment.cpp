#include "pblab/meta_experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "pblab/config.hpp"
#include "pblab/i_delta.hpp"
#include "pblab/svg.hpp"

namespace pblab {

namespace {

constexpr std::uint64_t kTrainTag = 0x747261696eull; // meta-train task streams
constexpr std::uint64_t kTestTag = 0x74657374ull;    // meta-test task streams

std::string row_key(std::uint64_t seed, std::uint64_t task, const std::string& method,
                    double proportion) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%llu|%llu|%s|%.3f", (unsigned long long)seed,
                  (unsigned long long)task, method.c_str(), proportion);
    return buf;
}

BoundSpec::Kind method_from_name(const std::string& name) {
    for (auto kind : {BoundSpec::Kind::catoni, BoundSpec::Kind::pac_bayes_kl,
                      BoundSpec::Kind::conjectured_kl, BoundSpec::Kind::learned_convex,
                      BoundSpec::Kind::chernoff_test, BoundSpec::Kind::binomial_test})
        if (name == BoundSpec::name(kind)) return kind;
    throw std::runtime_error("unknown method name: " + name);
}

// Mean pilot-Catoni bound over a handful of meta-train tasks; used only to
// rank hyperparameter candidates.
double sweep_score(const MetaConfig& config, const LearnerConfig& learner, double proportion) {
    TaskConfig tc = config.task;
    tc.n = config.n;
    tc.seed = config.seed;
    BoundSpec spec;
    spec.kind = BoundSpec::Kind::catoni;
    spec.beta = config.pilot_beta;
    FeatureMap fmap(learner.feature_lengthscale, config.task.input_low, config.task.input_high);
    double total = 0.0;
#pragma omp parallel for schedule(dynamic) reduction(+ : total)
    for (int i = 0; i < config.sweep_tasks; ++i) {
        const Task task = sample_task(tc, combine_stream_ids(kTrainTag, std::uint64_t(i)));
        const BoundRecord rec = evaluate_task(task, combine_stream_ids(kTrainTag, std::uint64_t(i)),
                                              proportion, spec, fmap, learner);
        total += rec.bound_value;
    }
    return total / config.sweep_tasks;
}

} // namespace

RiskKlDistribution cluster_atoms(const std::vector<std::pair<double, double>>& pairs, int bins,
                                 std::uint64_t seed) {
    if (pairs.empty()) throw std::invalid_argument("cluster_atoms: no pairs");
    const int k = std::min<int>(bins, int(pairs.size()));

    // standardized coordinates: (q, log1p(KL))
    auto coord = [](const std::pair<double, double>& p) {
        return std::pair<double, double>(p.first, std::log1p(p.second));
    };

    // k-means++ style deterministic init, then fixed Lloyd iterations
    RngStream rng(seed, 0x636c7573ull);
    std::vector<std::pair<double, double>> centers;
    centers.push_back(coord(pairs[rng.next_below(pairs.size())]));
    auto dist2 = [](const std::pair<double, double>& a, const std::pair<double, double>& b) {
        const double dx = a.first - b.first, dy = a.second - b.second;
        return dx * dx + dy * dy;
    };
    while (int(centers.size()) < k) {
        double best_d = -1.0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) d = std::min(d, dist2(coord(pairs[i]), c));
            if (d > best_d) {
                best_d = d;
                best_i = i;
            }
        }
        centers.push_back(coord(pairs[best_i]));
    }
    std::vector<int> assign(pairs.size(), 0);
    for (int it = 0; it < 25; ++it) {
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            double d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < centers.size(); ++c) {
                const double dd = dist2(coord(pairs[i]), centers[c]);
                if (dd < d) {
                    d = dd;
                    assign[i] = int(c);
                }
            }
        }
        std::vector<double> sx(centers.size(), 0.0), sy(centers.size(), 0.0);
        std::vector<int> count(centers.size(), 0);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            sx[assign[i]] += coord(pairs[i]).first;
            sy[assign[i]] += coord(pairs[i]).second;
            ++count[assign[i]];
        }
        for (std::size_t c = 0; c < centers.size(); ++c)
            if (count[c] > 0) centers[c] = {sx[c] / count[c], sy[c] / count[c]};
    }

    // atoms are the raw-coordinate centroids of each cluster
    std::vector<double> q_sum(centers.size(), 0.0), kl_sum(centers.size(), 0.0);
    std::vector<int> count(centers.size(), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        q_sum[assign[i]] += pairs[i].first;
        kl_sum[assign[i]] += pairs[i].second;
        ++count[assign[i]];
    }
    std::vector<RiskKlAtom> atoms;
    for (std::size_t c = 0; c < centers.size(); ++c)
        if (count[c] > 0)
            atoms.push_back({std::clamp(q_sum[c] / count[c], 0.0, 1.0),
                             std::max(0.0, kl_sum[c] / count[c]), double(count[c])});
    return RiskKlDistribution(std::move(atoms));
}

MetaResult run_meta(const MetaConfig& config) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);

    MetaResult result;
    result.records_path = config.out_dir + "/records.csv";
    result.aggregate_path = config.out_dir + "/aggregate.csv";

    TaskConfig task_config = config.task;
    task_config.n = config.n;
    task_config.seed = config.seed;

    // hyperparameter sweep on meta-train, then freeze
    LearnerConfig learner = config.learner;
    learner.delta = config.delta;
    learner.seed = config.seed;
    if (config.sweep_tasks > 0) {
        const double sweep_prop = 0.4;
        double best = std::numeric_limits<double>::infinity();
        for (double ls : {0.15, 0.2, 0.3}) {
            for (double s0 : {0.5, 1.0, 2.0}) {
                LearnerConfig cand = learner;
                cand.feature_lengthscale = ls;
                cand.sigma0 = s0;
                const double score = sweep_score(config, cand, sweep_prop);
                if (score < best) {
                    best = score;
                    learner = cand;
                }
            }
        }
    }
    result.chosen_sigma0 = learner.sigma0;
    result.chosen_lengthscale = learner.feature_lengthscale;
    const FeatureMap fmap(learner.feature_lengthscale, config.task.input_low,
                          config.task.input_high);

    const bool needs_pac = std::any_of(config.methods.begin(), config.methods.end(), [](auto m) {
        return m == BoundSpec::Kind::catoni || m == BoundSpec::Kind::learned_convex;
    });

    // per-proportion bound parameters selected on meta-train
    std::map<double, double> beta_star;
    std::map<double, ConvexDeltaParams> delta_params;
    std::map<double, double> delta_log_i;
    const bool needs_delta =
        std::count(config.methods.begin(), config.methods.end(), BoundSpec::Kind::learned_convex) > 0;

    for (double prop : config.proportions) {
        const int n_risk = config.n - int(std::llround(prop * config.n));
        if (n_risk <= 0) throw std::runtime_error("run_meta: empty risk set at proportion");
        if (!needs_pac && !needs_delta) break;

        // pool (q, KL) pairs from pilot-optimized posteriors
        std::vector<std::pair<double, double>> pairs(config.atom_tasks);
        BoundSpec pilot;
        pilot.kind = BoundSpec::Kind::catoni;
        pilot.beta = config.pilot_beta;
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < config.atom_tasks; ++i) {
            const std::uint64_t id = combine_stream_ids(kTrainTag, std::uint64_t(i));
            const Task task = sample_task(task_config, id);
            RngStream split_rng(config.seed, combine_stream_ids(id, 0x61746f6dull,
                                                                std::uint64_t(std::llround(prop * 1000))));
            const Split split = split_dataset(task, prop, SplitMode::prior_risk, split_rng);
            std::vector<LabeledPoint> prior_part, risk_part;
            for (int idx : split.first_part) prior_part.push_back(task.dataset[std::size_t(idx)]);
            for (int idx : split.second_part) risk_part.push_back(task.dataset[std::size_t(idx)]);
            const GaussianMeasure prior = fit_prior_ddp(prior_part, fmap, learner);
            const GaussianMeasure q = optimize_posterior_bound(risk_part, prior, pilot, fmap, learner);
            pairs[i] = {gibbs_risk(q, risk_part, fmap), kl_gaussians(q, prior)};
        }
        const RiskKlDistribution dist = cluster_atoms(pairs, config.atom_bins, config.seed);
        beta_star[prop] = optimal_catoni_expected(dist, n_risk, config.delta).beta_star;

        if (needs_delta) {
            TrainConfig tc;
            tc.n = n_risk;
            tc.delta = config.delta;
            tc.hidden_width = config.delta_hidden;
            tc.iterations = config.delta_iterations;
            tc.learning_rate = config.delta_learning_rate;
            tc.seed = combine_stream_ids(config.seed, std::uint64_t(std::llround(prop * 1000)));
            const TrainResult trained = train_delta(tc, dist);
            delta_params.emplace(prop, trained.params);
            delta_log_i[prop] = i_delta_eval(delta_params.at(prop), n_risk, 1e-5).log_value;
        }
    }
    result.beta_star_by_proportion = beta_star;

    // resume: collect keys already present
    std::set<std::string> done;
    if (config.resume && fs::exists(result.records_path)) {
        std::ifstream is(result.records_path);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("seed,", 0) == 0) continue;
            std::istringstream ls(line);
            std::string seed_s, task_s, method_s, prop_s;
            std::getline(ls, seed_s, ',');
            std::getline(ls, task_s, ',');
            std::getline(ls, method_s, ',');
            std::getline(ls, prop_s, ',');
            done.insert(row_key(std::stoull(seed_s), std::stoull(task_s), method_s,
                                std::stod(prop_s)));
        }
    }

    // evaluate meta-test tasks
    struct Job {
        BoundSpec spec;
        double proportion;
    };
    std::vector<Job> jobs;
    for (double prop : config.proportions) {
        for (auto kind : config.methods) {
            Job job;
            job.spec.kind = kind;
            job.proportion = prop;
            if (kind == BoundSpec::Kind::catoni) job.spec.beta = beta_star.at(prop);
            if (kind == BoundSpec::Kind::learned_convex) {
                job.spec.delta_params = &delta_params.at(prop);
                job.spec.log_i_delta = delta_log_i.at(prop);
            }
            jobs.push_back(job);
        }
    }

    std::vector<std::vector<MetaRow>> per_task(config.meta_test_tasks);
#pragma omp parallel for schedule(dynamic)
    for (int t = 0; t < config.meta_test_tasks; ++t) {
        const std::uint64_t id = combine_stream_ids(kTestTag, std::uint64_t(t));
        Task task;
        bool task_loaded = false;
        for (const auto& job : jobs) {
            const std::string key =
                row_key(config.seed, std::uint64_t(t), BoundSpec::name(job.spec.kind), job.proportion);
            if (done.count(key)) continue;
            if (!task_loaded) {
                task = sample_task(task_config, id);
                task_loaded = true;
            }
            MetaRow row;
            row.task = std::uint64_t(t);
            row.record = evaluate_task(task, id, job.proportion, job.spec, fmap, learner);
            per_task[std::size_t(t)].push_back(std::move(row));
        }
    }

    // single writer appends in task order
    const bool fresh = !(config.resume && fs::exists(result.records_path));
    std::ofstream os(result.records_path, fresh ? std::ios::trunc : std::ios::app);
    if (!os) throw std::runtime_error("cannot open " + result.records_path);
    if (fresh) {
        os << "# proportions are swept without a union bound over them; each row's bound holds "
              "at failure level delta individually\n";
        os << "seed,task,method,proportion,n,bound,empirical_risk,kl,heldout_risk\n";
    }
    char buf[256];
    for (auto& rows : per_task) {
        for (auto& row : rows) {
            const BoundRecord& r = row.record;
            std::snprintf(buf, sizeof buf, "%llu,%llu,%s,%.3f,%d,%.12g,%.12g,%.12g,%.12g\n",
                          (unsigned long long)r.seed, (unsigned long long)row.task,
                          r.bound_kind.c_str(), r.proportion, r.n, r.bound_value,
                          r.empirical_risk_on_bound_set, r.kl_value, r.heldout_risk);
            os << buf;
            result.rows.push_back(std::move(row));
        }
    }
    os.close();

    // reload everything (including resumed rows) for the aggregates
    {
        result.rows.clear();
        std::ifstream is(result.records_path);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty() || line[0] == '#' || line.rfind("seed,", 0) == 0) continue;
            std::istringstream ls(line);
            std::string f[9];
            for (int i = 0; i < 9; ++i) std::getline(ls, f[i], ',');
            MetaRow row;
            row.task = std::stoull(f[1]);
            row.record.seed = std::stoull(f[0]);
            row.record.bound_kind = f[2];
            row.record.proportion = std::stod(f[3]);
            row.record.n = std::stoi(f[4]);
            row.record.bound_value = std::stod(f[5]);
            row.record.empirical_risk_on_bound_set = std::stod(f[6]);
            row.record.kl_value = std::stod(f[7]);
            row.record.heldout_risk = std::stod(f[8]);
            result.rows.push_back(std::move(row));
        }
    }

    const double heldout_allowance = 3.0 * std::sqrt(0.25 / double(config.task.heldout_size));
    for (double prop : config.proportions) {
        for (auto kind : config.methods) {
            const std::string name = BoundSpec::name(kind);
            double sb = 0, sb2 = 0, sh = 0, sh2 = 0;
            int count = 0, violations = 0;
            for (const auto& row : result.rows) {
                if (row.record.bound_kind != name ||
                    std::abs(row.record.proportion - prop) > 1e-9)
                    continue;
                ++count;
                sb += row.record.bound_value;
                sb2 += row.record.bound_value * row.record.bound_value;
                sh += row.record.heldout_risk;
                sh2 += row.record.heldout_risk * row.record.heldout_risk;
                if (row.record.bound_value < row.record.heldout_risk - heldout_allowance)
                    ++violations;
            }
            if (count == 0) continue;
            MetaAggregate agg;
            agg.method = name;
            agg.proportion = prop;
            agg.tasks = count;
            agg.mean_bound = sb / count;
            agg.mean_heldout = sh / count;
            const double vb = std::max(0.0, sb2 / count - agg.mean_bound * agg.mean_bound);
            const double vh = std::max(0.0, sh2 / count - agg.mean_heldout * agg.mean_heldout);
            agg.two_se_bound = 2.0 * std::sqrt(vb / count);
            agg.two_se_heldout = 2.0 * std::sqrt(vh / count);
            agg.violation_rate = double(violations) / count;
            result.aggregates.push_back(agg);
        }
    }

    {
        std::ofstream as(result.aggregate_path);
        as << "# two_se columns are two standard errors of the mean; violation counts "
              "bound < heldout - 3*sqrt(0.25/heldout_size)\n";
        as << "# proportions are swept without a union bound over them\n";
        as << "method,proportion,tasks,mean_bound,two_se_bound,mean_heldout,two_se_heldout,"
              "violation_rate\n";
        for (const auto& a : result.aggregates) {
            std::snprintf(buf, sizeof buf, "%s,%.3f,%d,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                          a.method.c_str(), a.proportion, a.tasks, a.mean_bound, a.two_se_bound,
                          a.mean_heldout, a.two_se_heldout, a.violation_rate);
            as << buf;
        }
    }

    if (config.plots) {
        static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                       "#9467bd", "#8c564b"};
        SvgPlot plot;
        plot.title = "Mean bound and held-out risk vs prior/train proportion";
        plot.x_label = "prior/train proportion";
        plot.y_label = "bound / risk";
        int color_at = 0;
        for (auto kind : config.methods) {
            const std::string name = BoundSpec::name(kind);
            SvgSeries bound_series, risk_series;
            bound_series.label = name;
            bound_series.color = colors[color_at % 6];
            bound_series.markers = true;
            risk_series.label = name + " (risk)";
            risk_series.color = colors[color_at % 6];
            for (const auto& a : result.aggregates) {
                if (a.method != name) continue;
                bound_series.x.push_back(a.proportion);
                bound_series.y.push_back(a.mean_bound);
                bound_series.yerr.push_back(a.two_se_bound);
                risk_series.x.push_back(a.proportion);
                risk_series.y.push_back(a.mean_heldout);
                risk_series.yerr.push_back(a.two_se_heldout);
            }
            plot.series.push_back(std::move(bound_series));
            plot.series.push_back(std::move(risk_series));
            ++color_at;
        }
        write_svg_plot(plot, config.out_dir + "/meta.svg");
    }
    return result;
}

MetaConfig parse_meta_config(const std::string& path) {
    const ConfigFile cfg = ConfigFile::parse_file(path);
    MetaConfig mc;
    mc.n = int(cfg.get_int("meta", "n", mc.n));
    mc.delta = cfg.get_double("meta", "delta", mc.delta);
    mc.meta_test_tasks = int(cfg.get_int("meta", "meta_test_tasks", mc.meta_test_tasks));
    mc.atom_tasks = int(cfg.get_int("meta", "atom_tasks", mc.atom_tasks));
    mc.atom_bins = int(cfg.get_int("meta", "atom_bins", mc.atom_bins));
    mc.sweep_tasks = int(cfg.get_int("meta", "sweep_tasks", mc.sweep_tasks));
    mc.pilot_beta = cfg.get_double("meta", "pilot_beta", mc.pilot_beta);
    mc.seed = cfg.get_u64("meta", "seed", mc.seed);
    mc.out_dir = cfg.get("meta", "out_dir", mc.out_dir);
    mc.plots = cfg.get_int("meta", "plots", 1) != 0;

    if (cfg.has("meta", "proportions")) {
        mc.proportions.clear();
        for (const auto& tok : split_tokens(cfg.get("meta", "proportions")))
            mc.proportions.push_back(std::stod(tok));
    }
    if (cfg.has("meta", "methods")) {
        mc.methods.clear();
        for (const auto& tok : split_tokens(cfg.get("meta", "methods")))
            mc.methods.push_back(method_from_name(tok));
    }

    mc.task.lengthscale = cfg.get_double("task", "lengthscale", mc.task.lengthscale);
    mc.task.variance = cfg.get_double("task", "variance", mc.task.variance);
    mc.task.heldout_size = int(cfg.get_int("task", "heldout_size", mc.task.heldout_size));
    mc.task.balance_size = int(cfg.get_int("task", "balance_size", mc.task.balance_size));
    mc.task.balance_min_fraction =
        cfg.get_double("task", "balance_min_fraction", mc.task.balance_min_fraction);
    mc.task.jitter = cfg.get_double("task", "jitter", mc.task.jitter);

    mc.learner.sigma0 = cfg.get_double("learner", "sigma0", mc.learner.sigma0);
    mc.learner.feature_lengthscale =
        cfg.get_double("learner", "feature_lengthscale", mc.learner.feature_lengthscale);
    mc.learner.prior_iterations =
        int(cfg.get_int("learner", "prior_iterations", mc.learner.prior_iterations));
    mc.learner.prior_learning_rate =
        cfg.get_double("learner", "prior_learning_rate", mc.learner.prior_learning_rate);
    mc.learner.posterior_max_steps =
        int(cfg.get_int("learner", "posterior_max_steps", mc.learner.posterior_max_steps));
    mc.learner.posterior_learning_rate =
        cfg.get_double("learner", "posterior_learning_rate", mc.learner.posterior_learning_rate);

    mc.delta_hidden = int(cfg.get_int("delta", "hidden", mc.delta_hidden));
    mc.delta_iterations = cfg.get_int("delta", "iterations", mc.delta_iterations);
    mc.delta_learning_rate = cfg.get_double("delta", "learning_rate", mc.delta_learning_rate);
    return mc;
}

} // namespace pblab
