#include "pblab/synthetic_tasks.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace pblab {

double eq_kernel(double x1, double x2, double lengthscale, double variance) {
    const double d = x1 - x2;
    return variance * std::exp(-d * d / (2.0 * lengthscale * lengthscale));
}

Task sample_task(RngStream& rng, const TaskConfig& config) {
    if (config.n <= 0 || config.heldout_size < 0 || config.balance_size < 0)
        throw std::invalid_argument("sample_task: bad sizes");
    if (!(config.balance_min_fraction >= 0.0 && config.balance_min_fraction <= 0.5))
        throw std::invalid_argument("sample_task: balance_min_fraction outside [0, 0.5]");

    const int total = config.n + config.heldout_size + config.balance_size;
    Eigen::VectorXd xs(total), latent(total);
    Eigen::MatrixXd gram(total, total);

    Task task;
    for (task.draws_used = 1;; ++task.draws_used) {
        for (int i = 0; i < total; ++i)
            xs[i] = rng.next_uniform(config.input_low, config.input_high);

        for (int i = 0; i < total; ++i) {
            for (int j = 0; j <= i; ++j) {
                const double k = eq_kernel(xs[i], xs[j], config.lengthscale, config.variance);
                gram(i, j) = k;
                gram(j, i) = k;
            }
        }

        double jitter = config.jitter;
        Eigen::LLT<Eigen::MatrixXd> llt;
        while (true) {
            Eigen::MatrixXd stabilized = gram;
            stabilized.diagonal().array() += jitter;
            llt.compute(stabilized);
            if (llt.info() == Eigen::Success) break;
            jitter *= 10.0;
            if (jitter > 1e-4) {
                char msg[128];
                std::snprintf(msg, sizeof msg,
                              "sample_task: Cholesky failed at jitter %.1e (gram %dx%d)", jitter,
                              total, total);
                throw std::runtime_error(msg);
            }
        }

        Eigen::VectorXd z(total);
        for (int i = 0; i < total; ++i) z[i] = rng.next_gaussian();
        latent = llt.matrixL() * z;

        if (config.balance_size > 0 && config.balance_min_fraction > 0.0) {
            int positives = 0;
            for (int i = config.n + config.heldout_size; i < total; ++i)
                if (latent[i] >= 0.0) ++positives;
            const int minority = std::min(positives, config.balance_size - positives);
            if (double(minority) / config.balance_size < config.balance_min_fraction) continue;
        }

        task.dataset.resize(config.n);
        for (int i = 0; i < config.n; ++i)
            task.dataset[i] = {xs[i], latent[i] >= 0.0 ? +1 : -1};
        task.heldout.resize(config.heldout_size);
        for (int i = 0; i < config.heldout_size; ++i)
            task.heldout[i] = {xs[config.n + i], latent[config.n + i] >= 0.0 ? +1 : -1};
        return task;
    }
}

Task sample_task(const TaskConfig& config, std::uint64_t task_index) {
    RngStream rng(config.seed, task_index);
    return sample_task(rng, config);
}

Split split_dataset(const Task& task, double proportion, SplitMode mode, RngStream& rng) {
    const int n = int(task.dataset.size());
    const int k = int(std::llround(proportion * n));
    if (k < 0 || k > n) throw std::invalid_argument("split_dataset: bad proportion");

    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.next_below(std::uint64_t(i) + 1)]);

    Split split;
    split.mode = mode;
    split.proportion = proportion;
    split.first_part.assign(idx.begin(), idx.begin() + k);
    split.second_part.assign(idx.begin() + k, idx.end());
    return split;
}

namespace {
void write_points(std::ostream& os, const std::vector<LabeledPoint>& pts) {
    char buf[48];
    for (const auto& p : pts) {
        std::snprintf(buf, sizeof buf, "%.17g %d\n", p.x, p.y);
        os << buf;
    }
}

std::vector<LabeledPoint> read_points(std::istream& is, int count) {
    std::vector<LabeledPoint> pts(count);
    for (auto& p : pts)
        if (!(is >> p.x >> p.y)) throw std::runtime_error("load_task: truncated points");
    return pts;
}
} // namespace

void save_task(const Task& task, std::ostream& os) {
    os << "pblab-task 1\n";
    os << "n " << task.dataset.size() << " heldout " << task.heldout.size() << " draws_used "
       << task.draws_used << '\n';
    os << "[dataset]\n";
    write_points(os, task.dataset);
    os << "[heldout]\n";
    write_points(os, task.heldout);
}

Task load_task(std::istream& is) {
    std::string magic, key;
    int version = 0;
    is >> magic >> version;
    if (magic != "pblab-task" || version != 1) throw std::runtime_error("load_task: bad header");
    Task task;
    int n = 0, heldout = 0;
    is >> key >> n;
    if (key != "n") throw std::runtime_error("load_task: expected n");
    is >> key >> heldout;
    if (key != "heldout") throw std::runtime_error("load_task: expected heldout");
    is >> key >> task.draws_used;
    if (key != "draws_used") throw std::runtime_error("load_task: expected draws_used");
    is >> key;
    if (key != "[dataset]") throw std::runtime_error("load_task: expected [dataset]");
    task.dataset = read_points(is, n);
    is >> key;
    if (key != "[heldout]") throw std::runtime_error("load_task: expected [heldout]");
    task.heldout = read_points(is, heldout);
    return task;
}

} // namespace pblab
