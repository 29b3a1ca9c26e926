#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pblab/rng.hpp"

namespace pblab {

struct TaskConfig {
    int n = 30;
    double lengthscale = 0.7;
    double variance = 1.0;
    double input_low = -2.0;
    double input_high = 2.0;
    int heldout_size = 300;
    int balance_size = 300;
    double balance_min_fraction = 0.4;
    double jitter = 1e-6;
    std::uint64_t seed = 0;
};

struct LabeledPoint {
    double x;
    int y; // -1 or +1
};

// One synthetic classification problem: dataset and held-out points drawn
// jointly from a single thresholded GP sample. The balance set used for
// rejection is discarded after filtering.
struct Task {
    std::vector<LabeledPoint> dataset;
    std::vector<LabeledPoint> heldout;
    int draws_used = 0;
};

enum class SplitMode { prior_risk, train_test };

struct Split {
    SplitMode mode;
    double proportion;
    std::vector<int> first_part;  // prior set or train set indices
    std::vector<int> second_part; // risk set or test set indices
};

// Exponentiated quadratic kernel value.
double eq_kernel(double x1, double x2, double lengthscale, double variance);

// Draws x-locations for dataset + held-out + balance jointly, samples the
// latent through a jittered Cholesky factor of the Gram matrix, labels by
// sign (zero maps to +1), and redraws the whole sample until the balance
// set's minority class reaches balance_min_fraction. Task stream is keyed
// by (config.seed, task_index) so tasks are reproducible independently of
// evaluation order.
Task sample_task(const TaskConfig& config, std::uint64_t task_index);
Task sample_task(RngStream& rng, const TaskConfig& config);

// Uniformly random partition with round(proportion * n) points in the
// first part.
Split split_dataset(const Task& task, double proportion, SplitMode mode, RngStream& rng);

// Line-oriented text format with section headers; round-trips exactly.
void save_task(const Task& task, std::ostream& os);
Task load_task(std::istream& is);

} // namespace pblab
