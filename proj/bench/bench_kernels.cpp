// Timing comparison between the OpenMP kernels and their serial reference
// implementations: the moment-term grid supremum, the extended inversion
// scan, and the per-task evaluation loop.

#include <omp.h>

#include <chrono>
#include <cstdio>

#include "pblab/gibbs_learner.hpp"
#include "pblab/i_delta.hpp"
#include "pblab/inversion.hpp"
#include "pblab/synthetic_tasks.hpp"

using namespace pblab;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

template <class F>
double time_call(F&& f, int repeats) {
    const auto start = Clock::now();
    for (int i = 0; i < repeats; ++i) f();
    return seconds_since(start) / repeats;
}

} // namespace

int main() {
    std::printf("threads: %d\n", omp_get_max_threads());

    const ConvexDeltaParams params = init_delta_params(256, 1);
    const int n = 30;

    {
        volatile double sink = 0.0;
        const double serial = time_call(
            [&] { sink = i_delta_eval_serial(params, n, 1e-3).log_value; }, 5);
        const double parallel =
            time_call([&] { sink = i_delta_eval(params, n, 1e-3).log_value; }, 5);
        std::printf("moment grid 1e-3 (H=256, n=30): serial %8.2f ms  omp %8.2f ms  speedup %.2fx\n",
                    serial * 1e3, parallel * 1e3, serial / parallel);
        const double serial_fine = time_call(
            [&] { sink = i_delta_eval_serial(params, n, 1e-5).log_value; }, 2);
        const double parallel_fine =
            time_call([&] { sink = i_delta_eval(params, n, 1e-5).log_value; }, 2);
        std::printf("moment grid 1e-5 (H=256, n=30): serial %8.2f ms  omp %8.2f ms  speedup %.2fx\n",
                    serial_fine * 1e3, parallel_fine * 1e3, serial_fine / parallel_fine);
        (void)sink;
    }

    {
        const CachedDelta cached(params);
        volatile double sink = 0.0;
        const double serial = time_call(
            [&] { sink = invert_bound_extended_serial(cached, 0.05, 1.0, 1.0).value; }, 20);
        const double parallel =
            time_call([&] { sink = invert_bound_extended(cached, 0.05, 1.0, 1.0).value; }, 20);
        std::printf("inversion scan (H=256):          serial %8.2f ms  omp %8.2f ms  speedup %.2fx\n",
                    serial * 1e3, parallel * 1e3, serial / parallel);
        (void)sink;
    }

    {
        TaskConfig tc;
        tc.seed = 11;
        LearnerConfig lc;
        FeatureMap fmap(lc.feature_lengthscale);
        BoundSpec spec;
        spec.kind = BoundSpec::Kind::catoni;
        spec.beta = 2.0;
        const int tasks = 16;

        const auto run = [&](bool parallel) {
            const auto start = Clock::now();
#pragma omp parallel for schedule(dynamic) if (parallel)
            for (int t = 0; t < tasks; ++t) {
                const Task task = sample_task(tc, std::uint64_t(t));
                volatile double keep =
                    evaluate_task(task, std::uint64_t(t), 0.4, spec, fmap, lc).bound_value;
                (void)keep;
            }
            return seconds_since(start);
        };
        const double serial = run(false);
        const double parallel = run(true);
        std::printf("task evaluation x%d:             serial %8.2f ms  omp %8.2f ms  speedup %.2fx\n",
                    tasks, serial * 1e3, parallel * 1e3, serial / parallel);
    }
    return 0;
}
