#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace pblab {

// Comparator function Delta(q,p): an affine part plus one softplus hidden
// layer whose output weights are kept positive through a softplus
// reparametrisation, so the whole function is jointly convex in (q,p).
//
// Parameter layout (flat storage): a0, a_q, a_p, then per hidden unit h
// the input weights w[h][0], w[h][1], then biases b[h], then the raw
// output weights; the effective output weight is softplus(raw[h]).
class ConvexDeltaParams {
public:
    ConvexDeltaParams() : hidden_(0) {}
    explicit ConvexDeltaParams(int hidden_width);

    int hidden_width() const { return hidden_; }
    std::size_t size() const { return data_.size(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double a0() const { return data_[0]; }
    double a_q() const { return data_[1]; }
    double a_p() const { return data_[2]; }
    double weight_q(int h) const { return data_[3 + 2 * h]; }
    double weight_p(int h) const { return data_[3 + 2 * h + 1]; }
    double bias(int h) const { return data_[3 + 2 * hidden_ + h]; }
    double output_raw(int h) const { return data_[3 + 3 * hidden_ + h]; }

    double& a0() { return data_[0]; }
    double& a_q() { return data_[1]; }
    double& a_p() { return data_[2]; }
    double& weight_q(int h) { return data_[3 + 2 * h]; }
    double& weight_p(int h) { return data_[3 + 2 * h + 1]; }
    double& bias(int h) { return data_[3 + 2 * hidden_ + h]; }
    double& output_raw(int h) { return data_[3 + 3 * hidden_ + h]; }

private:
    int hidden_;
    std::vector<double> data_;
};

// Gradient with the same flat layout as the parameters it differentiates.
using ParamGrad = std::vector<double>;

// A function of p at fixed q, tabulated on a strictly increasing grid.
struct GridFunction {
    double q = 0.0;
    std::vector<double> p_grid;
    std::vector<double> values;
};

// softplus log(1 + e^x) and its derivative, evaluated from a quintic
// Hermite table (~1e-14 of the exact values, several times faster than two
// transcendental calls). logistic() is the exact derivative of the
// interpolated softplus, so finite differences of delta_eval and the
// analytic gradients see one and the same function. Inline: these sit in
// the innermost grid loops.
namespace detail {

struct SoftplusNode {
    double value; // log(1 + e^z)
    double d1;    // sigma(z), pre-scaled by the node step
    double d2;    // sigma(z)(1 - sigma(z)), pre-scaled by the step^2
};

inline constexpr double kSoftplusLo = -44.0;
inline constexpr double kSoftplusHi = 44.0;
inline constexpr int kSoftplusPerUnit = 64;
inline constexpr int kSoftplusNodes = int((kSoftplusHi - kSoftplusLo) * kSoftplusPerUnit) + 1;

extern const SoftplusNode* const softplus_table; // built before main()

} // namespace detail

inline double softplus(double x) {
    using namespace detail;
    if (x >= kSoftplusHi) return x; // log1p(e^-44) is below double resolution
    if (x <= kSoftplusLo) return 0.0;
    const double pos = (x - kSoftplusLo) * kSoftplusPerUnit;
    const int idx = int(pos);
    const double u = pos - idx;
    const SoftplusNode& a = softplus_table[idx];
    const SoftplusNode& b = softplus_table[idx + 1];
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u, u5 = u4 * u;
    return a.value * (1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5) +
           a.d1 * (u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5) +
           a.d2 * (0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5) +
           b.value * (10.0 * u3 - 15.0 * u4 + 6.0 * u5) +
           b.d1 * (-4.0 * u3 + 7.0 * u4 - 3.0 * u5) +
           b.d2 * (0.5 * u3 - u4 + 0.5 * u5);
}

inline double logistic(double x) {
    using namespace detail;
    if (x >= kSoftplusHi) return 1.0;
    if (x <= kSoftplusLo) return 0.0;
    const double pos = (x - kSoftplusLo) * kSoftplusPerUnit;
    const int idx = int(pos);
    const double u = pos - idx;
    const SoftplusNode& a = softplus_table[idx];
    const SoftplusNode& b = softplus_table[idx + 1];
    const double u2 = u * u, u3 = u2 * u, u4 = u3 * u;
    return (a.value * (-30.0 * u2 + 60.0 * u3 - 30.0 * u4) +
            a.d1 * (1.0 - 18.0 * u2 + 32.0 * u3 - 15.0 * u4) +
            a.d2 * (u - 4.5 * u2 + 6.0 * u3 - 2.5 * u4) +
            b.value * (30.0 * u2 - 60.0 * u3 + 30.0 * u4) +
            b.d1 * (-12.0 * u2 + 28.0 * u3 - 15.0 * u4) +
            b.d2 * (1.5 * u2 - 4.0 * u3 + 2.5 * u4)) *
           kSoftplusPerUnit;
}

// Delta_theta(q, p). Defined for all finite (q, p); the extended-domain
// inversion evaluates it past p = 1.
double delta_eval(const ConvexDeltaParams& params, double q, double p);

// Exact partial derivatives via the chain rule.
double delta_grad_p(const ConvexDeltaParams& params, double q, double p);
double delta_grad_q(const ConvexDeltaParams& params, double q, double p);

// Gradient of Delta_theta(q,p) with respect to every parameter, including
// the chain through the positive output-weight reparametrisation.
ParamGrad delta_grad_params(const ConvexDeltaParams& params, double q, double p);

// Same, accumulated into an existing buffer with an overall scale factor.
void delta_grad_params_accum(const ConvexDeltaParams& params, double q, double p,
                             double scale, ParamGrad& out);

// Evaluation wrapper that caches the effective output weights
// softplus(raw); use in grid loops where the parameters are fixed.
class CachedDelta {
public:
    explicit CachedDelta(const ConvexDeltaParams& params);
    double operator()(double q, double p) const;
    double grad_p(double q, double p) const;
    const ConvexDeltaParams& params() const { return *params_; }

private:
    const ConvexDeltaParams* params_;
    std::vector<double> v_;
};

// Running minimum from the right: Delta'(q,p) = inf_{p' >= p} Delta(q,p'),
// the nondecreasing rectification evaluated on p_grid.
GridFunction monotone_rectify(const ConvexDeltaParams& params, double q,
                              const std::vector<double>& p_grid);

// Initialization used for training runs: hidden weights and biases from a
// zero-mean Gaussian with scale 1/sqrt(2), raw output weights at -2, and
// affine part (0, -1, 1).
ConvexDeltaParams init_delta_params(int hidden_width, std::uint64_t seed);

// Line-oriented text serialization; values are printed with enough digits
// to round-trip bit-exactly.
void save_delta_params(const ConvexDeltaParams& params, std::ostream& os);
ConvexDeltaParams load_delta_params(std::istream& is);
void save_delta_params_file(const ConvexDeltaParams& params, const std::string& path);
ConvexDeltaParams load_delta_params_file(const std::string& path);

} // namespace pblab
