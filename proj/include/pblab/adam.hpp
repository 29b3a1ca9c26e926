#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace pblab {

// Bias-corrected Adam update over a flat parameter vector.
class AdamState {
public:
    AdamState(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999,
              double epsilon = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(epsilon), t_(0), m_(size, 0.0), v_(size, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, double(t_));
        const double c2 = 1.0 - std::pow(b2_, double(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = b1_ * m_[i] + (1.0 - b1_) * grad[i];
            v_[i] = b2_ * v_[i] + (1.0 - b2_) * grad[i] * grad[i];
            params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
        }
    }

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

private:
    double lr_, b1_, b2_, eps_;
    long long t_;
    std::vector<double> m_, v_;
};

} // namespace pblab
