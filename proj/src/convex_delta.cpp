#include "pblab/convex_delta.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "pblab/rng.hpp"

namespace pblab {

ConvexDeltaParams::ConvexDeltaParams(int hidden_width) : hidden_(hidden_width) {
    if (hidden_width < 0) throw std::invalid_argument("ConvexDeltaParams: negative width");
    data_.assign(3 + 4 * std::size_t(hidden_width), 0.0);
}

namespace detail {

namespace {
const SoftplusNode* build_softplus_table() {
    auto* t = new SoftplusNode[kSoftplusNodes];
    const double step = 1.0 / kSoftplusPerUnit;
    for (int i = 0; i < kSoftplusNodes; ++i) {
        const double z = kSoftplusLo + i * step;
        const double sig =
            z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        t[i].value = z > 30.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        t[i].d1 = sig * step;
        t[i].d2 = sig * (1.0 - sig) * step * step;
    }
    return t;
}
} // namespace

const SoftplusNode* const softplus_table = build_softplus_table();

} // namespace detail

double delta_eval(const ConvexDeltaParams& params, double q, double p) {
    const int H = params.hidden_width();
    double s = params.a0() + params.a_q() * q + params.a_p() * p;
    for (int h = 0; h < H; ++h) {
        const double z = params.weight_q(h) * q + params.weight_p(h) * p + params.bias(h);
        s += softplus(params.output_raw(h)) * softplus(z);
    }
    return s;
}

double delta_grad_p(const ConvexDeltaParams& params, double q, double p) {
    const int H = params.hidden_width();
    double g = params.a_p();
    for (int h = 0; h < H; ++h) {
        const double z = params.weight_q(h) * q + params.weight_p(h) * p + params.bias(h);
        g += softplus(params.output_raw(h)) * logistic(z) * params.weight_p(h);
    }
    return g;
}

double delta_grad_q(const ConvexDeltaParams& params, double q, double p) {
    const int H = params.hidden_width();
    double g = params.a_q();
    for (int h = 0; h < H; ++h) {
        const double z = params.weight_q(h) * q + params.weight_p(h) * p + params.bias(h);
        g += softplus(params.output_raw(h)) * logistic(z) * params.weight_q(h);
    }
    return g;
}

void delta_grad_params_accum(const ConvexDeltaParams& params, double q, double p,
                             double scale, ParamGrad& out) {
    const int H = params.hidden_width();
    out[0] += scale;
    out[1] += scale * q;
    out[2] += scale * p;
    for (int h = 0; h < H; ++h) {
        const double z = params.weight_q(h) * q + params.weight_p(h) * p + params.bias(h);
        const double s = softplus(z);
        const double sig = logistic(z);
        const double v = softplus(params.output_raw(h));
        out[3 + 2 * h] += scale * v * sig * q;
        out[3 + 2 * h + 1] += scale * v * sig * p;
        out[3 + 2 * H + h] += scale * v * sig;
        out[3 + 3 * H + h] += scale * logistic(params.output_raw(h)) * s;
    }
}

ParamGrad delta_grad_params(const ConvexDeltaParams& params, double q, double p) {
    ParamGrad g(params.size(), 0.0);
    delta_grad_params_accum(params, q, p, 1.0, g);
    return g;
}

CachedDelta::CachedDelta(const ConvexDeltaParams& params) : params_(&params) {
    const int H = params.hidden_width();
    v_.resize(H);
    for (int h = 0; h < H; ++h) v_[h] = softplus(params.output_raw(h));
}

double CachedDelta::operator()(double q, double p) const {
    const ConvexDeltaParams& P = *params_;
    const int H = P.hidden_width();
    double s = P.a0() + P.a_q() * q + P.a_p() * p;
    const double* w = &P.data()[3];
    const double* b = &P.data()[3 + 2 * std::size_t(H)];
    for (int h = 0; h < H; ++h)
        s += v_[h] * softplus(w[2 * h] * q + w[2 * h + 1] * p + b[h]);
    return s;
}

double CachedDelta::grad_p(double q, double p) const {
    const ConvexDeltaParams& P = *params_;
    const int H = P.hidden_width();
    double g = P.a_p();
    const double* w = &P.data()[3];
    const double* b = &P.data()[3 + 2 * std::size_t(H)];
    for (int h = 0; h < H; ++h)
        g += v_[h] * logistic(w[2 * h] * q + w[2 * h + 1] * p + b[h]) * w[2 * h + 1];
    return g;
}

GridFunction monotone_rectify(const ConvexDeltaParams& params, double q,
                              const std::vector<double>& p_grid) {
    GridFunction out;
    out.q = q;
    out.p_grid = p_grid;
    out.values.resize(p_grid.size());
    double running = std::numeric_limits<double>::infinity();
    for (std::size_t i = p_grid.size(); i-- > 0;) {
        running = std::min(running, delta_eval(params, q, p_grid[i]));
        out.values[i] = running;
    }
    return out;
}

ConvexDeltaParams init_delta_params(int hidden_width, std::uint64_t seed) {
    ConvexDeltaParams params(hidden_width);
    RngStream rng(seed, 0x64656c7461ull); // stream tag for parameter init
    const double scale = 1.0 / std::sqrt(2.0);
    params.a0() = 0.0;
    params.a_q() = -1.0;
    params.a_p() = 1.0;
    for (int h = 0; h < hidden_width; ++h) {
        params.weight_q(h) = scale * rng.next_gaussian();
        params.weight_p(h) = scale * rng.next_gaussian();
        params.bias(h) = scale * rng.next_gaussian();
        params.output_raw(h) = -2.0;
    }
    return params;
}

namespace {
void print_value(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf << '\n';
}
} // namespace

void save_delta_params(const ConvexDeltaParams& params, std::ostream& os) {
    os << "pblab-delta 1\n";
    os << "H " << params.hidden_width() << '\n';
    for (std::size_t i = 0; i < params.size(); ++i) print_value(os, params[i]);
}

ConvexDeltaParams load_delta_params(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "pblab-delta" || version != 1)
        throw std::runtime_error("load_delta_params: bad header");
    std::string hkey;
    int hidden = 0;
    is >> hkey >> hidden;
    if (hkey != "H" || hidden < 0) throw std::runtime_error("load_delta_params: bad width");
    ConvexDeltaParams params(hidden);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!(is >> params[i])) throw std::runtime_error("load_delta_params: truncated");
    }
    return params;
}

void save_delta_params_file(const ConvexDeltaParams& params, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_delta_params(params, os);
}

ConvexDeltaParams load_delta_params_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return load_delta_params(is);
}

} // namespace pblab
