#pragma once

// Independent reference computations used as test oracles. Nothing here calls
// into the library's numeric code paths; parameters are read by slot name.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rbfdqn/nn_core.hpp"
#include "rbfdqn/rbf_q.hpp"

namespace oracle {

using rbfdqn::nn::Activation;
using rbfdqn::nn::MlpSpec;
using rbfdqn::nn::ParamStore;

template <typename T>
T activate(Activation a, T x) {
    switch (a) {
    case Activation::ReLU:
        return x > 0 ? x : T(0);
    case Activation::Tanh:
        return std::tanh(x);
    case Activation::Identity:
        return x;
    }
    return x;
}

// Straight-line affine + activation chain. `theta` is the flat parameter vector
// (possibly perturbed, possibly in extended precision).
template <typename T>
std::vector<T> mlp(const MlpSpec& spec, const ParamStore& layout, std::span<const T> theta, std::vector<T> x) {
    const std::size_t layers = spec.hidden_dims.size() + 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& w = layout.slot("layer" + std::to_string(l) + ".weight");
        const auto& b = layout.slot("layer" + std::to_string(l) + ".bias");
        const std::size_t rows = w.shape[0];
        const std::size_t cols = w.shape[1];
        const Activation act = l + 1 == layers ? spec.output_activation : spec.activations[l];
        std::vector<T> y(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            T acc = theta[b.offset + r];
            for (std::size_t c = 0; c < cols; ++c) acc += theta[w.offset + r * cols + c] * x[c];
            y[r] = activate(act, acc);
        }
        x = std::move(y);
    }
    return x;
}

template <typename T>
std::vector<T> widen(std::span<const double> v) {
    return std::vector<T>(v.begin(), v.end());
}

inline std::vector<double> mlp(const MlpSpec& spec, const ParamStore& p, std::span<const double> x) {
    return mlp<double>(spec, p, p.values(), std::vector<double>(x.begin(), x.end()));
}

template <typename T>
struct Centroids {
    std::vector<std::vector<T>> loc;
    std::vector<T> val;
};

template <typename T>
Centroids<T> centroids_of(const rbfdqn::rbf::RbfQNet& net, std::span<const T> loc_theta, std::span<const T> val_theta,
                       std::span<const double> s) {
    const auto x = std::vector<T>(s.begin(), s.end());
    const auto raw = mlp<T>(net.location_spec, net.location_params, loc_theta, x);
    Centroids<T> c;
    c.val = mlp<T>(net.value_spec, net.value_params, val_theta, x);
    const std::size_t dim = net.action_low.size();
    for (std::size_t i = 0; i < net.num_centroids; ++i) {
        std::vector<T> a(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            const T lo = net.action_low[j];
            const T hi = net.action_high[j];
            a[j] = lo + (hi - lo) * (std::tanh(raw[i * dim + j]) + 1) / 2;
        }
        c.loc.push_back(a);
    }
    return c;
}

inline Centroids<long double> centroids_of(const rbfdqn::rbf::RbfQNet& net, std::span<const double> s) {
    const auto lt = widen<long double>(net.location_params.values());
    const auto vt = widen<long double>(net.value_params.values());
    return centroids_of<long double>(net, lt, vt, s);
}

// sum_i exp(-beta |a - a_i|) v_i / sum_i exp(-beta |a - a_i|), evaluated as
// written (no max shift) in the requested precision.
template <typename T>
T eq_mixture(const Centroids<T>& c, std::span<const double> a, double beta, bool l1 = false) {
    T num = 0;
    T den = 0;
    for (std::size_t i = 0; i < c.val.size(); ++i) {
        T d = 0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            const T diff = c.loc[i][j] - T(a[j]);
            d += l1 ? std::fabs(diff) : diff * diff;
        }
        if (!l1) d = std::sqrt(d);
        const T w = std::exp(-T(beta) * d);
        num += w * c.val[i];
        den += w;
    }
    return num / den;
}

inline long double q_direct(const rbfdqn::rbf::RbfQNet& net, std::span<const double> s, std::span<const double> a) {
    return eq_mixture(centroids_of(net, s), a, net.beta, net.norm == rbfdqn::rbf::Norm::L1);
}

// Max of the mixture over a dense grid of the (1-D or 2-D) action box.
inline double grid_max(const rbfdqn::rbf::RbfQNet& net, std::span<const double> s, double resolution) {
    const auto c = centroids_of(net, s);
    const bool l1 = net.norm == rbfdqn::rbf::Norm::L1;
    const auto& lo = net.action_low;
    const auto& hi = net.action_high;
    long double best = -1e300L;
    const std::size_t n0 = static_cast<std::size_t>(std::ceil((hi[0] - lo[0]) / resolution)) + 1;
    if (lo.size() == 1) {
        for (std::size_t i = 0; i < n0; ++i) {
            const double a[1] = {std::min(hi[0], lo[0] + resolution * static_cast<double>(i))};
            best = std::max(best, eq_mixture(c, a, net.beta, l1));
        }
        return static_cast<double>(best);
    }
    const std::size_t n1 = static_cast<std::size_t>(std::ceil((hi[1] - lo[1]) / resolution)) + 1;
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t k = 0; k < n1; ++k) {
            const double a[2] = {std::min(hi[0], lo[0] + resolution * static_cast<double>(i)),
                                 std::min(hi[1], lo[1] + resolution * static_cast<double>(k))};
            best = std::max(best, eq_mixture(c, a, net.beta, l1));
        }
    }
    return static_cast<double>(best);
}

// Max of the mixture evaluated at the centroid locations themselves.
inline double centroid_max(const rbfdqn::rbf::RbfQNet& net, std::span<const double> s) {
    const auto c = centroids_of(net, s);
    long double best = -1e300L;
    for (const auto& loc : c.loc) {
        const std::vector<double> a(loc.begin(), loc.end());
        best = std::max(best, eq_mixture(c, a, net.beta, net.norm == rbfdqn::rbf::Norm::L1));
    }
    return static_cast<double>(best);
}

// Central differences of f(theta) in extended precision, one entry per parameter.
template <typename F>
std::vector<double> central_diff(std::span<const double> theta0, F&& f, double step) {
    auto theta = widen<long double>(theta0);
    std::vector<double> out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const long double saved = theta[i];
        theta[i] = saved + step;
        const long double plus = f(std::span<const long double>(theta));
        theta[i] = saved - step;
        const long double minus = f(std::span<const long double>(theta));
        theta[i] = saved;
        out[i] = static_cast<double>((plus - minus) / (2.0L * step));
    }
    return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

inline double worst_rel_err(std::span<const double> a, std::span<const double> b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
    return worst;
}

// Total-variation distance between empirical counts and an exact distribution.
inline double total_variation(std::span<const std::size_t> counts, std::span<const double> probs) {
    std::size_t n = 0;
    for (auto c : counts) n += c;
    double tv = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        tv += std::abs(static_cast<double>(counts[i]) / static_cast<double>(n) - probs[i]);
    }
    return 0.5 * tv;
}

// Planar 3-link arm tip via explicit trig sums.
inline std::vector<double> arm_tip(double q1, double q2, double q3) {
    const double l1 = 0.5, l2 = 0.3, l3 = 0.2;
    return {l1 * std::cos(q1) + l2 * std::cos(q1 + q2) + l3 * std::cos(q1 + q2 + q3),
            l1 * std::sin(q1) + l2 * std::sin(q1 + q2) + l3 * std::sin(q1 + q2 + q3)};
}

// Kolmogorov-Smirnov statistic of samples against U[lo, hi].
inline double ks_uniform(std::vector<double> xs, double lo, double hi) {
    std::sort(xs.begin(), xs.end());
    double d = 0.0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = (xs[i] - lo) / (hi - lo);
        d = std::max({d, std::abs(f - static_cast<double>(i) / n), std::abs(static_cast<double>(i + 1) / n - f)});
    }
    return d;
}

} // namespace oracle
