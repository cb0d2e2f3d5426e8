#include "rbfdqn/rbf_q.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "rbfdqn/checkpoint.hpp"
#include "rbfdqn/errors.hpp"

namespace rbfdqn::rbf {

namespace {

Eigen::MatrixXd as_column(std::span<const double> x) {
    Eigen::MatrixXd col(static_cast<Eigen::Index>(x.size()), 1);
    std::copy(x.begin(), x.end(), col.data());
    return col;
}

void check_state(const RbfQNet& net, std::span<const double> state) {
    if (state.size() != net.state_dim()) {
        throw ShapeError(fmt::format("rbf_q: state has dimension {}, net expects {}", state.size(), net.state_dim()));
    }
}

void check_action(const RbfQNet& net, std::span<const double> action) {
    if (action.size() != net.action_dim()) {
        throw ShapeError(fmt::format("rbf_q: action has dimension {}, net expects {}", action.size(), net.action_dim()));
    }
    for (double a : action) {
        if (!std::isfinite(a)) throw NumericalError("rbf_q: non-finite action");
    }
}

void check_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw NumericalError(fmt::format("rbf_q: non-finite {} from network", what));
}

// Unnormalized log-weights -beta * d_i and their maximum.
std::vector<double> log_weights(const Centroids& c, std::span<const double> action, double beta, Norm norm,
                                std::vector<double>* distances = nullptr) {
    std::vector<double> e(c.size());
    if (distances) distances->resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double d = action_distance(action, c.location(i), norm);
        if (distances) (*distances)[i] = d;
        e[i] = -beta * d;
    }
    return e;
}

void write_spec(io::BinaryWriter& w, const nn::MlpSpec& spec) {
    w.u64(spec.input_dim);
    w.u64(spec.hidden_dims.size());
    for (std::size_t i = 0; i < spec.hidden_dims.size(); ++i) {
        w.u64(spec.hidden_dims[i]);
        w.u64(static_cast<std::uint64_t>(spec.activations[i]));
    }
    w.u64(spec.output_dim);
    w.u64(static_cast<std::uint64_t>(spec.output_activation));
}

nn::Activation read_activation(io::BinaryReader& r) {
    const auto v = r.u64();
    if (v > static_cast<std::uint64_t>(nn::Activation::Identity)) {
        throw FormatError(fmt::format("unknown activation code {}", v));
    }
    return static_cast<nn::Activation>(v);
}

nn::MlpSpec read_spec(io::BinaryReader& r) {
    nn::MlpSpec spec;
    spec.input_dim = r.u64();
    const auto layers = r.u64();
    if (layers > 64) throw FormatError(fmt::format("implausible hidden layer count {}", layers));
    for (std::uint64_t i = 0; i < layers; ++i) {
        spec.hidden_dims.push_back(r.u64());
        spec.activations.push_back(read_activation(r));
    }
    spec.output_dim = r.u64();
    spec.output_activation = read_activation(r);
    return spec;
}

constexpr std::string_view kNetTag = "rbf_q";

} // namespace

std::string to_string(Norm n) { return n == Norm::L2 ? "l2" : "l1"; }

Norm parse_norm(std::string_view name) {
    if (name == "l2") return Norm::L2;
    if (name == "l1") return Norm::L1;
    throw ConfigError(fmt::format("unknown norm '{}' (valid: l2, l1)", name));
}

void RbfQNet::validate() const {
    if (num_centroids == 0) throw ConfigError("rbf_q: need at least one centroid");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError(fmt::format("rbf_q: beta must be positive, got {}", beta));
    if (action_low.empty() || action_low.size() != action_high.size()) {
        throw ShapeError("rbf_q: action bounds must be nonempty and of equal length");
    }
    for (std::size_t j = 0; j < action_low.size(); ++j) {
        if (!(action_low[j] < action_high[j])) {
            throw ConfigError(fmt::format("rbf_q: empty action box in dimension {}", j));
        }
    }
    if (location_spec.output_dim != num_centroids * action_dim()) {
        throw ShapeError(fmt::format("rbf_q: location head emits {}, expected N * action_dim = {}",
                                     location_spec.output_dim, num_centroids * action_dim()));
    }
    if (value_spec.output_dim != num_centroids) {
        throw ShapeError(fmt::format("rbf_q: value head emits {}, expected N = {}", value_spec.output_dim, num_centroids));
    }
    if (value_spec.input_dim != location_spec.input_dim) {
        throw ShapeError("rbf_q: location and value heads disagree on state dimension");
    }
    location_params.check_matches(location_spec);
    value_params.check_matches(value_spec);
}

RbfQNet make_rbf_q(std::size_t state_dim, std::span<const double> action_low, std::span<const double> action_high,
                   const RbfQConfig& cfg, Rng& rng) {
    RbfQNet net;
    net.num_centroids = cfg.num_centroids;
    net.beta = cfg.beta;
    net.norm = cfg.norm;
    net.action_low.assign(action_low.begin(), action_low.end());
    net.action_high.assign(action_high.begin(), action_high.end());
    net.location_spec =
        nn::MlpSpec::make(state_dim, cfg.hidden_dims, cfg.num_centroids * action_low.size(), cfg.activation);
    net.value_spec = nn::MlpSpec::make(state_dim, cfg.hidden_dims, cfg.num_centroids, cfg.activation);
    net.location_params = nn::ParamStore::for_spec(net.location_spec);
    net.value_params = nn::ParamStore::for_spec(net.value_spec);
    net.validate();
    nn::init_uniform_fan_in(net.location_spec, net.location_params, rng);
    nn::init_uniform_fan_in(net.value_spec, net.value_params, rng);
    return net;
}

double squash(double raw, double low, double high) {
    const double center = 0.5 * (low + high);
    const double half = 0.5 * (high - low);
    return center + half * std::tanh(raw);
}

double action_distance(std::span<const double> a, std::span<const double> b, Norm norm) {
    double acc = 0.0;
    if (norm == Norm::L2) {
        for (std::size_t j = 0; j < a.size(); ++j) acc += (a[j] - b[j]) * (a[j] - b[j]);
        return std::sqrt(acc);
    }
    for (std::size_t j = 0; j < a.size(); ++j) acc += std::abs(a[j] - b[j]);
    return acc;
}

double mixture_value(const Centroids& c, std::span<const double> action, double beta, Norm norm) {
    const auto e = log_weights(c, action, beta, norm);
    const double top = *std::max_element(e.begin(), e.end());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double w = std::exp(e[i] - top);
        num += w * c.values[i];
        den += w;
    }
    return num / den;
}

MixtureGradient mixture_gradient(const Centroids& c, std::span<const double> action, double beta, Norm norm) {
    const std::size_t n = c.size();
    const std::size_t dim = c.action_dim;
    std::vector<double> dist;
    const auto e = log_weights(c, action, beta, norm, &dist);
    const double top = *std::max_element(e.begin(), e.end());

    MixtureGradient g;
    g.d_values.resize(n);
    g.d_locations.assign(n * dim, 0.0);
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        g.d_values[i] = std::exp(e[i] - top);
        den += g.d_values[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        g.d_values[i] /= den; // normalized weight p_i == dQ/dv_i
        g.q += g.d_values[i] * c.values[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
        // dQ/dd_i = -beta * p_i * (v_i - Q)
        const double d_dist = -beta * g.d_values[i] * (c.values[i] - g.q);
        const auto loc = c.location(i);
        for (std::size_t j = 0; j < dim; ++j) {
            const double diff = loc[j] - action[j];
            double d_loc = 0.0;
            if (norm == Norm::L2) {
                d_loc = dist[i] > 0.0 ? diff / dist[i] : 0.0;
            } else {
                d_loc = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
            }
            g.d_locations[i * dim + j] = d_dist * d_loc;
        }
    }
    return g;
}

BatchForward forward_batch(const RbfQNet& net, const Eigen::MatrixXd& states, bool keep_trace) {
    if (static_cast<std::size_t>(states.rows()) != net.state_dim()) {
        throw ShapeError(fmt::format("rbf_q: state has dimension {}, net expects {}", states.rows(), net.state_dim()));
    }
    BatchForward fwd;
    fwd.raw_locations = nn::forward_batch(net.location_spec, net.location_params, states,
                                          keep_trace ? &fwd.location_trace : nullptr);
    fwd.values = nn::forward_batch(net.value_spec, net.value_params, states, keep_trace ? &fwd.value_trace : nullptr);
    check_finite(fwd.raw_locations, "centroid location");
    check_finite(fwd.values, "centroid value");
    return fwd;
}

Centroids centroids_at(const RbfQNet& net, const BatchForward& fwd, std::size_t column) {
    const std::size_t dim = net.action_dim();
    const auto col = static_cast<Eigen::Index>(column);
    Centroids c;
    c.action_dim = dim;
    c.locations.resize(net.num_centroids * dim);
    c.values.resize(net.num_centroids);
    for (std::size_t i = 0; i < net.num_centroids; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            const auto row = static_cast<Eigen::Index>(i * dim + j);
            c.locations[i * dim + j] = squash(fwd.raw_locations(row, col), net.action_low[j], net.action_high[j]);
        }
        c.values[i] = fwd.values(static_cast<Eigen::Index>(i), col);
    }
    return c;
}

Centroids centroids(const RbfQNet& net, std::span<const double> state) {
    check_state(net, state);
    return centroids_at(net, forward_batch(net, as_column(state), false), 0);
}

double q_value(const RbfQNet& net, std::span<const double> state, std::span<const double> action) {
    check_action(net, action);
    return mixture_value(centroids(net, state), action, net.beta, net.norm);
}

GreedyResult greedy_from_centroids(const Centroids& c, double beta, Norm norm) {
    GreedyResult best;
    best.q = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double q = mixture_value(c, c.location(i), beta, norm);
        if (q > best.q) {
            best.q = q;
            best.index = i;
        }
    }
    const auto loc = c.location(best.index);
    best.action.assign(loc.begin(), loc.end());
    return best;
}

GreedyResult greedy_action(const RbfQNet& net, std::span<const double> state) {
    return greedy_from_centroids(centroids(net, state), net.beta, net.norm);
}

std::vector<double> centroid_max_batch(const RbfQNet& net, const Eigen::MatrixXd& states) {
    const auto fwd = forward_batch(net, states, false);
    std::vector<double> out(fwd.batch_size());
    for (std::size_t b = 0; b < out.size(); ++b) {
        out[b] = greedy_from_centroids(centroids_at(net, fwd, b), net.beta, net.norm).q;
    }
    return out;
}

std::vector<double> q_values_batch(const RbfQNet& net, const BatchForward& fwd, const Eigen::MatrixXd& actions) {
    if (static_cast<std::size_t>(actions.rows()) != net.action_dim() ||
        static_cast<std::size_t>(actions.cols()) != fwd.batch_size()) {
        throw ShapeError(fmt::format("rbf_q: actions are {}x{}, expected {}x{}", actions.rows(), actions.cols(),
                                     net.action_dim(), fwd.batch_size()));
    }
    std::vector<double> q(fwd.batch_size());
    for (std::size_t b = 0; b < q.size(); ++b) {
        const auto col = actions.col(static_cast<Eigen::Index>(b));
        q[b] = mixture_value(centroids_at(net, fwd, b), std::span<const double>(col.data(), net.action_dim()), net.beta,
                             net.norm);
    }
    return q;
}

QGradient q_gradient_batch(const RbfQNet& net, const BatchForward& fwd, const Eigen::MatrixXd& actions,
                           std::span<const double> upstream) {
    const std::size_t batch = fwd.batch_size();
    const std::size_t dim = net.action_dim();
    const std::size_t n = net.num_centroids;
    if (upstream.size() != batch || static_cast<std::size_t>(actions.cols()) != batch ||
        static_cast<std::size_t>(actions.rows()) != dim) {
        throw ShapeError("rbf_q: q_gradient_batch dimensions disagree with the forward pass");
    }
    if (fwd.location_trace.outputs.empty() || fwd.value_trace.outputs.empty()) {
        throw StateError("rbf_q: q_gradient_batch needs a forward pass with traces");
    }
    Eigen::MatrixXd up_loc(static_cast<Eigen::Index>(n * dim), static_cast<Eigen::Index>(batch));
    Eigen::MatrixXd up_val(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(batch));
    for (std::size_t b = 0; b < batch; ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        const auto c = centroids_at(net, fwd, b);
        const auto a = actions.col(col);
        const auto mg = mixture_gradient(c, std::span<const double>(a.data(), dim), net.beta, net.norm);
        for (std::size_t i = 0; i < n; ++i) {
            up_val(static_cast<Eigen::Index>(i), col) = upstream[b] * mg.d_values[i];
            for (std::size_t j = 0; j < dim; ++j) {
                const auto row = static_cast<Eigen::Index>(i * dim + j);
                // d squash / d raw = half * (1 - tanh^2)
                const double t = std::tanh(fwd.raw_locations(row, col));
                const double half = 0.5 * (net.action_high[j] - net.action_low[j]);
                up_loc(row, col) = upstream[b] * mg.d_locations[i * dim + j] * half * (1.0 - t * t);
            }
        }
    }
    QGradient g{nn::Gradient::like(net.location_params), nn::Gradient::like(net.value_params)};
    nn::backward_batch(net.location_spec, net.location_params, fwd.location_trace, up_loc, g.location);
    nn::backward_batch(net.value_spec, net.value_params, fwd.value_trace, up_val, g.value);
    if (!g.location.all_finite() || !g.value.all_finite()) throw NumericalError("rbf_q: non-finite gradient");
    return g;
}

QGradient q_gradient(const RbfQNet& net, std::span<const double> state, std::span<const double> action,
                     double upstream) {
    check_state(net, state);
    check_action(net, action);
    const auto fwd = forward_batch(net, as_column(state), true);
    const double up[1] = {upstream};
    return q_gradient_batch(net, fwd, as_column(action), up);
}

void save_rbf_q(const std::filesystem::path& path, const RbfQNet& net) {
    net.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
    io::BinaryWriter w(out);
    w.magic();
    w.str(kNetTag);
    w.u64(net.num_centroids);
    w.f64(net.beta);
    w.u64(static_cast<std::uint64_t>(net.norm));
    w.u64(net.action_dim());
    w.f64s(net.action_low);
    w.f64s(net.action_high);
    write_spec(w, net.location_spec);
    write_spec(w, net.value_spec);
    w.param_store(net.location_params);
    w.param_store(net.value_params);
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path.string()));
}

RbfQNet load_rbf_q(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    io::BinaryReader r(in);
    r.magic();
    if (r.str() != kNetTag) throw FormatError(fmt::format("'{}' is not an RBF Q-network checkpoint", path.string()));
    RbfQNet net;
    net.num_centroids = r.u64();
    net.beta = r.f64();
    const auto norm = r.u64();
    if (norm > 1) throw FormatError(fmt::format("unknown norm code {}", norm));
    net.norm = static_cast<Norm>(norm);
    const auto dim = r.u64();
    if (dim == 0 || dim > 1024) throw FormatError(fmt::format("implausible action dimension {}", dim));
    net.action_low = r.f64s(dim);
    net.action_high = r.f64s(dim);
    net.location_spec = read_spec(r);
    net.value_spec = read_spec(r);
    net.location_params = r.param_store();
    net.value_params = r.param_store();
    try {
        net.validate();
    } catch (const std::exception& e) {
        throw FormatError(fmt::format("'{}': inconsistent checkpoint: {}", path.string(), e.what()));
    }
    return net;
}

} // namespace rbfdqn::rbf
