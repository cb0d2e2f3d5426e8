#include "rbfdqn/nn_core.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"

namespace rbfdqn::nn {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

std::string weight_name(std::size_t layer) { return fmt::format("layer{}.weight", layer); }
std::string bias_name(std::size_t layer) { return fmt::format("layer{}.bias", layer); }

void apply_activation(Activation act, Eigen::MatrixXd& z) {
    switch (act) {
    case Activation::ReLU:
        z = z.cwiseMax(0.0);
        break;
    case Activation::Tanh:
        z = z.array().tanh().matrix();
        break;
    case Activation::Identity:
        break;
    }
}

// Multiplies delta in place by the activation derivative, expressed through the output y.
void activation_backward(Activation act, const Eigen::MatrixXd& y, Eigen::MatrixXd& delta) {
    switch (act) {
    case Activation::ReLU:
        delta = (y.array() > 0.0).select(delta, 0.0);
        break;
    case Activation::Tanh:
        delta.array() *= 1.0 - y.array().square();
        break;
    case Activation::Identity:
        break;
    }
}

Eigen::MatrixXd as_column(std::span<const double> x) {
    Eigen::MatrixXd col(static_cast<Eigen::Index>(x.size()), 1);
    std::copy(x.begin(), x.end(), col.data());
    return col;
}

} // namespace

std::string to_string(Activation a) {
    switch (a) {
    case Activation::ReLU:
        return "relu";
    case Activation::Tanh:
        return "tanh";
    case Activation::Identity:
        return "identity";
    }
    return "?";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw ConfigError(fmt::format("unknown activation '{}' (valid: relu, tanh, identity)", name));
}

MlpSpec MlpSpec::make(std::size_t input_dim, std::vector<std::size_t> hidden_dims, std::size_t output_dim,
                      Activation hidden, Activation output) {
    MlpSpec spec;
    spec.input_dim = input_dim;
    spec.activations.assign(hidden_dims.size(), hidden);
    spec.hidden_dims = std::move(hidden_dims);
    spec.output_dim = output_dim;
    spec.output_activation = output;
    return spec;
}

std::size_t MlpSpec::layer_in(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::layer_out(std::size_t layer) const {
    return layer < hidden_dims.size() ? hidden_dims[layer] : output_dim;
}

Activation MlpSpec::layer_activation(std::size_t layer) const {
    return layer < hidden_dims.size() ? activations[layer] : output_activation;
}

void MlpSpec::validate() const {
    if (input_dim == 0 || output_dim == 0) {
        throw ShapeError(fmt::format("mlp: input_dim ({}) and output_dim ({}) must be positive", input_dim, output_dim));
    }
    if (activations.size() != hidden_dims.size()) {
        throw ShapeError(fmt::format("mlp: {} activations for {} hidden layers", activations.size(), hidden_dims.size()));
    }
    for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
        if (hidden_dims[i] == 0) throw ShapeError(fmt::format("layer{}: hidden width must be positive", i));
    }
}

std::size_t ParamSlot::size() const {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

ParamStore::ParamStore(std::vector<ParamSlot> layout) : layout_(std::move(layout)) {
    std::size_t offset = 0;
    for (auto& slot : layout_) {
        slot.offset = offset;
        offset += slot.size();
    }
    values_.assign(offset, 0.0);
}

ParamStore ParamStore::for_spec(const MlpSpec& spec) {
    spec.validate();
    std::vector<ParamSlot> layout;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        layout.push_back({weight_name(l), {spec.layer_out(l), spec.layer_in(l)}, 0});
        layout.push_back({bias_name(l), {spec.layer_out(l)}, 0});
    }
    return ParamStore(std::move(layout));
}

const ParamSlot& ParamStore::slot(std::string_view name) const {
    for (const auto& s : layout_) {
        if (s.name == name) return s;
    }
    throw ShapeError(fmt::format("no parameter slot named '{}'", name));
}

std::span<double> ParamStore::slice(std::string_view name) {
    const auto& s = slot(name);
    return std::span<double>(values_).subspan(s.offset, s.size());
}

std::span<const double> ParamStore::slice(std::string_view name) const {
    const auto& s = slot(name);
    return std::span<const double>(values_).subspan(s.offset, s.size());
}

void ParamStore::check_matches(const MlpSpec& spec) const {
    spec.validate();
    if (layout_.size() != 2 * spec.num_layers()) {
        throw ShapeError(fmt::format("parameter layout has {} slots, spec needs {}", layout_.size(), 2 * spec.num_layers()));
    }
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const auto& w = layout_[2 * l];
        const auto& b = layout_[2 * l + 1];
        std::vector<std::size_t> wshape{spec.layer_out(l), spec.layer_in(l)};
        std::vector<std::size_t> bshape{spec.layer_out(l)};
        if (w.name != weight_name(l) || w.shape != wshape) {
            throw ShapeError(fmt::format("layer{}.weight: expected [{}, {}], layout has {} [{}]", l, wshape[0], wshape[1],
                                         w.name, fmt::join(w.shape, ", ")));
        }
        if (b.name != bias_name(l) || b.shape != bshape) {
            throw ShapeError(fmt::format("layer{}.bias: expected [{}], layout has {} [{}]", l, bshape[0], b.name,
                                         fmt::join(b.shape, ", ")));
        }
    }
}

bool Gradient::all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

void init_uniform_fan_in(const MlpSpec& spec, ParamStore& params, Rng& rng) {
    params.check_matches(spec);
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.layer_in(l)));
        for (auto& w : params.slice(weight_name(l))) w = rng.uniform(-bound, bound);
        for (auto& b : params.slice(bias_name(l))) b = rng.uniform(-bound, bound);
    }
}

Eigen::MatrixXd forward_batch(const MlpSpec& spec, const ParamStore& params, const Eigen::MatrixXd& inputs,
                              BatchTrace* trace) {
    params.check_matches(spec);
    if (static_cast<std::size_t>(inputs.rows()) != spec.input_dim) {
        throw ShapeError(fmt::format("layer0: expected input of dimension {}, got {}", spec.input_dim, inputs.rows()));
    }
    if (trace) {
        trace->outputs.clear();
        trace->outputs.reserve(spec.num_layers() + 1);
        trace->outputs.push_back(inputs);
    }
    Eigen::MatrixXd h = inputs;
    const auto& layout = params.layout();
    const auto values = params.values();
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const auto& ws = layout[2 * l];
        const auto& bs = layout[2 * l + 1];
        RowMajorMap w(values.data() + ws.offset, static_cast<Eigen::Index>(ws.shape[0]),
                      static_cast<Eigen::Index>(ws.shape[1]));
        ConstVecMap b(values.data() + bs.offset, static_cast<Eigen::Index>(bs.shape[0]));
        Eigen::MatrixXd z = w * h;
        z.colwise() += b;
        apply_activation(spec.layer_activation(l), z);
        h = std::move(z);
        if (trace) trace->outputs.push_back(h);
    }
    return h;
}

void backward_batch(const MlpSpec& spec, const ParamStore& params, const BatchTrace& trace,
                    const Eigen::MatrixXd& upstream, Gradient& grad) {
    params.check_matches(spec);
    if (trace.outputs.size() != spec.num_layers() + 1) {
        throw ShapeError("backward: trace does not belong to this network");
    }
    if (static_cast<std::size_t>(upstream.rows()) != spec.output_dim ||
        upstream.cols() != trace.outputs.front().cols()) {
        throw ShapeError(fmt::format("layer{}: upstream is {}x{}, expected {}x{}", spec.num_layers() - 1,
                                     upstream.rows(), upstream.cols(), spec.output_dim, trace.outputs.front().cols()));
    }
    if (grad.size() != params.size()) {
        throw ShapeError(fmt::format("gradient has {} entries, parameters have {}", grad.size(), params.size()));
    }
    const auto& layout = params.layout();
    const auto values = params.values();
    Eigen::MatrixXd delta = upstream;
    for (std::size_t l = spec.num_layers(); l-- > 0;) {
        activation_backward(spec.layer_activation(l), trace.outputs[l + 1], delta);
        const auto& ws = layout[2 * l];
        const auto& bs = layout[2 * l + 1];
        const auto rows = static_cast<Eigen::Index>(ws.shape[0]);
        const auto cols = static_cast<Eigen::Index>(ws.shape[1]);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dw(
            grad.values.data() + ws.offset, rows, cols);
        Eigen::Map<Eigen::VectorXd> db(grad.values.data() + bs.offset, rows);
        dw.noalias() += delta * trace.outputs[l].transpose();
        db += delta.rowwise().sum();
        if (l > 0) {
            RowMajorMap w(values.data() + ws.offset, rows, cols);
            delta = w.transpose() * delta;
        }
    }
}

Vector forward(const MlpSpec& spec, const ParamStore& params, std::span<const double> x) {
    if (x.size() != spec.input_dim) {
        throw ShapeError(fmt::format("layer0: expected input of dimension {}, got {}", spec.input_dim, x.size()));
    }
    Eigen::MatrixXd out = forward_batch(spec, params, as_column(x));
    return Vector(out.data(), out.data() + out.size());
}

Gradient backward(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                  std::span<const double> upstream) {
    if (upstream.size() != spec.output_dim) {
        throw ShapeError(fmt::format("layer{}: upstream has dimension {}, expected {}", spec.num_layers() - 1,
                                     upstream.size(), spec.output_dim));
    }
    if (x.size() != spec.input_dim) {
        throw ShapeError(fmt::format("layer0: expected input of dimension {}, got {}", spec.input_dim, x.size()));
    }
    BatchTrace trace;
    forward_batch(spec, params, as_column(x), &trace);
    Gradient grad = Gradient::like(params);
    backward_batch(spec, params, trace, as_column(upstream), grad);
    return grad;
}

void adam_step(ParamStore& params, const Gradient& grad, AdamState& state, double lr, const AdamConfig& cfg) {
    if (grad.size() != params.size()) {
        throw ShapeError(fmt::format("adam: gradient has {} entries, parameters have {}", grad.size(), params.size()));
    }
    if (!(lr > 0.0)) throw ConfigError(fmt::format("adam: learning rate must be positive, got {}", lr));
    if (state.m.empty() && state.v.empty() && state.step == 0) state = AdamState(params.size());
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam: optimizer state does not match parameter count");
    }
    if (!grad.all_finite()) throw NumericalError("adam: non-finite gradient entry, step skipped");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const bool zero = std::all_of(grad.values.begin(), grad.values.end(), [](double g) { return g == 0.0; });
    auto p = params.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grad.values[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        if (zero) continue;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
}

double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

double max_relative_error(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                          std::span<const double> upstream, const Gradient& claimed, double step) {
    ParamStore probe = params;
    auto objective = [&](const ParamStore& p) {
        const Vector y = forward(spec, p, x);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += upstream[i] * y[i];
        return s;
    };
    double worst = 0.0;
    auto values = probe.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + step;
        const double plus = objective(probe);
        values[i] = saved - step;
        const double minus = objective(probe);
        values[i] = saved;
        const double numeric = (plus - minus) / (2.0 * step);
        worst = std::max(worst, relative_error(claimed.values.at(i), numeric));
    }
    return worst;
}

double finite_diff_check(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                         std::span<const double> upstream, double step) {
    return max_relative_error(spec, params, x, upstream, backward(spec, params, x, upstream), step);
}

} // namespace rbfdqn::nn
