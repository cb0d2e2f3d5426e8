#pragma once

// Small feed-forward networks with hand-written backprop, an Adam optimizer
// and a central-difference gradient checker. Parameters live in one flat
// array (ParamStore) so optimizers and checkpoints can treat them uniformly.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rbfdqn/rng.hpp"

namespace rbfdqn::nn {

using Vector = std::vector<double>;

enum class Activation { ReLU, Tanh, Identity };

std::string to_string(Activation a);
Activation parse_activation(std::string_view name);

struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t output_dim = 0;
    std::vector<Activation> activations; // one per hidden layer
    Activation output_activation = Activation::Identity;

    // Same activation on every hidden layer.
    static MlpSpec make(std::size_t input_dim, std::vector<std::size_t> hidden_dims, std::size_t output_dim,
                        Activation hidden = Activation::ReLU, Activation output = Activation::Identity);

    std::size_t num_layers() const { return hidden_dims.size() + 1; }
    std::size_t layer_in(std::size_t layer) const;
    std::size_t layer_out(std::size_t layer) const;
    Activation layer_activation(std::size_t layer) const;

    // Throws ShapeError on zero dims or a mismatched activation list.
    void validate() const;

    bool operator==(const MlpSpec&) const = default;
};

struct ParamSlot {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t offset = 0;

    std::size_t size() const;
    bool operator==(const ParamSlot&) const = default;
};

// Flat parameter array plus the (name, shape) layout that carves it up.
class ParamStore {
public:
    ParamStore() = default;
    // Offsets are recomputed from the shapes; values are zero-filled.
    explicit ParamStore(std::vector<ParamSlot> layout);

    // Layout "layer{i}.weight" [out, in] (row-major) and "layer{i}.bias" [out].
    static ParamStore for_spec(const MlpSpec& spec);

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    const std::vector<ParamSlot>& layout() const { return layout_; }
    std::size_t size() const { return values_.size(); }

    const ParamSlot& slot(std::string_view name) const;
    std::span<double> slice(std::string_view name);
    std::span<const double> slice(std::string_view name) const;

    // Throws ShapeError naming the first slot that disagrees with spec.
    void check_matches(const MlpSpec& spec) const;

    bool operator==(const ParamStore&) const = default;

private:
    std::vector<ParamSlot> layout_;
    std::vector<double> values_;
};

struct Gradient {
    std::vector<double> values;

    Gradient() = default;
    explicit Gradient(std::size_t n) : values(n, 0.0) {}
    static Gradient like(const ParamStore& p) { return Gradient(p.size()); }

    std::size_t size() const { return values.size(); }
    bool all_finite() const;
};

// Uniform in +-1/sqrt(fan_in) for weights and biases.
void init_uniform_fan_in(const MlpSpec& spec, ParamStore& params, Rng& rng);

Vector forward(const MlpSpec& spec, const ParamStore& params, std::span<const double> x);

// Gradient of upstream . forward(x) with respect to every parameter.
Gradient backward(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                  std::span<const double> upstream);

// Per-layer activations kept by forward_batch for backward_batch.
// outputs[0] is the input batch, outputs[l + 1] the post-activation of layer l.
struct BatchTrace {
    std::vector<Eigen::MatrixXd> outputs;
};

// Columns are samples. When trace is non-null it is filled for backward_batch.
Eigen::MatrixXd forward_batch(const MlpSpec& spec, const ParamStore& params, const Eigen::MatrixXd& inputs,
                              BatchTrace* trace = nullptr);

// Adds sum over columns of d(upstream_col . output_col)/dtheta into grad.
void backward_batch(const MlpSpec& spec, const ParamStore& params, const BatchTrace& trace,
                    const Eigen::MatrixXd& upstream, Gradient& grad);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
    bool operator==(const AdamState&) const = default;
};

// Bias-corrected Adam update. Throws NumericalError (params and state untouched)
// if grad has a non-finite entry, ShapeError on a length mismatch. An all-zero
// gradient decays the moments but leaves params unchanged.
void adam_step(ParamStore& params, const Gradient& grad, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// Worst elementwise relative error between `claimed` and central differences of
// upstream . forward(x), denominator max(|a|, |b|, 1e-8).
double max_relative_error(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                          std::span<const double> upstream, const Gradient& claimed, double step);

// max_relative_error against backward().
double finite_diff_check(const MlpSpec& spec, const ParamStore& params, std::span<const double> x,
                         std::span<const double> upstream, double step = 1e-5);

double relative_error(double a, double b);

} // namespace rbfdqn::nn
