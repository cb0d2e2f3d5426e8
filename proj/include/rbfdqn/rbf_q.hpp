#pragma once

// Radial-basis Q head. Two state-conditioned MLPs emit N centroid locations
// a_i(s) (squashed into the action box) and N centroid values v_i(s); the
// Q value at action a is the softmax-in-distance mixture
//
//     Q(s, a) = sum_i exp(-beta |a - a_i|) v_i / sum_i exp(-beta |a - a_i|).
//
// The maximum over actions is approximated by evaluating Q at the N centroid
// locations, with error shrinking like exp(-beta).

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rbfdqn/nn_core.hpp"
#include "rbfdqn/rng.hpp"

namespace rbfdqn::rbf {

enum class Norm { L2, L1 };

std::string to_string(Norm n);
Norm parse_norm(std::string_view name);

struct RbfQConfig {
    std::size_t num_centroids = 32;
    double beta = 5.0;
    Norm norm = Norm::L2;
    std::vector<std::size_t> hidden_dims{128, 128};
    nn::Activation activation = nn::Activation::ReLU;
};

struct RbfQNet {
    nn::MlpSpec location_spec; // state -> N * action_dim raw locations
    nn::ParamStore location_params;
    nn::MlpSpec value_spec; // state -> N values
    nn::ParamStore value_params;
    std::size_t num_centroids = 1;
    double beta = 5.0;
    Norm norm = Norm::L2;
    std::vector<double> action_low;
    std::vector<double> action_high;

    std::size_t state_dim() const { return location_spec.input_dim; }
    std::size_t action_dim() const { return action_low.size(); }

    // Throws ShapeError / ConfigError when the invariants do not hold.
    void validate() const;

    bool operator==(const RbfQNet&) const = default;
};

// Both heads initialised uniform in +-1/sqrt(fan_in).
RbfQNet make_rbf_q(std::size_t state_dim, std::span<const double> action_low, std::span<const double> action_high,
                   const RbfQConfig& cfg, Rng& rng);

// Smooth bounded map R -> (low, high); raw 0 maps to the box center.
double squash(double raw, double low, double high);

// Centroid locations (row-major N x action_dim) and values for one state.
struct Centroids {
    std::size_t action_dim = 0;
    std::vector<double> locations;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    std::span<const double> location(std::size_t i) const {
        return std::span<const double>(locations).subspan(i * action_dim, action_dim);
    }
};

Centroids centroids(const RbfQNet& net, std::span<const double> state);

double action_distance(std::span<const double> a, std::span<const double> b, Norm norm);

// The normalized mixture for given centroids, max-exponent subtracted.
double mixture_value(const Centroids& c, std::span<const double> action, double beta, Norm norm);

struct MixtureGradient {
    double q = 0.0;
    std::vector<double> d_locations; // N x action_dim, row-major
    std::vector<double> d_values;    // N
};

// Q and its partials with respect to centroid locations and values. Where an
// L2 distance is exactly zero the (undefined) location partial is taken as 0.
MixtureGradient mixture_gradient(const Centroids& c, std::span<const double> action, double beta, Norm norm);

double q_value(const RbfQNet& net, std::span<const double> state, std::span<const double> action);

struct GreedyResult {
    std::vector<double> action;
    double q = 0.0;
    std::size_t index = 0;
};

// Argmax of Q over the centroid locations; ties go to the lowest index.
GreedyResult greedy_from_centroids(const Centroids& c, double beta, Norm norm);
GreedyResult greedy_action(const RbfQNet& net, std::span<const double> state);

struct QGradient {
    nn::Gradient location;
    nn::Gradient value;
};

QGradient q_gradient(const RbfQNet& net, std::span<const double> state, std::span<const double> action,
                     double upstream);

// Batched evaluation used by the trainer. Columns of `states` are samples.
struct BatchForward {
    nn::BatchTrace location_trace;
    nn::BatchTrace value_trace;
    Eigen::MatrixXd raw_locations; // (N * action_dim) x B
    Eigen::MatrixXd values;        // N x B

    std::size_t batch_size() const { return static_cast<std::size_t>(values.cols()); }
};

BatchForward forward_batch(const RbfQNet& net, const Eigen::MatrixXd& states, bool keep_trace = true);

Centroids centroids_at(const RbfQNet& net, const BatchForward& fwd, std::size_t column);

// Centroid-search maximum per column.
std::vector<double> centroid_max_batch(const RbfQNet& net, const Eigen::MatrixXd& states);

std::vector<double> q_values_batch(const RbfQNet& net, const BatchForward& fwd, const Eigen::MatrixXd& actions);

// Summed gradient of sum_j upstream_j * Q(state_j, action_j).
QGradient q_gradient_batch(const RbfQNet& net, const BatchForward& fwd, const Eigen::MatrixXd& actions,
                           std::span<const double> upstream);

// Checkpoint: magic, net header (N, beta, norm, bounds, both MLP specs), then both ParamStores.
void save_rbf_q(const std::filesystem::path& path, const RbfQNet& net);
RbfQNet load_rbf_q(const std::filesystem::path& path);

} // namespace rbfdqn::rbf
