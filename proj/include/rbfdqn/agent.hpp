#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rbfdqn/envs.hpp"
#include "rbfdqn/her.hpp"
#include "rbfdqn/nn_core.hpp"
#include "rbfdqn/rbf_q.hpp"
#include "rbfdqn/replay.hpp"
#include "rbfdqn/rng.hpp"

namespace rbfdqn::agent {

using replay::Transition;

enum class Variant { Vanilla, HER, PER, HERPER };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);
bool uses_her(Variant v);
bool uses_per(Variant v);
inline constexpr Variant kAllVariants[] = {Variant::Vanilla, Variant::HER, Variant::PER, Variant::HERPER};

struct TargetUpdate {
    enum class Kind { Hard, Polyak };
    Kind kind = Kind::Hard;
    std::uint64_t period = 500; // gradient steps between hard syncs
    double tau = 0.005;
};

struct AgentConfig {
    double gamma = 0.99;
    double lr = 1e-3;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::size_t epsilon_decay_episodes = 1200;
    std::size_t batch_size = 128;
    TargetUpdate target_update;
    std::size_t updates_per_episode = 50;
    Variant variant = Variant::Vanilla;
    std::size_t buffer_capacity = 1000000;

    void validate() const;
    // Linear from epsilon_start to epsilon_end over epsilon_decay_episodes, then flat.
    double epsilon(std::size_t episode) const;
};

// Network input: state followed by goal.
std::vector<double> observation(std::span<const double> state, std::span<const double> goal);

struct TargetNet {
    rbf::RbfQNet net;
    std::uint64_t staleness = 0; // gradient steps since the last sync

    void sync(const rbf::RbfQNet& online);
    // Applies the update rule after one gradient step.
    void after_step(const rbf::RbfQNet& online, const TargetUpdate& rule);
};

// Epsilon-greedy: uniform action in the box with probability epsilon, else the
// greedy centroid. Always draws the coin first so sequences stay aligned.
std::vector<double> act(const rbf::RbfQNet& net, std::span<const double> obs, double epsilon, Rng& rng);

// r if done, else r + gamma * centroid-search max of the target net at (s', g).
double td_target(const TargetNet& target, const Transition& t, double gamma);

struct Optimizer {
    nn::AdamState location;
    nn::AdamState value;
};

struct TrainResult {
    double loss = 0.0;
    std::vector<double> td_errors;
};

struct LossGradient {
    TrainResult result;
    rbf::QGradient grad;
};

// loss = mean(w_i * delta_i^2) / 2 and its semi-gradient (no flow through the
// target) with respect to both heads. NumericalError on a non-finite loss.
LossGradient loss_gradient(const rbf::RbfQNet& net, const TargetNet& target, std::span<const Transition> batch,
                           std::span<const double> is_weights, const AgentConfig& cfg);

// loss_gradient followed by one Adam step on both heads. Throws NumericalError
// before touching the network when the loss or gradient is non-finite.
TrainResult train_step(rbf::RbfQNet& net, const TargetNet& target, std::span<const Transition> batch,
                       std::span<const double> is_weights, const AgentConfig& cfg, Optimizer& opt);

// Independent substreams of one master seed.
struct RngStreams {
    Rng init;
    Rng env;
    Rng explore;
    Rng her;
    Rng sample;
    Rng eval;

    explicit RngStreams(std::uint64_t seed);
};

// Owns everything the training loop mutates.
class Learner {
public:
    Learner(const envs::EnvSpec& spec, AgentConfig cfg, const rbf::RbfQConfig& net_cfg, replay::PerConfig per,
            her::HerStrategy strategy, her::GoalMapping mapping, Rng& init_rng);

    const AgentConfig& config() const { return cfg_; }
    rbf::RbfQNet& net() { return net_; }
    const rbf::RbfQNet& net() const { return net_; }
    const TargetNet& target() const { return target_; }
    replay::ReplayBuffer& buffer() { return buffer_; }
    const replay::ReplayBuffer& buffer() const { return buffer_; }
    const her::HerStrategy& strategy() const { return strategy_; }
    const her::GoalMapping& mapping() const { return mapping_; }
    std::size_t episodes() const { return episodes_; }
    std::uint64_t gradient_steps() const { return gradient_steps_; }

    // One sampled batch, a train step, PER refresh and the target rule. Returns the loss.
    double update(RngStreams& rng);
    void finish_episode() { ++episodes_; }

private:
    AgentConfig cfg_;
    rbf::RbfQNet net_;
    TargetNet target_;
    Optimizer opt_;
    replay::ReplayBuffer buffer_;
    her::HerStrategy strategy_;
    her::GoalMapping mapping_;
    std::size_t episodes_ = 0;
    std::uint64_t gradient_steps_ = 0;
};

using Policy = std::function<std::vector<double>(std::span<const double> state, std::span<const double> goal)>;

struct EpisodeResult {
    bool success = false;
    double ret = 0.0;
    std::size_t steps = 0;
    double epsilon = 0.0;
    double mean_loss = 0.0;
    std::size_t stored = 0; // transitions added to the buffer, originals plus relabeled
};

// Roll out one episode, store it (plus HER copies for HER variants), then run
// updates_per_episode gradient steps. `scripted` replaces epsilon-greedy acting.
EpisodeResult run_episode(envs::Env& env, Learner& learner, RngStreams& rng, const Policy* scripted = nullptr);

// Greedy rollouts without learning; fraction of successful episodes.
double evaluate(envs::Env& env, const rbf::RbfQNet& net, std::size_t episodes, Rng& rng);
double evaluate(envs::Env& env, const Policy& policy, std::size_t episodes, Rng& rng);

} // namespace rbfdqn::agent
