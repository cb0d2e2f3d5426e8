#include "rbfdqn/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"

namespace rbfdqn::agent {

namespace {

Eigen::MatrixXd stack_observations(std::span<const Transition> batch, bool next) {
    const auto& first = batch.front();
    const std::size_t dim = first.state.size() + first.goal.size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& t = batch[b];
        const auto& s = next ? t.next_state : t.state;
        auto col = m.col(static_cast<Eigen::Index>(b));
        std::copy(s.begin(), s.end(), col.data());
        std::copy(t.goal.begin(), t.goal.end(), col.data() + s.size());
    }
    return m;
}

Eigen::MatrixXd stack_actions(std::span<const Transition> batch) {
    const std::size_t dim = batch.front().action.size();
    Eigen::MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
        std::copy(batch[b].action.begin(), batch[b].action.end(), m.col(static_cast<Eigen::Index>(b)).data());
    }
    return m;
}

void polyak(nn::ParamStore& target, const nn::ParamStore& online, double tau) {
    auto t = target.values();
    const auto o = online.values();
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = tau * o[i] + (1.0 - tau) * t[i];
}

} // namespace

std::string to_string(Variant v) {
    switch (v) {
    case Variant::Vanilla:
        return "vanilla";
    case Variant::HER:
        return "her";
    case Variant::PER:
        return "per";
    case Variant::HERPER:
        return "her_per";
    }
    return "?";
}

Variant parse_variant(std::string_view name) {
    if (name == "vanilla") return Variant::Vanilla;
    if (name == "her") return Variant::HER;
    if (name == "per") return Variant::PER;
    if (name == "her_per") return Variant::HERPER;
    throw ConfigError(fmt::format("unknown variant '{}' (valid: vanilla, her, per, her_per)", name));
}

bool uses_her(Variant v) { return v == Variant::HER || v == Variant::HERPER; }
bool uses_per(Variant v) { return v == Variant::PER || v == Variant::HERPER; }

void AgentConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError(fmt::format("gamma must be in [0, 1), got {}", gamma));
    if (!(lr > 0.0)) throw ConfigError(fmt::format("lr must be positive, got {}", lr));
    if (!(epsilon_end >= 0.0 && epsilon_end <= epsilon_start && epsilon_start <= 1.0)) {
        throw ConfigError(fmt::format("need 0 <= epsilon_end ({}) <= epsilon_start ({}) <= 1", epsilon_end, epsilon_start));
    }
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (buffer_capacity == 0) throw ConfigError("buffer_capacity must be positive");
    if (target_update.kind == TargetUpdate::Kind::Hard && target_update.period == 0) {
        throw ConfigError("target_period must be positive");
    }
    if (target_update.kind == TargetUpdate::Kind::Polyak && !(target_update.tau > 0.0 && target_update.tau <= 1.0)) {
        throw ConfigError(fmt::format("target_tau must be in (0, 1], got {}", target_update.tau));
    }
}

double AgentConfig::epsilon(std::size_t episode) const {
    if (episode >= epsilon_decay_episodes) return epsilon_end;
    const double frac = static_cast<double>(episode) / static_cast<double>(epsilon_decay_episodes);
    return epsilon_start + frac * (epsilon_end - epsilon_start);
}

std::vector<double> observation(std::span<const double> state, std::span<const double> goal) {
    std::vector<double> obs;
    obs.reserve(state.size() + goal.size());
    obs.insert(obs.end(), state.begin(), state.end());
    obs.insert(obs.end(), goal.begin(), goal.end());
    return obs;
}

void TargetNet::sync(const rbf::RbfQNet& online) {
    net = online;
    staleness = 0;
}

void TargetNet::after_step(const rbf::RbfQNet& online, const TargetUpdate& rule) {
    if (rule.kind == TargetUpdate::Kind::Polyak) {
        polyak(net.location_params, online.location_params, rule.tau);
        polyak(net.value_params, online.value_params, rule.tau);
        staleness = 0;
        return;
    }
    if (++staleness >= rule.period) sync(online);
}

std::vector<double> act(const rbf::RbfQNet& net, std::span<const double> obs, double epsilon, Rng& rng) {
    const bool explore = rng.uniform() < epsilon;
    if (explore) {
        std::vector<double> a(net.action_dim());
        for (std::size_t j = 0; j < a.size(); ++j) a[j] = rng.uniform(net.action_low[j], net.action_high[j]);
        return a;
    }
    return rbf::greedy_action(net, obs).action;
}

double td_target(const TargetNet& target, const Transition& t, double gamma) {
    if (t.done) return t.reward;
    const auto next_obs = observation(t.next_state, t.goal);
    return t.reward + gamma * rbf::greedy_action(target.net, next_obs).q;
}

LossGradient loss_gradient(const rbf::RbfQNet& net, const TargetNet& target, std::span<const Transition> batch,
                           std::span<const double> is_weights, const AgentConfig& cfg) {
    if (batch.empty()) throw StateError("train_step: empty batch");
    if (is_weights.size() != batch.size()) {
        throw ShapeError(fmt::format("train_step: {} weights for {} transitions", is_weights.size(), batch.size()));
    }
    const std::size_t n = batch.size();

    const auto next_max = rbf::centroid_max_batch(target.net, stack_observations(batch, true));
    const auto fwd = rbf::forward_batch(net, stack_observations(batch, false), true);
    const Eigen::MatrixXd actions = stack_actions(batch);
    const auto q = rbf::q_values_batch(net, fwd, actions);

    LossGradient out;
    auto& result = out.result;
    result.td_errors.resize(n);
    std::vector<double> upstream(n);
    double weighted = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
        const auto& t = batch[b];
        const double y = t.done ? t.reward : t.reward + cfg.gamma * next_max[b];
        const double delta = y - q[b];
        result.td_errors[b] = delta;
        weighted += is_weights[b] * delta * delta;
        // d loss / d q_b
        upstream[b] = -is_weights[b] * delta / static_cast<double>(n);
    }
    result.loss = 0.5 * weighted / static_cast<double>(n);
    if (!std::isfinite(result.loss)) {
        fmt::print(stderr, "train_step: non-finite loss over a batch of {} (first td error {})\n", n,
                   result.td_errors.front());
        throw NumericalError("train_step: non-finite loss, step aborted");
    }

    out.grad = rbf::q_gradient_batch(net, fwd, actions, upstream);
    return out;
}

TrainResult train_step(rbf::RbfQNet& net, const TargetNet& target, std::span<const Transition> batch,
                       std::span<const double> is_weights, const AgentConfig& cfg, Optimizer& opt) {
    auto lg = loss_gradient(net, target, batch, is_weights, cfg);
    if (!lg.grad.location.all_finite() || !lg.grad.value.all_finite()) {
        throw NumericalError("train_step: non-finite gradient, step aborted");
    }
    nn::adam_step(net.location_params, lg.grad.location, opt.location, cfg.lr);
    nn::adam_step(net.value_params, lg.grad.value, opt.value, cfg.lr);
    return std::move(lg.result);
}

RngStreams::RngStreams(std::uint64_t seed)
    : init(seed, "init"), env(seed, "env"), explore(seed, "explore"), her(seed, "her"), sample(seed, "sample"),
      eval(seed, "eval") {}

Learner::Learner(const envs::EnvSpec& spec, AgentConfig cfg, const rbf::RbfQConfig& net_cfg, replay::PerConfig per,
                 her::HerStrategy strategy, her::GoalMapping mapping, Rng& init_rng)
    : cfg_(std::move(cfg)),
      net_(rbf::make_rbf_q(spec.state_dim + spec.goal_dim, spec.action_low, spec.action_high, net_cfg, init_rng)),
      buffer_(cfg_.buffer_capacity, {spec.state_dim, spec.action_dim, spec.goal_dim}, per),
      strategy_(strategy), mapping_(std::move(mapping)) {
    cfg_.validate();
    strategy_.validate();
    target_.sync(net_);
}

double Learner::update(RngStreams& rng) {
    TrainResult r;
    if (uses_per(cfg_.variant)) {
        auto batch = buffer_.sample_prioritized(cfg_.batch_size, gradient_steps_, rng.sample);
        r = train_step(net_, target_, batch.transitions, batch.is_weights, cfg_, opt_);
        buffer_.update_priorities(batch.indices, r.td_errors);
    } else {
        auto batch = buffer_.sample_uniform(cfg_.batch_size, rng.sample);
        const std::vector<double> ones(batch.transitions.size(), 1.0);
        r = train_step(net_, target_, batch.transitions, ones, cfg_, opt_);
    }
    ++gradient_steps_;
    target_.after_step(net_, cfg_.target_update);
    return r.loss;
}

EpisodeResult run_episode(envs::Env& env, Learner& learner, RngStreams& rng, const Policy* scripted) {
    EpisodeResult result;
    result.epsilon = learner.config().epsilon(learner.episodes());
    auto [state, goal] = env.reset(rng.env);

    her::EpisodeTrajectory traj;
    traj.transitions.reserve(env.spec().horizon);
    bool done = false;
    while (!done) {
        std::vector<double> action = scripted ? (*scripted)(state, goal)
                                              : act(learner.net(), observation(state, goal), result.epsilon, rng.explore);
        action = env.clamp_action(action);
        auto step = env.step(action);
        result.ret += step.reward;
        result.success = result.success || step.info.success;
        done = step.done;
        traj.transitions.push_back({state, action, step.reward, step.next_state, goal, step.info.success});
        state = std::move(step.next_state);
    }
    result.steps = traj.size();

    auto& buffer = learner.buffer();
    for (const auto& t : traj.transitions) buffer.push(t);
    result.stored = traj.size();
    if (uses_her(learner.config().variant)) {
        for (auto& t : her::relabel(traj, learner.strategy(), learner.mapping(), rng.her)) {
            buffer.push(std::move(t));
            ++result.stored;
        }
    }

    double loss_sum = 0.0;
    const std::size_t updates = learner.config().updates_per_episode;
    for (std::size_t u = 0; u < updates; ++u) loss_sum += learner.update(rng);
    result.mean_loss = updates > 0 ? loss_sum / static_cast<double>(updates) : 0.0;
    learner.finish_episode();
    return result;
}

double evaluate(envs::Env& env, const Policy& policy, std::size_t episodes, Rng& rng) {
    if (episodes == 0) throw ConfigError("evaluate: need at least one episode");
    std::size_t wins = 0;
    for (std::size_t e = 0; e < episodes; ++e) {
        auto [state, goal] = env.reset(rng);
        bool done = false;
        bool success = false;
        while (!done) {
            auto step = env.step(policy(state, goal));
            success = success || step.info.success;
            done = step.done;
            state = std::move(step.next_state);
        }
        wins += success ? 1 : 0;
    }
    return static_cast<double>(wins) / static_cast<double>(episodes);
}

double evaluate(envs::Env& env, const rbf::RbfQNet& net, std::size_t episodes, Rng& rng) {
    const Policy greedy = [&net](std::span<const double> s, std::span<const double> g) {
        return rbf::greedy_action(net, observation(s, g)).action;
    };
    return evaluate(env, greedy, episodes, rng);
}

} // namespace rbfdqn::agent
