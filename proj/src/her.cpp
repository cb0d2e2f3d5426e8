#include "rbfdqn/her.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "rbfdqn/envs.hpp"
#include "rbfdqn/errors.hpp"

namespace rbfdqn::her {

std::vector<double> GoalMapping::achieved(std::span<const double> state) const {
    auto g = phi(state);
    if (g.size() != goal_dim) {
        throw ShapeError(fmt::format("goal mapping produced {} values, goal_dim is {}", g.size(), goal_dim));
    }
    return g;
}

bool goal_reached(std::span<const double> achieved, std::span<const double> goal, double tolerance) {
    if (achieved.size() != goal.size()) {
        throw ShapeError(fmt::format("goal has dimension {}, achieved goal has {}", goal.size(), achieved.size()));
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < goal.size(); ++i) sq += (achieved[i] - goal[i]) * (achieved[i] - goal[i]);
    return std::sqrt(sq) <= tolerance;
}

bool is_success(std::span<const double> state, std::span<const double> goal, const GoalMapping& gm) {
    if (goal.size() != gm.goal_dim) {
        throw ShapeError(fmt::format("goal has dimension {}, mapping expects {}", goal.size(), gm.goal_dim));
    }
    return goal_reached(gm.achieved(state), goal, gm.tolerance);
}

std::string to_string(StrategyKind k) {
    switch (k) {
    case StrategyKind::Final:
        return "final";
    case StrategyKind::Future:
        return "future";
    case StrategyKind::FinalAndFuture:
        return "final_future";
    }
    return "?";
}

StrategyKind parse_strategy(std::string_view name) {
    if (name == "final") return StrategyKind::Final;
    if (name == "future") return StrategyKind::Future;
    if (name == "final_future") return StrategyKind::FinalAndFuture;
    throw ConfigError(fmt::format("unknown HER strategy '{}' (valid: final, future, final_future)", name));
}

void HerStrategy::validate() const {
    if (kind != StrategyKind::Final && k == 0) throw ConfigError("her_k must be at least 1 for future strategies");
}

void EpisodeTrajectory::validate() const {
    if (transitions.empty()) throw StateError("her: empty trajectory");
    for (std::size_t t = 0; t + 1 < transitions.size(); ++t) {
        if (transitions[t].next_state != transitions[t + 1].state) {
            throw StateError(fmt::format("her: trajectory broken between steps {} and {}", t, t + 1));
        }
        if (transitions[t].done) throw StateError(fmt::format("her: step {} is done but not last", t));
    }
}

std::vector<Transition> relabel(const EpisodeTrajectory& traj, const HerStrategy& strategy, const GoalMapping& gm,
                                Rng& rng) {
    traj.validate();
    strategy.validate();
    const std::size_t T = traj.size();

    // phi of every next_state, computed once.
    std::vector<std::vector<double>> achieved;
    achieved.reserve(T);
    for (const auto& tr : traj.transitions) achieved.push_back(gm.achieved(tr.next_state));

    const bool use_final = strategy.kind != StrategyKind::Future;
    const bool use_future = strategy.kind != StrategyKind::Final;

    std::vector<Transition> out;
    out.reserve(T * ((use_final ? 1 : 0) + (use_future ? strategy.k : 0)));

    auto emit = [&](std::size_t t, std::size_t goal_step) {
        Transition copy = traj.transitions[t];
        copy.goal = achieved[goal_step];
        const bool hit = goal_reached(achieved[t], copy.goal, gm.tolerance);
        copy.reward = hit ? 1.0 : 0.0;
        copy.done = hit;
        out.push_back(std::move(copy));
    };

    std::vector<std::size_t> pool;
    for (std::size_t t = 0; t < T; ++t) {
        if (use_final) emit(t, T - 1);
        if (!use_future) continue;
        const std::size_t remaining = T - t;
        if (strategy.with_replacement) {
            for (std::size_t j = 0; j < strategy.k; ++j) emit(t, t + static_cast<std::size_t>(rng.index(remaining)));
        } else {
            // Partial Fisher-Yates over {t, ..., T-1}.
            pool.resize(remaining);
            std::iota(pool.begin(), pool.end(), t);
            const std::size_t draws = std::min(strategy.k, remaining);
            for (std::size_t j = 0; j < draws; ++j) {
                const auto pick = j + static_cast<std::size_t>(rng.index(remaining - j));
                std::swap(pool[j], pool[pick]);
                emit(t, pool[j]);
            }
        }
    }
    return out;
}

GoalMapping make_goal_mapping(std::string_view task_id) {
    return envs::make_env(task_id)->goal_mapping();
}

} // namespace rbfdqn::her
