#pragma once

// Hindsight goal relabeling. After an episode, transitions are copied with a
// goal taken from a state the agent actually reached (the final one, or states
// later in the trajectory), and their sparse reward is recomputed.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbfdqn/replay.hpp"
#include "rbfdqn/rng.hpp"

namespace rbfdqn::her {

using replay::Transition;

// phi: state -> achieved goal, plus the success radius.
struct GoalMapping {
    std::function<std::vector<double>(std::span<const double>)> phi;
    std::size_t goal_dim = 0;
    double tolerance = 1e-2;

    // phi(state), checked against goal_dim.
    std::vector<double> achieved(std::span<const double> state) const;
};

// Euclidean |achieved - goal| <= tolerance (boundary inclusive).
bool goal_reached(std::span<const double> achieved, std::span<const double> goal, double tolerance);

// goal_reached(phi(state), goal, tolerance). ShapeError on a goal of the wrong length.
bool is_success(std::span<const double> state, std::span<const double> goal, const GoalMapping& gm);

enum class StrategyKind { Final, Future, FinalAndFuture };

std::string to_string(StrategyKind k);
StrategyKind parse_strategy(std::string_view name);

struct HerStrategy {
    StrategyKind kind = StrategyKind::FinalAndFuture;
    std::size_t k = 4;
    // Future goals are drawn with replacement by default. Without replacement,
    // steps with fewer than k later states use all of them.
    bool with_replacement = true;

    void validate() const;
};

struct EpisodeTrajectory {
    std::vector<Transition> transitions;

    std::size_t size() const { return transitions.size(); }
    // StateError if empty, unchained, or a non-final transition is done.
    void validate() const;
};

// New transitions only; the input is not modified. Output order is by step t,
// and within a step the final-goal copy comes before the future copies.
std::vector<Transition> relabel(const EpisodeTrajectory& traj, const HerStrategy& strategy, const GoalMapping& gm,
                                Rng& rng);

// Canonical phi and tolerance for a registered environment id.
GoalMapping make_goal_mapping(std::string_view task_id);

} // namespace rbfdqn::her
