#include "rbfdqn/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"

namespace rbfdqn::envs {

namespace {

EnvSpec box_spec(std::string id, std::size_t state_dim, std::size_t action_dim, std::size_t goal_dim,
                 const EnvParams& p) {
    EnvSpec s;
    s.task_id = std::move(id);
    s.state_dim = state_dim;
    s.action_dim = action_dim;
    s.action_low.assign(action_dim, -1.0);
    s.action_high.assign(action_dim, 1.0);
    s.goal_dim = goal_dim;
    s.horizon = p.horizon;
    s.dt = p.dt;
    return s;
}

her::GoalMapping slice_mapping(std::size_t offset, std::size_t dim, double tolerance) {
    return {[offset, dim](std::span<const double> s) {
                return std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(offset),
                                           s.begin() + static_cast<std::ptrdiff_t>(offset + dim));
            },
            dim, tolerance};
}

void check_params(const EnvParams& p) {
    if (p.horizon == 0) throw ConfigError("horizon must be positive");
    if (!(p.dt > 0.0)) throw ConfigError(fmt::format("dt must be positive, got {}", p.dt));
    if (!(p.goal_tolerance > 0.0)) throw ConfigError(fmt::format("goal_tolerance must be positive, got {}", p.goal_tolerance));
}

} // namespace

Env::Env(EnvSpec spec, her::GoalMapping mapping) : spec_(std::move(spec)), mapping_(std::move(mapping)) {}

std::vector<double> Env::clamp_action(std::span<const double> action) const {
    if (action.size() != spec_.action_dim) {
        throw ShapeError(fmt::format("{}: action has dimension {}, expected {}", spec_.task_id, action.size(),
                                     spec_.action_dim));
    }
    std::vector<double> a(action.begin(), action.end());
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (!std::isfinite(a[j])) throw NumericalError(fmt::format("{}: non-finite action", spec_.task_id));
        a[j] = std::clamp(a[j], spec_.action_low[j], spec_.action_high[j]);
    }
    return a;
}

ResetResult Env::reset(Rng& rng) {
    auto r = sample_initial(rng);
    state_ = r.state;
    goal_ = r.goal;
    steps_ = 0;
    done_ = false;
    started_ = true;
    return r;
}

StepResult Env::step(std::span<const double> action) {
    if (!started_) throw StateError(fmt::format("{}: step before reset", spec_.task_id));
    if (done_) throw StateError(fmt::format("{}: step after episode end, call reset", spec_.task_id));
    const auto a = clamp_action(action);
    StepResult r;
    r.next_state = integrate(state_, a);
    ++steps_;
    r.info.step = steps_;
    r.info.success = her::is_success(r.next_state, goal_, mapping_);
    r.reward = r.info.success ? 1.0 : 0.0;
    r.info.truncated = !r.info.success && steps_ >= spec_.horizon;
    r.done = r.info.success || r.info.truncated;
    state_ = r.next_state;
    done_ = r.done;
    return r;
}

void Env::set_state(std::span<const double> state) {
    if (!started_ || done_) throw StateError(fmt::format("{}: set_state needs a running episode", spec_.task_id));
    if (state.size() != spec_.state_dim) {
        throw ShapeError(fmt::format("{}: state has dimension {}, expected {}", spec_.task_id, state.size(), spec_.state_dim));
    }
    state_.assign(state.begin(), state.end());
}

// --- PointReach ----------------------------------------------------------

PointReach::PointReach(std::size_t dim, const EnvParams& params)
    : Env(box_spec(fmt::format("point_reach_{}d", dim), dim, dim, dim, params),
          slice_mapping(0, dim, params.goal_tolerance)) {
    check_params(params);
    if (dim != 2 && dim != 3) throw ConfigError(fmt::format("point_reach supports 2 or 3 dimensions, got {}", dim));
}

ResetResult PointReach::sample_initial(Rng& rng) {
    const auto d = spec().state_dim;
    ResetResult r{std::vector<double>(d, 0.0), std::vector<double>(d)};
    for (auto& g : r.goal) g = rng.uniform(-1.0, 1.0);
    return r;
}

std::vector<double> PointReach::integrate(std::span<const double> state, std::span<const double> action) const {
    std::vector<double> next(state.begin(), state.end());
    for (std::size_t j = 0; j < next.size(); ++j) next[j] = std::clamp(next[j] + spec().dt * action[j], -1.0, 1.0);
    return next;
}

// --- PlanarArmReach --------------------------------------------------------

std::vector<double> PlanarArmReach::forward_kinematics(std::span<const double> q) {
    double angle = 0.0;
    double x = 0.0;
    double y = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        angle += q[i];
        x += kLinks[i] * std::cos(angle);
        y += kLinks[i] * std::sin(angle);
    }
    return {x, y};
}

PlanarArmReach::PlanarArmReach(const EnvParams& params)
    : Env(box_spec("planar_arm_reach", 5, 3, 2, params),
          her::GoalMapping{[](std::span<const double> s) { return forward_kinematics(s.first(3)); }, 2,
                           params.goal_tolerance}) {
    check_params(params);
}

ResetResult PlanarArmReach::sample_initial(Rng& rng) {
    ResetResult r;
    r.state = {0.0, 0.0, 0.0, 0.0, 0.0};
    const auto tip = forward_kinematics(std::span<const double>(r.state).first(3));
    r.state[3] = tip[0];
    r.state[4] = tip[1];
    // Goals come from random joint configurations so they are always reachable.
    std::vector<double> q(3);
    for (auto& v : q) v = rng.uniform(-0.5 * std::numbers::pi, 0.5 * std::numbers::pi);
    r.goal = forward_kinematics(q);
    return r;
}

std::vector<double> PlanarArmReach::integrate(std::span<const double> state, std::span<const double> action) const {
    std::vector<double> next(5);
    for (std::size_t i = 0; i < 3; ++i) {
        next[i] = std::clamp(state[i] + spec().dt * action[i], -std::numbers::pi, std::numbers::pi);
    }
    const auto tip = forward_kinematics(std::span<const double>(next).first(3));
    next[3] = tip[0];
    next[4] = tip[1];
    return next;
}

// --- LidAttractor -------------------------------------------------------------

LidAttractor::LidAttractor(const EnvParams& params)
    : Env(box_spec("lid_attractor", 2, 1, 1, params), slice_mapping(0, 1, params.goal_tolerance)),
      tip_angle_(params.lid_tip_angle_deg * std::numbers::pi / 180.0), gravity_(params.lid_gravity) {
    check_params(params);
    if (!(tip_angle_ > 0.0 && tip_angle_ < kMaxAngle)) {
        throw ConfigError(fmt::format("lid_tip_angle_deg must be in (0, 90), got {}", params.lid_tip_angle_deg));
    }
    if (!(gravity_ > 0.0)) throw ConfigError(fmt::format("lid_gravity must be positive, got {}", gravity_));
}

ResetResult LidAttractor::sample_initial(Rng&) {
    return {{kMaxAngle, 0.0}, {0.0}};
}

std::vector<double> LidAttractor::integrate(std::span<const double> state, std::span<const double> action) const {
    const double angle = state[0];
    const double velocity = state[1];
    const bool falling = angle > tip_angle_ || velocity < -kStickVelocity;
    double accel = kTorqueGain * action[0] - kDamping * velocity;
    if (falling) accel -= gravity_;
    double next_velocity = velocity + spec().dt * accel;
    double next_angle = angle + spec().dt * next_velocity;
    if (next_angle <= 0.0) {
        next_angle = 0.0;
        next_velocity = 0.0;
    } else if (next_angle >= kMaxAngle) {
        next_angle = kMaxAngle;
        next_velocity = 0.0;
    }
    return {next_angle, next_velocity};
}

// --- GripDrawer ---------------------------------------------------------------

GripDrawer::GripDrawer(const EnvParams& params)
    : Env(box_spec("grip_drawer", 2, 2, 1, params), slice_mapping(0, 1, params.goal_tolerance)),
      release_threshold_(params.drawer_release_threshold) {
    check_params(params);
}

ResetResult GripDrawer::sample_initial(Rng& rng) {
    return {{0.0, 1.0}, {rng.uniform(kGoalMin, kMaxExtension)}};
}

std::vector<double> GripDrawer::integrate(std::span<const double> state, std::span<const double> action) const {
    double extension = state[0];
    double grip = state[1];
    if (grip > 0.5 && action[1] > release_threshold_) grip = 0.0;
    if (grip > 0.5) extension = std::clamp(extension + spec().dt * kPullSpeed * action[0], 0.0, kMaxExtension);
    return {extension, grip};
}

// --- registry -------------------------------------------------------------------

const std::vector<std::string>& task_ids() {
    static const std::vector<std::string> ids{"point_reach_2d", "point_reach_3d", "planar_arm_reach", "lid_attractor",
                                              "grip_drawer"};
    return ids;
}

std::unique_ptr<Env> make_env(std::string_view task_id, const EnvParams& params) {
    if (task_id == "point_reach_2d") return std::make_unique<PointReach>(2, params);
    if (task_id == "point_reach_3d") return std::make_unique<PointReach>(3, params);
    if (task_id == "planar_arm_reach") return std::make_unique<PlanarArmReach>(params);
    if (task_id == "lid_attractor") return std::make_unique<LidAttractor>(params);
    if (task_id == "grip_drawer") return std::make_unique<GripDrawer>(params);
    throw ConfigError(fmt::format("unknown task '{}' (valid: {})", task_id, fmt::join(task_ids(), ", ")));
}

std::vector<double> reach_controller(std::span<const double> state, std::span<const double> goal, double gain,
                                     std::span<const double> low, std::span<const double> high) {
    std::vector<double> a(goal.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = std::clamp(gain * (goal[j] - state[j]), low[j], high[j]);
    return a;
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows) {
    const std::size_t ns = rows.empty() ? 0 : rows.front().state.size();
    const std::size_t na = rows.empty() ? 0 : rows.front().action.size();
    out << "step";
    for (std::size_t i = 0; i < ns; ++i) out << ",s" << i;
    for (std::size_t i = 0; i < na; ++i) out << ",a" << i;
    out << ",reward,done\n";
    for (const auto& r : rows) {
        out << r.step;
        for (double v : r.state) out << ',' << fmt::format("{}", v);
        for (double v : r.action) out << ',' << fmt::format("{}", v);
        out << ',' << fmt::format("{}", r.reward) << ',' << (r.done ? 1 : 0) << '\n';
    }
}

} // namespace rbfdqn::envs
