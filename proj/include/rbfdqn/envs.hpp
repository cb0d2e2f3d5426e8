#pragma once

// Goal-conditioned sparse-reward control tasks. Each task keeps its entire
// physical state in the state vector, so a (state, action) pair fully
// determines the next state and hindsight relabeling sees everything.
//
//   point_reach_2d / point_reach_3d   state = position x in [-1, 1]^d
//                                     action = velocity in [-1, 1]^d, x' = x + dt * a
//                                     phi(s) = x
//   planar_arm_reach                  state = (q1, q2, q3, ex, ey), links 0.5/0.3/0.2
//                                     action = joint velocities in [-1, 1]^3
//                                     phi(s) = forward kinematics of (q1, q2, q3)
//   lid_attractor                     state = (angle, angular velocity), angle in [0, 90 deg]
//                                     action = torque in [-1, 1]; above the tipping
//                                     angle, or while already falling, gravity pulls
//                                     the lid shut; goal is closed (angle 0)
//                                     phi(s) = angle
//   grip_drawer                       state = (extension, grip), grip in {0, 1}
//                                     action = (pull, release) in [-1, 1]^2; release above
//                                     the threshold drops the grip for the episode;
//                                     pull moves the drawer only while gripped
//                                     phi(s) = extension
//
// Reward is 1 exactly when |phi(s') - g| <= tolerance, which also ends the episode.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbfdqn/her.hpp"
#include "rbfdqn/rng.hpp"

namespace rbfdqn::envs {

struct EnvParams {
    std::size_t horizon = 200;
    double dt = 0.05;
    double goal_tolerance = 1e-2;
    double lid_tip_angle_deg = 60.0;
    double lid_gravity = 4.0;
    double drawer_release_threshold = 0.5;
};

struct EnvSpec {
    std::string task_id;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::vector<double> action_low;
    std::vector<double> action_high;
    std::size_t goal_dim = 0;
    std::size_t horizon = 200;
    double dt = 0.05;
};

struct ResetResult {
    std::vector<double> state;
    std::vector<double> goal;
};

struct StepInfo {
    bool success = false;
    bool truncated = false; // horizon reached without success
    std::size_t step = 0;   // steps taken so far, including this one
};

struct StepResult {
    std::vector<double> next_state;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

class Env {
public:
    Env(EnvSpec spec, her::GoalMapping mapping);
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }
    const her::GoalMapping& goal_mapping() const { return mapping_; }

    ResetResult reset(Rng& rng);
    // Clamps the action into the box, integrates one dt. StateError after done or before reset.
    StepResult step(std::span<const double> action);

    std::vector<double> achieved_goal(std::span<const double> state) const { return mapping_.achieved(state); }
    std::vector<double> clamp_action(std::span<const double> action) const;
    // Moves a running episode to an arbitrary state (tests and debugging).
    void set_state(std::span<const double> state);

    const std::vector<double>& state() const { return state_; }
    const std::vector<double>& goal() const { return goal_; }
    std::size_t steps() const { return steps_; }
    bool done() const { return done_; }

protected:
    virtual ResetResult sample_initial(Rng& rng) = 0;
    // action is already inside the box
    virtual std::vector<double> integrate(std::span<const double> state, std::span<const double> action) const = 0;

private:
    EnvSpec spec_;
    her::GoalMapping mapping_;
    std::vector<double> state_;
    std::vector<double> goal_;
    std::size_t steps_ = 0;
    bool done_ = true;
    bool started_ = false;
};

class PointReach final : public Env {
public:
    PointReach(std::size_t dim, const EnvParams& params = {});

protected:
    ResetResult sample_initial(Rng& rng) override;
    std::vector<double> integrate(std::span<const double> state, std::span<const double> action) const override;
};

class PlanarArmReach final : public Env {
public:
    static constexpr double kLinks[3] = {0.5, 0.3, 0.2};

    explicit PlanarArmReach(const EnvParams& params = {});

    // Effector position of joint angles q (3 values).
    static std::vector<double> forward_kinematics(std::span<const double> q);

protected:
    ResetResult sample_initial(Rng& rng) override;
    std::vector<double> integrate(std::span<const double> state, std::span<const double> action) const override;
};

class LidAttractor final : public Env {
public:
    static constexpr double kMaxAngle = 1.5707963267948966; // fully open, 90 deg
    static constexpr double kTorqueGain = 6.0;
    static constexpr double kDamping = 0.5;
    static constexpr double kStickVelocity = 0.05; // below this speed static friction holds

    explicit LidAttractor(const EnvParams& params = {});

    double tip_angle() const { return tip_angle_; }

protected:
    ResetResult sample_initial(Rng& rng) override;
    std::vector<double> integrate(std::span<const double> state, std::span<const double> action) const override;

private:
    double tip_angle_;
    double gravity_;
};

class GripDrawer final : public Env {
public:
    static constexpr double kMaxExtension = 0.5;
    static constexpr double kPullSpeed = 1.0;
    static constexpr double kGoalMin = 0.1;

    explicit GripDrawer(const EnvParams& params = {});

    double release_threshold() const { return release_threshold_; }

protected:
    ResetResult sample_initial(Rng& rng) override;
    std::vector<double> integrate(std::span<const double> state, std::span<const double> action) const override;

private:
    double release_threshold_;
};

const std::vector<std::string>& task_ids();

// ConfigError listing valid ids for an unknown task.
std::unique_ptr<Env> make_env(std::string_view task_id, const EnvParams& params = {});

// a = clamp(gain * (goal - x)) for point_reach tasks.
std::vector<double> reach_controller(std::span<const double> state, std::span<const double> goal, double gain,
                                     std::span<const double> low, std::span<const double> high);

struct TrajectoryRow {
    std::size_t step = 0;
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    bool done = false;
};

// Header: step,s0..s{n-1},a0..a{m-1},reward,done
void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRow> rows);

} // namespace rbfdqn::envs
