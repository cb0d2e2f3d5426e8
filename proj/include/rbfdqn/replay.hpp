#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rbfdqn/rng.hpp"

namespace rbfdqn::replay {

struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;
    std::vector<double> goal;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

// Binary tree over a power-of-two number of leaves; every internal node holds
// the sum of its children. Node 0 is the root, leaf i lives at capacity - 1 + i.
class SumTree {
public:
    // Capacity is rounded up to a power of two (at least 1).
    explicit SumTree(std::size_t min_leaves);

    std::size_t capacity() const { return capacity_; }
    double total() const { return nodes_[0]; }
    double leaf(std::size_t i) const { return nodes_[capacity_ - 1 + i]; }
    std::span<const double> nodes() const { return nodes_; }

    // Sets leaf i to a nonnegative value and repairs the path to the root.
    void set(std::size_t i, double value);

    // Leaf whose cumulative range contains `mass`; mass is clamped to [0, total).
    // Only leaves with positive value are ever returned while total() > 0.
    std::size_t find(double mass) const;

    // Worst |node - (left + right)| / max(|node|, tiny) over internal nodes.
    double max_relative_inconsistency() const;

private:
    std::size_t capacity_;
    std::vector<double> nodes_;
};

struct PerConfig {
    double alpha = 0.6;
    double epsilon_priority = 0.01;
    double is_beta_start = 0.4;
    double is_beta_end = 1.0;
    std::uint64_t anneal_steps = 150000;
    double max_priority_init = 1.0;
    bool use_is_weights = true;

    // Throws ConfigError when out of range.
    void validate() const;
    // Linear from is_beta_start at step 0 to is_beta_end at anneal_steps, constant after.
    double is_beta(std::uint64_t step) const;
};

struct TransitionDims {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t goal_dim = 0;

    bool operator==(const TransitionDims&) const = default;
};

// Slot plus the insertion serial it held when sampled, so a priority update
// that arrives after the slot was overwritten can be recognised as stale.
struct ReplayIndex {
    std::size_t slot = 0;
    std::uint64_t serial = 0;

    bool operator==(const ReplayIndex&) const = default;
};

struct PrioritizedBatch {
    std::vector<Transition> transitions;
    std::vector<ReplayIndex> indices;
    std::vector<double> is_weights;
};

struct UniformBatch {
    std::vector<Transition> transitions;
    std::vector<ReplayIndex> indices;
};

// Ring buffer of transitions with a sum-tree over p_i^alpha. The tree is kept
// up to date for every push, so uniform and prioritized sampling can be mixed.
// Not thread-safe: one owner at a time.
class ReplayBuffer {
public:
    ReplayBuffer(std::size_t capacity, TransitionDims dims, PerConfig per = {});

    // nullopt stores the transition at the current max priority.
    ReplayIndex push(Transition t, std::optional<double> priority = std::nullopt);

    // Stratified proportional sampling, P(i) = p_i^alpha / sum_k p_k^alpha.
    // IS weights (size * P(i))^-beta(step), normalized by the batch maximum;
    // all ones when use_is_weights is off.
    PrioritizedBatch sample_prioritized(std::size_t batch, std::uint64_t step, Rng& rng) const;
    UniformBatch sample_uniform(std::size_t batch, Rng& rng) const;

    // Priority (|delta| + eps)^alpha per index. Stale indices are counted and skipped.
    void update_priorities(std::span<const ReplayIndex> indices, std::span<const double> td_errors);

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return capacity_; }
    const TransitionDims& dims() const { return dims_; }
    const PerConfig& config() const { return per_; }
    const SumTree& tree() const { return tree_; }
    const Transition& at(std::size_t slot) const;
    // Raw (pre-exponent) max priority used for new transitions.
    double max_priority() const { return max_priority_; }
    std::uint64_t stale_updates() const { return stale_updates_; }
    std::uint64_t pushes() const { return next_serial_; }
    // Probability of drawing `slot` under prioritized sampling.
    double probability(std::size_t slot) const;

    // Binary dump with the checkpoint framing: magic, capacity, dims,
    // per-slot transitions and raw tree leaves.
    void dump(const std::filesystem::path& path) const;
    static ReplayBuffer load(const std::filesystem::path& path, PerConfig per = {});

private:
    void check_dims(const Transition& t) const;
    void check_nonempty() const;
    Transition& slot_ref(std::size_t slot);

    std::size_t capacity_;
    TransitionDims dims_;
    PerConfig per_;
    SumTree tree_;
    std::vector<Transition> storage_;
    std::vector<std::uint64_t> serials_;
    std::size_t cursor_ = 0;
    std::size_t size_ = 0;
    std::uint64_t next_serial_ = 0;
    double max_priority_;
    std::uint64_t stale_updates_ = 0;
};

} // namespace rbfdqn::replay
