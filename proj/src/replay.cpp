#include "rbfdqn/replay.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "rbfdqn/checkpoint.hpp"
#include "rbfdqn/errors.hpp"

namespace rbfdqn::replay {

namespace {

constexpr std::string_view kDumpTag = "replay";

} // namespace

void PerConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError(fmt::format("per_alpha must be in [0, 1], got {}", alpha));
    if (!(epsilon_priority > 0.0)) {
        throw ConfigError(fmt::format("per_epsilon must be positive, got {}", epsilon_priority));
    }
    if (!(is_beta_start >= 0.0 && is_beta_start <= is_beta_end && is_beta_end <= 1.0)) {
        throw ConfigError(fmt::format("need 0 <= per_beta_start ({}) <= per_beta_end ({}) <= 1", is_beta_start, is_beta_end));
    }
    if (anneal_steps == 0) throw ConfigError("per_anneal_steps must be positive");
    if (!(max_priority_init > 0.0)) {
        throw ConfigError(fmt::format("per_max_priority_init must be positive, got {}", max_priority_init));
    }
}

double PerConfig::is_beta(std::uint64_t step) const {
    if (step >= anneal_steps) return is_beta_end;
    const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
    return is_beta_start + frac * (is_beta_end - is_beta_start);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, TransitionDims dims, PerConfig per)
    : capacity_(capacity), dims_(dims), per_(per), tree_(capacity), max_priority_(per.max_priority_init) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
    per_.validate();
    serials_.reserve(std::min<std::size_t>(capacity, 1 << 16));
    storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::check_dims(const Transition& t) const {
    auto bad = [](const char* field, std::size_t got, std::size_t want) {
        return ShapeError(fmt::format("replay: {} has dimension {}, buffer expects {}", field, got, want));
    };
    if (t.state.size() != dims_.state_dim) throw bad("state", t.state.size(), dims_.state_dim);
    if (t.next_state.size() != dims_.state_dim) throw bad("next_state", t.next_state.size(), dims_.state_dim);
    if (t.action.size() != dims_.action_dim) throw bad("action", t.action.size(), dims_.action_dim);
    if (t.goal.size() != dims_.goal_dim) throw bad("goal", t.goal.size(), dims_.goal_dim);
}

void ReplayBuffer::check_nonempty() const {
    if (size_ == 0) throw StateError("replay: cannot sample from an empty buffer");
}

const Transition& ReplayBuffer::at(std::size_t slot) const {
    if (slot >= size_) throw StateError(fmt::format("replay: slot {} is not live (size {})", slot, size_));
    return storage_[slot];
}

Transition& ReplayBuffer::slot_ref(std::size_t slot) {
    if (slot == storage_.size()) {
        storage_.emplace_back();
        serials_.push_back(0);
    }
    return storage_[slot];
}

ReplayIndex ReplayBuffer::push(Transition t, std::optional<double> priority) {
    check_dims(t);
    double p = max_priority_;
    if (priority) {
        if (!(*priority >= 0.0) || !std::isfinite(*priority)) {
            throw NumericalError(fmt::format("replay: priority must be finite and nonnegative, got {}", *priority));
        }
        p = *priority;
        max_priority_ = std::max(max_priority_, p);
    }
    const std::size_t slot = cursor_;
    slot_ref(slot) = std::move(t);
    serials_[slot] = next_serial_;
    // Overwriting replaces the old leaf value in the same call, so no stale mass remains.
    tree_.set(slot, std::pow(p, per_.alpha));
    cursor_ = (cursor_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
    return {slot, next_serial_++};
}

double ReplayBuffer::probability(std::size_t slot) const {
    check_nonempty();
    return tree_.leaf(slot) / tree_.total();
}

PrioritizedBatch ReplayBuffer::sample_prioritized(std::size_t batch, std::uint64_t step, Rng& rng) const {
    check_nonempty();
    if (batch == 0) throw ConfigError("replay: batch size must be at least 1");
    const double total = tree_.total();
    if (!(total > 0.0)) throw StateError("replay: all priorities are zero");
    PrioritizedBatch out;
    out.transitions.reserve(batch);
    out.indices.reserve(batch);
    out.is_weights.reserve(batch);
    const double segment = total / static_cast<double>(batch);
    const double beta = per_.is_beta(step);
    double max_w = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
        const double mass = segment * (static_cast<double>(k) + rng.uniform());
        const std::size_t slot = std::min(tree_.find(mass), size_ - 1);
        out.transitions.push_back(storage_[slot]);
        out.indices.push_back({slot, serials_[slot]});
        double w = 1.0;
        if (per_.use_is_weights) {
            const double prob = tree_.leaf(slot) / total;
            w = std::pow(static_cast<double>(size_) * prob, -beta);
        }
        out.is_weights.push_back(w);
        max_w = std::max(max_w, w);
    }
    for (auto& w : out.is_weights) w /= max_w;
    return out;
}

UniformBatch ReplayBuffer::sample_uniform(std::size_t batch, Rng& rng) const {
    check_nonempty();
    if (batch == 0) throw ConfigError("replay: batch size must be at least 1");
    UniformBatch out;
    out.transitions.reserve(batch);
    out.indices.reserve(batch);
    for (std::size_t k = 0; k < batch; ++k) {
        const auto slot = static_cast<std::size_t>(rng.index(size_));
        out.transitions.push_back(storage_[slot]);
        out.indices.push_back({slot, serials_[slot]});
    }
    return out;
}

void ReplayBuffer::update_priorities(std::span<const ReplayIndex> indices, std::span<const double> td_errors) {
    if (indices.size() != td_errors.size()) {
        throw ShapeError(fmt::format("replay: {} indices but {} td errors", indices.size(), td_errors.size()));
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto& idx = indices[k];
        if (idx.slot >= size_ || serials_[idx.slot] != idx.serial) {
            ++stale_updates_;
            continue;
        }
        if (!std::isfinite(td_errors[k])) throw NumericalError("replay: non-finite td error in priority update");
        const double p = std::abs(td_errors[k]) + per_.epsilon_priority;
        max_priority_ = std::max(max_priority_, p);
        tree_.set(idx.slot, std::pow(p, per_.alpha));
    }
}

void ReplayBuffer::dump(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot open '{}' for writing", path.string()));
    io::BinaryWriter w(out);
    w.magic();
    w.str(kDumpTag);
    w.u64(capacity_);
    w.u64(dims_.state_dim);
    w.u64(dims_.action_dim);
    w.u64(dims_.goal_dim);
    w.u64(size_);
    w.u64(cursor_);
    w.u64(next_serial_);
    w.f64(max_priority_);
    for (std::size_t slot = 0; slot < size_; ++slot) {
        const auto& t = storage_[slot];
        w.u64(serials_[slot]);
        w.f64s(t.state);
        w.f64s(t.action);
        w.f64(t.reward);
        w.f64s(t.next_state);
        w.f64s(t.goal);
        w.u64(t.done ? 1 : 0);
        w.f64(tree_.leaf(slot));
    }
    w.u64(size_);
    if (!out) throw FormatError(fmt::format("write to '{}' failed", path.string()));
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& path, PerConfig per) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(fmt::format("cannot open '{}'", path.string()));
    io::BinaryReader r(in);
    r.magic();
    if (r.str() != kDumpTag) throw FormatError(fmt::format("'{}' is not a replay dump", path.string()));
    const auto capacity = r.u64();
    TransitionDims dims{r.u64(), r.u64(), r.u64()};
    ReplayBuffer buf(capacity, dims, per);
    const auto size = r.u64();
    if (size > capacity) throw FormatError("replay dump: size exceeds capacity");
    buf.cursor_ = r.u64();
    buf.next_serial_ = r.u64();
    buf.max_priority_ = r.f64();
    for (std::size_t slot = 0; slot < size; ++slot) {
        auto& t = buf.slot_ref(slot);
        buf.serials_[slot] = r.u64();
        t.state = r.f64s(dims.state_dim);
        t.action = r.f64s(dims.action_dim);
        t.reward = r.f64();
        t.next_state = r.f64s(dims.state_dim);
        t.goal = r.f64s(dims.goal_dim);
        t.done = r.u64() != 0;
        buf.tree_.set(slot, r.f64());
    }
    if (r.u64() != size) throw FormatError("replay dump: trailer count mismatch");
    buf.size_ = size;
    return buf;
}

} // namespace rbfdqn::replay
