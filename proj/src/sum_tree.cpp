#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"
#include "rbfdqn/replay.hpp"

namespace rbfdqn::replay {

SumTree::SumTree(std::size_t min_leaves)
    : capacity_(std::bit_ceil(std::max<std::size_t>(min_leaves, 1))), nodes_(2 * capacity_ - 1, 0.0) {}

void SumTree::set(std::size_t i, double value) {
    if (i >= capacity_) throw ShapeError(fmt::format("sum tree: leaf {} out of range (capacity {})", i, capacity_));
    if (!(value >= 0.0) || !std::isfinite(value)) {
        throw NumericalError(fmt::format("sum tree: priority must be finite and nonnegative, got {}", value));
    }
    std::size_t node = capacity_ - 1 + i;
    nodes_[node] = value;
    // Parents are recomputed from both children, not patched with a delta.
    while (node > 0) {
        node = (node - 1) / 2;
        nodes_[node] = nodes_[2 * node + 1] + nodes_[2 * node + 2];
    }
}

std::size_t SumTree::find(double mass) const {
    mass = std::clamp(mass, 0.0, total());
    std::size_t node = 0;
    while (node < capacity_ - 1) {
        const std::size_t left = 2 * node + 1;
        const std::size_t right = left + 1;
        if (mass < nodes_[left] || nodes_[right] <= 0.0) {
            node = left;
        } else {
            mass -= nodes_[left];
            node = right;
        }
    }
    // Rounding can leave us on an empty leaf when mass sits at the very top; step back.
    std::size_t leaf = node - (capacity_ - 1);
    while (leaf > 0 && nodes_[capacity_ - 1 + leaf] <= 0.0) --leaf;
    return leaf;
}

double SumTree::max_relative_inconsistency() const {
    double worst = 0.0;
    for (std::size_t node = 0; node + 1 < capacity_; ++node) {
        const double sum = nodes_[2 * node + 1] + nodes_[2 * node + 2];
        const double denom = std::max(std::abs(nodes_[node]), 1e-300);
        worst = std::max(worst, std::abs(nodes_[node] - sum) / denom);
    }
    return worst;
}

} // namespace rbfdqn::replay
