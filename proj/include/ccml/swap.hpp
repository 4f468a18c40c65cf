#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ccml {

// B_i = bce_i + gamma * lasso_i
std::vector<double> swapping_loss(std::span<const double> bce, std::span<const double> lasso_total,
                                  double gamma);

struct SwapDecision {
    std::size_t retained = 0;                // R
    std::vector<std::size_t> selected_for_f; // R smallest B_g, ascending by B_g
    std::vector<std::size_t> selected_for_g; // R smallest B_f, ascending by B_f
    std::vector<std::size_t> excluded_for_f; // ascending index
    std::vector<std::size_t> excluded_for_g;
};

// Indices of the r smallest values, ordered by value then index.
std::vector<std::size_t> smallest_indices(std::span<const double> values, std::size_t r);

// Co-teaching exchange: each network trains on the samples its peer ranks as
// cleanest. R = ceil(retain_fraction * batch).
SwapDecision select_and_swap(std::span<const double> b_f, std::span<const double> b_g,
                             double retain_fraction = 0.75);

} // namespace ccml
