#include "ccml/swap.hpp"

#include "ccml/error.hpp"
#include "ccml/flipping.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace ccml {

namespace {

std::vector<std::size_t> complement(std::vector<std::size_t> selected, std::size_t n) {
    std::sort(selected.begin(), selected.end());
    std::vector<std::size_t> out;
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (k < selected.size() && selected[k] == i) ++k;
        else out.push_back(i);
    }
    return out;
}

} // namespace

std::vector<double> swapping_loss(std::span<const double> bce, std::span<const double> lasso_total,
                                  double gamma) {
    if (bce.size() != lasso_total.size())
        throw ValidationError("swapping_loss: " + std::to_string(bce.size()) + " BCE values vs " +
                              std::to_string(lasso_total.size()) + " lasso values");
    if (!(gamma >= 0.0)) throw ValidationError("swapping_loss: gamma must be >= 0");
    std::vector<double> out(bce.size());
    for (std::size_t i = 0; i < bce.size(); ++i) out[i] = bce[i] + gamma * lasso_total[i];
    return out;
}

std::vector<std::size_t> smallest_indices(std::span<const double> values, std::size_t r) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    idx.resize(std::min(r, idx.size()));
    return idx;
}

SwapDecision select_and_swap(std::span<const double> b_f, std::span<const double> b_g,
                             double retain_fraction) {
    if (b_f.empty()) throw ValidationError("select_and_swap: empty batch");
    if (b_f.size() != b_g.size())
        throw ValidationError("select_and_swap: loss vectors differ in length (" +
                              std::to_string(b_f.size()) + " vs " + std::to_string(b_g.size()) + ")");
    if (!(retain_fraction > 0.0 && retain_fraction <= 1.0))
        throw ValidationError("retain_fraction must be in (0,1], got " + std::to_string(retain_fraction));

    const std::size_t n = b_f.size();
    SwapDecision d;
    d.retained = std::max<std::size_t>(1, fraction_count(retain_fraction, n));
    d.selected_for_f = smallest_indices(b_g, d.retained);
    d.selected_for_g = smallest_indices(b_f, d.retained);
    d.excluded_for_f = complement(d.selected_for_f, n);
    d.excluded_for_g = complement(d.selected_for_g, n);
    return d;
}

} // namespace ccml
