#pragma once

#include "ccml/matrix.hpp"

namespace ccml {

// Gaussian RBF kernel k(x,y) = exp(-|x-y|^2 / (2 sigma^2)).
struct KernelSpec {
    enum class Bandwidth { fixed, median };

    Bandwidth policy = Bandwidth::median;
    double sigma = 1.0; // used when policy == fixed

    static KernelSpec fixed(double sigma) { return {Bandwidth::fixed, sigma}; }
    static KernelSpec median() { return {Bandwidth::median, 1.0}; }

    void validate() const;

    friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

inline constexpr double kMinBandwidth = 1e-6;

struct MmdResult {
    double value = 0.0; // biased squared-MMD estimate, >= 0
    Matrix grad_p;      // d value / d S_P
    Matrix grad_q;      // d value / d S_Q
    double sigma = 0.0; // bandwidth actually used
};

// Median of all pairwise Euclidean distances among the rows of [p; q],
// floored at kMinBandwidth.
double median_bandwidth(const Matrix& p, const Matrix& q);

// (1/m^2) [sum k(P,P) - 2 sum k(P,Q) + sum k(Q,Q)] over equal-size sample
// sets. The bandwidth is a constant for the gradients, even when it comes
// from the median heuristic. The value is bitwise symmetric in (P, Q) and
// exactly zero for identical inputs.
MmdResult mmd(const Matrix& p, const Matrix& q, const KernelSpec& kernel);

// MMD between the two networks' tap features; maximized during training.
inline MmdResult disparity_loss(const Matrix& f_tap, const Matrix& g_tap, const KernelSpec& kernel) {
    return mmd(f_tap, g_tap, kernel);
}

// MMD between the two networks' final logits; minimized during training.
inline MmdResult consistency_loss(const Matrix& f_logits, const Matrix& g_logits,
                                  const KernelSpec& kernel) {
    return mmd(f_logits, g_logits, kernel);
}

} // namespace ccml
