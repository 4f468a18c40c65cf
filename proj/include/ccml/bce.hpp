#pragma once

#include "ccml/matrix.hpp"

#include <vector>

namespace ccml {

inline constexpr double kProbabilityClamp = 1e-7;

struct BceReport {
    std::vector<double> loss; // per sample, mean over classes
    Matrix grad_logits;       // d loss_i / d logit_ij = (p_ij - y_ij) / V
};

// Binary cross-entropy of sigmoid probabilities against binary labels.
// Probabilities are clamped to [1e-7, 1 - 1e-7] before taking logs.
BceReport bce(const Matrix& probabilities, const Matrix& labels);

} // namespace ccml
