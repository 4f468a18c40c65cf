#pragma once

#include "ccml/matrix.hpp"

#include <vector>

namespace ccml {

// Pairwise hinge for an assigned class c and an unassigned class c_hat:
// max(0, 2 (p_c_hat - p_c) + 1). Zero once p_c leads p_c_hat by 0.5.
double ranking_error(double p_assigned, double p_unassigned);

struct LassoReport {
    std::vector<double> missing_term; // per sample: sum over unassigned of sqrt(sum over assigned eps)
    std::vector<double> wrong_term;   // per sample: sum over assigned of sqrt(sum over unassigned eps)
    std::vector<double> total;        // alpha * missing + beta * wrong
    std::vector<bool> degenerate;     // all or none of the classes assigned
    // Per-cell evidence: for an assigned class sqrt(sum_c_hat eps[c][c_hat]),
    // for an unassigned class sqrt(sum_c eps[c][c_hat]).
    Matrix class_scores;
};

// eps[c][c_hat] = ranking_error(p_c, p_c_hat)^2 over assigned x unassigned pairs.
LassoReport lasso(const Matrix& probabilities, const Matrix& labels, double alpha, double beta);

} // namespace ccml
