#include "ccml/grouplasso.hpp"

#include "ccml/error.hpp"

#include <cmath>
#include <string>

namespace ccml {

double ranking_error(double p_assigned, double p_unassigned) {
    if (!(p_assigned >= 0.0 && p_assigned <= 1.0) || !(p_unassigned >= 0.0 && p_unassigned <= 1.0))
        throw ValidationError("ranking_error: probabilities must lie in [0,1], got " +
                              std::to_string(p_assigned) + ", " + std::to_string(p_unassigned));
    const double e = 2.0 * (p_unassigned - p_assigned) + 1.0;
    return e > 0.0 ? e : 0.0;
}

LassoReport lasso(const Matrix& probabilities, const Matrix& labels, double alpha, double beta) {
    require_shape(labels, probabilities.rows(), probabilities.cols(), "lasso labels");
    require_binary(labels, "lasso labels");
    if (!(alpha >= 0.0) || !(beta >= 0.0))
        throw ValidationError("lasso: alpha and beta must be >= 0");

    const std::size_t n = probabilities.rows();
    const std::size_t V = probabilities.cols();
    LassoReport r;
    r.missing_term.assign(n, 0.0);
    r.wrong_term.assign(n, 0.0);
    r.total.assign(n, 0.0);
    r.degenerate.assign(n, false);
    r.class_scores = Matrix(n, V);

    std::vector<std::size_t> assigned, unassigned;
    std::vector<double> row_sum, col_sum; // grouped squared errors
    for (std::size_t i = 0; i < n; ++i) {
        assigned.clear();
        unassigned.clear();
        for (std::size_t j = 0; j < V; ++j) (labels(i, j) == 1.0 ? assigned : unassigned).push_back(j);
        if (assigned.empty() || unassigned.empty()) {
            r.degenerate[i] = true;
            continue;
        }
        row_sum.assign(assigned.size(), 0.0);
        col_sum.assign(unassigned.size(), 0.0);
        for (std::size_t a = 0; a < assigned.size(); ++a) {
            for (std::size_t b = 0; b < unassigned.size(); ++b) {
                const double e = ranking_error(probabilities(i, assigned[a]),
                                               probabilities(i, unassigned[b]));
                row_sum[a] += e * e;
                col_sum[b] += e * e;
            }
        }
        for (std::size_t b = 0; b < unassigned.size(); ++b) {
            const double s = std::sqrt(col_sum[b]);
            r.missing_term[i] += s;
            r.class_scores(i, unassigned[b]) = s;
        }
        for (std::size_t a = 0; a < assigned.size(); ++a) {
            const double s = std::sqrt(row_sum[a]);
            r.wrong_term[i] += s;
            r.class_scores(i, assigned[a]) = s;
        }
        r.total[i] = alpha * r.missing_term[i] + beta * r.wrong_term[i];
    }
    return r;
}

} // namespace ccml
