#include "ccml/flipping.hpp"

#include "ccml/error.hpp"

#include <algorithm>
#include <cmath>

namespace ccml {

std::string to_string(FlipDirection d) {
    return d == FlipDirection::zero_to_one ? "0to1" : "1to0";
}

std::vector<FlipCandidate> select_candidates(const Matrix& probs_f, const Matrix& probs_g,
                                             const Matrix& labels, const Matrix& scores_f,
                                             const Matrix& scores_g,
                                             std::span<const std::size_t> sample_ids,
                                             double threshold) {
    const std::size_t n = labels.rows(), V = labels.cols();
    require_shape(probs_f, n, V, "select_candidates probs_f");
    require_shape(probs_g, n, V, "select_candidates probs_g");
    require_shape(scores_f, n, V, "select_candidates scores_f");
    require_shape(scores_g, n, V, "select_candidates scores_g");
    require_binary(labels, "select_candidates labels");
    if (!sample_ids.empty() && sample_ids.size() != n)
        throw ValidationError("select_candidates: " + std::to_string(sample_ids.size()) +
                              " sample ids for " + std::to_string(n) + " rows");

    std::vector<FlipCandidate> out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < V; ++j) {
            const double pred_f = probs_f(i, j) >= threshold ? 1.0 : 0.0;
            const double pred_g = probs_g(i, j) >= threshold ? 1.0 : 0.0;
            if (pred_f != pred_g || pred_f == labels(i, j)) continue;
            FlipCandidate c;
            c.row = i;
            c.sample_id = sample_ids.empty() ? i : sample_ids[i];
            c.cls = j;
            c.score = scores_f(i, j) + scores_g(i, j);
            c.direction = labels(i, j) == 0.0 ? FlipDirection::zero_to_one : FlipDirection::one_to_zero;
            out.push_back(c);
        }
    }
    std::sort(out.begin(), out.end(), [](const FlipCandidate& a, const FlipCandidate& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.sample_id != b.sample_id) return a.sample_id < b.sample_id;
        return a.cls < b.cls;
    });
    return out;
}

std::size_t fraction_count(double fraction, std::size_t n) {
    const double raw = fraction * static_cast<double>(n);
    const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::min(k, n);
}

std::pair<Matrix, FlipLog> flip(const Matrix& labels, const std::vector<FlipCandidate>& candidates,
                                double flip_rate) {
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0))
        throw ValidationError("flip_rate must be in [0,1], got " + std::to_string(flip_rate));
    Matrix out = labels;
    FlipLog log;
    log.candidates = candidates.size();
    log.budget = fraction_count(flip_rate, candidates.size());
    for (std::size_t k = 0; k < log.budget; ++k) {
        const auto& c = candidates[k];
        if (c.row >= out.rows() || c.cls >= out.cols())
            throw ValidationError("flip: candidate (" + std::to_string(c.row) + "," +
                                  std::to_string(c.cls) + ") outside label matrix " + shape_str(out));
        out(c.row, c.cls) = 1.0 - out(c.row, c.cls);
        log.flipped.push_back({c.sample_id, c.cls, c.direction, c.score});
    }
    return {std::move(out), std::move(log)};
}

RecomputedLosses recompute_after_flip(const Matrix& probs_f, const Matrix& probs_g,
                                      const Matrix& labels, double alpha, double beta) {
    return {bce(probs_f, labels), bce(probs_g, labels), lasso(probs_f, labels, alpha, beta),
            lasso(probs_g, labels, alpha, beta)};
}

} // namespace ccml
