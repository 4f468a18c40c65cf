#pragma once

#include "ccml/bce.hpp"
#include "ccml/grouplasso.hpp"
#include "ccml/matrix.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ccml {

enum class FlipDirection { zero_to_one, one_to_zero };

std::string to_string(FlipDirection d); // "0to1" / "1to0"

struct FlipCandidate {
    std::size_t row = 0;       // row in the label matrix handed to select_candidates
    std::size_t sample_id = 0; // caller-provided id, defaults to row
    std::size_t cls = 0;
    double score = 0.0;        // class score from f plus class score from g
    FlipDirection direction = FlipDirection::zero_to_one;
};

struct FlipEvent {
    std::size_t sample_id = 0;
    std::size_t cls = 0;
    FlipDirection direction = FlipDirection::zero_to_one;
    double score = 0.0;
};

struct FlipLog {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    std::vector<FlipEvent> flipped;
    std::size_t budget = 0;     // ceil(flip_rate * candidates)
    std::size_t candidates = 0;
};

inline constexpr double kDecisionThreshold = 0.5;

// Cells where both networks' thresholded predictions agree with each other
// and disagree with the current label. Sorted by descending combined score,
// ties by ascending (sample_id, class).
std::vector<FlipCandidate> select_candidates(const Matrix& probs_f, const Matrix& probs_g,
                                             const Matrix& labels, const Matrix& scores_f,
                                             const Matrix& scores_g,
                                             std::span<const std::size_t> sample_ids = {},
                                             double threshold = kDecisionThreshold);

// ceil(fraction * n) with a guard against representation error in the product.
std::size_t fraction_count(double fraction, std::size_t n);

// Flips the top ceil(flip_rate * |candidates|) candidates.
std::pair<Matrix, FlipLog> flip(const Matrix& labels, const std::vector<FlipCandidate>& candidates,
                                double flip_rate = 0.05);

struct RecomputedLosses {
    BceReport bce_f, bce_g;
    LassoReport lasso_f, lasso_g;
};

RecomputedLosses recompute_after_flip(const Matrix& probs_f, const Matrix& probs_g,
                                      const Matrix& labels, double alpha, double beta);

} // namespace ccml
