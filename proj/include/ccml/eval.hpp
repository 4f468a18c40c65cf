#pragma once

#include "ccml/datagen.hpp"
#include "ccml/flipping.hpp"
#include "ccml/matrix.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ccml {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

// Rates use the 0/0 -> 0 convention; F1 = 2PR/(P+R), 0 when P+R = 0.
struct PrfScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    ConfusionCounts counts;
};

PrfScores scores_from_counts(const ConfusionCounts& c);

// TP/FP/FN pooled over every cell.
PrfScores micro_metrics(const Matrix& pred, const Matrix& truth);

struct PerClassScores {
    std::vector<PrfScores> classes;
    std::vector<std::size_t> support; // positives in truth
};

PerClassScores per_class_metrics(const Matrix& pred, const Matrix& truth);
std::vector<double> per_class_f1(const Matrix& pred, const Matrix& truth);

Matrix threshold_predictions(const Matrix& probabilities, double threshold = kDecisionThreshold);

// Elementwise mean; the inference rule for a trained pair.
Matrix average_probabilities(const Matrix& a, const Matrix& b);

struct DetectionReport {
    double base_rate = 0.0;               // fraction of samples carrying >= 1 injected flip
    std::size_t excluded_events = 0;      // exclusions counted with multiplicity
    std::size_t excluded_noisy_events = 0;
    std::optional<double> excluded_noisy_fraction;
    std::optional<double> enrichment;     // excluded_noisy_fraction / base_rate
    std::size_t flips = 0;
    std::size_t correct_flips = 0;        // flips whose new value equals the clean label
    std::size_t noisy_cells = 0;
    std::optional<double> flip_precision; // null with zero flips
    std::optional<double> flip_recall;    // distinct noisy cells corrected / noisy cells
};

// `excluded` lists sample indices (into ds) dropped by swap selection, one
// entry per exclusion event. Requires ds.noise_mask and ds.y_clean.
DetectionReport noise_detection_metrics(std::span<const std::size_t> excluded,
                                        const std::vector<FlipLog>& flip_logs, const Dataset& ds);

struct MetricsReport {
    PrfScores micro;
    PerClassScores per_class;
    std::optional<DetectionReport> detection;
};

MetricsReport evaluate_predictions(const Matrix& pred, const Matrix& truth);

nlohmann::json to_json(const PrfScores& s);
nlohmann::json to_json(const DetectionReport& d);
nlohmann::json to_json(const MetricsReport& r, const std::vector<std::string>& class_names);

// `id,p_0..p_{V-1},yhat_0..yhat_{V-1}`; probabilities in shortest round-trip form.
void save_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const Matrix& probabilities, double threshold = kDecisionThreshold);

struct Predictions {
    std::vector<std::string> ids;
    Matrix probabilities;
    Matrix labels;
};

Predictions load_predictions(const std::filesystem::path& path);

} // namespace ccml
