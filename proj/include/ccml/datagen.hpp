#pragma once

#include "ccml/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ccml {

// Feature matrix plus noisy training labels. `y_clean` and `noise_mask` are
// ground truth kept for evaluation only; the trainer never reads them.
struct Dataset {
    std::vector<std::string> ids;
    Matrix x;                             // M x d
    Matrix y;                             // M x V, possibly noisy
    std::optional<Matrix> y_clean;        // M x V
    std::vector<std::string> class_names; // V
    std::optional<Matrix> noise_mask;     // M x V, 1 where y != y_clean

    std::uint64_t seed = 0;                       // generation seed, for the manifest
    std::optional<int> noise_rate_percent;        // set by inject_noise

    std::size_t n_samples() const { return x.rows(); }
    std::size_t n_features() const { return x.cols(); }
    std::size_t n_classes() const { return y.cols(); }

    // Checks every structural invariant; throws ValidationError.
    void validate() const;

    // Rows of y_clean that carry at least one injected flip.
    std::vector<bool> noisy_samples() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct GenSpec {
    std::size_t n_samples = 1000;
    std::size_t n_features = 16;
    std::size_t n_classes = 8;
    std::uint64_t seed = 1;
    double margin = 0.1;            // min |score - threshold| for every class, in score std units
    double label_correlation = 0.2; // shared component of the class directions, in [0,1]
    // Samples are drawn from stream `stream` of the labeling model fixed by `seed`;
    // different streams give independent splits of the same task.
    std::uint64_t stream = 0;

    void validate() const;
};

Dataset generate(const GenSpec& spec);

// Replaces y with y_clean plus fresh noise: max(1, floor(n*M/100)) samples are
// chosen and max(1, floor(n*V/100)) of each one's label cells are toggled.
Dataset inject_noise(const Dataset& ds, int rate_percent, std::uint64_t seed);

// A dataset lives at `<stem>.csv` + `<stem>.manifest.json`. A trailing ".csv"
// on the stem is ignored.
void save(const Dataset& ds, const std::filesystem::path& stem);
Dataset load(const std::filesystem::path& stem);

std::filesystem::path csv_path(const std::filesystem::path& stem);
std::filesystem::path manifest_path(const std::filesystem::path& stem);

} // namespace ccml
