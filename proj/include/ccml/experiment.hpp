#pragma once

#include "ccml/datagen.hpp"
#include "ccml/eval.hpp"
#include "ccml/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ccml {

// Git blob hash (SHA-1 over "blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::filesystem::path& path);

// Everything `train` writes into a run directory:
//   run.json, config.json, metrics.csv, flips.jsonl, excluded_final_epoch.txt,
//   model_f.{json,bin} [, model_g.{json,bin}], and, with a validation set,
//   predictions.csv + metrics.json.
struct RunInputs {
    std::filesystem::path train_stem;
    std::optional<std::filesystem::path> val_stem;
};

void write_run_outputs(const std::filesystem::path& dir, const RunState& run, const TrainConfig& cfg,
                       const Dataset& train, const Dataset* validation, const RunInputs& inputs);

std::string metrics_csv(const RunState& run);

// The inference model stored in a run directory.
RunState load_run_models(const std::filesystem::path& dir);

// Final-epoch swap exclusions and flip log of a run directory.
std::vector<std::size_t> load_excluded(const std::filesystem::path& dir);
std::vector<FlipLog> load_flip_logs(const std::filesystem::path& dir);

MetricsReport evaluate_run(const RunState& run, const Dataset& data);

struct ExperimentPlan {
    std::vector<int> noise_rates = {20, 30, 40, 50};
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    TrainConfig config;
    std::filesystem::path output_dir;

    void validate() const;
};

ExperimentPlan plan_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentPlan& plan);

// Seeds used by one (rate, seed) cell. Both modes share data order and the
// f-network seed.
struct CellSeeds {
    std::uint64_t noise = 0;
    TrainSeeds train;
};
CellSeeds cell_seeds(int rate, std::uint64_t seed);

struct CellResult {
    int noise_rate = 0;
    std::uint64_t seed = 0;
    TrainMode mode = TrainMode::baseline;
    std::optional<PrfScores> micro;
    std::optional<DetectionReport> detection;
    std::string error; // non-empty when the cell failed
};

struct ModeSummary {
    std::size_t n = 0;
    double precision_mean = 0.0, precision_std = 0.0;
    double recall_mean = 0.0, recall_std = 0.0;
    double f1_mean = 0.0, f1_std = 0.0;
    std::optional<double> enrichment_mean;
};

struct RateSummary {
    int noise_rate = 0;
    ModeSummary baseline;
    ModeSummary ccml;
};

struct ExperimentReport {
    std::vector<CellResult> cells;
    std::vector<RateSummary> rows;

    std::string csv() const;
    std::string text() const;
    std::string cells_csv() const;
};

ExperimentReport summarize(std::vector<CellResult> cells, const std::vector<int>& rates);

// Runs one cell: corrupt the clean training set, train, score on validation.
// When `cell_dir` is non-empty the noisy training set and the run directory
// are written below it.
CellResult run_cell(const Dataset& clean_train, const Dataset& validation, const TrainConfig& base,
                    int rate, std::uint64_t seed, TrainMode mode,
                    const std::filesystem::path& cell_dir = {});

// Cells run on up to `threads` worker threads; each is deterministic on its own.
ExperimentReport run_experiment(const ExperimentPlan& plan, const Dataset& clean_train,
                                const Dataset& validation, std::size_t threads = 1);

} // namespace ccml
