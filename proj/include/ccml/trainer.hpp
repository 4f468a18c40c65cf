#pragma once

#include "ccml/datagen.hpp"
#include "ccml/discrepancy.hpp"
#include "ccml/eval.hpp"
#include "ccml/flipping.hpp"
#include "ccml/model.hpp"
#include "ccml/swap.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ccml {

enum class TrainMode { baseline, ccml };

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct TrainSeeds {
    std::uint64_t data = 1; // mini-batch order
    std::uint64_t f = 2;    // network f init (the baseline's only network)
    std::uint64_t g = 3;    // network g init

    friend bool operator==(const TrainSeeds&, const TrainSeeds&) = default;
};

struct TrainConfig {
    TrainMode mode = TrainMode::ccml;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double learning_rate = 0.001;
    double lambda1 = 1.0; // consistency weight
    double lambda2 = 1.0; // disparity weight
    double alpha = 1.0;   // missing-label term
    double beta = 1.0;    // wrong-label term
    double gamma = 1.0;   // lasso weight inside the swapping loss
    double retain_fraction = 0.75;
    double flip_rate = 0.05;
    // Flipping runs from epoch ceil(flip_start_fraction * epochs) (0-based);
    // values above 1 disable it.
    double flip_start_fraction = 0.9;
    KernelSpec kernel = KernelSpec::median();
    TrainSeeds seeds;
    std::vector<std::size_t> hidden_layers = {128, 128};
    std::size_t tap_index = 0; // 0 selects the last hidden layer
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;

    std::vector<std::size_t> architecture(std::size_t n_features, std::size_t n_classes) const;
    std::size_t effective_tap_index() const;
    std::size_t flip_start_epoch() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Upper bound on the disparity term's magnitude: squared MMD with a kernel
// bounded by 1 never exceeds 2.
inline constexpr double kDisparityCap = 2.0;

nlohmann::json to_json(const TrainConfig& cfg);
// Overlays `j` on `base`; unknown keys are a ValidationError.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
    std::size_t epoch = 0;
    TrainMode mode = TrainMode::ccml;
    double train_loss_f = 0.0;
    std::optional<double> train_loss_g;
    std::optional<PrfScores> validation;
    std::size_t flips = 0;
    std::size_t excluded_events = 0;
    std::optional<double> excluded_noisy_fraction;
};

struct RunState {
    TrainMode mode = TrainMode::ccml;
    ModelParams params_f;
    std::optional<ModelParams> params_g;
    AdamState adam_f;
    std::optional<AdamState> adam_g;
    Matrix training_labels;
    std::size_t epochs_completed = 0;
    std::vector<FlipLog> flip_logs;
    std::vector<EpochRecord> history;
    // Dataset indices excluded by swap selection in the final epoch, one entry
    // per (network, sample) exclusion.
    std::vector<std::size_t> final_epoch_excluded;
};

// Per-batch view handed to TrainHooks::on_batch.
struct BatchTrace {
    std::size_t epoch = 0;
    std::size_t batch = 0;
    const std::vector<std::size_t>* sample_indices = nullptr;
    const SwapDecision* swap = nullptr;  // null in baseline mode
    const FlipLog* flip_log = nullptr;   // null when flipping is inactive
    const Matrix* bce_grad_f = nullptr;  // BCE part of dLoss_f/dlogits
    const Matrix* bce_grad_g = nullptr;  // null in baseline mode
    double loss_f = 0.0;
    double loss_g = 0.0;
};

struct TrainHooks {
    std::function<void(const BatchTrace&)> on_batch;
    std::function<void(const EpochRecord&)> on_epoch;
};

// Class probabilities of a trained run: the mean of both networks in CCML
// mode, the single network otherwise.
Matrix predict(const RunState& run, const Matrix& x);

RunState train_ccml(const Dataset& train, const TrainConfig& cfg, const Dataset* validation = nullptr,
                    const TrainHooks& hooks = {});
RunState train_baseline(const Dataset& train, const TrainConfig& cfg,
                        const Dataset* validation = nullptr, const TrainHooks& hooks = {});
// Dispatches on cfg.mode.
RunState train(const Dataset& train, const TrainConfig& cfg, const Dataset* validation = nullptr,
               const TrainHooks& hooks = {});

// Value and gradients of one network's batch objective
//   mean BCE over `selected` + lambda1 * L_C - lambda2 * min(L_D, cap)
// with the peer's outputs held fixed. Exposed for gradient checking.
struct CompositeLoss {
    double value = 0.0;
    double bce_term = 0.0;
    double consistency = 0.0;
    double disparity = 0.0;
    Matrix d_final;
    Matrix d_tap; // empty when lambda2 == 0
};

CompositeLoss composite_loss(const ForwardTrace& self, const ForwardTrace& peer, bool self_is_f,
                             const Matrix& labels, std::span<const std::size_t> selected,
                             const TrainConfig& cfg);

} // namespace ccml
