#pragma once

#include "ccml/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace ccml {

enum class Activation { relu };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One affine layer: out = in * weight + bias, weight is fan_in x fan_out.
struct Layer {
    Matrix weight;
    std::vector<double> bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

// Feed-forward classifier. Hidden layers use `activation`; the last layer is
// linear and produces one logit per class. `tap_index` (1-based, < layer
// count) selects the hidden layer whose post-activation output is exposed as
// the tap features.
struct ModelParams {
    std::vector<Layer> layers;
    std::size_t tap_index = 1;
    Activation activation = Activation::relu;

    std::vector<std::size_t> architecture() const;
    std::size_t input_width() const { return layers.front().weight.rows(); }
    std::size_t output_width() const { return layers.back().weight.cols(); }
    std::size_t tap_width() const { return layers[tap_index - 1].weight.cols(); }
    std::size_t parameter_count() const;

    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Gradients share the layer layout of the parameters they belong to.
using ParamGrads = std::vector<Layer>;

struct ForwardTrace {
    Matrix tap_logits;    // batch x tap_width
    Matrix final_logits;  // batch x V
    Matrix probabilities; // sigmoid(final_logits)
    // activations[0] is the input; activations[k] is the output of layer k.
    std::vector<Matrix> activations;
    std::vector<Matrix> pre_activations; // pre_activations[k-1] feeds activations[k]
};

struct AdamState {
    ParamGrads first_moment;
    ParamGrads second_moment;
    std::uint64_t step = 0;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState zeros_like(const ModelParams& params, double learning_rate = 0.001);
};

// widths = {input, hidden..., output}. Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases.
ModelParams init_model(const std::vector<std::size_t>& widths, std::size_t tap_index,
                       std::uint64_t seed);

ForwardTrace forward(const ModelParams& params, const Matrix& x);

// Reverse-mode pass. `d_final` is dLoss/d(final logits); `d_tap` is
// dLoss/d(tap features) and may be empty when no loss reads the tap.
ParamGrads backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& d_final,
                    const Matrix& d_tap = {});

ParamGrads zero_grads(const ModelParams& params);

// In-place bias-corrected Adam update.
void adam_update(ModelParams& params, const ParamGrads& grads, AdamState& state);

std::pair<ModelParams, AdamState> adam_step(ModelParams params, const ParamGrads& grads,
                                            AdamState state);

double sigmoid(double z);

// Checkpoint: `<stem>.json` manifest plus `<stem>.bin`, little-endian float64,
// layers in order, each weight row-major followed by its bias.
void save_checkpoint(const ModelParams& params, std::uint64_t step,
                     const std::filesystem::path& stem);

struct Checkpoint {
    ModelParams params;
    std::uint64_t step = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& stem);

} // namespace ccml
