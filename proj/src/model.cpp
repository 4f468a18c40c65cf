#include "ccml/model.hpp"

#include "ccml/error.hpp"
#include "ccml/rng.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ccml {

namespace {

// out = a * w + bias (broadcast over rows)
Matrix affine(const Matrix& a, const Matrix& w, const std::vector<double>& bias) {
    const std::size_t n = a.rows(), k = a.cols(), m = w.cols();
    Matrix out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        double* o = out.data().data() + i * m;
        for (std::size_t c = 0; c < m; ++c) o[c] = bias[c];
        const double* ai = a.data().data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* wp = w.data().data() + p * m;
            for (std::size_t c = 0; c < m; ++c) o[c] += av * wp[c];
        }
    }
    return out;
}

// grad_w = a^T * dz, grad_b = column sums of dz
void accumulate_layer_grad(const Matrix& a, const Matrix& dz, Layer& g) {
    const std::size_t n = a.rows(), k = a.cols(), m = dz.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data().data() + i * k;
        const double* di = dz.data().data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* gw = g.weight.data().data() + p * m;
            for (std::size_t c = 0; c < m; ++c) gw[c] += av * di[c];
        }
        for (std::size_t c = 0; c < m; ++c) g.bias[c] += di[c];
    }
}

// dz * w^T
Matrix back_through_weights(const Matrix& dz, const Matrix& w) {
    const std::size_t n = dz.rows(), m = dz.cols(), k = w.rows();
    Matrix out(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* di = dz.data().data() + i * m;
        double* o = out.data().data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* wp = w.data().data() + p * m;
            double s = 0.0;
            for (std::size_t c = 0; c < m; ++c) s += di[c] * wp[c];
            o[p] = s;
        }
    }
    return out;
}

void write_le(std::ofstream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double read_le(std::ifstream& in, const std::string& path) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8))
        throw ParseError(path + ": truncated weight file");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    return std::bit_cast<double>(bits);
}

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
    return stem.string() + suffix;
}

} // namespace

std::string to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    }
    return "unknown";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    throw ValidationError("unknown activation '" + s + "'");
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<std::size_t> ModelParams::architecture() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().weight.rows());
    for (const auto& l : layers) w.push_back(l.weight.cols());
    return w;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

void ModelParams::validate() const {
    if (layers.size() < 2)
        throw ValidationError("model needs at least one hidden layer, got " +
                              std::to_string(layers.size()) + " layer(s)");
    if (tap_index < 1 || tap_index >= layers.size())
        throw ValidationError("tap_index must be in [1, " + std::to_string(layers.size() - 1) +
                              "], got " + std::to_string(tap_index));
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.weight.rows() == 0 || l.weight.cols() == 0)
            throw ValidationError("layer " + std::to_string(k + 1) + " has an empty weight matrix");
        if (l.bias.size() != l.weight.cols())
            throw ValidationError("layer " + std::to_string(k + 1) + " bias length mismatch");
        if (k > 0 && layers[k - 1].weight.cols() != l.weight.rows())
            throw ValidationError("layer " + std::to_string(k + 1) + " input width " +
                                  std::to_string(l.weight.rows()) + " does not match previous output " +
                                  std::to_string(layers[k - 1].weight.cols()));
    }
}

ModelParams init_model(const std::vector<std::size_t>& widths, std::size_t tap_index,
                       std::uint64_t seed) {
    if (widths.size() < 3)
        throw ValidationError("architecture needs input, at least one hidden and an output width");
    for (auto w : widths)
        if (w < 1) throw ValidationError("layer widths must be >= 1");

    Rng rng(seed);
    ModelParams p;
    p.tap_index = tap_index;
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const double bound = std::sqrt(6.0 / static_cast<double>(widths[k]));
        std::uniform_real_distribution<double> u(-bound, bound);
        Layer l{Matrix(widths[k], widths[k + 1]), std::vector<double>(widths[k + 1], 0.0)};
        for (double& w : l.weight.data()) w = u(rng);
        p.layers.push_back(std::move(l));
    }
    p.validate();
    return p;
}

ForwardTrace forward(const ModelParams& params, const Matrix& x) {
    if (x.cols() != params.input_width())
        throw ValidationError("forward: input has " + std::to_string(x.cols()) +
                              " columns, model expects " + std::to_string(params.input_width()));
    const std::size_t L = params.layers.size();
    if (params.tap_index < 1 || params.tap_index > L)
        throw ValidationError("forward: tap_index " + std::to_string(params.tap_index) +
                              " out of range for " + std::to_string(L) + " layer(s)");
    ForwardTrace t;
    t.activations.reserve(L + 1);
    t.pre_activations.reserve(L);
    t.activations.push_back(x);
    for (std::size_t k = 0; k < L; ++k) {
        const auto& layer = params.layers[k];
        Matrix z = affine(t.activations.back(), layer.weight, layer.bias);
        Matrix a = z;
        if (k + 1 < L)
            for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
        t.pre_activations.push_back(std::move(z));
        t.activations.push_back(std::move(a));
    }
    t.tap_logits = t.activations[params.tap_index];
    t.final_logits = t.activations.back();
    t.probabilities = t.final_logits;
    for (double& v : t.probabilities.data()) v = sigmoid(v);
    return t;
}

ParamGrads zero_grads(const ModelParams& params) {
    ParamGrads g;
    g.reserve(params.layers.size());
    for (const auto& l : params.layers)
        g.push_back({Matrix(l.weight.rows(), l.weight.cols()), std::vector<double>(l.bias.size(), 0.0)});
    return g;
}

ParamGrads backward(const ModelParams& params, const ForwardTrace& trace, const Matrix& d_final,
                    const Matrix& d_tap) {
    const std::size_t L = params.layers.size();
    const std::size_t n = trace.final_logits.rows();
    require_shape(d_final, n, params.output_width(), "backward: final-logit gradient");
    const bool has_tap = !d_tap.empty();
    if (has_tap) require_shape(d_tap, n, params.tap_width(), "backward: tap gradient");

    ParamGrads grads = zero_grads(params);
    Matrix dz = d_final;
    for (std::size_t k = L; k-- > 0;) {
        accumulate_layer_grad(trace.activations[k], dz, grads[k]);
        if (k == 0) break;
        // dz currently belongs to layer k+1 (1-based); propagate to the output of layer k.
        Matrix da = back_through_weights(dz, params.layers[k].weight);
        if (has_tap && k == params.tap_index) {
            for (std::size_t i = 0; i < da.size(); ++i) da.data()[i] += d_tap.data()[i];
        }
        const Matrix& z = trace.pre_activations[k - 1];
        for (std::size_t i = 0; i < da.size(); ++i)
            if (!(z.data()[i] > 0.0)) da.data()[i] = 0.0;
        dz = std::move(da);
    }
    return grads;
}

AdamState AdamState::zeros_like(const ModelParams& params, double learning_rate) {
    AdamState s;
    s.first_moment = zero_grads(params);
    s.second_moment = zero_grads(params);
    s.learning_rate = learning_rate;
    return s;
}

void adam_update(ModelParams& params, const ParamGrads& grads, AdamState& state) {
    if (grads.size() != params.layers.size() || state.first_moment.size() != params.layers.size())
        throw ValidationError("adam: gradient/state layer count does not match model");
    for (std::size_t k = 0; k < grads.size(); ++k)
        if (!grads[k].weight.same_shape(params.layers[k].weight) ||
            grads[k].bias.size() != params.layers[k].bias.size())
            throw ValidationError("adam: gradient shape mismatch at layer " + std::to_string(k + 1));

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    };
    for (std::size_t k = 0; k < grads.size(); ++k) {
        update(params.layers[k].weight.data(), grads[k].weight.data(),
               state.first_moment[k].weight.data(), state.second_moment[k].weight.data());
        update(params.layers[k].bias, grads[k].bias, state.first_moment[k].bias,
               state.second_moment[k].bias);
    }
}

std::pair<ModelParams, AdamState> adam_step(ModelParams params, const ParamGrads& grads,
                                            AdamState state) {
    adam_update(params, grads, state);
    return {std::move(params), std::move(state)};
}

void save_checkpoint(const ModelParams& params, std::uint64_t step,
                     const std::filesystem::path& stem) {
    params.validate();
    const auto json_path = with_suffix(stem, ".json");
    const auto bin_path = with_suffix(stem, ".bin");
    if (json_path.has_parent_path()) std::filesystem::create_directories(json_path.parent_path());

    nlohmann::json manifest = {
        {"architecture", params.architecture()},
        {"tap_index", params.tap_index},
        {"activation", to_string(params.activation)},
        {"step", step},
        {"weights_file", bin_path.filename().string()},
        {"parameter_count", params.parameter_count()},
    };
    std::ofstream mf(json_path);
    if (!mf) throw IoError("cannot write " + json_path.string());
    mf << manifest.dump(2) << '\n';

    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot write " + bin_path.string());
    for (const auto& l : params.layers) {
        for (double w : l.weight.data()) write_le(bin, w);
        for (double b : l.bias) write_le(bin, b);
    }
    if (!bin) throw IoError("failed writing " + bin_path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    const auto json_path = with_suffix(stem, ".json");
    std::ifstream mf(json_path);
    if (!mf) throw IoError("cannot open " + json_path.string());
    Checkpoint ck;
    std::vector<std::size_t> arch;
    std::string weights_file;
    try {
        nlohmann::json manifest;
        mf >> manifest;
        arch = manifest.at("architecture").get<std::vector<std::size_t>>();
        ck.params.tap_index = manifest.at("tap_index").get<std::size_t>();
        ck.params.activation = activation_from_string(manifest.value("activation", "relu"));
        ck.step = manifest.at("step").get<std::uint64_t>();
        weights_file = manifest.value("weights_file", with_suffix(stem, ".bin").filename().string());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(json_path.string() + ": " + e.what());
    }
    if (arch.size() < 3) throw ValidationError(json_path.string() + ": architecture too short");

    const auto bin_path = json_path.parent_path() / weights_file;
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open " + bin_path.string());
    for (std::size_t k = 0; k + 1 < arch.size(); ++k) {
        Layer l{Matrix(arch[k], arch[k + 1]), std::vector<double>(arch[k + 1])};
        for (double& w : l.weight.data()) w = read_le(bin, bin_path.string());
        for (double& b : l.bias) b = read_le(bin, bin_path.string());
        ck.params.layers.push_back(std::move(l));
    }
    if (bin.peek() != std::char_traits<char>::eof())
        throw ParseError(bin_path.string() + ": trailing data after last layer");
    ck.params.validate();
    return ck;
}

} // namespace ccml
