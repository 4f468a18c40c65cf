#include "ccml/trainer.hpp"

#include "ccml/bce.hpp"
#include "ccml/error.hpp"
#include "ccml/grouplasso.hpp"
#include "ccml/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ccml {

namespace {

void require_finite(double v, const std::string& term, std::size_t epoch, std::size_t batch) {
    if (!std::isfinite(v))
        throw NumericError("non-finite " + term + " (" + std::to_string(v) + ") at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch));
}

void require_finite_outputs(const ForwardTrace& t, const std::string& net, std::size_t epoch, std::size_t batch) {
    for (double v : t.final_logits.data())
        if (!std::isfinite(v)) require_finite(v, "output logits of network " + net, epoch, batch);
}

// One network's objective given precomputed batch statistics.
CompositeLoss assemble_loss(const BceReport& bce_self, std::span<const std::size_t> selected,
                            const MmdResult* consistency, const MmdResult* disparity, bool self_is_f,
                            const TrainConfig& cfg) {
    const std::size_t n = bce_self.grad_logits.rows();
    const std::size_t V = bce_self.grad_logits.cols();
    CompositeLoss out;
    out.d_final = Matrix(n, V);

    // Sum in index order so the result does not depend on selection order.
    std::vector<std::size_t> rows(selected.begin(), selected.end());
    std::sort(rows.begin(), rows.end());
    const double inv_r = 1.0 / static_cast<double>(rows.size());
    double bce_sum = 0.0;
    for (std::size_t i : rows) {
        bce_sum += bce_self.loss[i];
        for (std::size_t j = 0; j < V; ++j) out.d_final(i, j) = bce_self.grad_logits(i, j) * inv_r;
    }
    out.bce_term = bce_sum * inv_r;
    out.value = out.bce_term;

    if (consistency && cfg.lambda1 > 0.0) {
        out.consistency = consistency->value;
        out.value += cfg.lambda1 * consistency->value;
        const Matrix& g = self_is_f ? consistency->grad_p : consistency->grad_q;
        for (std::size_t k = 0; k < g.size(); ++k) out.d_final.data()[k] += cfg.lambda1 * g.data()[k];
    }
    if (disparity && cfg.lambda2 > 0.0) {
        out.disparity = disparity->value;
        const Matrix& g = self_is_f ? disparity->grad_p : disparity->grad_q;
        out.d_tap = Matrix(g.rows(), g.cols());
        if (disparity->value < kDisparityCap) {
            out.value -= cfg.lambda2 * disparity->value;
            for (std::size_t k = 0; k < g.size(); ++k) out.d_tap.data()[k] = -cfg.lambda2 * g.data()[k];
        } else {
            out.value -= cfg.lambda2 * kDisparityCap;
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
    const auto order = permutation(n, rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

void check_inputs(const Dataset& train, const TrainConfig& cfg, const Dataset* validation) {
    cfg.validate();
    train.validate();
    if (validation) {
        validation->validate();
        if (validation->n_features() != train.n_features() ||
            validation->n_classes() != train.n_classes())
            throw ValidationError("validation set shape does not match training set");
    }
}

std::optional<PrfScores> validation_scores(const RunState& run, const Dataset* validation) {
    if (!validation) return std::nullopt;
    const Matrix& truth = validation->y_clean ? *validation->y_clean : validation->y;
    return micro_metrics(threshold_predictions(predict(run, validation->x)), truth);
}

AdamState make_adam(const ModelParams& p, const TrainConfig& cfg) {
    AdamState s = AdamState::zeros_like(p, cfg.learning_rate);
    s.beta1 = cfg.adam_beta1;
    s.beta2 = cfg.adam_beta2;
    s.epsilon = cfg.adam_epsilon;
    return s;
}

} // namespace

std::string to_string(TrainMode m) { return m == TrainMode::ccml ? "ccml" : "baseline"; }

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "ccml") return TrainMode::ccml;
    if (s == "baseline") return TrainMode::baseline;
    throw ValidationError("unknown mode '" + s + "' (expected baseline or ccml)");
}

void TrainConfig::validate() const {
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ValidationError(std::string(name) + " must be >= 0, got " + std::to_string(v));
    };
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    nonneg(learning_rate, "learning_rate");
    nonneg(lambda1, "lambda1");
    nonneg(lambda2, "lambda2");
    nonneg(alpha, "alpha");
    nonneg(beta, "beta");
    nonneg(gamma, "gamma");
    nonneg(flip_start_fraction, "flip_start_fraction");
    if (!(retain_fraction > 0.0 && retain_fraction <= 1.0))
        throw ValidationError("retain_fraction must be in (0,1], got " + std::to_string(retain_fraction));
    if (!(flip_rate >= 0.0 && flip_rate <= 1.0))
        throw ValidationError("flip_rate must be in [0,1], got " + std::to_string(flip_rate));
    kernel.validate();
    if (hidden_layers.empty()) throw ValidationError("hidden_layers must not be empty");
    for (auto w : hidden_layers)
        if (w < 1) throw ValidationError("hidden layer widths must be >= 1");
    if (tap_index > hidden_layers.size())
        throw ValidationError("tap_index " + std::to_string(tap_index) + " exceeds hidden layer count " +
                              std::to_string(hidden_layers.size()));
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ValidationError("adam betas must be in [0,1)");
    if (!(adam_epsilon > 0.0)) throw ValidationError("adam epsilon must be > 0");
}

std::vector<std::size_t> TrainConfig::architecture(std::size_t n_features, std::size_t n_classes) const {
    std::vector<std::size_t> widths{n_features};
    widths.insert(widths.end(), hidden_layers.begin(), hidden_layers.end());
    widths.push_back(n_classes);
    return widths;
}

std::size_t TrainConfig::effective_tap_index() const {
    return tap_index == 0 ? hidden_layers.size() : tap_index;
}

std::size_t TrainConfig::flip_start_epoch() const {
    if (flip_start_fraction > 1.0) return std::numeric_limits<std::size_t>::max();
    return fraction_count(flip_start_fraction, epochs);
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {
        {"mode", to_string(cfg.mode)},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"lambda1", cfg.lambda1},
        {"lambda2", cfg.lambda2},
        {"alpha", cfg.alpha},
        {"beta", cfg.beta},
        {"gamma", cfg.gamma},
        {"retain_fraction", cfg.retain_fraction},
        {"flip_rate", cfg.flip_rate},
        {"flip_start_fraction", cfg.flip_start_fraction},
        {"kernel",
         {{"bandwidth_policy", cfg.kernel.policy == KernelSpec::Bandwidth::median ? "median" : "fixed"},
          {"sigma", cfg.kernel.sigma}}},
        {"seeds", {{"data", cfg.seeds.data}, {"f", cfg.seeds.f}, {"g", cfg.seeds.g}}},
        {"hidden_layers", cfg.hidden_layers},
        {"tap_index", cfg.tap_index},
        {"adam", {{"beta1", cfg.adam_beta1}, {"beta2", cfg.adam_beta2}, {"epsilon", cfg.adam_epsilon}}},
    };
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig cfg) {
    if (!j.is_object()) throw ValidationError("train config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "mode") cfg.mode = train_mode_from_string(v.get<std::string>());
            else if (key == "epochs") cfg.epochs = v.get<std::size_t>();
            else if (key == "batch_size") cfg.batch_size = v.get<std::size_t>();
            else if (key == "learning_rate") cfg.learning_rate = v.get<double>();
            else if (key == "lambda1") cfg.lambda1 = v.get<double>();
            else if (key == "lambda2") cfg.lambda2 = v.get<double>();
            else if (key == "alpha") cfg.alpha = v.get<double>();
            else if (key == "beta") cfg.beta = v.get<double>();
            else if (key == "gamma") cfg.gamma = v.get<double>();
            else if (key == "retain_fraction") cfg.retain_fraction = v.get<double>();
            else if (key == "flip_rate") cfg.flip_rate = v.get<double>();
            else if (key == "flip_start_fraction") cfg.flip_start_fraction = v.get<double>();
            else if (key == "hidden_layers") cfg.hidden_layers = v.get<std::vector<std::size_t>>();
            else if (key == "tap_index") cfg.tap_index = v.get<std::size_t>();
            else if (key == "kernel") {
                for (const auto& [kk, kv] : v.items()) {
                    if (kk == "bandwidth_policy") {
                        auto p = kv.get<std::string>();
                        if (p == "median") cfg.kernel.policy = KernelSpec::Bandwidth::median;
                        else if (p == "fixed") cfg.kernel.policy = KernelSpec::Bandwidth::fixed;
                        else throw ValidationError("unknown bandwidth_policy '" + p + "'");
                    } else if (kk == "sigma") cfg.kernel.sigma = kv.get<double>();
                    else throw ValidationError("unknown kernel field '" + kk + "'");
                }
            } else if (key == "seeds") {
                for (const auto& [sk, sv] : v.items()) {
                    if (sk == "data") cfg.seeds.data = sv.get<std::uint64_t>();
                    else if (sk == "f") cfg.seeds.f = sv.get<std::uint64_t>();
                    else if (sk == "g") cfg.seeds.g = sv.get<std::uint64_t>();
                    else throw ValidationError("unknown seeds field '" + sk + "'");
                }
            } else if (key == "adam") {
                for (const auto& [ak, av] : v.items()) {
                    if (ak == "beta1") cfg.adam_beta1 = av.get<double>();
                    else if (ak == "beta2") cfg.adam_beta2 = av.get<double>();
                    else if (ak == "epsilon") cfg.adam_epsilon = av.get<double>();
                    else throw ValidationError("unknown adam field '" + ak + "'");
                }
            } else {
                throw ValidationError("unknown train config field '" + key + "'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad train config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

Matrix predict(const RunState& run, const Matrix& x) {
    const Matrix pf = forward(run.params_f, x).probabilities;
    if (run.mode == TrainMode::baseline || !run.params_g) return pf;
    return average_probabilities(pf, forward(*run.params_g, x).probabilities);
}

CompositeLoss composite_loss(const ForwardTrace& self, const ForwardTrace& peer, bool self_is_f,
                             const Matrix& labels, std::span<const std::size_t> selected,
                             const TrainConfig& cfg) {
    if (selected.empty()) throw ValidationError("composite_loss: no selected samples");
    const BceReport b = bce(self.probabilities, labels);
    const Matrix& fp = self_is_f ? self.final_logits : peer.final_logits;
    const Matrix& gp = self_is_f ? peer.final_logits : self.final_logits;
    const Matrix& ft = self_is_f ? self.tap_logits : peer.tap_logits;
    const Matrix& gt = self_is_f ? peer.tap_logits : self.tap_logits;
    std::optional<MmdResult> lc, ld;
    if (cfg.lambda1 > 0.0) lc = consistency_loss(fp, gp, cfg.kernel);
    if (cfg.lambda2 > 0.0) ld = disparity_loss(ft, gt, cfg.kernel);
    return assemble_loss(b, selected, lc ? &*lc : nullptr, ld ? &*ld : nullptr, self_is_f, cfg);
}

RunState train_ccml(const Dataset& train, const TrainConfig& cfg, const Dataset* validation,
                    const TrainHooks& hooks) {
    check_inputs(train, cfg, validation);
    if (cfg.mode != TrainMode::ccml) throw ValidationError("train_ccml called with mode=baseline");

    const auto arch = cfg.architecture(train.n_features(), train.n_classes());
    const std::size_t tap = cfg.effective_tap_index();
    RunState run;
    run.mode = TrainMode::ccml;
    run.params_f = init_model(arch, tap, cfg.seeds.f);
    run.params_g = init_model(arch, tap, cfg.seeds.g);
    run.adam_f = make_adam(run.params_f, cfg);
    run.adam_g = make_adam(*run.params_g, cfg);
    run.training_labels = train.y;

    const auto noisy = train.noisy_samples();
    const bool have_mask = train.noise_mask.has_value();
    const std::size_t flip_start = cfg.flip_start_epoch();
    Rng order_rng(cfg.seeds.data);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const bool flipping = cfg.flip_rate > 0.0 && epoch >= flip_start;
        const auto batches = make_batches(train.n_samples(), cfg.batch_size, order_rng);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mode = TrainMode::ccml;
        double loss_f_sum = 0.0, loss_g_sum = 0.0;
        std::size_t excluded_noisy = 0;
        std::vector<std::size_t> excluded_this_epoch;

        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            const Matrix xb = train.x.gather_rows(idx);
            Matrix yb = run.training_labels.gather_rows(idx);

            const ForwardTrace tf = forward(run.params_f, xb);
            const ForwardTrace tg = forward(*run.params_g, xb);
            require_finite_outputs(tf, "f", epoch, b);
            require_finite_outputs(tg, "g", epoch, b);
            BceReport bce_f = bce(tf.probabilities, yb);
            BceReport bce_g = bce(tg.probabilities, yb);
            LassoReport lasso_f = lasso(tf.probabilities, yb, cfg.alpha, cfg.beta);
            LassoReport lasso_g = lasso(tg.probabilities, yb, cfg.alpha, cfg.beta);

            std::optional<FlipLog> flip_log;
            if (flipping) {
                const auto candidates = select_candidates(tf.probabilities, tg.probabilities, yb,
                                                          lasso_f.class_scores, lasso_g.class_scores, idx);
                auto [flipped, log] = flip(yb, candidates, cfg.flip_rate);
                log.epoch = epoch;
                log.batch = b;
                if (!log.flipped.empty()) {
                    yb = std::move(flipped);
                    for (std::size_t r = 0; r < idx.size(); ++r)
                        for (std::size_t j = 0; j < yb.cols(); ++j)
                            run.training_labels(idx[r], j) = yb(r, j);
                    auto re = recompute_after_flip(tf.probabilities, tg.probabilities, yb, cfg.alpha,
                                                   cfg.beta);
                    bce_f = std::move(re.bce_f);
                    bce_g = std::move(re.bce_g);
                    lasso_f = std::move(re.lasso_f);
                    lasso_g = std::move(re.lasso_g);
                }
                rec.flips += log.flipped.size();
                flip_log = std::move(log);
            }

            const auto b_f = swapping_loss(bce_f.loss, lasso_f.total, cfg.gamma);
            const auto b_g = swapping_loss(bce_g.loss, lasso_g.total, cfg.gamma);
            const SwapDecision decision = select_and_swap(b_f, b_g, cfg.retain_fraction);

            std::optional<MmdResult> lc, ld;
            if (cfg.lambda1 > 0.0) lc = consistency_loss(tf.final_logits, tg.final_logits, cfg.kernel);
            if (cfg.lambda2 > 0.0) ld = disparity_loss(tf.tap_logits, tg.tap_logits, cfg.kernel);

            CompositeLoss loss_f = assemble_loss(bce_f, decision.selected_for_f, lc ? &*lc : nullptr,
                                                 ld ? &*ld : nullptr, true, cfg);
            CompositeLoss loss_g = assemble_loss(bce_g, decision.selected_for_g, lc ? &*lc : nullptr,
                                                 ld ? &*ld : nullptr, false, cfg);
            require_finite(loss_f.bce_term, "BCE loss of network f", epoch, b);
            require_finite(loss_g.bce_term, "BCE loss of network g", epoch, b);
            require_finite(loss_f.consistency, "consistency loss", epoch, b);
            require_finite(loss_f.disparity, "disparity loss", epoch, b);

            if (hooks.on_batch) {
                Matrix bce_part_f(idx.size(), train.n_classes()), bce_part_g = bce_part_f;
                const double inv_r = 1.0 / static_cast<double>(decision.retained);
                for (std::size_t i : decision.selected_for_f)
                    for (std::size_t j = 0; j < bce_part_f.cols(); ++j)
                        bce_part_f(i, j) = bce_f.grad_logits(i, j) * inv_r;
                for (std::size_t i : decision.selected_for_g)
                    for (std::size_t j = 0; j < bce_part_g.cols(); ++j)
                        bce_part_g(i, j) = bce_g.grad_logits(i, j) * inv_r;
                BatchTrace trace{epoch, b, &idx, &decision, flip_log ? &*flip_log : nullptr,
                                 &bce_part_f, &bce_part_g, loss_f.value, loss_g.value};
                hooks.on_batch(trace);
            }

            const ParamGrads grads_f = backward(run.params_f, tf, loss_f.d_final, loss_f.d_tap);
            const ParamGrads grads_g = backward(*run.params_g, tg, loss_g.d_final, loss_g.d_tap);
            adam_update(run.params_f, grads_f, run.adam_f);
            adam_update(*run.params_g, grads_g, *run.adam_g);

            loss_f_sum += loss_f.value;
            loss_g_sum += loss_g.value;
            for (std::size_t i : decision.excluded_for_f) excluded_this_epoch.push_back(idx[i]);
            for (std::size_t i : decision.excluded_for_g) excluded_this_epoch.push_back(idx[i]);
            if (flip_log) run.flip_logs.push_back(std::move(*flip_log));
        }

        for (std::size_t i : excluded_this_epoch) excluded_noisy += noisy[i];
        rec.train_loss_f = loss_f_sum / static_cast<double>(batches.size());
        rec.train_loss_g = loss_g_sum / static_cast<double>(batches.size());
        rec.excluded_events = excluded_this_epoch.size();
        if (have_mask && !excluded_this_epoch.empty())
            rec.excluded_noisy_fraction =
                static_cast<double>(excluded_noisy) / static_cast<double>(excluded_this_epoch.size());
        run.final_epoch_excluded = std::move(excluded_this_epoch);
        run.epochs_completed = epoch + 1;
        rec.validation = validation_scores(run, validation);
        if (hooks.on_epoch) hooks.on_epoch(rec);
        run.history.push_back(rec);
    }
    return run;
}

RunState train_baseline(const Dataset& train, const TrainConfig& cfg, const Dataset* validation,
                        const TrainHooks& hooks) {
    check_inputs(train, cfg, validation);
    if (cfg.mode != TrainMode::baseline) throw ValidationError("train_baseline called with mode=ccml");

    RunState run;
    run.mode = TrainMode::baseline;
    run.params_f = init_model(cfg.architecture(train.n_features(), train.n_classes()),
                              cfg.effective_tap_index(), cfg.seeds.f);
    run.adam_f = make_adam(run.params_f, cfg);
    run.training_labels = train.y;
    Rng order_rng(cfg.seeds.data);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(train.n_samples(), cfg.batch_size, order_rng);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.mode = TrainMode::baseline;
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto& idx = batches[b];
            const Matrix xb = train.x.gather_rows(idx);
            const Matrix yb = run.training_labels.gather_rows(idx);
            const ForwardTrace t = forward(run.params_f, xb);
            require_finite_outputs(t, "f", epoch, b);
            const BceReport r = bce(t.probabilities, yb);
            std::vector<std::size_t> all(idx.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            const CompositeLoss loss = assemble_loss(r, all, nullptr, nullptr, true, cfg);
            require_finite(loss.value, "BCE loss", epoch, b);
            if (hooks.on_batch) {
                BatchTrace trace{epoch, b, &idx, nullptr, nullptr, &loss.d_final, nullptr, loss.value, 0.0};
                hooks.on_batch(trace);
            }
            adam_update(run.params_f, backward(run.params_f, t, loss.d_final), run.adam_f);
            loss_sum += loss.value;
        }
        rec.train_loss_f = loss_sum / static_cast<double>(batches.size());
        run.epochs_completed = epoch + 1;
        rec.validation = validation_scores(run, validation);
        if (hooks.on_epoch) hooks.on_epoch(rec);
        run.history.push_back(rec);
    }
    return run;
}

RunState train(const Dataset& train_set, const TrainConfig& cfg, const Dataset* validation,
               const TrainHooks& hooks) {
    return cfg.mode == TrainMode::ccml ? train_ccml(train_set, cfg, validation, hooks)
                                       : train_baseline(train_set, cfg, validation, hooks);
}

} // namespace ccml
