// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
// The robustness sweep (criteria 5, 6, 7, 10) trains 40 network pairs and
// takes several minutes on one core; CCML_THREADS runs cells in parallel.

#include "ccml/bce.hpp"
#include "ccml/datagen.hpp"
#include "ccml/discrepancy.hpp"
#include "ccml/error.hpp"
#include "ccml/eval.hpp"
#include "ccml/experiment.hpp"
#include "ccml/grouplasso.hpp"
#include "ccml/model.hpp"
#include "ccml/rng.hpp"
#include "ccml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace ccml;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << name << " -- " << o.detail
              << std::endl;
    if (!o.pass) ++failures;
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = u(rng);
    return m;
}

Matrix random_binary(std::size_t rows, std::size_t cols, Rng& rng) {
    std::bernoulli_distribution b(0.5);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = b(rng) ? 1.0 : 0.0;
    return m;
}

double relative_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-5});
}

// Central differences over every entry of `m` against `analytic`.
double max_fd_error(Matrix& m, const Matrix& analytic, const std::function<double()>& f) {
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) {
        const double saved = m.data()[k];
        m.data()[k] = saved + h;
        const double up = f();
        m.data()[k] = saved - h;
        const double down = f();
        m.data()[k] = saved;
        worst = std::max(worst, relative_error(analytic.data()[k], (up - down) / (2 * h)));
    }
    return worst;
}

double double_loop_mmd(const Matrix& p, const Matrix& q, double sigma) {
    auto k = [&](std::span<const double> a, std::span<const double> b) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
        return std::exp(-d2 / (2 * sigma * sigma));
    };
    const std::size_t m = p.rows();
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            s += k(p.row(i), p.row(j)) + k(q.row(i), q.row(j)) - 2 * k(p.row(i), q.row(j));
    return s / static_cast<double>(m * m);
}

Outcome mmd_oracle() {
    const auto t0 = Clock::now();
    Rng rng(20240101);
    double worst = 0.0, worst_self = 0.0;
    bool symmetric = true;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t m = 1 + rng() % 64, h = 1 + rng() % 16;
        const Matrix p = random_matrix(m, h, rng, -2, 2), q = random_matrix(m, h, rng, -1.5, 2.5);
        const double sigma = std::uniform_real_distribution<double>(0.25, 4.0)(rng);
        const KernelSpec k = KernelSpec::fixed(sigma);
        const double v = mmd(p, q, k).value;
        worst = std::max(worst, std::abs(v - double_loop_mmd(p, q, sigma)));
        worst_self = std::max(worst_self, mmd(p, p, k).value);
        symmetric = symmetric && v == mmd(q, p, k).value;
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && worst_self <= 1e-12 && symmetric && secs < 5.0,
            "max |mmd - oracle| " + fmt(worst) + " (<= 1e-9), max mmd(S,S) " + fmt(worst_self) +
                " (<= 1e-12), symmetric " + (symmetric ? "yes" : "no") + ", " + fmt(secs, 3) + " s (< 5)"};
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    Rng rng(77);

    double bce_err = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        Matrix z = random_matrix(8, 6, rng, -4, 4);
        const Matrix y = random_binary(8, 6, rng);
        auto probs = [&] {
            Matrix p(z.rows(), z.cols());
            for (std::size_t k = 0; k < z.size(); ++k) p.data()[k] = sigmoid(z.data()[k]);
            return p;
        };
        const Matrix grad = bce(probs(), y).grad_logits;
        bce_err = std::max(bce_err, max_fd_error(z, grad, [&] {
            double s = 0.0;
            for (double l : bce(probs(), y).loss) s += l;
            return s;
        }));
    }

    double mmd_err = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        Matrix p = random_matrix(8, 5, rng), q = random_matrix(8, 5, rng, -0.5, 1.5);
        const KernelSpec k = KernelSpec::fixed(0.8 + 0.3 * trial);
        const MmdResult r = mmd(p, q, k);
        auto value = [&] { return mmd(p, q, k).value; };
        mmd_err = std::max({mmd_err, max_fd_error(p, r.grad_p, value), max_fd_error(q, r.grad_q, value)});
    }

    double composite_err = 0.0;
    TrainConfig cfg;
    cfg.kernel = KernelSpec::fixed(1.5);
    for (int trial = 0; trial < 4; ++trial) {
        const bool self_is_f = trial % 2 == 0;
        ModelParams self = init_model({5, 7, 6, 3}, 2, 100 + trial);
        const ModelParams peer = init_model({5, 7, 6, 3}, 2, 200 + trial);
        for (auto& l : self.layers)
            for (double& b : l.bias) b = std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
        Matrix x;
        while (true) { // keep every hidden pre-activation away from the ReLU kink
            x = random_matrix(8, 5, rng);
            const ForwardTrace tr = forward(self, x);
            bool ok = true;
            for (std::size_t k = 0; k + 1 < tr.pre_activations.size(); ++k)
                for (double z : tr.pre_activations[k].data()) ok = ok && std::abs(z) >= 1e-2;
            if (ok) break;
        }
        const Matrix y = random_binary(8, 3, rng);
        const std::vector<std::size_t> selected = {0, 2, 3, 5, 6, 7};
        const ForwardTrace peer_trace = forward(peer, x);
        auto value = [&] { return composite_loss(forward(self, x), peer_trace, self_is_f, y, selected, cfg).value; };
        const ForwardTrace tr = forward(self, x);
        const CompositeLoss loss = composite_loss(tr, peer_trace, self_is_f, y, selected, cfg);
        const ParamGrads g = backward(self, tr, loss.d_final, loss.d_tap);
        for (std::size_t k = 0; k < self.layers.size(); ++k) {
            composite_err = std::max(composite_err, max_fd_error(self.layers[k].weight, g[k].weight, value));
            Matrix bias(1, self.layers[k].bias.size());
            Matrix bias_grad(1, bias.cols());
            for (std::size_t j = 0; j < bias.cols(); ++j) {
                bias(0, j) = self.layers[k].bias[j];
                bias_grad(0, j) = g[k].bias[j];
            }
            composite_err = std::max(composite_err, max_fd_error(bias, bias_grad, [&] {
                self.layers[k].bias.assign(bias.data().begin(), bias.data().end());
                return value();
            }));
            self.layers[k].bias.assign(bias.data().begin(), bias.data().end());
        }
    }
    const double secs = seconds_since(t0);
    const bool ok = bce_err < 1e-4 && mmd_err < 1e-4 && composite_err < 1e-4 && secs < 30.0;
    return {ok, "max relative error BCE " + fmt(bce_err) + ", MMD " + fmt(mmd_err) + ", composite " +
                    fmt(composite_err) + " (each < 1e-4), " + fmt(secs, 3) + " s (< 30)"};
}

Outcome lasso_oracle() {
    Rng rng(31337);
    double worst = 0.0;
    std::size_t zero_iff_failures = 0, zero_cases = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t V = 2 + rng() % 9;
        const Matrix y = random_binary(1, V, rng);
        Matrix p(1, V);
        const bool separated = trial % 3 == 0;
        for (std::size_t j = 0; j < V; ++j) {
            const double u = std::uniform_real_distribution<double>(0, 1)(rng);
            p(0, j) = separated ? (y(0, j) == 1.0 ? 0.75 + 0.25 * u : 0.25 * u) : u;
        }
        double missing = 0.0, wrong = 0.0;
        bool margins = true, has_pair = false;
        for (std::size_t u = 0; u < V; ++u) {
            if (y(0, u) != 0.0) continue;
            double s = 0.0;
            for (std::size_t a = 0; a < V; ++a)
                if (y(0, a) == 1.0) s += std::pow(std::max(0.0, 2 * (p(0, u) - p(0, a)) + 1), 2);
            missing += std::sqrt(s);
        }
        for (std::size_t a = 0; a < V; ++a) {
            if (y(0, a) != 1.0) continue;
            double s = 0.0;
            for (std::size_t u = 0; u < V; ++u) {
                if (y(0, u) != 0.0) continue;
                has_pair = true;
                s += std::pow(std::max(0.0, 2 * (p(0, u) - p(0, a)) + 1), 2);
                margins = margins && p(0, a) - p(0, u) >= 0.5;
            }
            wrong += std::sqrt(s);
        }
        const double total = lasso(p, y, 1.0, 1.0).total[0];
        worst = std::max(worst, std::abs(total - (missing + wrong)));
        if (has_pair) {
            zero_cases += margins;
            if ((total == 0.0) != margins) ++zero_iff_failures;
        }
    }
    return {worst <= 1e-12 && zero_iff_failures == 0 && zero_cases > 0,
            "max |lasso - brute force| " + fmt(worst) + " (<= 1e-12) over 1000 samples, zero-iff-margin violations " +
                std::to_string(zero_iff_failures) + " (" + std::to_string(zero_cases) + " fully separated cases)"};
}

Dataset make_dataset(std::size_t n, std::uint64_t stream) {
    GenSpec s;
    s.n_samples = n;
    s.n_features = 16;
    s.n_classes = 8;
    s.seed = 1;
    s.stream = stream;
    return generate(s);
}

Outcome protocol_conformance() {
    const Dataset noisy = inject_noise(make_dataset(96, 5), 40, 9);
    TrainConfig cfg; // defaults: 100 epochs, retain 0.75, flip rate 0.05, start 0.9
    cfg.batch_size = 8;
    const std::size_t flip_start = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(cfg.epochs)));
    std::size_t batches = 0, bad_rows = 0, early_flips = 0, over_budget = 0, flips = 0;
    TrainHooks hooks;
    hooks.on_batch = [&](const BatchTrace& t) {
        ++batches;
        for (const Matrix* g : {t.bce_grad_f, t.bce_grad_g}) {
            std::size_t rows = 0;
            for (std::size_t i = 0; i < g->rows(); ++i) {
                bool any = false;
                for (double v : g->row(i)) any = any || v != 0.0;
                rows += any;
            }
            if (rows != 6) ++bad_rows;
        }
        if (!t.flip_log) return;
        if (t.epoch < flip_start) early_flips += t.flip_log->flipped.size();
        const auto budget = static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(t.flip_log->candidates)));
        if (t.flip_log->flipped.size() > budget) ++over_budget;
        flips += t.flip_log->flipped.size();
    };
    const RunState run = train(noisy, cfg, nullptr, hooks);
    std::size_t logged_early = 0;
    for (const auto& log : run.flip_logs)
        if (log.epoch < flip_start) logged_early += log.flipped.size();
    const bool ok = bad_rows == 0 && early_flips == 0 && logged_early == 0 && over_budget == 0 && flips > 0;
    return {ok, std::to_string(batches) + " batches of 8: " + std::to_string(bad_rows) +
                    " network-batches without exactly 6 BCE rows; flips before epoch " + std::to_string(flip_start) +
                    ": " + std::to_string(early_flips + logged_early) + "; batches over the ceil(5%) budget: " +
                    std::to_string(over_budget) + "; flips after activation: " + std::to_string(flips)};
}

struct Sweep {
    ExperimentReport report;
    double seconds_40 = 0.0;
    std::map<int, RateSummary> rows;
};

std::size_t thread_count() {
    const char* env = std::getenv("CCML_THREADS");
    if (!env || !*env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
}

Sweep robustness_sweep() {
    const Dataset train = make_dataset(2000, 0);
    const Dataset val = make_dataset(500, 1);
    ExperimentPlan plan;
    plan.seeds = {1, 2, 3, 4, 5};
    const std::size_t threads = thread_count();

    Sweep s;
    plan.noise_rates = {40};
    const auto t0 = Clock::now();
    ExperimentReport at40 = run_experiment(plan, train, val, threads);
    s.seconds_40 = seconds_since(t0);

    plan.noise_rates = {0, 20, 50};
    ExperimentReport rest = run_experiment(plan, train, val, threads);

    std::vector<CellResult> cells = rest.cells;
    cells.insert(cells.end(), at40.cells.begin(), at40.cells.end());
    s.report = summarize(std::move(cells), {0, 20, 40, 50});
    for (const auto& r : s.report.rows) s.rows[r.noise_rate] = r;
    return s;
}

bool complete(const RateSummary& r) { return r.baseline.n == 5 && r.ccml.n == 5; }

Outcome robustness_trend(const Sweep& s) {
    const RateSummary& r = s.rows.at(40);
    const double gain = 100.0 * (r.ccml.f1_mean - r.baseline.f1_mean);
    return {complete(r) && gain >= 3.0 && s.seconds_40 < 600.0,
            "40% noise, 5 seeds: baseline F1 " + fmt(100 * r.baseline.f1_mean) + ", CCML F1 " +
                fmt(100 * r.ccml.f1_mean) + ", gain " + fmt(gain) + " points (>= 3); runtime " +
                fmt(s.seconds_40, 4) + " s (< 600)"};
}

Outcome degradation_gap(const Sweep& s) {
    const RateSummary &r20 = s.rows.at(20), &r50 = s.rows.at(50);
    const double drop_base = 100.0 * (r20.baseline.f1_mean - r50.baseline.f1_mean);
    const double drop_ccml = 100.0 * (r20.ccml.f1_mean - r50.ccml.f1_mean);
    const double gap = drop_base - drop_ccml;
    return {complete(r20) && complete(r50) && gap >= 2.0,
            "F1 drop 20%->50%: baseline " + fmt(drop_base) + ", CCML " + fmt(drop_ccml) + ", difference " +
                fmt(gap) + " points (>= 2)"};
}

Outcome enrichment(const Sweep& s) {
    const RateSummary& r = s.rows.at(40);
    const double e = r.ccml.enrichment_mean.value_or(0.0);

    // Random-exclusion control on the same kind of noisy set.
    const Dataset noisy = inject_noise(make_dataset(2000, 0), 40, 4);
    Rng rng(5);
    double control = 0.0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        const auto excluded = sample_indices(noisy.n_samples(), 1000, rng);
        control += noise_detection_metrics(excluded, {}, noisy).enrichment.value_or(0.0) / trials;
    }
    return {complete(r) && e >= 1.2 && std::abs(control - 1.0) <= 0.15,
            "40% noise: final-epoch exclusion enrichment " + fmt(e) + " (5-seed mean, >= 1.2); random-exclusion control " +
                fmt(control) + " (1 +- 0.15)"};
}

Outcome degeneracy() {
    const Dataset noisy = inject_noise(make_dataset(300, 7), 30, 3);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.lambda1 = cfg.lambda2 = cfg.gamma = 0.0;
    cfg.retain_fraction = 1.0;
    cfg.flip_start_fraction = 2.0;
    cfg.seeds = {21, 22, 23};
    std::vector<double> joint_f, joint_g, base_f, base_g;
    TrainHooks hj, hf, hg;
    hj.on_batch = [&](const BatchTrace& t) {
        joint_f.push_back(t.loss_f);
        joint_g.push_back(t.loss_g);
    };
    hf.on_batch = [&](const BatchTrace& t) { base_f.push_back(t.loss_f); };
    hg.on_batch = [&](const BatchTrace& t) { base_g.push_back(t.loss_f); };
    const RunState joint = train(noisy, cfg, nullptr, hj);

    TrainConfig base = cfg;
    base.mode = TrainMode::baseline;
    const RunState f = train(noisy, base, nullptr, hf);
    base.seeds.f = cfg.seeds.g;
    const RunState g = train(noisy, base, nullptr, hg);

    const bool params = joint.params_f == f.params_f && *joint.params_g == g.params_f;
    const bool losses = joint_f == base_f && joint_g == base_g;
    return {params && losses, "final parameters bit-identical: " + std::string(params ? "yes" : "no") + "; " +
                                  std::to_string(joint_f.size()) + " per-batch losses identical: " +
                                  (losses ? "yes" : "no")};
}

Outcome determinism_roundtrip() {
    const fs::path dir = fs::temp_directory_path() / "ccml_acceptance_roundtrip";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const Dataset clean = make_dataset(400, 11);
    const Dataset noisy = inject_noise(clean, 30, 12);
    const Dataset val = make_dataset(100, 12);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.flip_start_fraction = 0.5;
    const RunState a = train(noisy, cfg, &val), b = train(noisy, cfg, &val);
    const bool same_csv = metrics_csv(a) == metrics_csv(b);

    save(noisy, dir / "noisy");
    save(clean, dir / "clean");
    const bool data_ok = load(dir / "noisy") == noisy && load(dir / "clean") == clean;

    write_run_outputs(dir / "run", a, cfg, noisy, &val, {dir / "noisy", std::nullopt});
    const RunState reloaded = load_run_models(dir / "run");
    const bool ckpt_ok = predict(reloaded, val.x) == predict(a, val.x);
    return {same_csv && data_ok && ckpt_ok, std::string("metrics CSVs identical: ") + (same_csv ? "yes" : "no") +
                                                "; dataset round-trip exact: " + (data_ok ? "yes" : "no") +
                                                "; reloaded checkpoints predict identically: " + (ckpt_ok ? "yes" : "no")};
}

Outcome low_noise(const Sweep& s) {
    const RateSummary& r = s.rows.at(0);
    const double diff = 100.0 * (r.ccml.f1_mean - r.baseline.f1_mean);
    const bool surfaced = s.report.text().find("Low-noise check at 0%") != std::string::npos;
    return {complete(r) && std::abs(diff) <= 2.0 && surfaced,
            "0% noise, 5 seeds: baseline F1 " + fmt(100 * r.baseline.f1_mean) + ", CCML F1 " +
                fmt(100 * r.ccml.f1_mean) + ", difference " + fmt(diff) + " points (within 2); report line present: " +
                (surfaced ? "yes" : "no")};
}

template <typename F>
Outcome guarded(F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        return {false, std::string("exception: ") + e.what()};
    }
}

} // namespace

int main() {
    report(1, "MMD oracle equivalence", guarded(mmd_oracle));
    report(2, "gradient suite", guarded(gradient_suite));
    report(3, "group-lasso oracle", guarded(lasso_oracle));
    report(4, "protocol conformance", guarded(protocol_conformance));

    std::optional<Sweep> sweep;
    std::string sweep_error;
    try {
        sweep = robustness_sweep();
        std::cout << sweep->report.text();
    } catch (const std::exception& e) {
        sweep_error = e.what();
    }
    auto with_sweep = [&](auto f) {
        return sweep ? guarded([&] { return f(*sweep); }) : Outcome{false, "sweep failed: " + sweep_error};
    };
    report(5, "robustness trend at 40% noise", with_sweep(robustness_trend));
    report(6, "degradation gap 20% -> 50%", with_sweep(degradation_gap));
    report(7, "noise-detection enrichment", with_sweep(enrichment));
    report(8, "degeneracy equivalence", guarded(degeneracy));
    report(9, "determinism and round-trip", guarded(determinism_roundtrip));
    report(10, "low-noise caveat", with_sweep(low_noise));

    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
