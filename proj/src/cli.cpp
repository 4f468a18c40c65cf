#include "ccml/cli.hpp"

#include "ccml/datagen.hpp"
#include "ccml/error.hpp"
#include "ccml/eval.hpp"
#include "ccml/experiment.hpp"
#include "ccml/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace ccml {

namespace fs = std::filesystem;

namespace {

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::size_t thread_cap() {
    const char* env = std::getenv("CCML_THREADS");
    if (!env || !*env) return 1;
    try {
        const long v = std::stol(env);
        return v < 1 ? 1 : static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw ValidationError(std::string("CCML_THREADS must be a positive integer, got '") + env + "'");
    }
}

struct GenerateArgs {
    GenSpec spec;
    std::optional<std::size_t> val_samples;
    std::string out;
};

struct CorruptArgs {
    std::string in, out;
    int noise = 0;
    std::uint64_t seed = 1;
};

// Optional command-line overrides of TrainConfig fields.
struct TrainOverrides {
    std::optional<std::string> mode;
    std::optional<std::size_t> epochs, batch_size, tap_index;
    std::optional<double> lr, lambda1, lambda2, alpha, beta, gamma, retain, flip_rate, flip_start, sigma;
    std::optional<std::uint64_t> seed_data, seed_f, seed_g;
    std::vector<std::size_t> hidden;
    std::string config;

    void add_to(CLI::App* app) {
        app->add_option("--mode", mode, "baseline or ccml")->check(CLI::IsMember({"baseline", "ccml"}));
        app->add_option("--config", config, "JSON train config (TrainConfig field names)");
        app->add_option("--epochs", epochs);
        app->add_option("--batch-size", batch_size);
        app->add_option("--lr", lr, "Adam learning rate");
        app->add_option("--lambda1", lambda1, "consistency weight");
        app->add_option("--lambda2", lambda2, "disparity weight");
        app->add_option("--alpha", alpha, "missing-label lasso weight");
        app->add_option("--beta", beta, "wrong-label lasso weight");
        app->add_option("--gamma", gamma, "lasso weight in the swapping loss");
        app->add_option("--retain", retain, "fraction of each batch kept by swap selection");
        app->add_option("--flip-rate", flip_rate);
        app->add_option("--flip-start", flip_start, "fraction of epochs before flipping starts");
        app->add_option("--sigma", sigma, "fixed kernel bandwidth (default: median heuristic)");
        app->add_option("--hidden", hidden, "hidden layer widths")->delimiter(',');
        app->add_option("--tap-index", tap_index, "hidden layer feeding the disparity loss");
        app->add_option("--seed-data", seed_data);
        app->add_option("--seed-f", seed_f);
        app->add_option("--seed-g", seed_g);
    }

    TrainConfig resolve(TrainConfig cfg = {}) const {
        if (!config.empty()) cfg = config_from_json(read_json(config), cfg);
        if (mode) cfg.mode = train_mode_from_string(*mode);
        if (epochs) cfg.epochs = *epochs;
        if (batch_size) cfg.batch_size = *batch_size;
        if (tap_index) cfg.tap_index = *tap_index;
        if (lr) cfg.learning_rate = *lr;
        if (lambda1) cfg.lambda1 = *lambda1;
        if (lambda2) cfg.lambda2 = *lambda2;
        if (alpha) cfg.alpha = *alpha;
        if (beta) cfg.beta = *beta;
        if (gamma) cfg.gamma = *gamma;
        if (retain) cfg.retain_fraction = *retain;
        if (flip_rate) cfg.flip_rate = *flip_rate;
        if (flip_start) cfg.flip_start_fraction = *flip_start;
        if (sigma) cfg.kernel = KernelSpec::fixed(*sigma);
        if (!hidden.empty()) cfg.hidden_layers = hidden;
        if (seed_data) cfg.seeds.data = *seed_data;
        if (seed_f) cfg.seeds.f = *seed_f;
        if (seed_g) cfg.seeds.g = *seed_g;
        cfg.validate();
        return cfg;
    }
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    const fs::path dir(a.out);
    const Dataset train = generate(a.spec);
    save(train, dir / "train");
    out << "wrote " << csv_path(dir / "train").string() << " (" << train.n_samples() << " samples)\n";
    const std::size_t n_val = a.val_samples.value_or(a.spec.n_samples / 4);
    if (n_val > 0) {
        GenSpec vs = a.spec;
        vs.n_samples = n_val;
        vs.stream = a.spec.stream + 1;
        const Dataset val = generate(vs);
        save(val, dir / "val");
        out << "wrote " << csv_path(dir / "val").string() << " (" << val.n_samples() << " samples)\n";
    }
    return kExitOk;
}

int cmd_corrupt(const CorruptArgs& a, std::ostream& out) {
    const Dataset ds = load(a.in);
    const Dataset noisy = inject_noise(ds, a.noise, a.seed);
    const fs::path dest = a.out.empty() ? fs::path(a.in) : fs::path(a.out);
    save(noisy, dest);
    std::size_t cells = 0;
    for (double v : noisy.noise_mask->data()) cells += v == 1.0;
    out << "wrote " << csv_path(dest).string() << ": " << cells << " label cells flipped at rate "
        << a.noise << "%\n";
    return kExitOk;
}

int cmd_train(const TrainOverrides& o, const std::string& train_stem, const std::string& val_stem,
              const std::string& out_dir, std::ostream& out) {
    const TrainConfig cfg = o.resolve();
    const Dataset train_set = load(train_stem);
    std::optional<Dataset> val;
    if (!val_stem.empty()) val = load(val_stem);

    TrainHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& r) {
        if ((r.epoch + 1) % 10 != 0 && r.epoch + 1 != cfg.epochs) return;
        out << "epoch " << r.epoch + 1 << "/" << cfg.epochs << " loss_f " << r.train_loss_f;
        if (r.train_loss_g) out << " loss_g " << *r.train_loss_g;
        if (r.validation) out << " val_f1 " << r.validation->f1;
        if (r.flips) out << " flips " << r.flips;
        out << '\n';
    };
    const RunState run = train(train_set, cfg, val ? &*val : nullptr, hooks);
    RunInputs inputs{train_stem, std::nullopt};
    if (val) inputs.val_stem = val_stem;
    write_run_outputs(out_dir, run, cfg, train_set, val ? &*val : nullptr, inputs);
    out << "wrote run to " << out_dir << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& predictions, const std::string& data_stem,
             const std::string& train_stem, const std::string& out_path,
             const std::string& predictions_out, std::ostream& out) {
    if (run_dir.empty() == predictions.empty())
        throw ValidationError("eval needs exactly one of --run or --predictions");
    const Dataset data = load(data_stem);
    const Matrix& truth = data.y_clean ? *data.y_clean : data.y;

    Matrix probs;
    std::string mode = "predictions";
    if (!run_dir.empty()) {
        const RunState run = load_run_models(run_dir);
        mode = to_string(run.mode);
        probs = predict(run, data.x);
        if (!predictions_out.empty()) save_predictions(predictions_out, data.ids, probs);
    } else {
        Predictions p = load_predictions(predictions);
        if (p.ids != data.ids) throw ValidationError(predictions + ": sample ids do not match " + data_stem);
        probs = std::move(p.probabilities);
    }
    MetricsReport report = evaluate_predictions(threshold_predictions(probs), truth);
    if (!train_stem.empty()) {
        if (run_dir.empty()) throw ValidationError("--train requires --run");
        const Dataset train_set = load(train_stem);
        report.detection = noise_detection_metrics(load_excluded(run_dir), load_flip_logs(run_dir), train_set);
    }
    nlohmann::json j = to_json(report, data.class_names);
    j["mode"] = mode;
    if (out_path.empty()) {
        out << j.dump(2) << '\n';
    } else {
        const fs::path p(out_path);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p);
        if (!f) throw IoError("cannot write " + out_path);
        f << j.dump(2) << '\n';
        out << "micro P " << report.micro.precision << " R " << report.micro.recall << " F1 "
            << report.micro.f1 << "\nwrote " << out_path << '\n';
    }
    return kExitOk;
}

int cmd_experiment(const std::string& plan_path, const std::vector<int>& rates,
                   const std::vector<std::uint64_t>& seeds, const TrainOverrides& o,
                   const std::string& train_stem, const std::string& val_stem, const std::string& out_dir,
                   std::ostream& out) {
    ExperimentPlan plan;
    if (!plan_path.empty()) plan = plan_from_json(read_json(plan_path));
    if (!rates.empty()) plan.noise_rates = rates;
    if (!seeds.empty()) plan.seeds = seeds;
    plan.config = o.resolve(plan.config);
    if (!out_dir.empty()) plan.output_dir = out_dir;
    if (plan.output_dir.empty()) throw ValidationError("experiment needs --out or output_dir in the plan");
    plan.validate();

    const Dataset clean_train = load(train_stem);
    const Dataset val = load(val_stem);
    const auto threads = thread_cap();
    out << "running " << plan.noise_rates.size() * plan.seeds.size() * 2 << " cells on " << threads
        << " thread(s)\n";
    const ExperimentReport report = run_experiment(plan, clean_train, val, threads);
    out << report.text();
    out << "wrote " << (plan.output_dir / "report.csv").string() << '\n';
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Collaborative noisy multi-label training: data generation, noise injection, "
                 "training, evaluation and experiment reports"};
    app.name("ccml");
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "generate synthetic train/val datasets");
    generate_cmd->add_option("--samples", gen.spec.n_samples, "training samples")->required();
    generate_cmd->add_option("--features", gen.spec.n_features)->capture_default_str();
    generate_cmd->add_option("--classes", gen.spec.n_classes)->capture_default_str();
    generate_cmd->add_option("--seed", gen.spec.seed)->capture_default_str();
    generate_cmd->add_option("--margin", gen.spec.margin)->capture_default_str();
    generate_cmd->add_option("--label-correlation", gen.spec.label_correlation)->capture_default_str();
    generate_cmd->add_option("--val-samples", gen.val_samples,
                             "validation samples (default samples/4, 0 to skip)");
    generate_cmd->add_option("--out", gen.out, "output directory")->required();

    CorruptArgs cor;
    auto* corrupt_cmd = app.add_subcommand("corrupt", "inject label noise into a dataset");
    corrupt_cmd->add_option("--in", cor.in, "dataset stem")->required();
    corrupt_cmd->add_option("--noise", cor.noise, "noise rate n in percent")->required();
    corrupt_cmd->add_option("--seed", cor.seed)->capture_default_str();
    corrupt_cmd->add_option("--out", cor.out, "output stem (default: overwrite input)");

    TrainOverrides train_over;
    std::string train_stem, val_stem, train_out;
    auto* train_cmd = app.add_subcommand("train", "train a baseline or CCML run");
    train_over.add_to(train_cmd);
    train_cmd->add_option("--train", train_stem, "training dataset stem")->required();
    train_cmd->add_option("--val", val_stem, "validation dataset stem");
    train_cmd->add_option("--out", train_out, "run directory")->required();

    std::string eval_run, eval_pred, eval_data, eval_train, eval_out, eval_pred_out;
    auto* eval_cmd = app.add_subcommand("eval", "score a run or a predictions file");
    eval_cmd->add_option("--run", eval_run, "run directory");
    eval_cmd->add_option("--predictions", eval_pred, "predictions CSV");
    eval_cmd->add_option("--data", eval_data, "dataset stem with ground truth")->required();
    eval_cmd->add_option("--train", eval_train, "noisy training set, adds noise-detection scores");
    eval_cmd->add_option("--out", eval_out, "metrics JSON path (default stdout)");
    eval_cmd->add_option("--predictions-out", eval_pred_out, "write predictions CSV");

    std::string plan_path, exp_train, exp_val, exp_out;
    std::vector<int> exp_rates;
    std::vector<std::uint64_t> exp_seeds;
    TrainOverrides exp_over;
    auto* exp_cmd = app.add_subcommand("experiment", "baseline vs CCML across noise rates and seeds");
    exp_cmd->add_option("--plan", plan_path, "experiment plan JSON");
    exp_cmd->add_option("--rates", exp_rates, "noise rates")->delimiter(',');
    exp_cmd->add_option("--seeds", exp_seeds, "seeds")->delimiter(',');
    exp_over.add_to(exp_cmd);
    exp_cmd->add_option("--train", exp_train, "clean training dataset stem")->required();
    exp_cmd->add_option("--val", exp_val, "clean validation dataset stem")->required();
    exp_cmd->add_option("--out", exp_out, "output directory");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*generate_cmd) return cmd_generate(gen, out);
        if (*corrupt_cmd) return cmd_corrupt(cor, out);
        if (*train_cmd) return cmd_train(train_over, train_stem, val_stem, train_out, out);
        if (*eval_cmd)
            return cmd_eval(eval_run, eval_pred, eval_data, eval_train, eval_out, eval_pred_out, out);
        if (*exp_cmd)
            return cmd_experiment(plan_path, exp_rates, exp_seeds, exp_over, exp_train, exp_val, exp_out,
                                  out);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const StateError& e) {
        err << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitValidation;
}

} // namespace ccml
