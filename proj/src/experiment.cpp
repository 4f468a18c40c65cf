#include "ccml/experiment.hpp"

#include "ccml/error.hpp"
#include "ccml/rng.hpp"
#include "textio.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace ccml {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string opt_field(const std::optional<double>& v) {
    return v ? detail::format_double(*v) : std::string();
}

nlohmann::json dataset_inputs(const fs::path& stem) {
    return {{"path", csv_path(stem).string()},
            {"csv_hash", git_blob_hash_file(csv_path(stem))},
            {"manifest_hash", git_blob_hash_file(manifest_path(stem))}};
}

struct MeanStd {
    double mean = 0.0, std = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
    MeanStd r;
    if (v.empty()) return r;
    for (double x : v) r.mean += x;
    r.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

ModeSummary summarize_mode(const std::vector<const CellResult*>& cells) {
    std::vector<double> p, r, f, e;
    for (const auto* c : cells) {
        if (!c->micro) continue;
        p.push_back(c->micro->precision);
        r.push_back(c->micro->recall);
        f.push_back(c->micro->f1);
        if (c->detection && c->detection->enrichment) e.push_back(*c->detection->enrichment);
    }
    ModeSummary s;
    s.n = f.size();
    auto mp = mean_std(p), mr = mean_std(r), mf = mean_std(f);
    s.precision_mean = mp.mean;
    s.precision_std = mp.std;
    s.recall_mean = mr.mean;
    s.recall_std = mr.std;
    s.f1_mean = mf.mean;
    s.f1_std = mf.std;
    if (!e.empty()) s.enrichment_mean = mean_std(e).mean;
    return s;
}

std::string pct(double v) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(1) << 100.0 * v;
    return ss.str();
}

} // namespace

std::string git_blob_hash(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
    const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest, &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("SHA-1 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string git_blob_hash_file(const fs::path& path) { return git_blob_hash(read_file(path)); }

std::string metrics_csv(const RunState& run) {
    std::ostringstream out;
    out << "epoch,mode,train_loss_f,train_loss_g,val_precision,val_recall,val_f1,flips,"
           "excluded_noisy_fraction\n";
    for (const auto& r : run.history) {
        out << r.epoch << ',' << to_string(r.mode) << ',' << detail::format_double(r.train_loss_f)
            << ',' << opt_field(r.train_loss_g) << ',';
        if (r.validation)
            out << detail::format_double(r.validation->precision) << ','
                << detail::format_double(r.validation->recall) << ','
                << detail::format_double(r.validation->f1);
        else
            out << ",,";
        out << ',' << r.flips << ',' << opt_field(r.excluded_noisy_fraction) << '\n';
    }
    return out.str();
}

MetricsReport evaluate_run(const RunState& run, const Dataset& data) {
    const Matrix& truth = data.y_clean ? *data.y_clean : data.y;
    return evaluate_predictions(threshold_predictions(predict(run, data.x)), truth);
}

void write_run_outputs(const fs::path& dir, const RunState& run, const TrainConfig& cfg,
                       const Dataset& train, const Dataset* validation, const RunInputs& inputs) {
    fs::create_directories(dir);
    std::vector<std::string> outputs;
    auto emit = [&](const std::string& name, const std::string& content) {
        write_file(dir / name, content);
        outputs.push_back(name);
    };

    emit("config.json", to_json(cfg).dump(2) + "\n");
    emit("metrics.csv", metrics_csv(run));

    std::string flips;
    for (const auto& log : run.flip_logs) {
        for (const auto& e : log.flipped) {
            nlohmann::json line = {{"epoch", log.epoch},   {"batch", log.batch},
                                   {"sample", e.sample_id}, {"class", e.cls},
                                   {"direction", to_string(e.direction)}, {"score", e.score}};
            flips += line.dump() + "\n";
        }
    }
    emit("flips.jsonl", flips);

    std::string excluded;
    for (std::size_t i : run.final_epoch_excluded) excluded += std::to_string(i) + "\n";
    emit("excluded_final_epoch.txt", excluded);

    save_checkpoint(run.params_f, run.adam_f.step, dir / "model_f");
    outputs.push_back("model_f.json");
    outputs.push_back("model_f.bin");
    if (run.params_g) {
        save_checkpoint(*run.params_g, run.adam_g ? run.adam_g->step : 0, dir / "model_g");
        outputs.push_back("model_g.json");
        outputs.push_back("model_g.bin");
    }

    nlohmann::json metrics = {{"mode", to_string(run.mode)}};
    if (validation) {
        const Matrix probs = predict(run, validation->x);
        save_predictions(dir / "predictions.csv", validation->ids, probs);
        outputs.push_back("predictions.csv");
        const Matrix& truth = validation->y_clean ? *validation->y_clean : validation->y;
        MetricsReport report = evaluate_predictions(threshold_predictions(probs), truth);
        metrics["validation"] = to_json(report, validation->class_names);
    }
    if (train.noise_mask && train.y_clean && run.mode == TrainMode::ccml)
        metrics["detection"] = to_json(noise_detection_metrics(run.final_epoch_excluded, run.flip_logs, train));
    emit("metrics.json", metrics.dump(2) + "\n");

    nlohmann::json inputs_json = {{"train", dataset_inputs(inputs.train_stem)}};
    if (inputs.val_stem) inputs_json["val"] = dataset_inputs(*inputs.val_stem);
    nlohmann::json run_json = {
        {"command", "train"},
        {"mode", to_string(cfg.mode)},
        {"config", to_json(cfg)},
        {"seeds", {{"data", cfg.seeds.data}, {"f", cfg.seeds.f}, {"g", cfg.seeds.g}}},
        {"inputs", inputs_json},
        {"outputs", outputs},
        {"epochs_completed", run.epochs_completed},
    };
    write_file(dir / "run.json", run_json.dump(2) + "\n");
}

RunState load_run_models(const fs::path& dir) {
    RunState run;
    run.params_f = load_checkpoint(dir / "model_f").params;
    if (fs::exists(dir / "model_g.json")) {
        run.params_g = load_checkpoint(dir / "model_g").params;
        run.mode = TrainMode::ccml;
    } else {
        run.mode = TrainMode::baseline;
    }
    return run;
}

std::vector<std::size_t> load_excluded(const fs::path& dir) {
    std::istringstream in(read_file(dir / "excluded_final_epoch.txt"));
    std::vector<std::size_t> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(std::stoul(line));
        } catch (const std::exception&) {
            throw ParseError((dir / "excluded_final_epoch.txt").string() + ":" +
                             std::to_string(lineno) + ": not an index");
        }
    }
    return out;
}

std::vector<FlipLog> load_flip_logs(const fs::path& dir) {
    std::istringstream in(read_file(dir / "flips.jsonl"));
    std::vector<FlipLog> logs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            const auto epoch = j.at("epoch").get<std::size_t>();
            const auto batch = j.at("batch").get<std::size_t>();
            if (logs.empty() || logs.back().epoch != epoch || logs.back().batch != batch) {
                logs.emplace_back();
                logs.back().epoch = epoch;
                logs.back().batch = batch;
            }
            const auto dir_str = j.at("direction").get<std::string>();
            if (dir_str != "0to1" && dir_str != "1to0") throw ParseError("bad direction " + dir_str);
            logs.back().flipped.push_back(
                {j.at("sample").get<std::size_t>(), j.at("class").get<std::size_t>(),
                 dir_str == "0to1" ? FlipDirection::zero_to_one : FlipDirection::one_to_zero,
                 j.at("score").get<double>()});
        } catch (const std::exception& e) {
            throw ParseError((dir / "flips.jsonl").string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    }
    return logs;
}

void ExperimentPlan::validate() const {
    if (noise_rates.empty()) throw ValidationError("experiment plan needs at least one noise rate");
    for (int r : noise_rates)
        if (r < 0 || r > 100) throw ValidationError("noise rate " + std::to_string(r) + " outside [0,100]");
    if (seeds.empty()) throw ValidationError("experiment plan needs at least one seed");
    config.validate();
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
    ExperimentPlan plan;
    if (!j.is_object()) throw ValidationError("experiment plan must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "noise_rates") plan.noise_rates = v.get<std::vector<int>>();
            else if (key == "seeds") plan.seeds = v.get<std::vector<std::uint64_t>>();
            else if (key == "train_config") plan.config = config_from_json(v);
            else if (key == "output_dir") plan.output_dir = v.get<std::string>();
            else throw ValidationError("unknown experiment plan field '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad experiment plan value: ") + e.what());
    }
    plan.validate();
    return plan;
}

nlohmann::json to_json(const ExperimentPlan& plan) {
    return {{"noise_rates", plan.noise_rates},
            {"seeds", plan.seeds},
            {"train_config", to_json(plan.config)},
            {"output_dir", plan.output_dir.string()}};
}

CellSeeds cell_seeds(int rate, std::uint64_t seed) {
    CellSeeds s;
    s.noise = mix_seed(seed, 1000 + static_cast<std::uint64_t>(rate));
    s.train.data = mix_seed(seed, 1);
    s.train.f = mix_seed(seed, 2);
    s.train.g = mix_seed(seed, 3);
    return s;
}

CellResult run_cell(const Dataset& clean_train, const Dataset& validation, const TrainConfig& base,
                    int rate, std::uint64_t seed, TrainMode mode, const fs::path& cell_dir) {
    CellResult result;
    result.noise_rate = rate;
    result.seed = seed;
    result.mode = mode;
    try {
        const CellSeeds seeds = cell_seeds(rate, seed);
        const Dataset noisy = inject_noise(clean_train, rate, seeds.noise);
        TrainConfig cfg = base;
        cfg.mode = mode;
        cfg.seeds = seeds.train;
        const RunState run = train(noisy, cfg, &validation);
        result.micro = evaluate_run(run, validation).micro;
        if (mode == TrainMode::ccml)
            result.detection = noise_detection_metrics(run.final_epoch_excluded, run.flip_logs, noisy);
        if (!cell_dir.empty()) {
            const fs::path train_stem = cell_dir / "train_noisy";
            const fs::path val_stem = cell_dir / "val";
            // Both modes of a cell write identical dataset files.
            static std::mutex io_mutex;
            {
                std::lock_guard lock(io_mutex);
                save(noisy, train_stem);
                save(validation, val_stem);
            }
            write_run_outputs(cell_dir / to_string(mode), run, cfg, noisy, &validation,
                              {train_stem, val_stem});
        }
    } catch (const std::exception& e) {
        result.error = e.what();
        result.micro.reset();
        result.detection.reset();
    }
    return result;
}

ExperimentReport summarize(std::vector<CellResult> cells, const std::vector<int>& rates) {
    ExperimentReport report;
    for (int rate : rates) {
        std::vector<const CellResult*> b, c;
        for (const auto& cell : cells) {
            if (cell.noise_rate != rate) continue;
            (cell.mode == TrainMode::baseline ? b : c).push_back(&cell);
        }
        report.rows.push_back({rate, summarize_mode(b), summarize_mode(c)});
    }
    report.cells = std::move(cells);
    return report;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const Dataset& clean_train,
                                const Dataset& validation, std::size_t threads) {
    plan.validate();
    struct Job {
        int rate;
        std::uint64_t seed;
        TrainMode mode;
    };
    std::vector<Job> jobs;
    for (int rate : plan.noise_rates)
        for (auto seed : plan.seeds)
            for (auto mode : {TrainMode::baseline, TrainMode::ccml}) jobs.push_back({rate, seed, mode});

    std::vector<CellResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            const auto& job = jobs[k];
            fs::path dir;
            if (!plan.output_dir.empty())
                dir = plan.output_dir / ("rate_" + std::to_string(job.rate)) /
                      ("seed_" + std::to_string(job.seed));
            results[k] = run_cell(clean_train, validation, plan.config, job.rate, job.seed, job.mode, dir);
        }
    };
    threads = std::clamp<std::size_t>(threads, 1, jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    ExperimentReport report = summarize(std::move(results), plan.noise_rates);
    if (!plan.output_dir.empty()) {
        write_file(plan.output_dir / "report.csv", report.csv());
        write_file(plan.output_dir / "report.txt", report.text());
        write_file(plan.output_dir / "cells.csv", report.cells_csv());
        write_file(plan.output_dir / "plan.json", to_json(plan).dump(2) + "\n");
    }
    return report;
}

std::string ExperimentReport::csv() const {
    std::ostringstream out;
    out << "noise_rate";
    for (const char* mode : {"baseline", "ccml"})
        for (const char* m : {"precision", "recall", "f1"})
            out << ',' << mode << '_' << m << "_mean," << mode << '_' << m << "_std";
    out << ",f1_gain,baseline_n,ccml_n,ccml_enrichment\n";
    for (const auto& r : rows) {
        out << r.noise_rate;
        for (const ModeSummary* s : {&r.baseline, &r.ccml}) {
            if (s->n == 0) {
                out << ",,,,,,";
                continue;
            }
            for (double v : {s->precision_mean, s->precision_std, s->recall_mean, s->recall_std,
                             s->f1_mean, s->f1_std})
                out << ',' << detail::format_double(v);
        }
        out << ',';
        if (r.baseline.n && r.ccml.n) out << detail::format_double(r.ccml.f1_mean - r.baseline.f1_mean);
        out << ',' << r.baseline.n << ',' << r.ccml.n << ',' << opt_field(r.ccml.enrichment_mean) << '\n';
    }
    return out.str();
}

std::string ExperimentReport::text() const {
    std::ostringstream out;
    auto cell = [](const ModeSummary& s, double mean, double sd) {
        if (s.n == 0) return std::string("      n/a     ");
        std::ostringstream c;
        c << std::setw(5) << pct(mean) << " +- " << std::setw(4) << pct(sd);
        return c.str();
    };
    out << "Micro-averaged scores on the clean validation set (%), mean +- std over seeds\n\n";
    out << "rate | precision baseline | precision ccml | recall baseline | recall ccml | "
           "F1 baseline  | F1 ccml      | F1 gain\n";
    for (const auto& r : rows) {
        out << std::setw(3) << r.noise_rate << "% | " << cell(r.baseline, r.baseline.precision_mean, r.baseline.precision_std)
            << "     | " << cell(r.ccml, r.ccml.precision_mean, r.ccml.precision_std) << " | "
            << cell(r.baseline, r.baseline.recall_mean, r.baseline.recall_std) << "  | "
            << cell(r.ccml, r.ccml.recall_mean, r.ccml.recall_std) << " | "
            << cell(r.baseline, r.baseline.f1_mean, r.baseline.f1_std) << " | "
            << cell(r.ccml, r.ccml.f1_mean, r.ccml.f1_std) << " | ";
        if (r.baseline.n && r.ccml.n) {
            const double gain = r.ccml.f1_mean - r.baseline.f1_mean;
            out << (gain >= 0 ? "+" : "") << pct(gain);
        } else {
            out << "n/a";
        }
        out << '\n';
    }
    for (const auto& r : rows) {
        if (r.noise_rate <= 10 && r.baseline.n && r.ccml.n) {
            out << "\nLow-noise check at " << r.noise_rate << "%: CCML F1 " << pct(r.ccml.f1_mean)
                << " vs baseline " << pct(r.baseline.f1_mean)
                << " (CCML trains each network on a subset of every batch).\n";
        }
    }
    std::size_t failed = 0;
    for (const auto& c : cells) failed += !c.error.empty();
    if (failed) out << "\n" << failed << " cell(s) failed; see cells.csv\n";
    return out.str();
}

std::string ExperimentReport::cells_csv() const {
    std::ostringstream out;
    out << "noise_rate,seed,mode,precision,recall,f1,enrichment,flips,flip_precision,error\n";
    for (const auto& c : cells) {
        out << c.noise_rate << ',' << c.seed << ',' << to_string(c.mode) << ',';
        if (c.micro)
            out << detail::format_double(c.micro->precision) << ','
                << detail::format_double(c.micro->recall) << ',' << detail::format_double(c.micro->f1);
        else
            out << ",,";
        out << ',';
        if (c.detection) {
            out << opt_field(c.detection->enrichment) << ',' << c.detection->flips << ','
                << opt_field(c.detection->flip_precision);
        } else {
            out << ",,";
        }
        std::string err = c.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        out << ',' << err << '\n';
    }
    return out.str();
}

} // namespace ccml
