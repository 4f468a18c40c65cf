#include "ccml/eval.hpp"

#include "ccml/error.hpp"
#include "textio.hpp"

#include <fstream>
#include <set>
#include <utility>

namespace ccml {

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void check_pair(const Matrix& pred, const Matrix& truth) {
    require_shape(truth, pred.rows(), pred.cols(), "truth");
    require_binary(pred, "predictions");
    require_binary(truth, "truth");
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

} // namespace

PrfScores scores_from_counts(const ConfusionCounts& c) {
    PrfScores s;
    s.counts = c;
    s.precision = ratio(c.tp, c.tp + c.fp);
    s.recall = ratio(c.tp, c.tp + c.fn);
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
    return s;
}

PrfScores micro_metrics(const Matrix& pred, const Matrix& truth) {
    check_pair(pred, truth);
    ConfusionCounts c;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        const bool p = pred.data()[k] == 1.0;
        const bool t = truth.data()[k] == 1.0;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
    }
    return scores_from_counts(c);
}

PerClassScores per_class_metrics(const Matrix& pred, const Matrix& truth) {
    check_pair(pred, truth);
    const std::size_t V = pred.cols();
    std::vector<ConfusionCounts> counts(V);
    PerClassScores out;
    out.support.assign(V, 0);
    for (std::size_t i = 0; i < pred.rows(); ++i) {
        for (std::size_t j = 0; j < V; ++j) {
            const bool p = pred(i, j) == 1.0;
            const bool t = truth(i, j) == 1.0;
            counts[j].tp += p && t;
            counts[j].fp += p && !t;
            counts[j].fn += !p && t;
            out.support[j] += t;
        }
    }
    for (const auto& c : counts) out.classes.push_back(scores_from_counts(c));
    return out;
}

std::vector<double> per_class_f1(const Matrix& pred, const Matrix& truth) {
    std::vector<double> f1;
    for (const auto& s : per_class_metrics(pred, truth).classes) f1.push_back(s.f1);
    return f1;
}

Matrix threshold_predictions(const Matrix& probabilities, double threshold) {
    Matrix out(probabilities.rows(), probabilities.cols());
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data()[k] = probabilities.data()[k] >= threshold ? 1.0 : 0.0;
    return out;
}

Matrix average_probabilities(const Matrix& a, const Matrix& b) {
    require_shape(b, a.rows(), a.cols(), "average_probabilities");
    Matrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < out.size(); ++k)
        out.data()[k] = 0.5 * (a.data()[k] + b.data()[k]);
    return out;
}

DetectionReport noise_detection_metrics(std::span<const std::size_t> excluded,
                                        const std::vector<FlipLog>& flip_logs, const Dataset& ds) {
    if (!ds.noise_mask || !ds.y_clean)
        throw StateError("noise detection metrics need a dataset with a noise mask and clean labels");
    const auto noisy = ds.noisy_samples();
    const Matrix& mask = *ds.noise_mask;
    const Matrix& clean = *ds.y_clean;

    DetectionReport r;
    std::size_t noisy_count = 0;
    for (bool b : noisy) noisy_count += b;
    r.base_rate = ratio(noisy_count, noisy.size());

    for (std::size_t i : excluded) {
        if (i >= noisy.size())
            throw ValidationError("excluded sample index " + std::to_string(i) + " out of range");
        ++r.excluded_events;
        r.excluded_noisy_events += noisy[i];
    }
    if (r.excluded_events > 0) {
        r.excluded_noisy_fraction = ratio(r.excluded_noisy_events, r.excluded_events);
        if (r.base_rate > 0.0) r.enrichment = *r.excluded_noisy_fraction / r.base_rate;
    }

    for (double v : mask.data()) r.noisy_cells += v == 1.0;
    std::set<std::pair<std::size_t, std::size_t>> corrected;
    for (const auto& log : flip_logs) {
        for (const auto& e : log.flipped) {
            if (e.sample_id >= clean.rows() || e.cls >= clean.cols())
                throw ValidationError("flip log references cell outside the dataset");
            ++r.flips;
            const double new_value = e.direction == FlipDirection::zero_to_one ? 1.0 : 0.0;
            if (new_value == clean(e.sample_id, e.cls)) {
                ++r.correct_flips;
                if (mask(e.sample_id, e.cls) == 1.0) corrected.insert({e.sample_id, e.cls});
            }
        }
    }
    if (r.flips > 0) r.flip_precision = ratio(r.correct_flips, r.flips);
    if (r.flips > 0 && r.noisy_cells > 0) r.flip_recall = ratio(corrected.size(), r.noisy_cells);
    return r;
}

MetricsReport evaluate_predictions(const Matrix& pred, const Matrix& truth) {
    return {micro_metrics(pred, truth), per_class_metrics(pred, truth), std::nullopt};
}

nlohmann::json to_json(const PrfScores& s) {
    return {{"precision", s.precision},
            {"recall", s.recall},
            {"f1", s.f1},
            {"tp", s.counts.tp},
            {"fp", s.counts.fp},
            {"fn", s.counts.fn}};
}

nlohmann::json to_json(const DetectionReport& d) {
    return {{"base_rate", d.base_rate},
            {"excluded_events", d.excluded_events},
            {"excluded_noisy_events", d.excluded_noisy_events},
            {"excluded_noisy_fraction", optional_json(d.excluded_noisy_fraction)},
            {"enrichment", optional_json(d.enrichment)},
            {"flips", d.flips},
            {"correct_flips", d.correct_flips},
            {"noisy_cells", d.noisy_cells},
            {"flip_precision", optional_json(d.flip_precision)},
            {"flip_recall", optional_json(d.flip_recall)}};
}

nlohmann::json to_json(const MetricsReport& r, const std::vector<std::string>& class_names) {
    nlohmann::json per_class = nlohmann::json::array();
    for (std::size_t j = 0; j < r.per_class.classes.size(); ++j) {
        auto entry = to_json(r.per_class.classes[j]);
        entry["class"] = j < class_names.size() ? class_names[j] : std::to_string(j);
        entry["support"] = r.per_class.support[j];
        per_class.push_back(std::move(entry));
    }
    nlohmann::json out = {{"micro", to_json(r.micro)}, {"per_class", per_class}};
    out["detection"] = r.detection ? to_json(*r.detection) : nlohmann::json(nullptr);
    return out;
}

void save_predictions(const std::filesystem::path& path, const std::vector<std::string>& ids,
                      const Matrix& probabilities, double threshold) {
    if (ids.size() != probabilities.rows())
        throw ValidationError("save_predictions: " + std::to_string(ids.size()) + " ids for " +
                              std::to_string(probabilities.rows()) + " rows");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    const std::size_t V = probabilities.cols();
    out << "id";
    for (std::size_t j = 0; j < V; ++j) out << ",p_" << j;
    for (std::size_t j = 0; j < V; ++j) out << ",yhat_" << j;
    out << '\n';
    for (std::size_t i = 0; i < probabilities.rows(); ++i) {
        out << ids[i];
        for (double p : probabilities.row(i)) out << ',' << detail::format_double(p);
        for (double p : probabilities.row(i)) out << ',' << (p >= threshold ? '1' : '0');
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

Predictions load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line).empty())
        throw ParseError(path.string() + ":1: empty file, expected header");
    const auto header = detail::split(detail::strip_cr(line), ',');
    if (header.size() < 3 || header[0] != "id" || (header.size() - 1) % 2 != 0)
        throw ParseError(path.string() + ":1: expected id,p_0..,yhat_0.. header");
    const std::size_t V = (header.size() - 1) / 2;

    std::vector<std::vector<double>> probs, labels;
    Predictions p;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto sv = detail::strip_cr(line);
        if (sv.empty()) continue;
        auto fields = detail::split(sv, ',');
        if (fields.size() != header.size())
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        p.ids.emplace_back(fields[0]);
        std::vector<double> pr(V), lb(V);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            auto v = detail::parse_double(fields[k]);
            if (!v)
                throw ParseError(path.string() + ":" + std::to_string(lineno) + ": field '" +
                                 std::string(header[k]) + "' is not a number");
            (k <= V ? pr[k - 1] : lb[k - 1 - V]) = *v;
        }
        probs.push_back(std::move(pr));
        labels.push_back(std::move(lb));
    }
    p.probabilities = probs.empty() ? Matrix(0, V) : Matrix::from_rows(probs);
    p.labels = labels.empty() ? Matrix(0, V) : Matrix::from_rows(labels);
    require_binary(p.labels, path.string() + " yhat columns");
    return p;
}

} // namespace ccml
