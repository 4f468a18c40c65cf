#include "ccml/datagen.hpp"

#include "ccml/error.hpp"
#include "ccml/rng.hpp"
#include "textio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ccml {

namespace {

using detail::format_double;
using detail::parse_double;

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Inverse of the standard normal CDF by bisection; p in (0,1).
double normal_quantile(double p) {
    double lo = -12.0, hi = 12.0;
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

void normalize(std::vector<double>& v) {
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& x : v) x /= n;
}

double dot(const std::vector<double>& a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Linear labeling model: class j is present iff w_j . x + b_j > 0.
struct LabelModel {
    std::vector<std::vector<double>> w;
    std::vector<double> b;
};

LabelModel make_label_model(const GenSpec& spec) {
    Rng rng(mix_seed(spec.seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t d = spec.n_features;
    const std::size_t V = spec.n_classes;

    // V class-specific directions plus one shared direction, orthonormalized
    // while the feature space has room for them.
    std::vector<std::vector<double>> basis;
    for (std::size_t k = 0; k <= V; ++k) {
        std::vector<double> v(d);
        for (double& x : v) x = normal(rng);
        if (basis.size() < d) {
            for (const auto& u : basis) {
                double p = dot(u, v);
                for (std::size_t i = 0; i < d; ++i) v[i] -= p * u[i];
            }
        }
        normalize(v);
        basis.push_back(std::move(v));
    }
    const auto& shared = basis.back();

    LabelModel model;
    const double a = std::sqrt(1.0 - spec.label_correlation);
    const double c = std::sqrt(spec.label_correlation);
    for (std::size_t j = 0; j < V; ++j) {
        std::vector<double> w(d);
        for (std::size_t i = 0; i < d; ++i) w[i] = a * basis[j][i] + c * shared[i];
        normalize(w);
        model.w.push_back(std::move(w));
        // Geometric frequency decay: class 0 is the most common.
        double freq = 0.5 * std::pow(0.75, static_cast<double>(j));
        model.b.push_back(-normal_quantile(1.0 - freq));
    }
    return model;
}

std::string csv_header(std::size_t d, std::size_t V, bool has_clean, bool has_mask) {
    std::string h = "id";
    for (std::size_t i = 0; i < d; ++i) h += ",x_" + std::to_string(i);
    for (std::size_t j = 0; j < V; ++j) h += ",y_" + std::to_string(j);
    if (has_clean)
        for (std::size_t j = 0; j < V; ++j) h += ",yc_" + std::to_string(j);
    if (has_mask)
        for (std::size_t j = 0; j < V; ++j) h += ",nm_" + std::to_string(j);
    return h;
}

void check_label_rows(const Matrix& y, const std::string& what) {
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double s = 0.0;
        for (double v : y.row(i)) s += v;
        if (s < 1.0)
            throw ValidationError(what + ": sample " + std::to_string(i) + " has no labels");
    }
}

} // namespace

void GenSpec::validate() const {
    if (n_classes < 2) throw ValidationError("n_classes must be >= 2, got " + std::to_string(n_classes));
    if (n_samples < 10) throw ValidationError("n_samples must be >= 10, got " + std::to_string(n_samples));
    if (n_features < 1) throw ValidationError("n_features must be >= 1");
    if (!(margin > 0.0) || !std::isfinite(margin))
        throw ValidationError("margin must be > 0, got " + std::to_string(margin));
    if (!(label_correlation >= 0.0 && label_correlation <= 1.0))
        throw ValidationError("label_correlation must be in [0,1], got " +
                              std::to_string(label_correlation));
}

void Dataset::validate() const {
    const std::size_t M = x.rows();
    const std::size_t V = y.cols();
    if (ids.size() != M)
        throw ValidationError("dataset has " + std::to_string(ids.size()) + " ids for " +
                              std::to_string(M) + " samples");
    require_shape(y, M, V, "labels");
    require_binary(y, "labels");
    if (class_names.size() != V)
        throw ValidationError("dataset has " + std::to_string(class_names.size()) +
                              " class names for " + std::to_string(V) + " classes");
    if (y_clean) {
        require_shape(*y_clean, M, V, "clean labels");
        require_binary(*y_clean, "clean labels");
        check_label_rows(*y_clean, "clean labels");
    } else {
        check_label_rows(y, "labels");
    }
    if (noise_mask) {
        require_shape(*noise_mask, M, V, "noise mask");
        require_binary(*noise_mask, "noise mask");
        if (!y_clean) throw ValidationError("noise mask present without clean labels");
        for (std::size_t k = 0; k < y.size(); ++k) {
            bool differs = y.data()[k] != y_clean->data()[k];
            if (differs != (noise_mask->data()[k] == 1.0))
                throw ValidationError("noise mask disagrees with labels at sample " +
                                      std::to_string(k / V) + ", class " + std::to_string(k % V));
        }
    }
}

std::vector<bool> Dataset::noisy_samples() const {
    std::vector<bool> out(n_samples(), false);
    if (!noise_mask) return out;
    for (std::size_t i = 0; i < out.size(); ++i)
        for (double v : noise_mask->row(i))
            if (v != 0.0) out[i] = true;
    return out;
}

Dataset generate(const GenSpec& spec) {
    spec.validate();
    const LabelModel model = make_label_model(spec);
    const std::size_t d = spec.n_features;
    const std::size_t V = spec.n_classes;

    Rng rng(mix_seed(spec.seed, 1 + spec.stream));
    std::normal_distribution<double> normal(0.0, 1.0);

    Dataset ds;
    ds.seed = spec.seed;
    ds.x = Matrix(spec.n_samples, d);
    ds.y = Matrix(spec.n_samples, V);
    for (std::size_t j = 0; j < V; ++j) ds.class_names.push_back("class_" + std::to_string(j));

    const std::size_t max_draws = 10000 * spec.n_samples;
    std::size_t draws = 0;
    std::vector<double> score(V);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        auto xi = ds.x.row(i);
        while (true) {
            if (++draws > max_draws)
                throw ValidationError("margin " + std::to_string(spec.margin) +
                                      " too large: rejection sampling did not converge");
            for (double& v : xi) v = normal(rng);
            bool ok = true;
            for (std::size_t j = 0; j < V; ++j) {
                score[j] = dot(model.w[j], xi) + model.b[j];
                if (std::abs(score[j]) < spec.margin) ok = false;
            }
            if (ok) break;
        }
        bool any = false;
        for (std::size_t j = 0; j < V; ++j) {
            ds.y(i, j) = score[j] > 0.0 ? 1.0 : 0.0;
            any = any || score[j] > 0.0;
        }
        if (!any) {
            auto best = std::max_element(score.begin(), score.end()) - score.begin();
            ds.y(i, static_cast<std::size_t>(best)) = 1.0;
        }
        ds.ids.push_back(std::to_string(i));
    }
    ds.y_clean = ds.y;
    return ds;
}

Dataset inject_noise(const Dataset& ds, int rate_percent, std::uint64_t seed) {
    if (rate_percent < 0 || rate_percent > 100)
        throw ValidationError("noise rate must be in [0,100], got " + std::to_string(rate_percent));
    if (!ds.y_clean) throw StateError("inject_noise requires clean labels");

    Dataset out = ds;
    const std::size_t M = ds.n_samples();
    const std::size_t V = ds.n_classes();
    out.y = *ds.y_clean;
    out.noise_mask = Matrix(M, V);
    out.noise_rate_percent = rate_percent;
    if (rate_percent == 0) return out;

    const auto n = static_cast<std::size_t>(rate_percent);
    const std::size_t n_rows = std::max<std::size_t>(1, n * M / 100);
    const std::size_t n_cells = std::max<std::size_t>(1, n * V / 100);

    Rng rng(seed);
    for (std::size_t i : sample_indices(M, n_rows, rng)) {
        for (std::size_t j : sample_indices(V, n_cells, rng)) {
            out.y(i, j) = 1.0 - out.y(i, j);
            (*out.noise_mask)(i, j) = 1.0;
        }
    }
    return out;
}

std::filesystem::path csv_path(const std::filesystem::path& stem) {
    auto s = stem.string();
    if (s.size() >= 4 && s.compare(s.size() - 4, 4, ".csv") == 0) return s;
    return s + ".csv";
}

std::filesystem::path manifest_path(const std::filesystem::path& stem) {
    auto s = csv_path(stem).string();
    return s.substr(0, s.size() - 4) + ".manifest.json";
}

void save(const Dataset& ds, const std::filesystem::path& stem) {
    ds.validate();
    const auto csv = csv_path(stem);
    if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());

    std::ofstream out(csv, std::ios::binary);
    if (!out) throw IoError("cannot write " + csv.string());
    const std::size_t d = ds.n_features();
    const std::size_t V = ds.n_classes();
    out << csv_header(d, V, ds.y_clean.has_value(), ds.noise_mask.has_value()) << '\n';
    for (std::size_t i = 0; i < ds.n_samples(); ++i) {
        out << ds.ids[i];
        for (double v : ds.x.row(i)) out << ',' << format_double(v);
        for (double v : ds.y.row(i)) out << ',' << (v != 0.0 ? '1' : '0');
        if (ds.y_clean)
            for (double v : ds.y_clean->row(i)) out << ',' << (v != 0.0 ? '1' : '0');
        if (ds.noise_mask)
            for (double v : ds.noise_mask->row(i)) out << ',' << (v != 0.0 ? '1' : '0');
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + csv.string());

    nlohmann::json manifest = {
        {"n_samples", ds.n_samples()},
        {"n_features", d},
        {"n_classes", V},
        {"class_names", ds.class_names},
        {"seed", ds.seed},
        {"noise_rate_percent", nullptr},
    };
    if (ds.noise_rate_percent) manifest["noise_rate_percent"] = *ds.noise_rate_percent;
    std::ofstream mf(manifest_path(stem));
    if (!mf) throw IoError("cannot write " + manifest_path(stem).string());
    mf << manifest.dump(2) << '\n';
}

Dataset load(const std::filesystem::path& stem) {
    const auto mpath = manifest_path(stem);
    const auto cpath = csv_path(stem);

    std::ifstream mf(mpath);
    if (!mf) throw IoError("cannot open " + mpath.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(mpath.string() + ": " + e.what());
    }
    std::size_t M = 0, d = 0, V = 0;
    Dataset ds;
    try {
        M = manifest.at("n_samples").get<std::size_t>();
        d = manifest.at("n_features").get<std::size_t>();
        V = manifest.at("n_classes").get<std::size_t>();
        ds.class_names = manifest.at("class_names").get<std::vector<std::string>>();
        ds.seed = manifest.value("seed", std::uint64_t{0});
        if (manifest.contains("noise_rate_percent") && !manifest["noise_rate_percent"].is_null())
            ds.noise_rate_percent = manifest["noise_rate_percent"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(mpath.string() + ": bad field: " + e.what());
    }

    std::ifstream in(cpath, std::ios::binary);
    if (!in) throw IoError("cannot open " + cpath.string());
    std::string line;
    if (!std::getline(in, line) || detail::strip_cr(line).empty())
        throw ParseError(cpath.string() + ":1: empty file, expected header");

    const auto header = detail::split(detail::strip_cr(line), ',');
    std::size_t nx = 0, ny = 0, nyc = 0, nnm = 0;
    for (std::size_t k = 1; k < header.size(); ++k) {
        auto h = header[k];
        if (h.starts_with("x_")) ++nx;
        else if (h.starts_with("yc_")) ++nyc;
        else if (h.starts_with("nm_")) ++nnm;
        else if (h.starts_with("y_")) ++ny;
        else throw ParseError(cpath.string() + ":1: unknown column '" + std::string(h) + "'");
    }
    if (header.empty() || header[0] != "id")
        throw ParseError(cpath.string() + ":1: first column must be 'id'");
    if (nx != d) throw ValidationError(cpath.string() + ": header has " + std::to_string(nx) +
                                       " feature columns, manifest says " + std::to_string(d));
    if (ny != V) throw ValidationError(cpath.string() + ": header has " + std::to_string(ny) +
                                       " label columns, manifest says " + std::to_string(V));
    if ((nyc != 0 && nyc != V) || (nnm != 0 && nnm != V))
        throw ValidationError(cpath.string() + ": clean/mask column count does not match " +
                              std::to_string(V) + " classes");
    const auto expected = csv_header(d, V, nyc > 0, nnm > 0);
    if (detail::strip_cr(line) != expected)
        throw ParseError(cpath.string() + ":1: header columns out of order");

    ds.x = Matrix(M, d);
    ds.y = Matrix(M, V);
    if (nyc) ds.y_clean = Matrix(M, V);
    if (nnm) ds.noise_mask = Matrix(M, V);
    const std::size_t ncols = header.size();

    std::size_t row = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        auto sv = detail::strip_cr(line);
        if (sv.empty()) continue;
        if (row >= M)
            throw ValidationError(cpath.string() + ":" + std::to_string(lineno) +
                                  ": more rows than manifest n_samples=" + std::to_string(M));
        auto fields = detail::split(sv, ',');
        if (fields.size() != ncols)
            throw ParseError(cpath.string() + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(ncols) + " fields, got " + std::to_string(fields.size()));
        ds.ids.emplace_back(fields[0]);
        auto field = [&](std::size_t k) {
            auto v = parse_double(fields[k]);
            if (!v)
                throw ParseError(cpath.string() + ":" + std::to_string(lineno) + ": field '" +
                                 std::string(header[k]) + "' is not a number: '" +
                                 std::string(fields[k]) + "'");
            return *v;
        };
        std::size_t k = 1;
        for (std::size_t c = 0; c < d; ++c) ds.x(row, c) = field(k++);
        for (std::size_t c = 0; c < V; ++c) ds.y(row, c) = field(k++);
        if (nyc)
            for (std::size_t c = 0; c < V; ++c) (*ds.y_clean)(row, c) = field(k++);
        if (nnm)
            for (std::size_t c = 0; c < V; ++c) (*ds.noise_mask)(row, c) = field(k++);
        ++row;
    }
    if (row != M)
        throw ValidationError(cpath.string() + ": " + std::to_string(row) +
                              " rows, manifest says " + std::to_string(M));
    ds.validate();
    return ds;
}

} // namespace ccml
