#include "ccml/datagen.hpp"
#include "ccml/error.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <fstream>

using namespace ccml;
using ccml::test::scratch_dir;

namespace {

GenSpec small_spec(std::size_t n, std::size_t V, std::uint64_t seed) {
    GenSpec s;
    s.n_samples = n;
    s.n_classes = V;
    s.n_features = 6;
    s.seed = seed;
    return s;
}

double total(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v;
    return s;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

} // namespace

TEST_CASE("generate is a pure function of its settings") {
    const GenSpec s = small_spec(100, 4, 7);
    CHECK(generate(s) == generate(s));
    GenSpec other = s;
    other.seed = 8;
    CHECK_FALSE(generate(s) == generate(other));
}

TEST_CASE("different streams draw different samples of the same task") {
    GenSpec a = small_spec(50, 4, 3);
    GenSpec b = a;
    b.stream = 1;
    CHECK_FALSE(generate(a).x == generate(b).x);
}

TEST_CASE("every generated sample carries at least one label") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset ds = generate(small_spec(300, 8, seed));
        CHECK(ds.y_clean.has_value());
        CHECK(*ds.y_clean == ds.y);
        for (std::size_t i = 0; i < ds.n_samples(); ++i) {
            double row = 0.0;
            for (double v : ds.y.row(i)) row += v;
            CHECK(row >= 1.0);
        }
        CHECK_NOTHROW(ds.validate());
    }
}

TEST_CASE("class frequencies decay across classes") {
    const Dataset ds = generate(small_spec(2000, 8, 1));
    std::vector<double> freq(8, 0.0);
    for (std::size_t i = 0; i < ds.n_samples(); ++i)
        for (std::size_t j = 0; j < 8; ++j) freq[j] += ds.y(i, j);
    CHECK(freq.front() > 2.0 * freq.back());
    CHECK(freq.back() > 0.0);
}

TEST_CASE("generator settings are validated") {
    CHECK_THROWS_AS(generate(small_spec(100, 1, 1)), ValidationError);
    CHECK_THROWS_AS(generate(small_spec(5, 4, 1)), ValidationError);
    GenSpec s = small_spec(100, 4, 1);
    s.margin = 0.0;
    CHECK_THROWS_AS(generate(s), ValidationError);
    s.margin = 0.1;
    s.label_correlation = 1.5;
    CHECK_THROWS_AS(generate(s), ValidationError);
}

TEST_CASE("zero noise leaves labels untouched") {
    const Dataset clean = generate(small_spec(40, 4, 2));
    const Dataset noisy = inject_noise(clean, 0, 9);
    CHECK(noisy.y == clean.y);
    CHECK(total(*noisy.noise_mask) == 0.0);
    CHECK(noisy.noise_rate_percent == 0);
}

TEST_CASE("50% noise on 10 samples x 4 classes alters 5 samples in 2 cells each") {
    const Dataset clean = generate(small_spec(10, 4, 3));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset noisy = inject_noise(clean, 50, seed);
        CHECK(total(*noisy.noise_mask) == 10.0);
        std::size_t altered = 0;
        for (std::size_t i = 0; i < 10; ++i) {
            double row = 0.0;
            for (double v : noisy.noise_mask->row(i)) row += v;
            if (row > 0.0) {
                ++altered;
                CHECK(row == 2.0);
            }
        }
        CHECK(altered == 5);
    }
}

TEST_CASE("small rates still alter one cell of one sample") {
    const Dataset clean = generate(small_spec(20, 4, 3));
    const Dataset noisy = inject_noise(clean, 1, 4);
    CHECK(total(*noisy.noise_mask) == 1.0);
}

TEST_CASE("property: the noise mask records exactly the changed cells") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 10 + rng() % 60;
        const std::size_t V = 2 + rng() % 9;
        const int rate = static_cast<int>(rng() % 101);
        const Dataset clean = generate(small_spec(n, V, 100 + trial));
        const Dataset noisy = inject_noise(clean, rate, rng());
        for (std::size_t k = 0; k < noisy.y.size(); ++k) {
            const bool changed = noisy.y.data()[k] != clean.y.data()[k];
            CHECK(changed == (noisy.noise_mask->data()[k] == 1.0));
        }
        CHECK(noisy.x == clean.x);
        CHECK(*noisy.y_clean == clean.y);
        CHECK_NOTHROW(noisy.validate());
    }
}

TEST_CASE("property: higher rates flip strictly more cells when the count formula says so") {
    const Dataset clean = generate(small_spec(60, 8, 5));
    auto expected = [&](int r) {
        const std::size_t rows = std::max<std::size_t>(1, static_cast<std::size_t>(r) * 60 / 100);
        const std::size_t cells = std::max<std::size_t>(1, static_cast<std::size_t>(r) * 8 / 100);
        return r == 0 ? 0.0 : static_cast<double>(rows * cells);
    };
    for (int r1 = 0; r1 <= 100; r1 += 10) {
        for (int r2 = r1 + 5; r2 <= 100; r2 += 15) {
            const double c1 = total(*inject_noise(clean, r1, 1).noise_mask);
            const double c2 = total(*inject_noise(clean, r2, 2).noise_mask);
            CHECK(c1 == expected(r1));
            CHECK(c2 == expected(r2));
            if (expected(r1) < expected(r2)) CHECK(c1 < c2);
        }
    }
}

TEST_CASE("noise injection needs clean labels and a valid rate") {
    Dataset ds = generate(small_spec(20, 3, 1));
    CHECK_THROWS_AS(inject_noise(ds, 101, 1), ValidationError);
    CHECK_THROWS_AS(inject_noise(ds, -1, 1), ValidationError);
    ds.y_clean.reset();
    CHECK_THROWS_AS(inject_noise(ds, 10, 1), StateError);
}

TEST_CASE("noisy_samples marks rows with any injected flip") {
    const Dataset noisy = inject_noise(generate(small_spec(20, 4, 1)), 30, 2);
    const auto rows = noisy.noisy_samples();
    std::size_t count = 0;
    for (bool b : rows) count += b;
    CHECK(count == 6);
}

TEST_CASE("save then load round-trips clean and noisy datasets exactly") {
    const auto dir = scratch_dir("datagen_roundtrip");
    const Dataset clean = generate(small_spec(37, 5, 4));
    save(clean, dir / "clean");
    CHECK(load(dir / "clean") == clean);

    const Dataset noisy = inject_noise(clean, 40, 6);
    save(noisy, dir / "noisy.csv");
    CHECK(load(dir / "noisy") == noisy);
    CHECK(std::filesystem::exists(dir / "noisy.manifest.json"));
}

TEST_CASE("label columns must match the manifest") {
    const auto dir = scratch_dir("datagen_shape");
    GenSpec s = small_spec(10, 3, 1);
    save(generate(s), dir / "d");
    std::string csv = ccml::test::read_file(dir / "d.csv");
    // Add a fourth label column to the header and every row.
    std::string patched;
    std::size_t start = 0;
    bool header = true;
    while (start < csv.size()) {
        const std::size_t end = csv.find('\n', start);
        std::string line = csv.substr(start, end - start);
        patched += line + (header ? ",y_3" : ",0") + "\n";
        header = false;
        start = end + 1;
    }
    write_text(dir / "d.csv", patched);
    CHECK_THROWS_AS(load(dir / "d"), ValidationError);
}

TEST_CASE("load failures") {
    const auto dir = scratch_dir("datagen_errors");
    save(generate(small_spec(10, 3, 1)), dir / "d");

    SUBCASE("empty file is a parse error") {
        write_text(dir / "d.csv", "");
        CHECK_THROWS_AS(load(dir / "d"), ParseError);
    }
    SUBCASE("bad number names the line") {
        std::string csv = ccml::test::read_file(dir / "d.csv");
        const std::size_t second = csv.find('\n', csv.find('\n') + 1);
        csv.insert(second, "x");
        write_text(dir / "d.csv", csv);
        try {
            load(dir / "d");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SUBCASE("missing file is an I/O error") {
        CHECK_THROWS_AS(load(dir / "absent"), IoError);
    }
    SUBCASE("malformed manifest is a parse error") {
        write_text(dir / "d.manifest.json", "{not json");
        CHECK_THROWS_AS(load(dir / "d"), ParseError);
    }
}
