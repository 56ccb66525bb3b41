#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <numeric>
#include <set>

#include "helpers.hpp"
#include "hsi/data.hpp"
#include "hsi/errors.hpp"

using namespace hsi;

namespace {

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    out << text;
}

std::vector<unsigned char> f32le_bytes(const std::vector<float>& values) {
    std::vector<unsigned char> bytes;
    for (const float f : values) {
        std::uint32_t u;
        static_assert(sizeof(u) == sizeof(f));
        std::memcpy(&u, &f, 4);
        bytes.push_back(static_cast<unsigned char>(u & 0xFF));
        bytes.push_back(static_cast<unsigned char>((u >> 8) & 0xFF));
        bytes.push_back(static_cast<unsigned char>((u >> 16) & 0xFF));
        bytes.push_back(static_cast<unsigned char>((u >> 24) & 0xFF));
    }
    return bytes;
}

}  // namespace

TEST_CASE("load_cube reads a 2x2x3 f32le bip cube") {
    testutil::TempDir dir("cube");
    std::vector<float> vals(12);
    for (int i = 0; i < 12; ++i) vals[static_cast<std::size_t>(i)] = static_cast<float>(i) * 0.5f;
    write_bytes(dir.str("small.f32"), f32le_bytes(vals));
    write_text(dir.str("small.hdr.json"),
               R"({"height":2,"width":2,"bands":3,"dtype":"f32le","interleave":"bip","data":"small.f32"})");

    const auto cube = data::load_cube(dir.str("small.hdr.json"));
    CHECK(cube.height == 2);
    CHECK(cube.width == 2);
    CHECK(cube.bands == 3);
    CHECK(cube.at(0, 0, 0) == 0.0);
    CHECK(cube.at(0, 0, 2) == 1.0);
    CHECK(cube.at(1, 1, 2) == doctest::Approx(5.5));
}

TEST_CASE("load_cube accepts an Indian Pines-shaped cube (145x145x200)") {
    testutil::TempDir dir("ipshape");
    const std::size_t n = static_cast<std::size_t>(145) * 145 * 200;
    {
        std::ofstream out(dir.str("ip.f32"), std::ios::binary);
        const std::vector<char> row(200 * 4, 0);  // zero floats, one pixel at a time
        for (std::size_t i = 0; i < n / 200; ++i)
            out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    write_text(dir.str("ip.hdr.json"),
               R"({"height":145,"width":145,"bands":200,"dtype":"f32le","interleave":"bip","data":"ip.f32"})");
    const auto cube = data::load_cube(dir.str("ip.hdr.json"));
    CHECK(cube.height == 145);
    CHECK(cube.width == 145);
    CHECK(cube.bands == 200);
    CHECK(cube.values.size() == n);
}

TEST_CASE("load_cube rejects a raw file one byte short") {
    testutil::TempDir dir("short");
    std::vector<unsigned char> bytes = f32le_bytes(std::vector<float>(12, 1.0f));
    bytes.pop_back();
    write_bytes(dir.str("short.f32"), bytes);
    write_text(dir.str("short.hdr.json"),
               R"({"height":2,"width":2,"bands":3,"dtype":"f32le","interleave":"bip","data":"short.f32"})");
    CHECK_THROWS_AS(data::load_cube(dir.str("short.hdr.json")), DataError);
}

TEST_CASE("load_cube error paths: missing file, unknown dtype, non-finite values") {
    testutil::TempDir dir("errs");
    CHECK_THROWS_AS(data::load_cube(dir.str("nothere.hdr.json")), DataError);

    write_bytes(dir.str("d.f32"), f32le_bytes(std::vector<float>(4, 1.0f)));
    write_text(dir.str("baddtype.hdr.json"),
               R"({"height":2,"width":2,"bands":1,"dtype":"f64le","interleave":"bip","data":"d.f32"})");
    CHECK_THROWS_AS(data::load_cube(dir.str("baddtype.hdr.json")), DataError);

    std::vector<float> nanvals(4, 1.0f);
    nanvals[2] = std::numeric_limits<float>::quiet_NaN();
    write_bytes(dir.str("nan.f32"), f32le_bytes(nanvals));
    write_text(dir.str("nan.hdr.json"),
               R"({"height":2,"width":2,"bands":1,"dtype":"f32le","interleave":"bip","data":"nan.f32"})");
    CHECK_THROWS_AS(data::load_cube(dir.str("nan.hdr.json")), DataError);
}

TEST_CASE("cube save/load round-trip preserves values and shape") {
    testutil::TempDir dir("rt");
    const auto synth = data::generate_synthetic(6, 5, 4, 2, {1}, 0.25, 99);
    data::save_cube(synth.cube, dir.str("c.hdr.json"));
    const auto loaded = data::load_cube(dir.str("c.hdr.json"));
    CHECK(loaded.height == 6);
    CHECK(loaded.width == 5);
    CHECK(loaded.bands == 4);
    // f32 storage quantizes doubles
    CHECK(testutil::max_abs_diff(loaded.values, synth.cube.values) < 1e-6);

    data::save_labels(synth.labels, dir.str("l.hdr.json"));
    const auto labels = data::load_labels(dir.str("l.hdr.json"));
    CHECK(labels.num_classes == 2);
    CHECK(labels.labels == synth.labels.labels);
}

TEST_CASE("csv loader reads one pixel per line") {
    testutil::TempDir dir("csv");
    write_text(dir.str("c.csv"), "1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
    const auto cube = data::load_cube_csv(dir.str("c.csv"), 2, 2);
    CHECK(cube.bands == 3);
    CHECK(cube.at(0, 0, 0) == 1.0);
    CHECK(cube.at(1, 1, 2) == 12.0);
    CHECK_THROWS_AS(data::load_cube_csv(dir.str("c.csv"), 3, 2), DataError);
    CHECK_THROWS_AS(data::load_cube_csv(dir.str("c.csv"), 65, 65), DataError);
}

TEST_CASE("synthetic classes differ only on informative bands") {
    const auto synth = data::generate_synthetic(8, 8, 4, 2, {1}, 0.0, 7);
    // class block means: compare one pixel of each class on every band
    std::size_t p1 = 0, p2 = 0;
    bool found = false;
    for (std::size_t i = 0; i < synth.labels.labels.size() && !found; ++i)
        for (std::size_t j = 0; j < synth.labels.labels.size(); ++j)
            if (synth.labels.labels[i] == 1 && synth.labels.labels[j] == 2) {
                p1 = i;
                p2 = j;
                found = true;
                break;
            }
    REQUIRE(found);
    for (int b = 0; b < 4; ++b) {
        const double v1 = synth.cube.values[p1 * 4 + static_cast<std::size_t>(b)];
        const double v2 = synth.cube.values[p2 * 4 + static_cast<std::size_t>(b)];
        if (b == 1)
            CHECK(v1 != v2);
        else
            CHECK(v1 == v2);
    }
}

TEST_CASE("synthetic with zero noise gives identical spectra within a class") {
    const auto synth = data::generate_synthetic(8, 6, 5, 3, {0, 2}, 0.0, 21);
    const int bands = synth.cube.bands;
    for (std::size_t i = 0; i < synth.labels.labels.size(); ++i)
        for (std::size_t j = i + 1; j < synth.labels.labels.size(); ++j)
            if (synth.labels.labels[i] == synth.labels.labels[j])
                for (int b = 0; b < bands; ++b)
                    REQUIRE(synth.cube.values[i * bands + static_cast<std::size_t>(b)] ==
                            synth.cube.values[j * bands + static_cast<std::size_t>(b)]);
}

TEST_CASE("synthetic generation is bit-deterministic under the seed") {
    const auto a = data::generate_synthetic(10, 9, 6, 3, {2, 4}, 0.3, 1234);
    const auto b = data::generate_synthetic(10, 9, 6, 3, {2, 4}, 0.3, 1234);
    CHECK(a.cube.values == b.cube.values);
    CHECK(a.labels.labels == b.labels.labels);
    const auto c = data::generate_synthetic(10, 9, 6, 3, {2, 4}, 0.3, 1235);
    CHECK(a.cube.values != c.cube.values);
}

TEST_CASE("synthetic rejects degenerate requests") {
    CHECK_THROWS_AS(data::generate_synthetic(8, 8, 4, 2, {}, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(8, 8, 4, 2, {7}, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(8, 8, 4, 1, {1}, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(data::generate_synthetic(3, 8, 4, 5, {1}, 0.0, 1), ConfigError);
}

TEST_CASE("patch extraction: p=1 reproduces the pixel spectra in row-major order") {
    const auto synth = data::generate_synthetic(5, 4, 3, 2, {0}, 0.1, 5);
    const auto patches = data::extract_patches(synth.cube, synth.labels, 1);
    REQUIRE(patches.size() == synth.cube.pixel_count());  // fully labeled
    std::size_t k = 0;
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 4; ++c, ++k) {
            CHECK(patches[k].center_row == r);
            CHECK(patches[k].center_col == c);
            for (int b = 0; b < 3; ++b) CHECK(patches[k].values[b] == synth.cube.at(r, c, b));
        }
}

TEST_CASE("patch extraction: fully unlabeled map yields no patches") {
    const auto synth = data::generate_synthetic(4, 4, 3, 2, {0}, 0.0, 5);
    data::LabelMap empty = synth.labels;
    std::fill(empty.labels.begin(), empty.labels.end(), std::uint16_t{0});
    CHECK(data::extract_patches(synth.cube, empty, 3).empty());
}

TEST_CASE("corner patch mirror entries equal their in-bounds sources") {
    // 3x3 patch at corner (0,0): reflected rows/cols use index 1 (not 0)
    const auto synth = data::generate_synthetic(4, 4, 2, 2, {0}, 0.5, 11);
    const auto& cube = synth.cube;
    const auto p = data::extract_patch_at(cube, 0, 0, 3, 1);
    auto val = [&](int pr, int pc, int b) {
        return p.values[(static_cast<std::size_t>(pr) * 3 + pc) * 2 + static_cast<std::size_t>(b)];
    };
    for (int b = 0; b < 2; ++b) {
        // patch row 0 mirrors cube row 1; patch col 0 mirrors cube col 1
        CHECK(val(0, 0, b) == cube.at(1, 1, b));
        CHECK(val(0, 1, b) == cube.at(1, 0, b));
        CHECK(val(0, 2, b) == cube.at(1, 1, b));
        CHECK(val(1, 0, b) == cube.at(0, 1, b));
        CHECK(val(1, 1, b) == cube.at(0, 0, b));  // center equals the pixel
        CHECK(val(2, 2, b) == cube.at(1, 1, b));
    }
}

TEST_CASE("even patch sizes are rejected") {
    const auto synth = data::generate_synthetic(4, 4, 2, 2, {0}, 0.0, 1);
    CHECK_THROWS_AS(data::extract_patches(synth.cube, synth.labels, 2), ConfigError);
    CHECK_THROWS_AS(data::extract_patches(synth.cube, synth.labels, 0), ConfigError);
}

namespace {

// Indian Pines class populations and training counts, one row per class.
const std::vector<int> kIpSamples = {1434, 834, 234, 497, 747, 489, 968, 2468,
                                     614,  212, 1294, 380, 95,  51,  26,  20};
const std::vector<int> kIpTrain = {144, 84, 24, 50, 75, 49, 97, 247,
                                   62,  22, 130, 38, 50, 6,  13, 10};

data::LabelMap indian_pines_layout() {
    data::LabelMap m;
    m.height = 145;
    m.width = 145;
    m.num_classes = 16;
    m.labels.assign(145 * 145, 0);
    std::size_t pos = 0;
    for (std::size_t c = 0; c < kIpSamples.size(); ++c)
        for (int i = 0; i < kIpSamples[c]; ++i) m.labels[pos++] = static_cast<std::uint16_t>(c + 1);
    return m;
}

}  // namespace

TEST_CASE("split draws per-class counts exactly: Corn-notill 144 of 1434") {
    const auto labels = indian_pines_layout();
    data::SplitSpec spec;
    spec.seed = 2024;
    for (std::size_t c = 0; c < kIpTrain.size(); ++c)
        spec.per_class_train[static_cast<int>(c) + 1] = kIpTrain[c];

    const auto split = data::split(labels, spec);
    std::map<int, int> train_by_class, test_by_class;
    for (const auto idx : split.train) ++train_by_class[labels.labels[static_cast<std::size_t>(idx)]];
    for (const auto idx : split.test) ++test_by_class[labels.labels[static_cast<std::size_t>(idx)]];

    CHECK(train_by_class[1] == 144);
    CHECK(test_by_class[1] == 1290);
    for (std::size_t c = 0; c < kIpTrain.size(); ++c) {
        CHECK(train_by_class[static_cast<int>(c) + 1] == kIpTrain[c]);
        CHECK(test_by_class[static_cast<int>(c) + 1] == kIpSamples[c] - kIpTrain[c]);
    }

    // Totals follow from the per-class rows: 1101 train, 9262 test, 10363
    // labeled pixels overall.
    CHECK(split.train.size() == 1101);
    CHECK(split.test.size() == 9262);
    CHECK(split.train.size() + split.test.size() == 10363);
}

TEST_CASE("split partitions all labeled pixels disjointly") {
    const auto synth = data::generate_synthetic(12, 12, 3, 3, {0}, 0.2, 3);
    data::SplitSpec spec;
    spec.seed = 5;
    spec.per_class_train = {{1, 10}, {2, 7}, {3, 10}};
    const auto split = data::split(synth.labels, spec);

    std::set<std::int64_t> train_set(split.train.begin(), split.train.end());
    std::set<std::int64_t> test_set(split.test.begin(), split.test.end());
    CHECK(train_set.size() == split.train.size());
    for (const auto idx : train_set) CHECK(test_set.count(idx) == 0);

    std::size_t labeled = 0;
    for (const auto v : synth.labels.labels)
        if (v >= 1) ++labeled;
    CHECK(train_set.size() + test_set.size() == labeled);
}

TEST_CASE("split with count equal to class population empties that class's test set") {
    const auto synth = data::generate_synthetic(6, 4, 3, 2, {0}, 0.0, 9);
    std::map<int, std::int64_t> pop;
    for (const auto v : synth.labels.labels) ++pop[v];
    data::SplitSpec spec;
    spec.seed = 1;
    spec.per_class_train = {{1, static_cast<int>(pop[1])}, {2, 0}};
    const auto split = data::split(synth.labels, spec);
    for (const auto idx : split.test)
        CHECK(synth.labels.labels[static_cast<std::size_t>(idx)] == 2);
    for (const auto idx : split.train)
        CHECK(synth.labels.labels[static_cast<std::size_t>(idx)] == 1);
}

TEST_CASE("split rejects counts above the class population") {
    const auto synth = data::generate_synthetic(4, 4, 3, 2, {0}, 0.0, 9);
    data::SplitSpec spec;
    spec.seed = 1;
    spec.per_class_train = {{1, 10000}};
    CHECK_THROWS_AS(data::split(synth.labels, spec), ConfigError);
}

TEST_CASE("split is deterministic and seed-sensitive") {
    const auto labels = indian_pines_layout();
    data::SplitSpec spec;
    spec.seed = 77;
    spec.per_class_train = {{1, 144}, {8, 247}};
    const auto a = data::split(labels, spec);
    const auto b = data::split(labels, spec);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    spec.seed = 78;
    const auto c = data::split(labels, spec);
    CHECK(a.train != c.train);
}

TEST_CASE("undersample caps class sizes at the quota without eliminating classes") {
    // classes sized {144, 6}
    data::LabelMap labels;
    labels.height = 15;
    labels.width = 10;
    labels.num_classes = 2;
    labels.labels.assign(150, 1);
    for (std::size_t i = 144; i < 150; ++i) labels.labels[i] = 2;

    std::vector<std::int64_t> train(150);
    std::iota(train.begin(), train.end(), 0);

    const auto capped = data::undersample(train, labels, 10, 42);
    std::map<int, int> sizes;
    for (const auto idx : capped) ++sizes[labels.labels[static_cast<std::size_t>(idx)]];
    CHECK(sizes[1] == 10);
    CHECK(sizes[2] == 6);

    // quota above all class sizes: identity
    const auto untouched = data::undersample(train, labels, 200, 42);
    CHECK(untouched == train);

    // determinism
    CHECK(data::undersample(train, labels, 10, 42) == capped);
    CHECK(data::undersample(train, labels, 10, 43) != capped);

    CHECK_THROWS_AS(data::undersample(train, labels, 0, 42), ConfigError);
}
