#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "hsi/classifier.hpp"
#include "hsi/data.hpp"
#include "hsi/errors.hpp"

using namespace hsi;
namespace clf = hsi::classifier;

namespace {

clf::Params zero_params(int patch_size, int bands, int hidden, int classes) {
    auto p = testutil::random_params(patch_size, bands, hidden, classes, 0);
    std::fill(p.hidden_weights.begin(), p.hidden_weights.end(), 0.0);
    std::fill(p.hidden_bias.begin(), p.hidden_bias.end(), 0.0);
    std::fill(p.output_weights.begin(), p.output_weights.end(), 0.0);
    std::fill(p.output_bias.begin(), p.output_bias.end(), 0.0);
    return p;
}

std::vector<data::Patch> make_patches(const std::vector<std::vector<double>>& values,
                                      const std::vector<int>& labels, int patch_size, int bands) {
    std::vector<data::Patch> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        data::Patch p;
        p.size = patch_size;
        p.bands = bands;
        p.label = labels[i];
        p.values = values[i];
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

TEST_CASE("zero weights give the uniform distribution") {
    const auto p = zero_params(1, 4, 3, 5);
    const auto probs = clf::forward(p, std::vector<double>{1.0, -2.0, 3.0, 0.5});
    for (const double v : probs) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("bias-only logits reproduce the closed-form softmax") {
    auto p = zero_params(1, 2, 3, 3);
    const double t = 1.3;
    p.output_bias = {t, 0.0, 0.0};
    const auto probs = clf::forward(p, std::vector<double>{0.4, -0.1});
    const double z = std::exp(t) + 2.0;
    CHECK(probs[0] == doctest::Approx(std::exp(t) / z).epsilon(1e-12));
    CHECK(probs[1] == doctest::Approx(1.0 / z).epsilon(1e-12));
    CHECK(probs[2] == doctest::Approx(1.0 / z).epsilon(1e-12));
}

TEST_CASE("softmax outputs are positive and sum to 1 on random instances") {
    for (int trial = 0; trial < 50; ++trial) {
        const auto p = testutil::random_params(3, 4, 6, 4, 100 + trial, 2.0);
        const auto x = testutil::random_vector(static_cast<std::size_t>(p.input_dim()),
                                               200 + trial, -5.0, 5.0);
        const auto probs = clf::forward(p, x);
        double sum = 0.0;
        for (const double v : probs) {
            CHECK(v > 0.0);
            sum += v;
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("loss: near-one-hot predictions give near-zero loss") {
    auto p = zero_params(1, 2, 2, 3);
    p.output_bias = {100.0, 0.0, 0.0};  // class 1 saturated
    const std::vector<double> x = {0.0, 0.0};
    clf::Batch batch{{x.data(), 1}};
    CHECK(clf::loss(p, batch) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("loss: uniform predictions give ln C for any labels") {
    const auto p = zero_params(1, 3, 2, 4);
    const std::vector<double> x = {1.0, 2.0, 3.0};
    for (int label = 1; label <= 4; ++label) {
        clf::Batch batch{{x.data(), label}};
        CHECK(clf::loss(p, batch) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    }
}

TEST_CASE("loss: two-sample batch with true-class probs 0.5 and 0.25") {
    // two classes with logit gap ln(1) = 0 gives p=0.5; four-class uniform
    // would give 0.25 -- build each case from bias-only params
    auto p2 = zero_params(1, 1, 1, 2);
    const std::vector<double> x = {0.0};
    clf::Batch b2{{x.data(), 1}};
    const double l_half = clf::loss(p2, b2);  // ln 2

    auto p4 = zero_params(1, 1, 1, 4);
    clf::Batch b4{{x.data(), 2}};
    const double l_quarter = clf::loss(p4, b4);  // ln 4

    const double mean = 0.5 * (l_half + l_quarter);
    CHECK(mean == doctest::Approx(-(std::log(0.5) + std::log(0.25)) / 2.0).epsilon(1e-12));
    CHECK(mean == doctest::Approx(1.0397).epsilon(1e-4));
}

TEST_CASE("loss rejects empty batches and unlabeled or out-of-range samples") {
    const auto p = zero_params(1, 2, 2, 3);
    clf::Batch empty;
    CHECK_THROWS_AS(clf::loss(p, empty), DataError);
    const std::vector<double> x = {0.0, 0.0};
    clf::Batch bad{{x.data(), 0}};
    CHECK_THROWS_AS(clf::loss(p, bad), DataError);
    clf::Batch high{{x.data(), 4}};
    CHECK_THROWS_AS(clf::loss(p, high), DataError);
}

TEST_CASE("grad_params vanishes at the symmetric zero init with balanced labels") {
    const auto p = zero_params(1, 3, 4, 2);
    const auto x1 = testutil::random_vector(3, 1);
    const auto x2 = testutil::random_vector(3, 2);
    clf::Batch batch{{x1.data(), 1}, {x2.data(), 2}};
    const auto g = clf::grad_params(p, batch);
    for (const double v : g.hidden_weights) CHECK(std::fabs(v) < 1e-8);
    for (const double v : g.hidden_bias) CHECK(std::fabs(v) < 1e-8);
    for (const double v : g.output_weights) CHECK(std::fabs(v) < 1e-8);
    // output bias gradient: mean(p - e_y) = 0 for balanced labels
    for (const double v : g.output_bias) CHECK(std::fabs(v) < 1e-12);
}

TEST_CASE("grad_params matches central finite differences on random instances") {
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        auto p = testutil::random_params(1, 3, 4, 3, 3000 + trial, 0.8);
        // non-identity standardization must be differentiated through too
        for (int b = 0; b < p.input_bands; ++b) {
            p.band_mean[static_cast<std::size_t>(b)] = 0.1 * b;
            p.band_std[static_cast<std::size_t>(b)] = 0.5 + 0.25 * b;
        }
        const auto x1 = testutil::random_vector(3, 4000 + trial);
        const auto x2 = testutil::random_vector(3, 5000 + trial);
        clf::Batch batch{{x1.data(), 1 + trial % 3}, {x2.data(), 1 + (trial + 1) % 3}};
        const auto g = clf::grad_params(p, batch);

        // flatten parameter access: probe a few coordinates of each block
        auto probe = [&](std::vector<double> clf::Params::* block,
                         const std::vector<double>& grad_block, std::size_t idx) {
            auto f = [&](std::span<const double>) { return 0.0; };
            (void)f;
            clf::Params plus = p;
            (plus.*block)[idx] += h;
            clf::Params minus = p;
            (minus.*block)[idx] -= h;
            const double fd =
                (clf::loss(plus, batch) - clf::loss(minus, batch)) / (2.0 * h);
            CHECK(testutil::rel_err(grad_block[idx], fd) < 1e-4);
        };
        probe(&clf::Params::hidden_weights, g.hidden_weights,
              static_cast<std::size_t>(trial) % p.hidden_weights.size());
        probe(&clf::Params::hidden_bias, g.hidden_bias,
              static_cast<std::size_t>(trial) % p.hidden_bias.size());
        probe(&clf::Params::output_weights, g.output_weights,
              static_cast<std::size_t>(trial) % p.output_weights.size());
        probe(&clf::Params::output_bias, g.output_bias,
              static_cast<std::size_t>(trial) % p.output_bias.size());
    }
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged") {
    const auto p = testutil::random_params(1, 4, 5, 3, 77, 0.6);
    const auto x1 = testutil::random_vector(4, 8);
    const auto x2 = testutil::random_vector(4, 9);
    clf::Batch once{{x1.data(), 1}, {x2.data(), 3}};
    clf::Batch twice{{x1.data(), 1}, {x2.data(), 3}, {x1.data(), 1}, {x2.data(), 3}};
    const auto g1 = clf::grad_params(p, once);
    const auto g2 = clf::grad_params(p, twice);
    CHECK(testutil::max_abs_diff(g1.hidden_weights, g2.hidden_weights) < 1e-15);
    CHECK(testutil::max_abs_diff(g1.output_bias, g2.output_bias) < 1e-15);
}

TEST_CASE("grad_input matches central finite differences on random instances") {
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        auto p = testutil::random_params(3, 2, 5, 3, 6000 + trial, 0.7);
        for (int b = 0; b < p.input_bands; ++b)
            p.band_std[static_cast<std::size_t>(b)] = 0.6 + 0.3 * b;
        const int dim = p.input_dim();
        auto x = testutil::random_vector(static_cast<std::size_t>(dim), 7000 + trial);
        const int label = 1 + trial % 3;
        const auto g = clf::grad_input(p, x, label);

        for (int reps = 0; reps < 4; ++reps) {
            const std::size_t i = (static_cast<std::size_t>(trial) * 7 + reps * 5) %
                                  static_cast<std::size_t>(dim);
            auto f = [&](std::span<const double> probe_x) {
                clf::Batch one{{probe_x.data(), label}};
                return clf::loss(p, one);
            };
            const double fd = testutil::central_diff(f, x, i, h);
            CHECK(testutil::rel_err(g[i], fd) < 1e-4);
        }
    }
}

TEST_CASE("grad_input is zero when all weights are zero") {
    const auto p = zero_params(3, 2, 4, 3);
    const auto x = testutil::random_vector(static_cast<std::size_t>(p.input_dim()), 1);
    const auto g = clf::grad_input(p, x, 2);
    for (const double v : g) CHECK(v == 0.0);
}

TEST_CASE("single-coordinate first layer confines the input gradient") {
    auto p = zero_params(1, 4, 2, 3);
    p.hidden_weights[1] = 0.9;  // hidden unit 0 reads input coordinate 1 only
    p.output_weights[0] = 1.2;  // class 1 reads hidden unit 0
    const auto x = testutil::random_vector(4, 3);
    const auto g = clf::grad_input(p, x, 2);
    CHECK(g[1] != 0.0);
    CHECK(g[0] == 0.0);
    CHECK(g[2] == 0.0);
    CHECK(g[3] == 0.0);
}

TEST_CASE("training on a linearly separable set reaches >= 0.99 accuracy") {
    // class 1: band0 around +1; class 2: band0 around -1
    std::vector<std::vector<double>> values;
    std::vector<int> labels;
    Rng rng(404);
    for (int i = 0; i < 60; ++i) {
        const double sign = i % 2 == 0 ? 1.0 : -1.0;
        values.push_back({sign * 1.0 + 0.05 * rng.next_gaussian(),
                          0.3 * rng.next_gaussian()});
        labels.push_back(i % 2 == 0 ? 1 : 2);
    }
    const auto patches = make_patches(values, labels, 1, 2);
    clf::TrainConfig cfg;
    cfg.epochs = 200;
    cfg.learning_rate = 0.1;
    cfg.batch_size = 16;
    cfg.hidden_width = 8;
    cfg.seed = 12;
    const auto params = clf::train(patches, cfg);

    int correct = 0;
    for (std::size_t i = 0; i < patches.size(); ++i)
        if (clf::predict(params, patches[i].values) == patches[i].label) ++correct;
    CHECK(static_cast<double>(correct) / patches.size() >= 0.99);
}

TEST_CASE("epochs = 0 returns the initialization unchanged") {
    const auto synth = data::generate_synthetic(6, 6, 3, 2, {1}, 0.1, 50);
    const auto patches = data::extract_patches(synth.cube, synth.labels, 1);
    clf::TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 9;
    const auto a = clf::train(patches, cfg);
    clf::TrainConfig cfg200 = cfg;
    cfg200.epochs = 0;
    const auto b = clf::train(patches, cfg200);
    CHECK(a.hidden_weights == b.hidden_weights);
    CHECK(a.output_weights == b.output_weights);
    // init is the seeded uniform draw with zero biases
    for (const double v : a.hidden_bias) CHECK(v == 0.0);
    for (const double v : a.output_bias) CHECK(v == 0.0);
}

TEST_CASE("training is bit-deterministic under the seed") {
    const auto synth = data::generate_synthetic(8, 8, 4, 2, {2}, 0.2, 31);
    const auto patches = data::extract_patches(synth.cube, synth.labels, 3);
    clf::TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 1001;
    const auto a = clf::train(patches, cfg);
    const auto b = clf::train(patches, cfg);
    CHECK(a.hidden_weights == b.hidden_weights);
    CHECK(a.hidden_bias == b.hidden_bias);
    CHECK(a.output_weights == b.output_weights);
    CHECK(a.output_bias == b.output_bias);
    cfg.seed = 1002;
    const auto c = clf::train(patches, cfg);
    CHECK(a.hidden_weights != c.hidden_weights);
}

TEST_CASE("full-batch gradient descent never increases the loss at small lr") {
    const auto synth = data::generate_synthetic(6, 4, 3, 2, {0}, 0.3, 88);
    auto patches = data::extract_patches(synth.cube, synth.labels, 1);
    patches.resize(12);
    auto params = testutil::random_params(1, 3, 4, 2, 55, 0.5);
    const auto batch = clf::as_batch(patches);

    double prev = clf::loss(params, batch);
    for (int step = 0; step < 50; ++step) {
        const auto g = clf::grad_params(params, batch);
        const double lr = 1e-3;
        for (std::size_t i = 0; i < params.hidden_weights.size(); ++i)
            params.hidden_weights[i] -= lr * g.hidden_weights[i];
        for (std::size_t i = 0; i < params.hidden_bias.size(); ++i)
            params.hidden_bias[i] -= lr * g.hidden_bias[i];
        for (std::size_t i = 0; i < params.output_weights.size(); ++i)
            params.output_weights[i] -= lr * g.output_weights[i];
        for (std::size_t i = 0; i < params.output_bias.size(); ++i)
            params.output_bias[i] -= lr * g.output_bias[i];
        const double cur = clf::loss(params, batch);
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
}

TEST_CASE("train end loss does not exceed start loss on the same data") {
    const auto synth = data::generate_synthetic(8, 6, 4, 3, {1, 3}, 0.2, 77);
    const auto patches = data::extract_patches(synth.cube, synth.labels, 1);
    clf::TrainConfig cfg;
    cfg.epochs = 30;
    cfg.learning_rate = 0.05;
    cfg.seed = 4;
    clf::TrainConfig init_cfg = cfg;
    init_cfg.epochs = 0;
    const auto start = clf::train(patches, init_cfg);
    const auto done = clf::train(patches, cfg);
    const auto batch = clf::as_batch(patches);
    CHECK(clf::loss(done, batch) <= clf::loss(start, batch));
}

TEST_CASE("predict_map: constant cube gives a constant map") {
    data::HyperCube cube;
    cube.height = 4;
    cube.width = 5;
    cube.bands = 3;
    cube.values.assign(4 * 5 * 3, 0.7);
    const auto p = testutil::random_params(3, 3, 4, 3, 21, 0.5);
    const auto map = clf::predict_map(p, cube, 3);
    for (const auto v : map.labels) CHECK(v == map.labels[0]);
}

TEST_CASE("predict_map: zero params break ties toward class 1") {
    const auto synth = data::generate_synthetic(4, 4, 3, 2, {0}, 0.5, 6);
    const auto p = zero_params(1, 3, 2, 4);
    const auto map = clf::predict_map(p, synth.cube, 1);
    for (const auto v : map.labels) CHECK(v == 1);
}

TEST_CASE("predict_map on trained synthetic blocks recovers the block layout") {
    const auto synth = data::generate_synthetic(16, 16, 8, 2, {3}, 0.05, 313);
    const auto patches = data::extract_patches(synth.cube, synth.labels, 1);
    clf::TrainConfig cfg;
    cfg.epochs = 60;
    cfg.learning_rate = 0.1;
    cfg.seed = 17;
    const auto params = clf::train(patches, cfg);
    const auto map = clf::predict_map(params, synth.cube, 1);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < map.labels.size(); ++i)
        if (map.labels[i] == synth.labels.labels[i]) ++agree;
    CHECK(static_cast<double>(agree) / map.labels.size() >= 0.95);
}

TEST_CASE("predict_map rejects band mismatches") {
    const auto synth = data::generate_synthetic(4, 4, 5, 2, {0}, 0.0, 6);
    const auto p = testutil::random_params(1, 3, 2, 2, 1);
    CHECK_THROWS_AS(clf::predict_map(p, synth.cube, 1), DataError);
}

TEST_CASE("params JSON round-trip is exact") {
    testutil::TempDir dir("params");
    auto p = testutil::random_params(3, 4, 6, 5, 909, 0.4);
    p.band_mean[1] = 0.25;
    p.band_std[2] = 1.5;
    clf::save_params(p, dir.str("p.json"));
    const auto q = clf::load_params(dir.str("p.json"));
    CHECK(q.patch_size == p.patch_size);
    CHECK(q.hidden_weights == p.hidden_weights);
    CHECK(q.output_weights == p.output_weights);
    CHECK(q.band_mean == p.band_mean);
    CHECK(q.band_std == p.band_std);
}
