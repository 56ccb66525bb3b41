#include "hsi/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "hsi/errors.hpp"
#include "hsi/rng.hpp"

using nlohmann::json;

namespace hsi::classifier {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;

// Standardized input column for one sample.
Eigen::VectorXd standardize(const Params& p, std::span<const double> x) {
    Eigen::VectorXd z(p.input_dim());
    for (int i = 0; i < p.input_dim(); ++i) {
        const int b = i % p.input_bands;
        z[i] = (x[i] - p.band_mean[b]) / p.band_std[b];
    }
    return z;
}

struct ForwardPass {
    Eigen::VectorXd z;       // standardized input
    Eigen::VectorXd hidden;  // tanh activations
    Eigen::VectorXd logits;
    Eigen::VectorXd probs;
    double sample_loss;  // -log p[label-1]; 0 when label == 0 (not requested)
};

ForwardPass run_forward(const Params& p, std::span<const double> x, int label) {
    ForwardPass fp;
    fp.z = standardize(p, x);
    MapMat w1(p.hidden_weights.data(), p.hidden_width, p.input_dim());
    MapMat w2(p.output_weights.data(), p.num_classes, p.hidden_width);
    MapVec b1(p.hidden_bias.data(), p.hidden_width);
    MapVec b2(p.output_bias.data(), p.num_classes);

    fp.hidden = (w1 * fp.z + b1).array().tanh();
    fp.logits = w2 * fp.hidden + b2;

    const double m = fp.logits.maxCoeff();
    fp.probs = (fp.logits.array() - m).exp();
    const double total = fp.probs.sum();
    fp.probs /= total;

    fp.sample_loss = 0.0;
    if (label >= 1) {
        // log-sum-exp form keeps the loss exact when one logit dominates
        fp.sample_loss = m + std::log(total) - fp.logits[label - 1];
    }
    if (!std::isfinite(fp.sample_loss) || !fp.probs.allFinite())
        throw NumericError("non-finite value in classifier forward pass");
    return fp;
}

void check_values_size(const Params& p, std::size_t n_values) {
    if (n_values != static_cast<std::size_t>(p.input_dim()))
        throw DataError("sample size does not match classifier input dimension");
}

void check_label(const Params& p, int label) {
    if (label < 1 || label > p.num_classes)
        throw DataError("sample label " + std::to_string(label) + " outside [1, " +
                        std::to_string(p.num_classes) + "]");
}

}  // namespace

void Params::validate() const {
    if (patch_size < 1 || patch_size % 2 == 0) throw ConfigError("patch_size must be odd");
    if (input_bands < 1 || hidden_width < 1 || num_classes < 1)
        throw ConfigError("classifier metadata must be positive");
    const auto dim = static_cast<std::size_t>(input_dim());
    if (hidden_weights.size() != dim * hidden_width ||
        hidden_bias.size() != static_cast<std::size_t>(hidden_width) ||
        output_weights.size() != static_cast<std::size_t>(num_classes) * hidden_width ||
        output_bias.size() != static_cast<std::size_t>(num_classes) ||
        band_mean.size() != static_cast<std::size_t>(input_bands) ||
        band_std.size() != static_cast<std::size_t>(input_bands))
        throw ConfigError("classifier parameter shapes inconsistent with metadata");
    auto all_finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    if (!all_finite(hidden_weights) || !all_finite(hidden_bias) || !all_finite(output_weights) ||
        !all_finite(output_bias) || !all_finite(band_mean) || !all_finite(band_std))
        throw NumericError("classifier parameters contain non-finite values");
    for (const double s : band_std)
        if (s <= 0) throw ConfigError("band_std entries must be positive");
}

void TrainConfig::validate() const {
    if (learning_rate <= 0 || epochs < 0 || batch_size < 1 || hidden_width < 1 ||
        weight_init_scale <= 0)
        throw ConfigError("degenerate training configuration");
}

Batch as_batch(const std::vector<data::Patch>& patches) {
    Batch b;
    b.reserve(patches.size());
    for (const auto& p : patches) b.push_back({p.values.data(), p.label});
    return b;
}

std::vector<double> forward(const Params& params, std::span<const double> patch_values) {
    check_values_size(params, patch_values.size());
    const ForwardPass fp = run_forward(params, patch_values, 0);
    return {fp.probs.data(), fp.probs.data() + fp.probs.size()};
}

int predict(const Params& params, std::span<const double> patch_values) {
    const auto probs = forward(params, patch_values);
    int best = 1;
    for (int c = 2; c <= params.num_classes; ++c)
        if (probs[c - 1] > probs[best - 1]) best = c;
    return best;
}

double loss(const Params& params, const Batch& batch) {
    if (batch.empty()) throw DataError("loss over an empty batch");
    double total = 0.0;
    for (const auto& s : batch) {
        check_label(params, s.label);
        total += run_forward(params, {s.values, static_cast<std::size_t>(params.input_dim())},
                             s.label)
                     .sample_loss;
    }
    return total / static_cast<double>(batch.size());
}

Gradients grad_params(const Params& params, const Batch& batch) {
    if (batch.empty()) throw DataError("gradient over an empty batch");
    const int dim = params.input_dim();
    MapMat w2(params.output_weights.data(), params.num_classes, params.hidden_width);

    RowMat gw1 = RowMat::Zero(params.hidden_width, dim);
    Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(params.hidden_width);
    RowMat gw2 = RowMat::Zero(params.num_classes, params.hidden_width);
    Eigen::VectorXd gb2 = Eigen::VectorXd::Zero(params.num_classes);

    for (const auto& s : batch) {
        check_label(params, s.label);
        const ForwardPass fp =
            run_forward(params, {s.values, static_cast<std::size_t>(dim)}, s.label);
        Eigen::VectorXd dlogits = fp.probs;
        dlogits[s.label - 1] -= 1.0;

        gb2 += dlogits;
        gw2 += dlogits * fp.hidden.transpose();
        const Eigen::VectorXd dhidden = w2.transpose() * dlogits;
        const Eigen::VectorXd dpre =
            dhidden.array() * (1.0 - fp.hidden.array().square());
        gb1 += dpre;
        gw1 += dpre * fp.z.transpose();
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Gradients g;
    g.hidden_weights.assign(gw1.data(), gw1.data() + gw1.size());
    g.hidden_bias.assign(gb1.data(), gb1.data() + gb1.size());
    g.output_weights.assign(gw2.data(), gw2.data() + gw2.size());
    g.output_bias.assign(gb2.data(), gb2.data() + gb2.size());
    for (auto* v : {&g.hidden_weights, &g.hidden_bias, &g.output_weights, &g.output_bias})
        for (double& x : *v) x *= inv_n;
    return g;
}

std::vector<double> grad_input(const Params& params, std::span<const double> patch_values,
                               int label) {
    check_values_size(params, patch_values.size());
    check_label(params, label);
    const ForwardPass fp = run_forward(params, patch_values, label);
    MapMat w1(params.hidden_weights.data(), params.hidden_width, params.input_dim());
    MapMat w2(params.output_weights.data(), params.num_classes, params.hidden_width);

    Eigen::VectorXd dlogits = fp.probs;
    dlogits[label - 1] -= 1.0;
    const Eigen::VectorXd dhidden = w2.transpose() * dlogits;
    const Eigen::VectorXd dpre = dhidden.array() * (1.0 - fp.hidden.array().square());
    const Eigen::VectorXd dz = w1.transpose() * dpre;

    std::vector<double> g(static_cast<std::size_t>(params.input_dim()));
    for (int i = 0; i < params.input_dim(); ++i)
        g[i] = dz[i] / params.band_std[i % params.input_bands];
    return g;
}

Params train(const std::vector<data::Patch>& patches, const TrainConfig& config,
             int num_classes) {
    config.validate();
    if (patches.empty()) throw DataError("training set is empty");

    const int patch_size = patches.front().size;
    const int bands = patches.front().bands;
    int max_label = 0;
    for (const auto& p : patches) {
        if (p.size != patch_size || p.bands != bands)
            throw DataError("training patches have mixed shapes");
        if (p.label < 1) throw DataError("unlabeled patch in training set");
        max_label = std::max(max_label, p.label);
    }
    const int classes = num_classes > 0 ? num_classes : max_label;
    if (max_label > classes) throw DataError("patch label exceeds num_classes");

    Params params;
    params.patch_size = patch_size;
    params.input_bands = bands;
    params.hidden_width = config.hidden_width;
    params.num_classes = classes;

    // Per-band standardization statistics over every value in the training
    // patches. Constant bands get unit scale.
    params.band_mean.assign(bands, 0.0);
    params.band_std.assign(bands, 0.0);
    const std::size_t per_band =
        patches.size() * static_cast<std::size_t>(patch_size) * patch_size;
    for (const auto& p : patches)
        for (std::size_t i = 0; i < p.values.size(); ++i)
            params.band_mean[i % bands] += p.values[i];
    for (int b = 0; b < bands; ++b) params.band_mean[b] /= static_cast<double>(per_band);
    for (const auto& p : patches)
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            const double d = p.values[i] - params.band_mean[i % bands];
            params.band_std[i % bands] += d * d;
        }
    for (int b = 0; b < bands; ++b) {
        params.band_std[b] = std::sqrt(params.band_std[b] / static_cast<double>(per_band));
        if (params.band_std[b] < 1e-12) params.band_std[b] = 1.0;
    }

    const int dim = params.input_dim();
    Rng rng(derive_seed(config.seed, "classifier-init"));
    const double s1 = config.weight_init_scale / std::sqrt(static_cast<double>(dim));
    const double s2 = config.weight_init_scale / std::sqrt(static_cast<double>(config.hidden_width));
    params.hidden_weights.resize(static_cast<std::size_t>(config.hidden_width) * dim);
    for (double& w : params.hidden_weights) w = rng.next_range(-s1, s1);
    params.hidden_bias.assign(static_cast<std::size_t>(config.hidden_width), 0.0);
    params.output_weights.resize(static_cast<std::size_t>(classes) * config.hidden_width);
    for (double& w : params.output_weights) w = rng.next_range(-s2, s2);
    params.output_bias.assign(static_cast<std::size_t>(classes), 0.0);
    params.validate();

    Rng shuffle_rng(derive_seed(config.seed, "classifier-shuffle"));
    std::vector<std::size_t> order(patches.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    Batch batch;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i)
                batch.push_back({patches[order[i]].values.data(), patches[order[i]].label});

            const Gradients g = grad_params(params, batch);
            const double lr = config.learning_rate;
            for (std::size_t i = 0; i < params.hidden_weights.size(); ++i)
                params.hidden_weights[i] -= lr * g.hidden_weights[i];
            for (std::size_t i = 0; i < params.hidden_bias.size(); ++i)
                params.hidden_bias[i] -= lr * g.hidden_bias[i];
            for (std::size_t i = 0; i < params.output_weights.size(); ++i)
                params.output_weights[i] -= lr * g.output_weights[i];
            for (std::size_t i = 0; i < params.output_bias.size(); ++i)
                params.output_bias[i] -= lr * g.output_bias[i];
        }
    }
    params.validate();
    return params;
}

data::LabelMap predict_map(const Params& params, const data::HyperCube& cube, int patch_size) {
    if (cube.bands != params.input_bands)
        throw DataError("cube band count does not match classifier input bands");
    if (patch_size != params.patch_size)
        throw DataError("patch size does not match classifier metadata");
    data::LabelMap out;
    out.height = cube.height;
    out.width = cube.width;
    out.num_classes = params.num_classes;
    out.labels.resize(cube.pixel_count());
    for (int r = 0; r < cube.height; ++r)
        for (int c = 0; c < cube.width; ++c) {
            const data::Patch p = data::extract_patch_at(cube, r, c, patch_size, 1);
            out.labels[static_cast<std::size_t>(r) * cube.width + c] =
                static_cast<std::uint16_t>(predict(params, p.values));
        }
    return out;
}

void save_params(const Params& params, const std::string& path) {
    params.validate();
    json j;
    j["version"] = 1;
    j["patch_size"] = params.patch_size;
    j["input_bands"] = params.input_bands;
    j["hidden_width"] = params.hidden_width;
    j["num_classes"] = params.num_classes;
    j["hidden_weights"] = params.hidden_weights;
    j["hidden_bias"] = params.hidden_bias;
    j["output_weights"] = params.output_weights;
    j["output_bias"] = params.output_bias;
    j["band_mean"] = params.band_mean;
    j["band_std"] = params.band_std;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write classifier params: " + path);
    out << j.dump(2) << "\n";
}

Params load_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open classifier params: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed params file " + path + ": " + e.what());
    }
    if (j.value("version", 0) != 1)
        throw ConfigError("unsupported classifier params version in " + path);
    Params p;
    p.patch_size = j.at("patch_size").get<int>();
    p.input_bands = j.at("input_bands").get<int>();
    p.hidden_width = j.at("hidden_width").get<int>();
    p.num_classes = j.at("num_classes").get<int>();
    p.hidden_weights = j.at("hidden_weights").get<std::vector<double>>();
    p.hidden_bias = j.at("hidden_bias").get<std::vector<double>>();
    p.output_weights = j.at("output_weights").get<std::vector<double>>();
    p.output_bias = j.at("output_bias").get<std::vector<double>>();
    p.band_mean = j.at("band_mean").get<std::vector<double>>();
    p.band_std = j.at("band_std").get<std::vector<double>>();
    p.validate();
    return p;
}

}  // namespace hsi::classifier
