#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hsi/data.hpp"

namespace hsi::classifier {

// One-hidden-layer network over the flattened patch: standardize per band,
// tanh hidden layer, softmax output. Small enough that every gradient the
// selection and attack code needs is exact and hand-checkable.
struct Params {
    int patch_size = 1;
    int input_bands = 0;
    int hidden_width = 0;
    int num_classes = 0;
    std::vector<double> hidden_weights;  // hidden_width x input_dim, row-major
    std::vector<double> hidden_bias;     // hidden_width
    std::vector<double> output_weights;  // num_classes x hidden_width, row-major
    std::vector<double> output_bias;     // num_classes
    // Per-band standardization fitted on the training patches and applied
    // inside forward(); gradients w.r.t. inputs include the 1/std factor.
    std::vector<double> band_mean;
    std::vector<double> band_std;

    int input_dim() const { return patch_size * patch_size * input_bands; }
    void validate() const;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 100;
    int batch_size = 32;
    int hidden_width = 16;
    std::uint64_t seed = 0;
    double weight_init_scale = 1.0;

    void validate() const;
};

// Gradient of the mean loss, shaped like the trainable part of Params.
struct Gradients {
    std::vector<double> hidden_weights;
    std::vector<double> hidden_bias;
    std::vector<double> output_weights;
    std::vector<double> output_bias;
};

// Non-owning view of one training/evaluation sample.
struct SampleView {
    const double* values;  // input_dim() doubles
    int label;             // 1..num_classes
};
using Batch = std::vector<SampleView>;

Batch as_batch(const std::vector<data::Patch>& patches);

// Class probabilities; strictly positive, sums to 1.
std::vector<double> forward(const Params& params, std::span<const double> patch_values);

// argmax class (1-based); ties resolve toward the smaller class index.
int predict(const Params& params, std::span<const double> patch_values);

// Mean cross-entropy of the true classes over the batch.
double loss(const Params& params, const Batch& batch);

Gradients grad_params(const Params& params, const Batch& batch);

// d(loss)/d(input value) for a single sample, in the units of patch_values.
std::vector<double> grad_input(const Params& params, std::span<const double> patch_values,
                               int label);

// Mini-batch SGD from a seeded uniform init. num_classes = 0 infers the
// class count from the largest label in the batch.
Params train(const std::vector<data::Patch>& patches, const TrainConfig& config,
             int num_classes = 0);

// Patch-wise argmax prediction for every pixel (labeled or not).
data::LabelMap predict_map(const Params& params, const data::HyperCube& cube, int patch_size);

// JSON persistence (schema-versioned, flat row-major arrays).
void save_params(const Params& params, const std::string& path);
Params load_params(const std::string& path);

}  // namespace hsi::classifier
