#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hsi/classifier.hpp"
#include "hsi/data.hpp"
#include "hsi/wavelet.hpp"

namespace hsi::iwgs {

// How the next channel is picked from the mask gradient at each iteration.
//   AbsMin    - smallest |dL/dw_j| (the literal printed rule)
//   SignedMin - most negative dL/dw_j, i.e. the largest first-order loss
//               reduction from admitting the channel
//   AbsMax    - largest |dL/dw_j|
enum class Criterion { AbsMin, SignedMin, AbsMax };

// Whether the initial central channel counts toward the requested budget.
//   Total        - final selected_count == num_bands
//   PaperLiteral - center plus num_bands loop picks (num_bands + 1 total)
enum class BudgetMode { Total, PaperLiteral };

// Which channels the mask indexes: wavelet coefficients of the spectral axis
// (the default) or the raw spectral bands through an identity transform.
enum class Domain { Wavelet, Spectral };

Criterion criterion_from_string(const std::string& name);
std::string criterion_to_string(Criterion c);
BudgetMode budget_mode_from_string(const std::string& name);
std::string budget_mode_to_string(BudgetMode m);
Domain domain_from_string(const std::string& name);
std::string domain_to_string(Domain d);

struct SelectionMask {
    std::vector<std::uint8_t> w;  // one entry per channel, values in {0,1}
    int selected_count = 0;

    std::vector<int> indices() const;  // sorted selected channel indices
    std::vector<double> as_weights() const;
};

struct IwgsConfig {
    int num_bands = 8;  // N_s
    Criterion criterion = Criterion::AbsMin;
    BudgetMode budget_mode = BudgetMode::Total;
    Domain domain = Domain::Wavelet;
    wavelet::Spec wavelet;
    int eval_subset_size = 512;
    std::uint64_t seed = 0;
};

struct TraceRecord {
    int iteration = 0;             // 1-based loop iteration
    int chosen_index = -1;         // j* admitted this iteration
    double loss_before = 0.0;      // loss at the mask before admitting j*
    std::vector<double> gradient;  // full dL/dw vector at that mask
};

struct SelectionTrace {
    std::vector<TraceRecord> records;
};

// Loss and gradient of a scalar objective as a function of relaxed (real)
// channel weights. The greedy loop below is written against this seam; the
// classifier-backed objective is one instance of it.
struct MaskObjective {
    std::function<double(std::span<const double>)> loss;
    std::function<std::vector<double>(std::span<const double>)> gradient;
};

// Channel count the mask ranges over: padded wavelet channels, or raw bands
// in spectral mode.
int channel_count(const data::HyperCube& cube, const IwgsConfig& config);

// Objective used by select(): mean classifier cross-entropy over the masked
// reconstruction of the evaluation patches. eval_pixels are linear pixel
// indices into the cube/labels; patches use the classifier's patch size.
MaskObjective make_classifier_objective(const classifier::Params& params,
                                        const data::HyperCube& cube,
                                        const data::LabelMap& labels,
                                        std::span<const std::int64_t> eval_pixels,
                                        const wavelet::Spec& spec, Domain domain);

// dL/dw at the given relaxed mask, via the adjoint of the linear masked
// reconstruction. Exposed as the core gradient primitive.
std::vector<double> mask_gradient(const classifier::Params& params, const data::HyperCube& cube,
                                  const data::LabelMap& labels,
                                  std::span<const double> mask_weights,
                                  const wavelet::Spec& spec,
                                  std::span<const std::int64_t> eval_pixels,
                                  Domain domain = Domain::Wavelet);

// Greedy loop: start from the central channel, then admit one channel per
// iteration by the criterion's extremum of the mask gradient over the
// unselected channels, ties toward the smaller index.
std::pair<SelectionMask, SelectionTrace> select_greedy(const MaskObjective& objective,
                                                       int num_channels, int budget_total,
                                                       Criterion criterion);

// Full selection against a trained classifier. The evaluation subset is a
// seeded uniform draw of at most eval_subset_size labeled pixels, fixed for
// the whole run.
std::pair<SelectionMask, SelectionTrace> select(const data::HyperCube& cube,
                                                const data::LabelMap& labels,
                                                const classifier::Params& params,
                                                const IwgsConfig& config);

// forward -> zero unselected channels -> inverse. In spectral mode the
// transform is the identity and the mask multiplies raw bands.
data::HyperCube apply_selection(const data::HyperCube& cube, const SelectionMask& mask,
                                const wavelet::Spec& spec, Domain domain = Domain::Wavelet);

// Persistence: mask as a single JSON document, trace as JSON lines.
void save_mask(const SelectionMask& mask, const wavelet::Spec& spec, Domain domain,
               const std::string& path);
struct LoadedMask {
    SelectionMask mask;
    wavelet::Spec spec;
    Domain domain = Domain::Wavelet;
};
LoadedMask load_mask(const std::string& path);
void save_trace(const SelectionTrace& trace, const std::string& path);

}  // namespace hsi::iwgs
