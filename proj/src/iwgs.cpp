#include "hsi/iwgs.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>

#include <json.hpp>

#include "hsi/errors.hpp"
#include "hsi/rng.hpp"

using nlohmann::json;

namespace hsi::iwgs {

Criterion criterion_from_string(const std::string& name) {
    if (name == "abs_min") return Criterion::AbsMin;
    if (name == "signed_min") return Criterion::SignedMin;
    if (name == "abs_max") return Criterion::AbsMax;
    throw ConfigError("unknown criterion \"" + name + "\"");
}

std::string criterion_to_string(Criterion c) {
    switch (c) {
        case Criterion::AbsMin: return "abs_min";
        case Criterion::SignedMin: return "signed_min";
        case Criterion::AbsMax: return "abs_max";
    }
    return "abs_min";
}

BudgetMode budget_mode_from_string(const std::string& name) {
    if (name == "total") return BudgetMode::Total;
    if (name == "paper_literal") return BudgetMode::PaperLiteral;
    throw ConfigError("unknown budget mode \"" + name + "\"");
}

std::string budget_mode_to_string(BudgetMode m) {
    return m == BudgetMode::Total ? "total" : "paper_literal";
}

Domain domain_from_string(const std::string& name) {
    if (name == "wavelet") return Domain::Wavelet;
    if (name == "spectral") return Domain::Spectral;
    throw ConfigError("unknown selection domain \"" + name + "\"");
}

std::string domain_to_string(Domain d) {
    return d == Domain::Wavelet ? "wavelet" : "spectral";
}

std::vector<int> SelectionMask::indices() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < w.size(); ++j)
        if (w[j]) out.push_back(static_cast<int>(j));
    return out;
}

std::vector<double> SelectionMask::as_weights() const {
    std::vector<double> out(w.size());
    for (std::size_t j = 0; j < w.size(); ++j) out[j] = w[j] ? 1.0 : 0.0;
    return out;
}

int channel_count(const data::HyperCube& cube, const IwgsConfig& config) {
    if (config.domain == Domain::Spectral) return cube.bands;
    wavelet::validate_spec(config.wavelet, cube.bands);
    return wavelet::padded_length(cube.bands, config.wavelet.levels);
}

namespace {

// Evaluation patches lifted into channel space once; iterations only
// re-weight and invert them.
struct EvalSet {
    int patch_size = 0;
    int bands = 0;     // B
    int channels = 0;  // B'
    wavelet::Spec spec;
    Domain domain = Domain::Wavelet;
    std::vector<int> labels;
    // per patch: patch_size^2 spectra of `channels` coefficients each
    std::vector<std::vector<double>> channel_patches;
};

std::shared_ptr<EvalSet> build_eval_set(const classifier::Params& params,
                                        const data::HyperCube& cube,
                                        const data::LabelMap& labels,
                                        std::span<const std::int64_t> eval_pixels,
                                        const wavelet::Spec& spec, Domain domain) {
    if (eval_pixels.empty()) throw DataError("IWGS evaluation subset is empty");
    if (cube.bands != params.input_bands)
        throw DataError("classifier bands do not match cube bands");
    if (cube.height != labels.height || cube.width != labels.width)
        throw DataError("cube and label map shapes differ");

    auto set = std::make_shared<EvalSet>();
    set->patch_size = params.patch_size;
    set->bands = cube.bands;
    set->domain = domain;
    set->spec = spec;
    set->channels = domain == Domain::Spectral
                        ? cube.bands
                        : wavelet::padded_length(cube.bands, spec.levels);
    if (domain == Domain::Wavelet) wavelet::validate_spec(spec, cube.bands);

    const int p = params.patch_size;
    const int np = p * p;
    for (const std::int64_t idx : eval_pixels) {
        if (idx < 0 || idx >= static_cast<std::int64_t>(cube.pixel_count()))
            throw DataError("evaluation pixel index out of range");
        const int r = static_cast<int>(idx / cube.width);
        const int c = static_cast<int>(idx % cube.width);
        const int label = labels.labels[static_cast<std::size_t>(idx)];
        if (label < 1) throw DataError("unlabeled pixel in evaluation subset");
        set->labels.push_back(label);

        const data::Patch raw = data::extract_patch_at(cube, r, c, p, label);
        std::vector<double> chan(static_cast<std::size_t>(np) * set->channels);
        for (int q = 0; q < np; ++q) {
            std::span<const double> spectrum(raw.values.data() +
                                                 static_cast<std::size_t>(q) * set->bands,
                                             static_cast<std::size_t>(set->bands));
            double* dst = chan.data() + static_cast<std::size_t>(q) * set->channels;
            if (domain == Domain::Spectral) {
                std::memcpy(dst, spectrum.data(), sizeof(double) * set->bands);
            } else if (set->channels == set->bands) {
                wavelet::forward_1d(spectrum, {dst, static_cast<std::size_t>(set->channels)},
                                    spec);
            } else {
                const std::vector<double> padded = wavelet::pad_spectrum(spectrum, spec.levels);
                wavelet::forward_1d(padded, {dst, static_cast<std::size_t>(set->channels)},
                                    spec);
            }
        }
        set->channel_patches.push_back(std::move(chan));
    }
    return set;
}

// Weighted inverse of one channel-space patch into raw B-band patch values.
void reconstruct_patch(const EvalSet& set, const std::vector<double>& chan,
                       std::span<const double> weights, std::vector<double>& out,
                       std::vector<double>& scratch) {
    const int np = set.patch_size * set.patch_size;
    out.resize(static_cast<std::size_t>(np) * set.bands);
    if (set.domain == Domain::Spectral) {
        for (int q = 0; q < np; ++q)
            for (int b = 0; b < set.bands; ++b)
                out[static_cast<std::size_t>(q) * set.bands + b] =
                    chan[static_cast<std::size_t>(q) * set.channels + b] * weights[b];
        return;
    }
    scratch.resize(static_cast<std::size_t>(set.channels) * 2);
    double* weighted = scratch.data();
    double* full = scratch.data() + set.channels;
    for (int q = 0; q < np; ++q) {
        const double* src = chan.data() + static_cast<std::size_t>(q) * set.channels;
        for (int j = 0; j < set.channels; ++j) weighted[j] = src[j] * weights[j];
        wavelet::inverse_1d({weighted, static_cast<std::size_t>(set.channels)},
                            {full, static_cast<std::size_t>(set.channels)}, set.spec);
        std::memcpy(out.data() + static_cast<std::size_t>(q) * set.bands, full,
                    sizeof(double) * set.bands);
    }
}

MaskObjective make_objective(const classifier::Params& params, std::shared_ptr<EvalSet> set) {
    const auto n = static_cast<double>(set->labels.size());
    MaskObjective obj;
    obj.loss = [params, set, n](std::span<const double> weights) {
        if (weights.size() != static_cast<std::size_t>(set->channels))
            throw ConfigError("mask length does not match channel count");
        std::vector<double> patch, scratch;
        double total = 0.0;
        for (std::size_t i = 0; i < set->channel_patches.size(); ++i) {
            reconstruct_patch(*set, set->channel_patches[i], weights, patch, scratch);
            classifier::Batch one{{patch.data(), set->labels[i]}};
            total += classifier::loss(params, one);
        }
        return total / n;
    };
    obj.gradient = [params, set, n](std::span<const double> weights) {
        if (weights.size() != static_cast<std::size_t>(set->channels))
            throw ConfigError("mask length does not match channel count");
        const int np = set->patch_size * set->patch_size;
        std::vector<double> grad(static_cast<std::size_t>(set->channels), 0.0);
        std::vector<double> patch, scratch;
        std::vector<double> padded(static_cast<std::size_t>(set->channels), 0.0);
        std::vector<double> chan_grad(static_cast<std::size_t>(set->channels));
        for (std::size_t i = 0; i < set->channel_patches.size(); ++i) {
            reconstruct_patch(*set, set->channel_patches[i], weights, patch, scratch);
            const std::vector<double> g =
                classifier::grad_input(params, patch, set->labels[i]);
            const std::vector<double>& chan = set->channel_patches[i];
            for (int q = 0; q < np; ++q) {
                const double* gq = g.data() + static_cast<std::size_t>(q) * set->bands;
                const double* cq = chan.data() + static_cast<std::size_t>(q) * set->channels;
                if (set->domain == Domain::Spectral) {
                    for (int b = 0; b < set->bands; ++b) grad[b] += gq[b] * cq[b];
                } else {
                    // adjoint of strip-then-invert: zero-pad, then analyze
                    std::fill(padded.begin(), padded.end(), 0.0);
                    std::memcpy(padded.data(), gq, sizeof(double) * set->bands);
                    wavelet::forward_1d(padded, chan_grad, set->spec);
                    for (int j = 0; j < set->channels; ++j) grad[j] += chan_grad[j] * cq[j];
                }
            }
        }
        for (double& v : grad) v /= n;
        return grad;
    };
    return obj;
}

}  // namespace

MaskObjective make_classifier_objective(const classifier::Params& params,
                                        const data::HyperCube& cube,
                                        const data::LabelMap& labels,
                                        std::span<const std::int64_t> eval_pixels,
                                        const wavelet::Spec& spec, Domain domain) {
    return make_objective(params, build_eval_set(params, cube, labels, eval_pixels, spec, domain));
}

std::vector<double> mask_gradient(const classifier::Params& params, const data::HyperCube& cube,
                                  const data::LabelMap& labels,
                                  std::span<const double> mask_weights,
                                  const wavelet::Spec& spec,
                                  std::span<const std::int64_t> eval_pixels, Domain domain) {
    const MaskObjective obj =
        make_classifier_objective(params, cube, labels, eval_pixels, spec, domain);
    return obj.gradient(mask_weights);
}

std::pair<SelectionMask, SelectionTrace> select_greedy(const MaskObjective& objective,
                                                       int num_channels, int budget_total,
                                                       Criterion criterion) {
    if (num_channels < 1) throw ConfigError("channel count must be positive");
    if (budget_total < 1 || budget_total > num_channels)
        throw ConfigError("selection budget " + std::to_string(budget_total) +
                          " outside [1, " + std::to_string(num_channels) + "]");

    SelectionMask mask;
    mask.w.assign(static_cast<std::size_t>(num_channels), 0);
    mask.w[static_cast<std::size_t>(num_channels / 2)] = 1;  // central channel
    mask.selected_count = 1;

    SelectionTrace trace;
    std::vector<double> weights = mask.as_weights();
    for (int iter = 1; mask.selected_count < budget_total; ++iter) {
        TraceRecord rec;
        rec.iteration = iter;
        rec.loss_before = objective.loss(weights);
        rec.gradient = objective.gradient(weights);
        if (rec.gradient.size() != static_cast<std::size_t>(num_channels))
            throw DataError("mask gradient length mismatch");
        if (!std::isfinite(rec.loss_before))
            throw NumericError("non-finite loss during selection");

        int best = -1;
        double best_score = 0.0;
        for (int j = 0; j < num_channels; ++j) {
            if (mask.w[static_cast<std::size_t>(j)]) continue;
            const double gj = rec.gradient[static_cast<std::size_t>(j)];
            if (!std::isfinite(gj)) throw NumericError("non-finite mask gradient component");
            double score = 0.0;
            switch (criterion) {
                case Criterion::AbsMin: score = std::fabs(gj); break;
                case Criterion::SignedMin: score = gj; break;
                case Criterion::AbsMax: score = -std::fabs(gj); break;
            }
            if (best < 0 || score < best_score) {  // strict: ties keep smaller index
                best = j;
                best_score = score;
            }
        }
        rec.chosen_index = best;
        trace.records.push_back(std::move(rec));
        mask.w[static_cast<std::size_t>(best)] = 1;
        weights[static_cast<std::size_t>(best)] = 1.0;
        ++mask.selected_count;
    }
    return {std::move(mask), std::move(trace)};
}

std::pair<SelectionMask, SelectionTrace> select(const data::HyperCube& cube,
                                                const data::LabelMap& labels,
                                                const classifier::Params& params,
                                                const IwgsConfig& config) {
    if (config.num_bands < 1) throw ConfigError("num_bands must be >= 1");
    const int channels = channel_count(cube, config);
    const int budget_total =
        config.budget_mode == BudgetMode::Total ? config.num_bands : config.num_bands + 1;
    if (budget_total > channels)
        throw ConfigError("selection budget exceeds channel count " + std::to_string(channels));
    if (config.eval_subset_size < 1) throw ConfigError("eval_subset_size must be >= 1");

    std::vector<std::int64_t> labeled;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        if (labels.labels[i] >= 1) labeled.push_back(static_cast<std::int64_t>(i));
    if (labeled.empty()) throw DataError("no labeled pixels available for selection");

    if (labeled.size() > static_cast<std::size_t>(config.eval_subset_size)) {
        Rng rng(derive_seed(config.seed, "iwgs-eval"));
        rng.shuffle(labeled);
        labeled.resize(static_cast<std::size_t>(config.eval_subset_size));
        std::sort(labeled.begin(), labeled.end());
    }

    const MaskObjective obj = make_classifier_objective(params, cube, labels, labeled,
                                                        config.wavelet, config.domain);
    return select_greedy(obj, channels, budget_total, config.criterion);
}

data::HyperCube apply_selection(const data::HyperCube& cube, const SelectionMask& mask,
                                const wavelet::Spec& spec, Domain domain) {
    if (domain == Domain::Spectral) {
        if (mask.w.size() != static_cast<std::size_t>(cube.bands))
            throw ConfigError("mask length does not match band count");
        data::HyperCube out = cube;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            if (!mask.w[i % cube.bands]) out.values[i] = 0.0;
        return out;
    }
    const wavelet::CoeffCube coeffs = wavelet::forward(cube, spec);
    return wavelet::masked_reconstruct(coeffs, mask.as_weights(), spec);
}

void save_mask(const SelectionMask& mask, const wavelet::Spec& spec, Domain domain,
               const std::string& path) {
    json j;
    j["version"] = 1;
    j["wavelet"] = {{"family", wavelet::family_to_string(spec.family)},
                    {"levels", spec.levels}};
    j["domain"] = domain_to_string(domain);
    j["num_channels"] = static_cast<int>(mask.w.size());
    j["indices"] = mask.indices();
    std::ofstream out(path);
    if (!out) throw DataError("cannot write mask: " + path);
    out << j.dump(2) << "\n";
}

LoadedMask load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mask: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed mask file " + path + ": " + e.what());
    }
    if (j.value("version", 0) != 1) throw ConfigError("unsupported mask version in " + path);
    LoadedMask out;
    out.spec.family = wavelet::family_from_string(j.at("wavelet").at("family").get<std::string>());
    out.spec.levels = j.at("wavelet").at("levels").get<int>();
    out.domain = domain_from_string(j.at("domain").get<std::string>());
    const int channels = j.at("num_channels").get<int>();
    if (channels < 1) throw DataError("mask channel count must be positive");
    out.mask.w.assign(static_cast<std::size_t>(channels), 0);
    for (const int idx : j.at("indices").get<std::vector<int>>()) {
        if (idx < 0 || idx >= channels) throw DataError("mask index out of range in " + path);
        out.mask.w[static_cast<std::size_t>(idx)] = 1;
    }
    out.mask.selected_count = static_cast<int>(out.mask.indices().size());
    return out;
}

void save_trace(const SelectionTrace& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write trace: " + path);
    for (const auto& rec : trace.records) {
        json j;
        j["iteration"] = rec.iteration;
        j["chosen_index"] = rec.chosen_index;
        j["loss_before"] = rec.loss_before;
        j["gradient"] = rec.gradient;
        out << j.dump() << "\n";
    }
}

}  // namespace hsi::iwgs
