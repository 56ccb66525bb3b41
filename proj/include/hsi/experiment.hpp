#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hsi/adversarial.hpp"
#include "hsi/classifier.hpp"
#include "hsi/data.hpp"
#include "hsi/iwgs.hpp"
#include "hsi/metrics.hpp"

namespace hsi::experiment {

struct SyntheticSpec {
    int height = 16;
    int width = 16;
    int bands = 8;
    int num_classes = 2;
    std::set<int> informative_bands;
    double noise_sigma = 0.0;
};

// Either a synthetic cube or a pair of header files on disk.
struct DataSource {
    std::optional<SyntheticSpec> synthetic;
    std::string cube_header;
    std::string labels_header;
};

// One JSON document drives every pipeline stage. All stage seeds derive from
// the single master seed; unknown config keys are rejected outright.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    DataSource data;
    std::map<int, int> per_class_train;  // explicit counts; empty -> train_per_class
    int train_per_class = 0;
    classifier::TrainConfig train;
    iwgs::IwgsConfig iwgs;
    adversarial::AttackConfig attack;
    int patch_size = 3;
    std::vector<int> patch_sizes = {1, 3, 5, 7, 9, 11, 13, 15};
    int quota = 50;    // per-class cap for the robustness protocol
    int repeats = 1;   // robustness averaging
    std::string output_dir = "out";

    void validate() const;
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin);
std::string config_to_json_text(const ExperimentConfig& config);

// FNV-1a over the canonical serialization; stable across re-serialization.
std::string config_hash(const ExperimentConfig& config);

struct Dataset {
    data::HyperCube cube;
    data::LabelMap labels;
};

// Generates or loads the configured dataset; when persist is true the
// synthetic cube/labels are written under out_dir.
Dataset obtain_dataset(const ExperimentConfig& config, const std::string& out_dir, bool persist);

data::SplitSpec resolve_split_spec(const ExperimentConfig& config, const data::LabelMap& labels);

void save_split(const data::Split& split, const std::string& path);
data::Split load_split(const std::string& path);

// Confusion over the test pixels of `eval_cube`. A non-null attack perturbs
// every test patch with compound noise+PGD first, using per-pixel seeds
// derived from attack_seed so results are independent of evaluation order.
metrics::ConfusionMatrix evaluate(const classifier::Params& params,
                                  const data::HyperCube& eval_cube,
                                  const data::LabelMap& labels,
                                  std::span<const std::int64_t> test_pixels, int patch_size,
                                  const adversarial::AttackConfig* attack,
                                  std::uint64_t attack_seed);

std::vector<std::string> default_class_names(int num_classes);

struct PipelineResult {
    std::string config_hash;
    metrics::Report full_clean;       // baseline params, all channels
    metrics::Report selected_clean;   // retrained on the masked cube
    metrics::Report selected_attacked;
    iwgs::SelectionMask mask;
    std::map<std::string, std::string> artifacts;  // stage name -> file path
};

// split -> train baseline -> select -> retrain on masked cube -> evaluate
// clean and attacked -> render maps. Every artifact lands under out_dir.
// apply_quota caps per-class training counts at config.quota first.
PipelineResult run_pipeline(const ExperimentConfig& config, const std::string& out_dir,
                            bool apply_quota = false);
PipelineResult run_pipeline(const ExperimentConfig& config);

// --- Stage entry points ------------------------------------------------
//
// Each stage loads its artifact from out_dir when already present and
// computes + persists it otherwise, so deleting a downstream artifact and
// re-running resumes from the persisted upstream state. Determinism makes
// resumed and recomputed runs byte-identical.

Dataset stage_data(const ExperimentConfig& config, const std::string& out_dir);
data::Split stage_split(const ExperimentConfig& config, const Dataset& ds,
                        const std::string& out_dir);
classifier::Params stage_train(const ExperimentConfig& config, const Dataset& ds,
                               const data::Split& split, const std::string& out_dir);
iwgs::LoadedMask stage_select(const ExperimentConfig& config, const Dataset& ds,
                              const data::Split& split, const classifier::Params& full_params,
                              const std::string& out_dir);
classifier::Params stage_retrain(const ExperimentConfig& config, const Dataset& ds,
                                 const data::Split& split, const iwgs::LoadedMask& mask,
                                 const std::string& out_dir);
// Always recomputed; writes report_selected_clean.* / report_selected_attacked.*.
metrics::Report stage_eval(const ExperimentConfig& config, const Dataset& ds,
                           const data::Split& split, const iwgs::LoadedMask& mask,
                           const classifier::Params& sel_params, const std::string& out_dir,
                           bool attacked);

struct SweepTable {
    std::vector<std::string> row_names;
    std::vector<std::string> col_names;              // "P1", "P3", ...
    std::vector<std::vector<double>> values;         // fractions; NaN renders n/a
};

std::string sweep_to_csv(const SweepTable& table);
std::string sweep_to_markdown(const SweepTable& table);

// Clean selected-pipeline accuracy per patch size: class rows plus OA and
// Kappa summary rows.
SweepTable patch_sweep(const ExperimentConfig& config);

struct RobustnessResult {
    SweepTable attacked;  // single "Kappa (%)" row, averaged over repeats
    SweepTable clean;     // same shape, no attack
};

RobustnessResult robustness_sweep(const ExperimentConfig& config);

// Indexed-color PNG, one distinct color per class, black for unlabeled.
void render_map(const data::LabelMap& map, std::uint64_t palette_seed,
                const std::string& path);

}  // namespace hsi::experiment
