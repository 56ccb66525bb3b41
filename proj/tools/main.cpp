// hsiband: wavelet-domain band selection for hyperspectral classification.
//
// Subcommands cover the full pipeline from synthetic data generation through
// selection, evaluation, attacks, and the patch-size sweeps. Every stage is
// deterministic under the config seed; stage artifacts land under --out and
// are reused when already present.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hsi/errors.hpp"
#include "hsi/experiment.hpp"
#include "hsi/rng.hpp"

namespace fs = std::filesystem;
using namespace hsi;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;

    // per-command overrides mirroring config fields
    std::optional<int> patch_size;
    std::optional<int> ns;
    std::optional<std::string> criterion;
    std::optional<double> epsilon;
    std::optional<double> alpha;
    std::optional<int> steps;
    std::optional<double> noise_sigma;
    std::optional<int> quota;
};

experiment::ExperimentConfig resolve_config(const GlobalOpts& opts) {
    if (opts.config_path.empty()) throw ConfigError("--config <path> is required");
    experiment::ExperimentConfig cfg = experiment::load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.patch_size) cfg.patch_size = *opts.patch_size;
    if (opts.ns) cfg.iwgs.num_bands = *opts.ns;
    if (opts.criterion) cfg.iwgs.criterion = iwgs::criterion_from_string(*opts.criterion);
    if (opts.epsilon) cfg.attack.epsilon = *opts.epsilon;
    if (opts.alpha) cfg.attack.alpha = *opts.alpha;
    if (opts.steps) cfg.attack.steps = *opts.steps;
    if (opts.noise_sigma) cfg.attack.noise_sigma = *opts.noise_sigma;
    if (opts.quota) cfg.quota = *opts.quota;
    cfg.validate();
    const std::string warning = cfg.attack.validate();
    if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
    return cfg;
}

void add_overrides(CLI::App* cmd, GlobalOpts& opts) {
    cmd->add_option("--patch-size", opts.patch_size, "patch side length (odd)");
    cmd->add_option("--ns", opts.ns, "number of selected channels N_s");
    cmd->add_option("--criterion", opts.criterion, "abs_min | signed_min | abs_max");
    cmd->add_option("--epsilon", opts.epsilon, "PGD l-inf radius");
    cmd->add_option("--alpha", opts.alpha, "PGD step size");
    cmd->add_option("--steps", opts.steps, "PGD iterations");
    cmd->add_option("--noise-sigma", opts.noise_sigma, "atmospheric noise std");
    cmd->add_option("--quota", opts.quota, "per-class training cap for sweep-robust");
}

int run_command(const std::string& name, const GlobalOpts& opts,
                const std::string& labels_path, const std::string& png_path,
                std::uint64_t palette_seed) {
    if (name == "render-map") {
        if (labels_path.empty() || png_path.empty())
            throw ConfigError("render-map needs --labels <header> and --png <path>");
        const data::LabelMap labels = data::load_labels(labels_path);
        experiment::render_map(labels, palette_seed, png_path);
        std::cout << "wrote " << png_path << "\n";
        return 0;
    }

    const experiment::ExperimentConfig cfg = resolve_config(opts);
    const std::string& out = cfg.output_dir;
    fs::create_directories(out);

    if (name == "gen-synth") {
        if (!cfg.data.synthetic.has_value())
            throw ConfigError("gen-synth needs a data.synthetic config block");
        experiment::obtain_dataset(cfg, out, true);
        std::cout << "wrote " << (fs::path(out) / "cube.hdr.json").string() << "\n";
        return 0;
    }

    const experiment::Dataset ds = experiment::stage_data(cfg, out);
    if (name == "split") {
        experiment::stage_split(cfg, ds, out);
        std::cout << "wrote " << (fs::path(out) / "split.json").string() << "\n";
        return 0;
    }

    const data::Split split = experiment::stage_split(cfg, ds, out);
    if (name == "train") {
        experiment::stage_train(cfg, ds, split, out);
        std::cout << "wrote " << (fs::path(out) / "params_full.json").string() << "\n";
        return 0;
    }

    const classifier::Params full = experiment::stage_train(cfg, ds, split, out);
    if (name == "select") {
        experiment::stage_select(cfg, ds, split, full, out);
        std::cout << "wrote " << (fs::path(out) / "mask.json").string() << "\n";
        return 0;
    }

    if (name == "eval" || name == "attack") {
        const iwgs::LoadedMask mask = experiment::stage_select(cfg, ds, split, full, out);
        const classifier::Params sel = experiment::stage_retrain(cfg, ds, split, mask, out);
        const bool attacked = name == "attack";
        const metrics::Report report =
            experiment::stage_eval(cfg, ds, split, mask, sel, out, attacked);
        std::cout << metrics::to_markdown(report);
        return 0;
    }

    if (name == "sweep-patch") {
        const auto table = experiment::patch_sweep(cfg);
        std::cout << experiment::sweep_to_markdown(table);
        return 0;
    }
    if (name == "sweep-robust") {
        const auto result = experiment::robustness_sweep(cfg);
        std::cout << experiment::sweep_to_markdown(result.attacked);
        return 0;
    }
    throw ConfigError("unknown command " + name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wavelet-domain gradient-guided band selection for hyperspectral cubes"};
    app.require_subcommand(1);

    GlobalOpts opts;
    app.add_option("--config", opts.config_path, "experiment config JSON")->expected(1);
    app.add_option("--seed", opts.seed, "master seed override");
    app.add_option("--out", opts.out, "output directory override");

    std::string labels_path, png_path;
    std::uint64_t palette_seed = 0;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"gen-synth", "generate the configured synthetic cube and labels"},
        {"split", "draw the train/test split"},
        {"train", "train the full-band baseline classifier"},
        {"select", "run greedy gradient-guided channel selection"},
        {"eval", "evaluate the selected pipeline on clean test patches"},
        {"attack", "evaluate under compound noise + PGD perturbation"},
        {"sweep-patch", "per-class accuracy table across patch sizes"},
        {"sweep-robust", "kappa row across patch sizes under attack"},
        {"render-map", "render a label map header to an indexed PNG"},
    };
    for (const auto& [cmd_name, help] : commands) {
        CLI::App* cmd = app.add_subcommand(cmd_name, help);
        cmd->fallthrough();  // let --config/--seed/--out follow the subcommand
        if (cmd_name == "render-map") {
            cmd->add_option("--labels", labels_path, "label map header JSON");
            cmd->add_option("--png", png_path, "output PNG path");
            cmd->add_option("--palette-seed", palette_seed, "palette rotation seed");
        } else {
            add_overrides(cmd, opts);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& [cmd_name, help] : commands)
            if (app.got_subcommand(cmd_name))
                return run_command(cmd_name, opts, labels_path, png_path, palette_seed);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
