#include "hsi/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hsi/errors.hpp"
#include "hsi/png_io.hpp"
#include "hsi/rng.hpp"
#include "hsi/wavelet.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hsi::experiment {

namespace {

void reject_unknown_keys(const json& obj, const std::string& where,
                         std::initializer_list<const char*> known) {
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (const char* k : known)
            if (item.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("unknown config key \"" + item.key() + "\" in " + where);
    }
}

json require_object(const json& parent, const char* key, const std::string& where) {
    if (!parent.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
    if (!parent[key].is_object()) throw ConfigError(where + ": \"" + key + "\" must be an object");
    return parent[key];
}

}  // namespace

void ExperimentConfig::validate() const {
    if (!data.synthetic.has_value() && (data.cube_header.empty() || data.labels_header.empty()))
        throw ConfigError("config needs either data.synthetic or data.cube_header + data.labels_header");
    if (data.synthetic.has_value()) {
        const auto& s = *data.synthetic;
        if (s.height < 1 || s.width < 1 || s.bands < 1 || s.num_classes < 2)
            throw ConfigError("synthetic spec dimensions invalid");
        if (s.informative_bands.empty())
            throw ConfigError("synthetic spec needs informative bands");
    }
    if (per_class_train.empty() && train_per_class < 1)
        throw ConfigError("split needs per_class_train or a positive train_per_class");
    train.validate();
    attack.validate();
    if (patch_size < 1 || patch_size % 2 == 0) throw ConfigError("patch_size must be odd");
    if (patch_sizes.empty()) throw ConfigError("patch_sizes must be non-empty");
    int prev = 0;
    for (const int p : patch_sizes) {
        if (p < 1 || p % 2 == 0) throw ConfigError("patch_sizes entries must be odd");
        if (p <= prev) throw ConfigError("patch_sizes must be strictly ascending");
        prev = p;
    }
    if (quota < 1) throw ConfigError("quota must be >= 1");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (iwgs.num_bands < 1) throw ConfigError("iwgs.num_bands must be >= 1");
    if (iwgs.eval_subset_size < 1) throw ConfigError("iwgs.eval_subset_size must be >= 1");
    if (iwgs.wavelet.levels < 1) throw ConfigError("wavelet levels must be >= 1");
}

ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + origin + ": " + e.what());
    }
    reject_unknown_keys(j, origin,
                        {"version", "seed", "data", "split", "train", "iwgs", "attack",
                         "patch_size", "patch_sizes", "quota", "repeats", "output_dir"});
    if (j.value("version", 0) != 1)
        throw ConfigError(origin + ": config version must be 1");

    ExperimentConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{0});

    const json data = require_object(j, "data", origin);
    reject_unknown_keys(data, origin + ".data", {"synthetic", "cube_header", "labels_header"});
    if (data.contains("synthetic")) {
        const json s = data["synthetic"];
        reject_unknown_keys(s, origin + ".data.synthetic",
                            {"height", "width", "bands", "num_classes", "informative_bands",
                             "noise_sigma"});
        SyntheticSpec spec;
        spec.height = s.value("height", 16);
        spec.width = s.value("width", 16);
        spec.bands = s.value("bands", 8);
        spec.num_classes = s.value("num_classes", 2);
        spec.noise_sigma = s.value("noise_sigma", 0.0);
        if (s.contains("informative_bands"))
            for (const auto& b : s["informative_bands"]) spec.informative_bands.insert(b.get<int>());
        cfg.data.synthetic = spec;
    } else {
        cfg.data.cube_header = data.value("cube_header", "");
        cfg.data.labels_header = data.value("labels_header", "");
    }

    if (j.contains("split")) {
        const json split = j["split"];
        reject_unknown_keys(split, origin + ".split", {"per_class_train", "train_per_class"});
        if (split.contains("per_class_train")) {
            for (const auto& item : split["per_class_train"].items()) {
                int cls = 0;
                try {
                    cls = std::stoi(item.key());
                } catch (const std::exception&) {
                    throw ConfigError(origin + ": per_class_train keys must be class ids");
                }
                cfg.per_class_train[cls] = item.value().get<int>();
            }
        }
        cfg.train_per_class = split.value("train_per_class", 0);
    }

    if (j.contains("train")) {
        const json t = j["train"];
        reject_unknown_keys(t, origin + ".train",
                            {"learning_rate", "epochs", "batch_size", "hidden_width",
                             "weight_init_scale"});
        cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.hidden_width = t.value("hidden_width", cfg.train.hidden_width);
        cfg.train.weight_init_scale = t.value("weight_init_scale", cfg.train.weight_init_scale);
    }

    if (j.contains("iwgs")) {
        const json s = j["iwgs"];
        reject_unknown_keys(s, origin + ".iwgs",
                            {"num_bands", "criterion", "budget_mode", "domain", "wavelet",
                             "eval_subset_size"});
        cfg.iwgs.num_bands = s.value("num_bands", cfg.iwgs.num_bands);
        if (s.contains("criterion"))
            cfg.iwgs.criterion = iwgs::criterion_from_string(s["criterion"].get<std::string>());
        if (s.contains("budget_mode"))
            cfg.iwgs.budget_mode =
                iwgs::budget_mode_from_string(s["budget_mode"].get<std::string>());
        if (s.contains("domain"))
            cfg.iwgs.domain = iwgs::domain_from_string(s["domain"].get<std::string>());
        if (s.contains("wavelet")) {
            const json w = s["wavelet"];
            reject_unknown_keys(w, origin + ".iwgs.wavelet", {"family", "levels"});
            if (w.contains("family"))
                cfg.iwgs.wavelet.family =
                    wavelet::family_from_string(w["family"].get<std::string>());
            cfg.iwgs.wavelet.levels = w.value("levels", cfg.iwgs.wavelet.levels);
        }
        cfg.iwgs.eval_subset_size = s.value("eval_subset_size", cfg.iwgs.eval_subset_size);
    }

    if (j.contains("attack")) {
        const json a = j["attack"];
        reject_unknown_keys(a, origin + ".attack",
                            {"epsilon", "alpha", "steps", "noise_sigma", "random_start"});
        cfg.attack.epsilon = a.value("epsilon", cfg.attack.epsilon);
        cfg.attack.alpha = a.value("alpha", cfg.attack.alpha);
        cfg.attack.steps = a.value("steps", cfg.attack.steps);
        cfg.attack.noise_sigma = a.value("noise_sigma", cfg.attack.noise_sigma);
        cfg.attack.random_start = a.value("random_start", cfg.attack.random_start);
    }

    cfg.patch_size = j.value("patch_size", cfg.patch_size);
    if (j.contains("patch_sizes")) cfg.patch_sizes = j["patch_sizes"].get<std::vector<int>>();
    cfg.quota = j.value("quota", cfg.quota);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config: " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return config_from_json_text(text.str(), path);
}

namespace {

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["version"] = 1;
    j["seed"] = cfg.seed;
    if (cfg.data.synthetic.has_value()) {
        const auto& s = *cfg.data.synthetic;
        j["data"]["synthetic"] = {{"height", s.height},
                                  {"width", s.width},
                                  {"bands", s.bands},
                                  {"num_classes", s.num_classes},
                                  {"informative_bands", s.informative_bands},
                                  {"noise_sigma", s.noise_sigma}};
    } else {
        j["data"]["cube_header"] = cfg.data.cube_header;
        j["data"]["labels_header"] = cfg.data.labels_header;
    }
    json split;
    if (!cfg.per_class_train.empty()) {
        json m = json::object();
        for (const auto& [cls, n] : cfg.per_class_train) m[std::to_string(cls)] = n;
        split["per_class_train"] = m;
    }
    split["train_per_class"] = cfg.train_per_class;
    j["split"] = split;
    j["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"epochs", cfg.train.epochs},
                  {"batch_size", cfg.train.batch_size},
                  {"hidden_width", cfg.train.hidden_width},
                  {"weight_init_scale", cfg.train.weight_init_scale}};
    j["iwgs"] = {{"num_bands", cfg.iwgs.num_bands},
                 {"criterion", iwgs::criterion_to_string(cfg.iwgs.criterion)},
                 {"budget_mode", iwgs::budget_mode_to_string(cfg.iwgs.budget_mode)},
                 {"domain", iwgs::domain_to_string(cfg.iwgs.domain)},
                 {"wavelet",
                  {{"family", wavelet::family_to_string(cfg.iwgs.wavelet.family)},
                   {"levels", cfg.iwgs.wavelet.levels}}},
                 {"eval_subset_size", cfg.iwgs.eval_subset_size}};
    j["attack"] = {{"epsilon", cfg.attack.epsilon},
                   {"alpha", cfg.attack.alpha},
                   {"steps", cfg.attack.steps},
                   {"noise_sigma", cfg.attack.noise_sigma},
                   {"random_start", cfg.attack.random_start}};
    j["patch_size"] = cfg.patch_size;
    j["patch_sizes"] = cfg.patch_sizes;
    j["quota"] = cfg.quota;
    j["repeats"] = cfg.repeats;
    j["output_dir"] = cfg.output_dir;
    return j;
}

}  // namespace

std::string config_to_json_text(const ExperimentConfig& config) {
    return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
    // hash the canonical dump minus output_dir so relocating a run does not
    // change its identity
    json j = config_to_json(config);
    j.erase("output_dir");
    const std::string text = j.dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : text) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001B3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Dataset obtain_dataset(const ExperimentConfig& config, const std::string& out_dir, bool persist) {
    Dataset ds;
    if (config.data.synthetic.has_value()) {
        const auto& s = *config.data.synthetic;
        auto synth = data::generate_synthetic(s.height, s.width, s.bands, s.num_classes,
                                              s.informative_bands, s.noise_sigma,
                                              derive_seed(config.seed, "synth"));
        ds.cube = std::move(synth.cube);
        ds.labels = std::move(synth.labels);
        if (persist) {
            fs::create_directories(out_dir);
            data::save_cube(ds.cube, (fs::path(out_dir) / "cube.hdr.json").string());
            data::save_labels(ds.labels, (fs::path(out_dir) / "labels.hdr.json").string());
            // the persisted f32 file is the canonical dataset; reload so that
            // in-memory values match what a resumed stage would read back
            ds.cube = data::load_cube((fs::path(out_dir) / "cube.hdr.json").string());
        }
    } else {
        ds.cube = data::load_cube(config.data.cube_header);
        ds.labels = data::load_labels(config.data.labels_header);
        if (ds.cube.height != ds.labels.height || ds.cube.width != ds.labels.width)
            throw DataError("cube and label map shapes differ");
    }
    return ds;
}

data::SplitSpec resolve_split_spec(const ExperimentConfig& config, const data::LabelMap& labels) {
    data::SplitSpec spec;
    spec.seed = derive_seed(config.seed, "split");
    if (!config.per_class_train.empty()) {
        spec.per_class_train = config.per_class_train;
        return spec;
    }
    // uniform count, capped at class population - 1 so every class keeps at
    // least one test pixel when possible
    std::map<int, std::int64_t> population;
    for (const auto v : labels.labels)
        if (v >= 1) ++population[v];
    for (const auto& [cls, n] : population) {
        const int want = std::min<std::int64_t>(config.train_per_class, std::max<std::int64_t>(1, n - 1));
        spec.per_class_train[cls] = want;
    }
    return spec;
}

void save_split(const data::Split& split, const std::string& path) {
    json j;
    j["version"] = 1;
    j["train"] = split.train;
    j["test"] = split.test;
    std::ofstream out(path);
    if (!out) throw DataError("cannot write split: " + path);
    out << j.dump() << "\n";
}

data::Split load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed split file " + path + ": " + e.what());
    }
    if (j.value("version", 0) != 1) throw ConfigError("unsupported split version in " + path);
    data::Split s;
    s.train = j.at("train").get<std::vector<std::int64_t>>();
    s.test = j.at("test").get<std::vector<std::int64_t>>();
    return s;
}

std::vector<std::string> default_class_names(int num_classes) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(num_classes));
    for (int c = 1; c <= num_classes; ++c) names.push_back("C" + std::to_string(c));
    return names;
}

metrics::ConfusionMatrix evaluate(const classifier::Params& params,
                                  const data::HyperCube& eval_cube,
                                  const data::LabelMap& labels,
                                  std::span<const std::int64_t> test_pixels, int patch_size,
                                  const adversarial::AttackConfig* attack,
                                  std::uint64_t attack_seed) {
    metrics::ConfusionMatrix cm = metrics::make_confusion(labels.num_classes);
    for (const std::int64_t idx : test_pixels) {
        const int r = static_cast<int>(idx / eval_cube.width);
        const int c = static_cast<int>(idx % eval_cube.width);
        const int truth = labels.labels[static_cast<std::size_t>(idx)];
        if (truth < 1) continue;
        data::Patch patch = data::extract_patch_at(eval_cube, r, c, patch_size, truth);
        int predicted;
        if (attack != nullptr) {
            adversarial::AttackConfig per_sample = *attack;
            per_sample.seed = derive_seed(attack_seed, "sample", static_cast<std::uint64_t>(idx));
            const std::vector<double> adv =
                adversarial::compound_perturb(params, patch.values, truth, per_sample);
            predicted = classifier::predict(params, adv);
        } else {
            predicted = classifier::predict(params, patch.values);
        }
        ++cm.at(truth, predicted);
    }
    return cm;
}

namespace {

struct StageTimer {
    std::vector<std::pair<std::string, double>> entries;

    template <typename F>
    auto time(const std::string& name, F&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            entries.emplace_back(name, ms_since(t0));
        } else {
            auto result = f();
            entries.emplace_back(name, ms_since(t0));
            return result;
        }
    }

    static double ms_since(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    }

    void write(const std::string& path) const {
        std::ofstream out(path);
        out << "stage,ms\n";
        for (const auto& [name, ms] : entries) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.1f", ms);
            out << name << "," << buf << "\n";
        }
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << text;
}

std::vector<data::Patch> patches_at(const data::HyperCube& cube, const data::LabelMap& labels,
                                    std::span<const std::int64_t> pixels, int patch_size) {
    std::vector<data::Patch> out;
    out.reserve(pixels.size());
    for (const std::int64_t idx : pixels) {
        const int r = static_cast<int>(idx / cube.width);
        const int c = static_cast<int>(idx % cube.width);
        const int label = labels.labels[static_cast<std::size_t>(idx)];
        if (label < 1) throw DataError("unlabeled pixel in training set");
        out.push_back(data::extract_patch_at(cube, r, c, patch_size, label));
    }
    return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& config) {
    return run_pipeline(config, config.output_dir, false);
}

PipelineResult run_pipeline(const ExperimentConfig& config, const std::string& out_dir,
                            bool apply_quota) {
    config.validate();
    fs::create_directories(out_dir);
    const auto art = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    PipelineResult result;
    result.config_hash = config_hash(config);
    StageTimer timer;

    write_text(art("config.json"), config_to_json_text(config));
    result.artifacts["config"] = art("config.json");

    Dataset ds = timer.time("data", [&] { return obtain_dataset(config, out_dir, true); });
    if (config.data.synthetic.has_value()) {
        result.artifacts["cube"] = art("cube.hdr.json");
        result.artifacts["labels"] = art("labels.hdr.json");
    }
    const auto names = default_class_names(ds.labels.num_classes);

    // split (+ optional per-class quota for the robustness protocol)
    data::Split split = timer.time("split", [&] {
        data::Split s = data::split(ds.labels, resolve_split_spec(config, ds.labels));
        if (apply_quota)
            s.train = data::undersample(s.train, ds.labels, config.quota,
                                        derive_seed(config.seed, "quota"));
        return s;
    });
    save_split(split, art("split.json"));
    result.artifacts["split"] = art("split.json");

    // baseline on the full cube
    classifier::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train-full");
    const auto train_patches =
        patches_at(ds.cube, ds.labels, split.train, config.patch_size);
    classifier::Params full_params = timer.time(
        "train-full", [&] { return classifier::train(train_patches, tc, ds.labels.num_classes); });
    classifier::save_params(full_params, art("params_full.json"));
    result.artifacts["params_full"] = art("params_full.json");

    const metrics::ConfusionMatrix cm_full = timer.time("eval-full", [&] {
        return evaluate(full_params, ds.cube, ds.labels, split.test, config.patch_size, nullptr, 0);
    });
    result.full_clean = metrics::per_class_report(cm_full, names);
    write_text(art("report_full_clean.csv"), metrics::to_csv(result.full_clean));
    write_text(art("report_full_clean.md"), metrics::to_markdown(result.full_clean));
    result.artifacts["report_full_clean"] = art("report_full_clean.csv");

    // selection against the baseline classifier, restricted to train labels
    data::LabelMap train_labels = ds.labels;
    std::fill(train_labels.labels.begin(), train_labels.labels.end(), std::uint16_t{0});
    for (const std::int64_t idx : split.train)
        train_labels.labels[static_cast<std::size_t>(idx)] =
            ds.labels.labels[static_cast<std::size_t>(idx)];

    iwgs::IwgsConfig ic = config.iwgs;
    ic.seed = derive_seed(config.seed, "iwgs");
    auto [mask, trace] = timer.time("select", [&] {
        return iwgs::select(ds.cube, train_labels, full_params, ic);
    });
    result.mask = mask;
    iwgs::save_mask(mask, ic.wavelet, ic.domain, art("mask.json"));
    iwgs::save_trace(trace, art("trace.jsonl"));
    result.artifacts["mask"] = art("mask.json");
    result.artifacts["trace"] = art("trace.jsonl");

    // retrain on the masked reconstruction
    const data::HyperCube masked = timer.time("apply-selection", [&] {
        return iwgs::apply_selection(ds.cube, mask, ic.wavelet, ic.domain);
    });
    classifier::TrainConfig tc2 = config.train;
    tc2.seed = derive_seed(config.seed, "train-selected");
    const auto masked_train_patches =
        patches_at(masked, ds.labels, split.train, config.patch_size);
    classifier::Params sel_params = timer.time("train-selected", [&] {
        return classifier::train(masked_train_patches, tc2, ds.labels.num_classes);
    });
    classifier::save_params(sel_params, art("params_selected.json"));
    result.artifacts["params_selected"] = art("params_selected.json");

    const metrics::ConfusionMatrix cm_sel = timer.time("eval-selected", [&] {
        return evaluate(sel_params, masked, ds.labels, split.test, config.patch_size, nullptr, 0);
    });
    result.selected_clean = metrics::per_class_report(cm_sel, names);
    write_text(art("report_selected_clean.csv"), metrics::to_csv(result.selected_clean));
    write_text(art("report_selected_clean.md"), metrics::to_markdown(result.selected_clean));
    result.artifacts["report_selected_clean"] = art("report_selected_clean.csv");

    const metrics::ConfusionMatrix cm_adv = timer.time("eval-attacked", [&] {
        return evaluate(sel_params, masked, ds.labels, split.test, config.patch_size,
                        &config.attack, derive_seed(config.seed, "attack"));
    });
    result.selected_attacked = metrics::per_class_report(cm_adv, names);
    write_text(art("report_selected_attacked.csv"), metrics::to_csv(result.selected_attacked));
    write_text(art("report_selected_attacked.md"), metrics::to_markdown(result.selected_attacked));
    result.artifacts["report_selected_attacked"] = art("report_selected_attacked.csv");

    timer.time("render-maps", [&] {
        const data::LabelMap predicted =
            classifier::predict_map(sel_params, masked, config.patch_size);
        render_map(predicted, derive_seed(config.seed, "palette"), art("map_selected.png"));
        render_map(ds.labels, derive_seed(config.seed, "palette"), art("map_truth.png"));
    });
    result.artifacts["map_selected"] = art("map_selected.png");
    result.artifacts["map_truth"] = art("map_truth.png");

    json record;
    record["version"] = 1;
    record["config_hash"] = result.config_hash;
    json relative = json::object();  // out_dir-relative so runs relocate cleanly
    for (const auto& [stage, path] : result.artifacts)
        relative[stage] = fs::path(path).filename().string();
    record["artifacts"] = relative;
    record["selected_channels"] = result.mask.indices();
    write_text(art("run.json"), record.dump(2) + "\n");
    result.artifacts["run"] = art("run.json");

    // wall-clock diagnostics; deliberately not part of the deterministic
    // artifact set
    timer.write(art("timings.csv"));
    return result;
}

Dataset stage_data(const ExperimentConfig& config, const std::string& out_dir) {
    if (config.data.synthetic.has_value()) {
        const auto header = fs::path(out_dir) / "cube.hdr.json";
        const auto labels_header = fs::path(out_dir) / "labels.hdr.json";
        if (fs::exists(header) && fs::exists(labels_header)) {
            Dataset ds;
            ds.cube = data::load_cube(header.string());
            ds.labels = data::load_labels(labels_header.string());
            return ds;
        }
    }
    fs::create_directories(out_dir);
    return obtain_dataset(config, out_dir, true);
}

data::Split stage_split(const ExperimentConfig& config, const Dataset& ds,
                        const std::string& out_dir) {
    const auto path = fs::path(out_dir) / "split.json";
    if (fs::exists(path)) return load_split(path.string());
    data::Split split = data::split(ds.labels, resolve_split_spec(config, ds.labels));
    save_split(split, path.string());
    return split;
}

classifier::Params stage_train(const ExperimentConfig& config, const Dataset& ds,
                               const data::Split& split, const std::string& out_dir) {
    const auto path = fs::path(out_dir) / "params_full.json";
    if (fs::exists(path)) return classifier::load_params(path.string());
    classifier::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train-full");
    const auto patches =
        patches_at(ds.cube, ds.labels, split.train, config.patch_size);
    classifier::Params params = classifier::train(patches, tc, ds.labels.num_classes);
    classifier::save_params(params, path.string());
    return params;
}

iwgs::LoadedMask stage_select(const ExperimentConfig& config, const Dataset& ds,
                              const data::Split& split, const classifier::Params& full_params,
                              const std::string& out_dir) {
    const auto path = fs::path(out_dir) / "mask.json";
    if (fs::exists(path)) return iwgs::load_mask(path.string());

    data::LabelMap train_labels = ds.labels;
    std::fill(train_labels.labels.begin(), train_labels.labels.end(), std::uint16_t{0});
    for (const std::int64_t idx : split.train)
        train_labels.labels[static_cast<std::size_t>(idx)] =
            ds.labels.labels[static_cast<std::size_t>(idx)];

    iwgs::IwgsConfig ic = config.iwgs;
    ic.seed = derive_seed(config.seed, "iwgs");
    auto [mask, trace] = iwgs::select(ds.cube, train_labels, full_params, ic);
    iwgs::save_mask(mask, ic.wavelet, ic.domain, path.string());
    iwgs::save_trace(trace, (fs::path(out_dir) / "trace.jsonl").string());
    return {std::move(mask), ic.wavelet, ic.domain};
}

classifier::Params stage_retrain(const ExperimentConfig& config, const Dataset& ds,
                                 const data::Split& split, const iwgs::LoadedMask& mask,
                                 const std::string& out_dir) {
    const auto path = fs::path(out_dir) / "params_selected.json";
    if (fs::exists(path)) return classifier::load_params(path.string());
    const data::HyperCube masked =
        iwgs::apply_selection(ds.cube, mask.mask, mask.spec, mask.domain);
    classifier::TrainConfig tc = config.train;
    tc.seed = derive_seed(config.seed, "train-selected");
    const auto patches = patches_at(masked, ds.labels, split.train, config.patch_size);
    classifier::Params params = classifier::train(patches, tc, ds.labels.num_classes);
    classifier::save_params(params, path.string());
    return params;
}

metrics::Report stage_eval(const ExperimentConfig& config, const Dataset& ds,
                           const data::Split& split, const iwgs::LoadedMask& mask,
                           const classifier::Params& sel_params, const std::string& out_dir,
                           bool attacked) {
    const data::HyperCube masked =
        iwgs::apply_selection(ds.cube, mask.mask, mask.spec, mask.domain);
    const metrics::ConfusionMatrix cm =
        evaluate(sel_params, masked, ds.labels, split.test, config.patch_size,
                 attacked ? &config.attack : nullptr, derive_seed(config.seed, "attack"));
    const metrics::Report report =
        metrics::per_class_report(cm, default_class_names(ds.labels.num_classes));
    const std::string stem = attacked ? "report_selected_attacked" : "report_selected_clean";
    write_text((fs::path(out_dir) / (stem + ".csv")).string(), metrics::to_csv(report));
    write_text((fs::path(out_dir) / (stem + ".md")).string(), metrics::to_markdown(report));
    return report;
}

namespace {

std::string col_name(int patch_size) { return "P" + std::to_string(patch_size); }

std::string format_cell(double fraction) {
    if (std::isnan(fraction)) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

}  // namespace

std::string sweep_to_csv(const SweepTable& table) {
    std::ostringstream out;
    out << "row";
    for (const auto& c : table.col_names) out << "," << c;
    out << "\n";
    for (std::size_t r = 0; r < table.row_names.size(); ++r) {
        out << table.row_names[r];
        for (const double v : table.values[r]) out << "," << format_cell(v);
        out << "\n";
    }
    return out.str();
}

std::string sweep_to_markdown(const SweepTable& table) {
    std::size_t name_width = 0;
    for (const auto& n : table.row_names) name_width = std::max(name_width, n.size());
    name_width = std::max(name_width, std::size_t{5});

    std::ostringstream out;
    out << "| " << std::string(name_width, ' ');
    for (const auto& c : table.col_names) {
        out << " | ";
        if (c.size() < 6) out << std::string(6 - c.size(), ' ');
        out << c;
    }
    out << " |\n|" << std::string(name_width + 2, '-');
    for (std::size_t i = 0; i < table.col_names.size(); ++i) out << "|" << std::string(8, '-');
    out << "|\n";
    for (std::size_t r = 0; r < table.row_names.size(); ++r) {
        out << "| " << table.row_names[r]
            << std::string(name_width - table.row_names[r].size(), ' ');
        for (const double v : table.values[r]) {
            const std::string cell = format_cell(v);
            out << " | ";
            if (cell.size() < 6) out << std::string(6 - cell.size(), ' ');
            out << cell;
        }
        out << " |\n";
    }
    return out.str();
}

SweepTable patch_sweep(const ExperimentConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);

    SweepTable table;
    std::vector<metrics::Report> reports;
    for (const int p : config.patch_sizes) {
        ExperimentConfig col = config;
        col.patch_size = p;
        const std::string dir = (fs::path(config.output_dir) / col_name(p)).string();
        const PipelineResult res = run_pipeline(col, dir, false);
        reports.push_back(res.selected_clean);
        table.col_names.push_back(col_name(p));
    }

    const std::size_t num_classes = reports.front().class_names.size();
    for (std::size_t c = 0; c < num_classes; ++c) {
        table.row_names.push_back(reports.front().class_names[c]);
        std::vector<double> row;
        for (const auto& r : reports) row.push_back(r.class_accuracy[c]);
        table.values.push_back(std::move(row));
    }
    table.row_names.push_back("OA");
    {
        std::vector<double> row;
        for (const auto& r : reports) row.push_back(r.oa);
        table.values.push_back(std::move(row));
    }
    table.row_names.push_back("Kappa");
    {
        std::vector<double> row;
        for (const auto& r : reports) row.push_back(r.kappa);
        table.values.push_back(std::move(row));
    }

    write_text((fs::path(config.output_dir) / "sweep_patch.csv").string(), sweep_to_csv(table));
    write_text((fs::path(config.output_dir) / "sweep_patch.md").string(),
               sweep_to_markdown(table));
    return table;
}

RobustnessResult robustness_sweep(const ExperimentConfig& config) {
    config.validate();
    fs::create_directories(config.output_dir);

    RobustnessResult result;
    result.attacked.row_names = {"Kappa (%)"};
    result.clean.row_names = {"Kappa (%)"};
    result.attacked.values.emplace_back();
    result.clean.values.emplace_back();

    std::ostringstream repeats_csv;
    repeats_csv << "patch_size,repeat,kappa_attacked,kappa_clean\n";
    for (const int p : config.patch_sizes) {
        double kappa_attacked = 0.0;
        double kappa_clean = 0.0;
        for (int rep = 0; rep < config.repeats; ++rep) {
            ExperimentConfig run = config;
            run.patch_size = p;
            run.seed = derive_seed(config.seed, "repeat", static_cast<std::uint64_t>(rep));
            const std::string dir =
                (fs::path(config.output_dir) / "robust" / col_name(p) /
                 ("rep" + std::to_string(rep)))
                    .string();
            const PipelineResult res = run_pipeline(run, dir, true);
            kappa_attacked += res.selected_attacked.kappa;
            kappa_clean += res.selected_clean.kappa;
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g", p, rep,
                          res.selected_attacked.kappa, res.selected_clean.kappa);
            repeats_csv << buf << "\n";
        }
        result.attacked.col_names.push_back(col_name(p));
        result.clean.col_names.push_back(col_name(p));
        result.attacked.values[0].push_back(kappa_attacked / config.repeats);
        result.clean.values[0].push_back(kappa_clean / config.repeats);
    }
    write_text((fs::path(config.output_dir) / "sweep_robust_repeats.csv").string(),
               repeats_csv.str());

    write_text((fs::path(config.output_dir) / "sweep_robust.csv").string(),
               sweep_to_csv(result.attacked));
    write_text((fs::path(config.output_dir) / "sweep_robust.md").string(),
               sweep_to_markdown(result.attacked));
    write_text((fs::path(config.output_dir) / "sweep_robust_clean.csv").string(),
               sweep_to_csv(result.clean));
    return result;
}

void render_map(const data::LabelMap& map, std::uint64_t palette_seed, const std::string& path) {
    map.validate();
    if (map.num_classes > 255) throw DataError("indexed PNG palette supports at most 255 classes");

    // class 0 (unlabeled) is black; classes get evenly spaced hues with a
    // seeded rotation so distinct seeds give distinct palettes
    std::vector<png::Color> palette;
    palette.push_back({0, 0, 0});
    Rng rng(palette_seed);
    const double offset = rng.next_double();
    const int c_total = std::max(1, map.num_classes);
    for (int c = 0; c < map.num_classes; ++c) {
        const double hue = std::fmod(offset + static_cast<double>(c) / c_total, 1.0) * 6.0;
        const double s = 0.75, v = 0.95;
        const int sector = static_cast<int>(hue);
        const double f = hue - sector;
        const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
        double rgb[3];
        switch (sector % 6) {
            case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
            case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
            case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
            case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
            case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
            default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
        }
        palette.push_back({static_cast<std::uint8_t>(std::lround(rgb[0] * 255)),
                           static_cast<std::uint8_t>(std::lround(rgb[1] * 255)),
                           static_cast<std::uint8_t>(std::lround(rgb[2] * 255))});
    }

    std::vector<std::uint8_t> indices(map.labels.size());
    for (std::size_t i = 0; i < map.labels.size(); ++i)
        indices[i] = static_cast<std::uint8_t>(map.labels[i]);
    png::write_indexed(path, map.width, map.height, indices, palette);
}

}  // namespace hsi::experiment
