#include "hsi/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hsi/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hsi::data {

void HyperCube::validate() const {
    if (height < 1 || width < 1 || bands < 1)
        throw DataError("cube dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(height) * width * bands)
        throw DataError("cube value count does not match H*W*B");
    for (const double v : values)
        if (!std::isfinite(v)) throw DataError("cube contains non-finite values");
}

void LabelMap::validate() const {
    if (height < 1 || width < 1) throw DataError("label map dimensions must be positive");
    if (labels.size() != static_cast<std::size_t>(height) * width)
        throw DataError("label count does not match H*W");
    for (const std::uint16_t v : labels)
        if (v > num_classes) throw DataError("label exceeds num_classes");
}

namespace {

json read_header(const std::string& header_path) {
    std::ifstream in(header_path);
    if (!in) throw DataError("cannot open header: " + header_path);
    json h;
    try {
        in >> h;
    } catch (const json::exception& e) {
        throw DataError("malformed header " + header_path + ": " + e.what());
    }
    return h;
}

std::vector<unsigned char> read_raw(const fs::path& path, std::size_t expected_bytes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open raw data file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() != expected_bytes) {
        std::ostringstream msg;
        msg << "raw file " << path.string() << " holds " << bytes.size()
            << " bytes, header implies " << expected_bytes;
        throw DataError(msg.str());
    }
    return bytes;
}

fs::path sibling(const std::string& header_path, const std::string& data_name) {
    return fs::path(header_path).parent_path() / data_name;
}

int require_positive_int(const json& h, const char* key, const std::string& where) {
    if (!h.contains(key)) throw DataError(where + ": missing field \"" + key + "\"");
    if (!h[key].is_number_integer() || h[key].get<std::int64_t>() < 1)
        throw DataError(where + ": field \"" + key + "\" must be a positive integer");
    return h[key].get<int>();
}

float f32_from_le(const unsigned char* p) {
    std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                      (static_cast<std::uint32_t>(p[2]) << 16) |
                      (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(u);
}

}  // namespace

HyperCube load_cube(const std::string& header_path) {
    const json h = read_header(header_path);
    HyperCube cube;
    cube.height = require_positive_int(h, "height", header_path);
    cube.width = require_positive_int(h, "width", header_path);
    cube.bands = require_positive_int(h, "bands", header_path);
    const std::string dtype = h.value("dtype", "");
    if (dtype != "f32le") throw DataError(header_path + ": unknown dtype \"" + dtype + "\"");
    const std::string interleave = h.value("interleave", "bip");
    if (interleave != "bip")
        throw DataError(header_path + ": unsupported interleave \"" + interleave + "\"");
    if (!h.contains("data")) throw DataError(header_path + ": missing field \"data\"");

    const std::size_t n = static_cast<std::size_t>(cube.height) * cube.width * cube.bands;
    const auto bytes = read_raw(sibling(header_path, h["data"].get<std::string>()), n * 4);
    cube.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) cube.values[i] = f32_from_le(bytes.data() + i * 4);
    cube.validate();
    return cube;
}

LabelMap load_labels(const std::string& header_path) {
    const json h = read_header(header_path);
    LabelMap m;
    m.height = require_positive_int(h, "height", header_path);
    m.width = require_positive_int(h, "width", header_path);
    const std::string dtype = h.value("dtype", "");
    if (dtype != "u16le") throw DataError(header_path + ": unknown dtype \"" + dtype + "\"");
    if (!h.contains("data")) throw DataError(header_path + ": missing field \"data\"");

    const std::size_t n = static_cast<std::size_t>(m.height) * m.width;
    const auto bytes = read_raw(sibling(header_path, h["data"].get<std::string>()), n * 2);
    m.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        m.labels[i] = static_cast<std::uint16_t>(bytes[i * 2] | (bytes[i * 2 + 1] << 8));
        max_label = std::max<int>(max_label, m.labels[i]);
    }
    m.num_classes = h.contains("num_classes") ? require_positive_int(h, "num_classes", header_path)
                                              : max_label;
    m.validate();
    return m;
}

void save_cube(const HyperCube& cube, const std::string& header_path) {
    cube.validate();
    fs::path hp(header_path);
    std::string stem = hp.filename().string();
    // strip ".hdr.json" -> "<name>.f32"
    const std::string suffix = ".hdr.json";
    if (stem.size() > suffix.size() && stem.ends_with(suffix))
        stem = stem.substr(0, stem.size() - suffix.size());
    const std::string data_name = stem + ".f32";

    json h;
    h["height"] = cube.height;
    h["width"] = cube.width;
    h["bands"] = cube.bands;
    h["dtype"] = "f32le";
    h["interleave"] = "bip";
    h["data"] = data_name;
    std::ofstream out(hp);
    if (!out) throw DataError("cannot write header: " + header_path);
    out << h.dump(2) << "\n";

    std::ofstream raw(sibling(header_path, data_name), std::ios::binary);
    if (!raw) throw DataError("cannot write raw data next to " + header_path);
    std::vector<unsigned char> bytes(cube.values.size() * 4);
    for (std::size_t i = 0; i < cube.values.size(); ++i) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(cube.values[i]));
        bytes[i * 4 + 0] = static_cast<unsigned char>(u & 0xFF);
        bytes[i * 4 + 1] = static_cast<unsigned char>((u >> 8) & 0xFF);
        bytes[i * 4 + 2] = static_cast<unsigned char>((u >> 16) & 0xFF);
        bytes[i * 4 + 3] = static_cast<unsigned char>((u >> 24) & 0xFF);
    }
    raw.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_labels(const LabelMap& labels, const std::string& header_path) {
    labels.validate();
    fs::path hp(header_path);
    std::string stem = hp.filename().string();
    const std::string suffix = ".hdr.json";
    if (stem.size() > suffix.size() && stem.ends_with(suffix))
        stem = stem.substr(0, stem.size() - suffix.size());
    const std::string data_name = stem + ".u16";

    json h;
    h["height"] = labels.height;
    h["width"] = labels.width;
    h["dtype"] = "u16le";
    h["num_classes"] = labels.num_classes;
    h["data"] = data_name;
    std::ofstream out(hp);
    if (!out) throw DataError("cannot write header: " + header_path);
    out << h.dump(2) << "\n";

    std::ofstream raw(sibling(header_path, data_name), std::ios::binary);
    if (!raw) throw DataError("cannot write raw data next to " + header_path);
    std::vector<unsigned char> bytes(labels.labels.size() * 2);
    for (std::size_t i = 0; i < labels.labels.size(); ++i) {
        bytes[i * 2 + 0] = static_cast<unsigned char>(labels.labels[i] & 0xFF);
        bytes[i * 2 + 1] = static_cast<unsigned char>((labels.labels[i] >> 8) & 0xFF);
    }
    raw.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

HyperCube load_cube_csv(const std::string& csv_path, int height, int width) {
    if (height < 1 || width < 1 || height > 64 || width > 64)
        throw DataError("CSV cube loader accepts fixtures up to 64x64 pixels");
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open CSV: " + csv_path);

    HyperCube cube;
    cube.height = height;
    cube.width = width;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                cube.values.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw DataError(csv_path + ": unparsable cell \"" + cell + "\"");
            }
            ++cols;
        }
        if (rows == 0)
            cube.bands = cols;
        else if (cols != cube.bands)
            throw DataError(csv_path + ": ragged rows (pixel lines must share band count)");
        ++rows;
    }
    if (rows != static_cast<std::size_t>(height) * width)
        throw DataError(csv_path + ": expected one line per pixel (H*W lines)");
    cube.validate();
    return cube;
}

Synthetic generate_synthetic(int height, int width, int bands, int num_classes,
                             const std::set<int>& informative_bands, double noise_sigma,
                             std::uint64_t seed) {
    if (height < 1 || width < 1 || bands < 1) throw ConfigError("synthetic dimensions must be positive");
    if (num_classes < 2) throw ConfigError("synthetic cube needs at least 2 classes");
    if (informative_bands.empty()) throw ConfigError("informative band set must be non-empty");
    for (const int b : informative_bands)
        if (b < 0 || b >= bands) throw ConfigError("informative band index out of range");
    if (num_classes > height)
        throw ConfigError("num_classes exceeds height; row blocks would leave classes empty");
    if (num_classes > 65535) throw ConfigError("num_classes exceeds representable labels");
    if (noise_sigma < 0) throw ConfigError("noise_sigma must be >= 0");

    Synthetic out;
    out.cube.height = height;
    out.cube.width = width;
    out.cube.bands = bands;
    out.cube.values.resize(static_cast<std::size_t>(height) * width * bands);
    out.labels.height = height;
    out.labels.width = width;
    out.labels.num_classes = num_classes;
    out.labels.labels.resize(static_cast<std::size_t>(height) * width);

    Rng rng(seed);
    for (int r = 0; r < height; ++r) {
        // contiguous row blocks, class c on rows [c*H/C, (c+1)*H/C)
        const int cls = std::min(num_classes, 1 + (r * num_classes) / height);
        for (int c = 0; c < width; ++c) {
            out.labels.labels[static_cast<std::size_t>(r) * width + c] =
                static_cast<std::uint16_t>(cls);
            for (int b = 0; b < bands; ++b) {
                const double mean = informative_bands.count(b)
                                        ? static_cast<double>(cls)
                                        : 1.0 + 0.01 * b;
                const double noise = noise_sigma > 0 ? noise_sigma * rng.next_gaussian() : 0.0;
                out.cube.at(r, c, b) = mean + noise;
            }
        }
    }
    return out;
}

namespace {

// Reflect-without-repeat: ..., x2, x1 | x0, x1, ..., x_{n-1} | x_{n-2}, ...
int mirror_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
    }
    return i;
}

}  // namespace

Patch extract_patch_at(const HyperCube& cube, int row, int col, int patch_size, int label) {
    if (patch_size < 1 || patch_size % 2 == 0)
        throw ConfigError("patch size must be odd and positive");
    Patch p;
    p.size = patch_size;
    p.center_row = row;
    p.center_col = col;
    p.bands = cube.bands;
    p.label = label;
    p.values.resize(static_cast<std::size_t>(patch_size) * patch_size * cube.bands);
    const int half = patch_size / 2;
    std::size_t k = 0;
    for (int dr = -half; dr <= half; ++dr) {
        const int rr = mirror_index(row + dr, cube.height);
        for (int dc = -half; dc <= half; ++dc) {
            const int cc = mirror_index(col + dc, cube.width);
            const double* src = cube.values.data() +
                                (static_cast<std::size_t>(rr) * cube.width + cc) * cube.bands;
            std::memcpy(p.values.data() + k, src, sizeof(double) * cube.bands);
            k += cube.bands;
        }
    }
    return p;
}

std::vector<Patch> extract_patches(const HyperCube& cube, const LabelMap& labels,
                                   int patch_size) {
    if (cube.height != labels.height || cube.width != labels.width)
        throw DataError("cube and label map shapes differ");
    if (patch_size < 1 || patch_size % 2 == 0)
        throw ConfigError("patch size must be odd and positive");
    std::vector<Patch> out;
    for (int r = 0; r < cube.height; ++r)
        for (int c = 0; c < cube.width; ++c) {
            const int label = labels.at(r, c);
            if (label >= 1) out.push_back(extract_patch_at(cube, r, c, patch_size, label));
        }
    return out;
}

Split split(const LabelMap& labels, const SplitSpec& spec) {
    std::map<int, std::vector<std::int64_t>> by_class;
    for (std::size_t i = 0; i < labels.labels.size(); ++i)
        if (labels.labels[i] >= 1) by_class[labels.labels[i]].push_back(static_cast<std::int64_t>(i));

    for (const auto& [cls, count] : spec.per_class_train) {
        const auto it = by_class.find(cls);
        const std::size_t avail = it == by_class.end() ? 0 : it->second.size();
        if (count < 0) throw ConfigError("negative train count for class " + std::to_string(cls));
        if (static_cast<std::size_t>(count) > avail) {
            std::ostringstream msg;
            msg << "class " << cls << " has " << avail << " pixels, cannot draw " << count;
            throw ConfigError(msg.str());
        }
    }

    Split out;
    for (auto& [cls, pixels] : by_class) {
        const auto it = spec.per_class_train.find(cls);
        const std::size_t want = it == spec.per_class_train.end()
                                     ? 0
                                     : static_cast<std::size_t>(it->second);
        Rng rng(derive_seed(spec.seed, "split", static_cast<std::uint64_t>(cls)));
        rng.shuffle(pixels);
        for (std::size_t i = 0; i < pixels.size(); ++i)
            (i < want ? out.train : out.test).push_back(pixels[i]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<std::int64_t> undersample(const std::vector<std::int64_t>& train,
                                      const LabelMap& labels, int quota, std::uint64_t seed) {
    if (quota < 1) throw ConfigError("undersampling quota must be >= 1");
    std::map<int, std::vector<std::int64_t>> by_class;
    for (const std::int64_t idx : train) {
        const int cls = labels.labels[static_cast<std::size_t>(idx)];
        if (cls < 1) throw DataError("unlabeled pixel in training index set");
        by_class[cls].push_back(idx);
    }
    std::vector<std::int64_t> out;
    for (auto& [cls, pixels] : by_class) {
        if (pixels.size() > static_cast<std::size_t>(quota)) {
            Rng rng(derive_seed(seed, "undersample", static_cast<std::uint64_t>(cls)));
            rng.shuffle(pixels);
            pixels.resize(static_cast<std::size_t>(quota));
        }
        out.insert(out.end(), pixels.begin(), pixels.end());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace hsi::data
