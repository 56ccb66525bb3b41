#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>
#include <zlib.h>

#include "hsi/classifier.hpp"
#include "hsi/rng.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("hsiband_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string str(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Central finite difference of a scalar function along coordinate i.
inline double central_diff(const std::function<double(std::span<const double>)>& f,
                           std::vector<double> x, std::size_t i, double h) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

// Relative error with a small absolute floor for near-zero pairs.
inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (const double x : v) s += x * x;
    return std::sqrt(s);
}

// Classifier with random weights and identity standardization stats.
inline hsi::classifier::Params random_params(int patch_size, int bands, int hidden, int classes,
                                             std::uint64_t seed, double scale = 0.5) {
    hsi::classifier::Params p;
    p.patch_size = patch_size;
    p.input_bands = bands;
    p.hidden_width = hidden;
    p.num_classes = classes;
    const int dim = p.input_dim();
    hsi::Rng rng(seed);
    p.hidden_weights.resize(static_cast<std::size_t>(hidden) * dim);
    for (auto& w : p.hidden_weights) w = rng.next_range(-scale, scale);
    p.hidden_bias.resize(static_cast<std::size_t>(hidden));
    for (auto& w : p.hidden_bias) w = rng.next_range(-scale, scale);
    p.output_weights.resize(static_cast<std::size_t>(classes) * hidden);
    for (auto& w : p.output_weights) w = rng.next_range(-scale, scale);
    p.output_bias.resize(static_cast<std::size_t>(classes));
    for (auto& w : p.output_bias) w = rng.next_range(-scale, scale);
    p.band_mean.assign(static_cast<std::size_t>(bands), 0.0);
    p.band_std.assign(static_cast<std::size_t>(bands), 1.0);
    return p;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
    hsi::Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.next_range(lo, hi);
    return v;
}

// Closed-form multinomial-logistic model: loss(x) = logsumexp(Ax + b) -
// (Ax + b)_label. Convex in x; used as the independent oracle for PGD and
// for exactly-linear mask objectives.
struct LinearModel {
    int classes = 0;
    int dim = 0;
    std::vector<double> weights;  // classes x dim row-major
    std::vector<double> bias;     // classes

    static LinearModel random(int classes, int dim, std::uint64_t seed) {
        LinearModel m;
        m.classes = classes;
        m.dim = dim;
        m.weights = random_vector(static_cast<std::size_t>(classes) * dim, seed);
        m.bias = random_vector(static_cast<std::size_t>(classes), seed ^ 0x55555555ULL);
        return m;
    }

    std::vector<double> logits(std::span<const double> x) const {
        std::vector<double> o(static_cast<std::size_t>(classes), 0.0);
        for (int c = 0; c < classes; ++c) {
            double s = bias[static_cast<std::size_t>(c)];
            for (int i = 0; i < dim; ++i)
                s += weights[static_cast<std::size_t>(c) * dim + i] * x[static_cast<std::size_t>(i)];
            o[static_cast<std::size_t>(c)] = s;
        }
        return o;
    }

    double loss(std::span<const double> x, int label) const {
        const auto o = logits(x);
        double m = o[0];
        for (const double v : o) m = std::max(m, v);
        double lse = 0.0;
        for (const double v : o) lse += std::exp(v - m);
        return m + std::log(lse) - o[static_cast<std::size_t>(label - 1)];
    }

    std::vector<double> grad(std::span<const double> x, int label) const {
        const auto o = logits(x);
        double m = o[0];
        for (const double v : o) m = std::max(m, v);
        std::vector<double> p(o.size());
        double total = 0.0;
        for (std::size_t c = 0; c < o.size(); ++c) total += (p[c] = std::exp(o[c] - m));
        for (double& v : p) v /= total;
        p[static_cast<std::size_t>(label - 1)] -= 1.0;
        std::vector<double> g(static_cast<std::size_t>(dim), 0.0);
        for (int c = 0; c < classes; ++c)
            for (int i = 0; i < dim; ++i)
                g[static_cast<std::size_t>(i)] +=
                    weights[static_cast<std::size_t>(c) * dim + i] * p[static_cast<std::size_t>(c)];
        return g;
    }
};

// Minimal decoder for the indexed PNGs this project writes (bit depth 8,
// color type 3, filter 0 rows). Independent of the writer: it walks the
// chunk structure and inflates IDAT with zlib.
struct DecodedPng {
    int width = 0;
    int height = 0;
    std::vector<std::array<std::uint8_t, 3>> palette;
    std::vector<std::uint8_t> indices;  // row-major
};

inline DecodedPng decode_indexed_png(const std::string& path) {
    const std::string bytes = read_file(path);
    if (bytes.size() < 8) throw std::runtime_error("png too short");
    auto u32 = [&](std::size_t off) {
        return (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off])) << 24) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 1])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 2])) << 8) |
               static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + 3]));
    };
    DecodedPng out;
    std::string idat;
    std::size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = u32(pos);
        const std::string type = bytes.substr(pos + 4, 4);
        const std::size_t payload = pos + 8;
        if (type == "IHDR") {
            out.width = static_cast<int>(u32(payload));
            out.height = static_cast<int>(u32(payload + 4));
            if (bytes[payload + 8] != 8 || bytes[payload + 9] != 3)
                throw std::runtime_error("not an 8-bit indexed png");
        } else if (type == "PLTE") {
            for (std::uint32_t i = 0; i + 2 < len; i += 3)
                out.palette.push_back({static_cast<std::uint8_t>(bytes[payload + i]),
                                       static_cast<std::uint8_t>(bytes[payload + i + 1]),
                                       static_cast<std::uint8_t>(bytes[payload + i + 2])});
        } else if (type == "IDAT") {
            idat += bytes.substr(payload, len);
        }
        pos = payload + len + 4;  // skip CRC
    }
    uLongf raw_size = static_cast<uLongf>((out.width + 1) * out.height);
    std::vector<unsigned char> raw(raw_size);
    if (uncompress(raw.data(), &raw_size, reinterpret_cast<const Bytef*>(idat.data()),
                   static_cast<uLong>(idat.size())) != Z_OK)
        throw std::runtime_error("png inflate failed");
    for (int r = 0; r < out.height; ++r) {
        if (raw[static_cast<std::size_t>(r) * (out.width + 1)] != 0)
            throw std::runtime_error("unsupported png row filter");
        for (int c = 0; c < out.width; ++c)
            out.indices.push_back(raw[static_cast<std::size_t>(r) * (out.width + 1) + 1 + c]);
    }
    return out;
}

}  // namespace testutil
