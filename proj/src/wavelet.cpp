#include "hsi/wavelet.hpp"

#include <cmath>
#include <cstring>

#include "hsi/errors.hpp"

namespace hsi::wavelet {

namespace {

// Orthonormal analysis filter pairs. The synthesis pass reuses them as the
// transpose of the analysis operator.
struct FilterPair {
    std::vector<double> lo;  // scaling (approximation)
    std::vector<double> hi;  // wavelet (detail)
};

const FilterPair& filters(Family family) {
    static const FilterPair haar = [] {
        const double s = 1.0 / std::sqrt(2.0);
        return FilterPair{{s, s}, {s, -s}};
    }();
    static const FilterPair db4 = [] {
        const double r3 = std::sqrt(3.0);
        const double n = 4.0 * std::sqrt(2.0);
        std::vector<double> lo = {(1.0 + r3) / n, (3.0 + r3) / n, (3.0 - r3) / n,
                                  (1.0 - r3) / n};
        // quadrature mirror: hi[k] = (-1)^k * lo[3-k]
        std::vector<double> hi = {lo[3], -lo[2], lo[1], -lo[0]};
        return FilterPair{std::move(lo), std::move(hi)};
    }();
    return family == Family::Haar ? haar : db4;
}

// One periodized analysis level: n even, writes n/2 approx then n/2 detail.
void analyze_level(const double* x, int n, const FilterPair& f, double* approx, double* detail) {
    const int taps = static_cast<int>(f.lo.size());
    const int half = n / 2;
    for (int i = 0; i < half; ++i) {
        double a = 0.0, d = 0.0;
        for (int k = 0; k < taps; ++k) {
            const double v = x[(2 * i + k) % n];
            a += f.lo[k] * v;
            d += f.hi[k] * v;
        }
        approx[i] = a;
        detail[i] = d;
    }
}

// Transpose of analyze_level: x[j] += sum_i a[i]*lo[(j-2i) mod n] + d[i]*hi[...].
void synthesize_level(const double* approx, const double* detail, int n, const FilterPair& f,
                      double* x) {
    const int taps = static_cast<int>(f.lo.size());
    const int half = n / 2;
    std::memset(x, 0, sizeof(double) * n);
    for (int i = 0; i < half; ++i) {
        for (int k = 0; k < taps; ++k) {
            const int j = (2 * i + k) % n;
            x[j] += approx[i] * f.lo[k] + detail[i] * f.hi[k];
        }
    }
}

}  // namespace

Family family_from_string(const std::string& name) {
    if (name == "haar") return Family::Haar;
    if (name == "db4" || name == "daubechies4") return Family::Daubechies4;
    throw ConfigError("unknown wavelet family \"" + name + "\" (expected \"haar\" or \"db4\")");
}

std::string family_to_string(Family family) {
    return family == Family::Haar ? "haar" : "db4";
}

int max_levels(int bands) {
    int l = 0;
    while ((1 << (l + 1)) <= bands) ++l;
    return l;
}

int padded_length(int bands, int levels) {
    const int block = 1 << levels;
    return ((bands + block - 1) / block) * block;
}

Spec validate_spec(const Spec& spec, int bands) {
    if (spec.levels < 1) throw ConfigError("wavelet levels must be >= 1");
    if (bands < 2) throw ConfigError("spectral length must be >= 2 for a wavelet transform");
    if (spec.levels > max_levels(bands))
        throw ConfigError("wavelet levels " + std::to_string(spec.levels) +
                          " too deep for spectral length " + std::to_string(bands) +
                          " (max " + std::to_string(max_levels(bands)) + ")");
    return spec;
}

std::vector<double> pad_spectrum(std::span<const double> spectrum, int levels) {
    const int n = static_cast<int>(spectrum.size());
    const int padded = padded_length(n, levels);
    std::vector<double> out(spectrum.begin(), spectrum.end());
    out.resize(static_cast<std::size_t>(padded));
    // mirror the tail: x[n + t] = x[n - 2 - t]
    for (int t = 0; t < padded - n; ++t) out[static_cast<std::size_t>(n + t)] = spectrum[n - 2 - t];
    return out;
}

void forward_1d(std::span<const double> signal, std::span<double> coeffs, const Spec& spec) {
    const int n = static_cast<int>(signal.size());
    const FilterPair& f = filters(spec.family);
    std::vector<double> work(signal.begin(), signal.end());
    std::vector<double> approx(static_cast<std::size_t>(n) / 2 + 1);
    int len = n;
    for (int level = 1; level <= spec.levels; ++level) {
        const int half = len / 2;
        // detail of this level lands at [half, len); approx feeds the next level
        analyze_level(work.data(), len, f, approx.data(), coeffs.data() + half);
        std::memcpy(work.data(), approx.data(), sizeof(double) * half);
        len = half;
    }
    std::memcpy(coeffs.data(), work.data(), sizeof(double) * len);
}

void inverse_1d(std::span<const double> coeffs, std::span<double> signal, const Spec& spec) {
    const int n = static_cast<int>(coeffs.size());
    const FilterPair& f = filters(spec.family);
    std::vector<double> work(coeffs.begin(), coeffs.end());
    std::vector<double> buf(static_cast<std::size_t>(n));
    int len = n >> spec.levels;
    for (int level = spec.levels; level >= 1; --level) {
        // work[0..len) = approx_level, work[len..2len) = detail_level
        synthesize_level(work.data(), work.data() + len, 2 * len, f, buf.data());
        std::memcpy(work.data(), buf.data(), sizeof(double) * 2 * len);
        len *= 2;
    }
    std::memcpy(signal.data(), work.data(), sizeof(double) * n);
}

CoeffCube forward(const data::HyperCube& cube, const Spec& spec) {
    validate_spec(spec, cube.bands);
    CoeffCube out;
    out.height = cube.height;
    out.width = cube.width;
    out.original_bands = cube.bands;
    out.padded_bands = padded_length(cube.bands, spec.levels);
    out.levels = spec.levels;
    out.family = spec.family;
    out.values.resize(cube.pixel_count() * out.padded_bands);

    const bool needs_pad = out.padded_bands != cube.bands;
    for (std::size_t p = 0; p < cube.pixel_count(); ++p) {
        std::span<const double> src(cube.pixel(p), static_cast<std::size_t>(cube.bands));
        std::span<double> dst(out.values.data() + p * out.padded_bands,
                              static_cast<std::size_t>(out.padded_bands));
        if (needs_pad) {
            const std::vector<double> padded = pad_spectrum(src, spec.levels);
            forward_1d(padded, dst, spec);
        } else {
            forward_1d(src, dst, spec);
        }
    }
    return out;
}

namespace {

void check_layout(const CoeffCube& coeffs, const Spec& spec) {
    if (coeffs.levels != spec.levels || coeffs.family != spec.family)
        throw ConfigError("wavelet spec does not match coefficient layout");
    if (coeffs.padded_bands != padded_length(coeffs.original_bands, spec.levels))
        throw ConfigError("coefficient padding inconsistent with spec");
}

}  // namespace

data::HyperCube inverse(const CoeffCube& coeffs, const Spec& spec) {
    check_layout(coeffs, spec);
    data::HyperCube out;
    out.height = coeffs.height;
    out.width = coeffs.width;
    out.bands = coeffs.original_bands;
    out.values.resize(coeffs.pixel_count() * out.bands);

    std::vector<double> full(static_cast<std::size_t>(coeffs.padded_bands));
    for (std::size_t p = 0; p < coeffs.pixel_count(); ++p) {
        std::span<const double> src(coeffs.pixel(p),
                                    static_cast<std::size_t>(coeffs.padded_bands));
        inverse_1d(src, full, spec);
        std::memcpy(out.values.data() + p * out.bands, full.data(),
                    sizeof(double) * out.bands);
    }
    return out;
}

data::HyperCube masked_reconstruct(const CoeffCube& coeffs, std::span<const double> weights,
                                   const Spec& spec) {
    check_layout(coeffs, spec);
    if (weights.size() != static_cast<std::size_t>(coeffs.padded_bands))
        throw ConfigError("mask length does not match coefficient channel count");

    data::HyperCube out;
    out.height = coeffs.height;
    out.width = coeffs.width;
    out.bands = coeffs.original_bands;
    out.values.resize(coeffs.pixel_count() * out.bands);

    std::vector<double> weighted(static_cast<std::size_t>(coeffs.padded_bands));
    std::vector<double> full(static_cast<std::size_t>(coeffs.padded_bands));
    for (std::size_t p = 0; p < coeffs.pixel_count(); ++p) {
        const double* src = coeffs.pixel(p);
        for (int j = 0; j < coeffs.padded_bands; ++j) weighted[j] = src[j] * weights[j];
        inverse_1d(weighted, full, spec);
        std::memcpy(out.values.data() + p * out.bands, full.data(),
                    sizeof(double) * out.bands);
    }
    return out;
}

}  // namespace hsi::wavelet
