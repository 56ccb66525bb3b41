#pragma once

#include <span>
#include <string>
#include <vector>

#include "hsi/data.hpp"

namespace hsi::wavelet {

enum class Family { Haar, Daubechies4 };

Family family_from_string(const std::string& name);
std::string family_to_string(Family family);

// Orthonormal multilevel 1-D transform along the spectral axis. When the
// spectral length is not divisible by 2^levels the tail is mirror-padded
// (reflect without repeat) up to the next multiple; the padded length is
// recorded in the CoeffCube and stripped again on inversion. The transform
// uses periodized filters, so the analysis operator is orthogonal at every
// admissible length: per-pixel coefficient energy equals padded-signal
// energy to rounding.
struct Spec {
    Family family = Family::Haar;
    int levels = 2;
};

// H x W x B' coefficient cube, channel layout along the last axis:
//   [approx_L | detail_L | detail_{L-1} | ... | detail_1]
// with approx_L and detail_L holding B'/2^L channels each and detail_k
// holding B'/2^k channels.
struct CoeffCube {
    int height = 0;
    int width = 0;
    int padded_bands = 0;    // B'
    int original_bands = 0;  // B of the source cube
    int levels = 0;
    Family family = Family::Haar;
    std::vector<double> values;

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    const double* pixel(std::size_t p) const { return values.data() + p * padded_bands; }
};

// Padded spectral length for a given source length: the smallest multiple of
// 2^levels that is >= bands.
int padded_length(int bands, int levels);

// Largest admissible decomposition depth for a spectral length.
int max_levels(int bands);

Spec validate_spec(const Spec& spec, int bands);

CoeffCube forward(const data::HyperCube& cube, const Spec& spec);
data::HyperCube inverse(const CoeffCube& coeffs, const Spec& spec);

// inverse() after zeroing channel j wherever weights[j] == 0; accepts real
// weights so relaxed masks can be differentiated through. Linear in the
// weights.
data::HyperCube masked_reconstruct(const CoeffCube& coeffs, std::span<const double> weights,
                                   const Spec& spec);

// --- Single-spectrum primitives (exposed for tests and for the selection
// engine, which transforms per-pixel slices directly). Lengths must already
// be multiples of 2^levels.

void forward_1d(std::span<const double> signal, std::span<double> coeffs, const Spec& spec);
void inverse_1d(std::span<const double> coeffs, std::span<double> signal, const Spec& spec);

// Mirror-pads a spectrum to padded_length(bands, levels).
std::vector<double> pad_spectrum(std::span<const double> spectrum, int levels);

}  // namespace hsi::wavelet
