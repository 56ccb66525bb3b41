#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "hsi/errors.hpp"

namespace hsi::data {

// H x W x B reflectance cube. Values are stored row-major with the band
// axis fastest (band-interleaved-by-pixel): index = (r*W + c)*B + b.
// All values are finite; loaders and generators enforce this.
struct HyperCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<double> values;

    double at(int r, int c, int b) const {
        return values[(static_cast<std::size_t>(r) * width + c) * bands + b];
    }
    double& at(int r, int c, int b) {
        return values[(static_cast<std::size_t>(r) * width + c) * bands + b];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    // Spectrum of pixel index p = r*W + c, as a pointer into values.
    const double* pixel(std::size_t p) const { return values.data() + p * bands; }

    void validate() const;
};

// H x W class map. 0 marks an unlabeled pixel; valid labels are 1..num_classes.
struct LabelMap {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    std::vector<std::uint16_t> labels;

    std::uint16_t at(int r, int c) const {
        return labels[static_cast<std::size_t>(r) * width + c];
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    void validate() const;
};

// Odd-sided spatial window centered on a labeled pixel. values is p x p x B
// in the same layout as HyperCube.
struct Patch {
    int size = 0;
    int center_row = 0;
    int center_col = 0;
    int bands = 0;
    int label = 0;  // >= 1, unlabeled centers never yield patches
    std::vector<double> values;
};

// Per-class training counts plus the seed that fixes the random draw.
struct SplitSpec {
    std::map<int, int> per_class_train;  // class id (1-based) -> train count
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<std::int64_t> train;  // linear pixel indices r*W + c, sorted
    std::vector<std::int64_t> test;
};

// --- File ingestion -------------------------------------------------------
//
// Cube container: "<name>.hdr.json" holding
//   {"height", "width", "bands", "dtype": "f32le", "interleave": "bip",
//    "data": "<raw filename>"}
// with the raw file little-endian float32, band-interleaved-by-pixel,
// row-major. Label maps use the same header scheme with dtype "u16le" and
// no "bands"/"interleave" fields. The "data" path is resolved relative to
// the header's directory.

HyperCube load_cube(const std::string& header_path);
LabelMap load_labels(const std::string& header_path);

void save_cube(const HyperCube& cube, const std::string& header_path);
void save_labels(const LabelMap& labels, const std::string& header_path);

// Plain-CSV cube loader for small test fixtures (<= 64x64 pixels): one pixel
// per line in row-major order, B comma-separated columns.
HyperCube load_cube_csv(const std::string& csv_path, int height, int width);

// --- Synthetic generation -------------------------------------------------
//
// Builds a fully labeled cube whose classes occupy contiguous horizontal row
// blocks. Class mean spectra agree on every band outside informative_bands
// (mean 1 + 0.01*b) and differ only on informative bands, where class c has
// mean c. Gaussian noise with std noise_sigma is added per value.
struct Synthetic {
    HyperCube cube;
    LabelMap labels;
};

Synthetic generate_synthetic(int height, int width, int bands, int num_classes,
                             const std::set<int>& informative_bands, double noise_sigma,
                             std::uint64_t seed);

// --- Patch extraction ------------------------------------------------------
//
// One patch per labeled pixel, emitted in row-major pixel order. Borders are
// mirror-padded (reflect without repeating the edge pixel).
std::vector<Patch> extract_patches(const HyperCube& cube, const LabelMap& labels,
                                   int patch_size);

// Extracts the patch centered at (row, col) regardless of label.
Patch extract_patch_at(const HyperCube& cube, int row, int col, int patch_size, int label);

// --- Splitting and undersampling -------------------------------------------

// Partitions all labeled pixels into disjoint train/test sets with per-class
// train counts exactly as requested (classes absent from the spec contribute
// all their pixels to test). Uniform-random under spec.seed, deterministic.
Split split(const LabelMap& labels, const SplitSpec& spec);

// Caps each class at `quota` training pixels, keeping a uniform random
// subset where a class exceeds it. Classes are never eliminated.
std::vector<std::int64_t> undersample(const std::vector<std::int64_t>& train,
                                      const LabelMap& labels, int quota, std::uint64_t seed);

}  // namespace hsi::data
