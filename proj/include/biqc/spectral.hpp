#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "biqc/tensor.hpp"

// Spectral complexity of image regions and the "most complex tile" selector.

namespace biqc::spectral {

struct SpectralConfig {
    std::size_t patch_size = 4;  // h
    double cutoff = 0.25;        // f_c, cycles/pixel
    double epsilon = 1e-12;      // floor for E_low
    // Use min(u, h - u) / h instead of u / h when computing f_{u,v}.
    bool folded_frequencies = false;

    bool operator==(const SpectralConfig&) const = default;
};

void validate(const SpectralConfig& config);

/// h x h complex matrix, row-major, indexed (u, v).
struct ComplexMatrix {
    std::size_t n = 0;
    std::vector<std::complex<double>> values;

    std::complex<double> operator()(std::size_t u, std::size_t v) const { return values[u * n + v]; }
    std::complex<double>& operator()(std::size_t u, std::size_t v) { return values[u * n + v]; }
};

/// Unnormalized forward 2D DFT, C_{u,v} = sum_{x,y} R(x,y) exp(-2 pi i (ux + vy) / h),
/// with x the row and y the column index. Evaluated row-column in O(h^3).
ComplexMatrix dft2(const TensorF& region);

/// f_{u,v} for an h x h spectrum.
double frequency_magnitude(std::size_t u, std::size_t v, std::size_t h, bool folded);

/// sqrt(E_high / max(E_low, epsilon)). Ignores config.patch_size; the region
/// itself fixes h.
double r_metric(const TensorF& region, const SpectralConfig& config);

struct RMetricMap {
    std::size_t rows = 0;  // floor(H / h)
    std::size_t cols = 0;  // floor(W / h)
    std::size_t patch_size = 0;
    std::vector<double> values;  // row-major over tiles

    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    PatchRegion region(std::size_t i, std::size_t j) const { return {i * patch_size, j * patch_size, patch_size}; }
};

/// Copies the h x h block at `region` out of a rank-2 image.
TensorF extract_patch(const TensorF& image, const PatchRegion& region);

RMetricMap r_metric_map(const TensorF& image, const SpectralConfig& config);

struct PatchSelection {
    PatchRegion region;
    RMetricMap map;
};

/// Tile with maximal r; ties go to the first tile in row-major order.
PatchSelection select_hsf_patch(const TensorF& image, const SpectralConfig& config);

}  // namespace biqc::spectral
