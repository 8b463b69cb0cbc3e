#include "biqc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace biqc::spectral {

using Complex = std::complex<double>;

void validate(const SpectralConfig& c) {
    if (c.patch_size < 2) throw std::invalid_argument("SpectralConfig: patch_size must be >= 2");
    if (!(c.cutoff > 0.0 && c.cutoff < std::numbers::sqrt2)) {
        throw std::invalid_argument("SpectralConfig: cutoff must lie in (0, sqrt(2)), got " + std::to_string(c.cutoff));
    }
    if (!(c.epsilon > 0.0)) throw std::invalid_argument("SpectralConfig: epsilon must be > 0");
}

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place radix-2 transform of a[0], a[stride], ..., a[(n-1)*stride].
void fft_strided(Complex* a, std::size_t n, std::size_t stride, const std::vector<Complex>& twiddle) {
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i * stride], a[j * stride]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t step = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                Complex& e = a[(i + k) * stride];
                Complex& o = a[(i + k + len / 2) * stride];
                const Complex t = k == 0 ? o : o * twiddle[k * step];
                o = e - t;
                e += t;
            }
        }
    }
}

// Direct O(n^2) transform for sizes that are not powers of two.
void dft_strided(Complex* a, std::size_t n, std::size_t stride, const std::vector<Complex>& twiddle) {
    std::vector<Complex> in(n);
    for (std::size_t k = 0; k < n; ++k) in[k] = a[k * stride];
    for (std::size_t f = 0; f < n; ++f) {
        Complex acc{0.0, 0.0};
        for (std::size_t k = 0; k < n; ++k) acc += in[k] * twiddle[(f * k) % n];
        a[f * stride] = acc;
    }
}

}  // namespace

ComplexMatrix dft2(const TensorF& region) {
    if (region.rank() != 2 || region.dim(0) != region.dim(1) || region.dim(0) == 0) {
        throw std::invalid_argument("dft2: expected a non-empty square region, got shape " + region.shape_string());
    }
    const std::size_t h = region.dim(0);
    for (double v : region.values()) {
        if (!std::isfinite(v)) throw std::invalid_argument("dft2: region contains non-finite values");
    }

    // twiddle[k] = exp(-2 pi i k / h)
    std::vector<Complex> twiddle(h);
    for (std::size_t k = 0; k < h; ++k) {
        twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(h));
    }
    const auto transform = is_power_of_two(h) ? fft_strided : dft_strided;

    ComplexMatrix out{h, std::vector<Complex>(h * h)};
    for (std::size_t k = 0; k < h * h; ++k) out.values[k] = region[k];
    // Along y within each row x, then along x within each column v.
    for (std::size_t x = 0; x < h; ++x) transform(out.values.data() + x * h, h, 1, twiddle);
    for (std::size_t v = 0; v < h; ++v) transform(out.values.data() + v, h, h, twiddle);
    return out;
}

double frequency_magnitude(std::size_t u, std::size_t v, std::size_t h, bool folded) {
    if (folded) {
        u = std::min(u, h - u);
        v = std::min(v, h - v);
    }
    const double fu = static_cast<double>(u) / static_cast<double>(h);
    const double fv = static_cast<double>(v) / static_cast<double>(h);
    return std::sqrt(fu * fu + fv * fv);
}

double r_metric(const TensorF& region, const SpectralConfig& config) {
    validate(config);
    const ComplexMatrix c = dft2(region);
    double e_low = 0.0, e_high = 0.0;
    for (std::size_t u = 0; u < c.n; ++u) {
        for (std::size_t v = 0; v < c.n; ++v) {
            const double e = std::norm(c(u, v));
            if (frequency_magnitude(u, v, c.n, config.folded_frequencies) <= config.cutoff) {
                e_low += e;
            } else {
                e_high += e;
            }
        }
    }
    return std::sqrt(e_high / std::max(e_low, config.epsilon));
}

TensorF extract_patch(const TensorF& image, const PatchRegion& region) {
    if (image.rank() != 2 || !region.fits(image.dim(0), image.dim(1))) {
        throw std::invalid_argument("extract_patch: region (" + std::to_string(region.row) + ", " +
                                    std::to_string(region.col) + ") size " + std::to_string(region.size) +
                                    " does not fit image " + image.shape_string());
    }
    TensorF patch({region.size, region.size});
    for (std::size_t r = 0; r < region.size; ++r) {
        for (std::size_t c = 0; c < region.size; ++c) patch.at(r, c) = image.at(region.row + r, region.col + c);
    }
    return patch;
}

RMetricMap r_metric_map(const TensorF& image, const SpectralConfig& config) {
    validate(config);
    const std::size_t h = config.patch_size;
    if (image.rank() != 2 || image.dim(0) < h || image.dim(1) < h) {
        throw std::invalid_argument("select_hsf_patch: image " + image.shape_string() +
                                    " is smaller than one " + std::to_string(h) + "x" + std::to_string(h) + " patch");
    }
    RMetricMap map{image.dim(0) / h, image.dim(1) / h, h, {}};
    map.values.reserve(map.rows * map.cols);
    for (std::size_t i = 0; i < map.rows; ++i) {
        for (std::size_t j = 0; j < map.cols; ++j) {
            map.values.push_back(r_metric(extract_patch(image, map.region(i, j)), config));
        }
    }
    return map;
}

PatchSelection select_hsf_patch(const TensorF& image, const SpectralConfig& config) {
    RMetricMap map = r_metric_map(image, config);
    std::size_t best = 0;
    for (std::size_t k = 1; k < map.values.size(); ++k) {
        if (map.values[k] > map.values[best]) best = k;
    }
    const PatchRegion region = map.region(best / map.cols, best % map.cols);
    return {region, std::move(map)};
}

}  // namespace biqc::spectral
