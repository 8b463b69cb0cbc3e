#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace biqc {

/// Dense real tensor, row-major, with an explicit shape.
///
/// Images are (H, W), feature maps (C, H, W), conv weights (O, I, K, K),
/// linear weights (O, I), vectors (N).
class TensorF {
public:
    TensorF() = default;

    explicit TensorF(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

    TensorF(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != element_count(shape_)) {
            throw std::invalid_argument("TensorF: data length " + std::to_string(data_.size()) +
                                        " does not match shape " + shape_string(shape_));
        }
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double& at(std::size_t ch, std::size_t r, std::size_t c) {
        return data_[(ch * shape_[1] + r) * shape_[2] + c];
    }
    double at(std::size_t ch, std::size_t r, std::size_t c) const {
        return data_[(ch * shape_[1] + r) * shape_[2] + c];
    }

    TensorF reshaped(std::vector<std::size_t> shape) const& { return TensorF(std::move(shape), data_); }
    TensorF reshaped(std::vector<std::size_t> shape) && {
        return TensorF(std::move(shape), std::move(data_));
    }

    std::string shape_string() const { return shape_string(shape_); }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }

    bool operator==(const TensorF&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Square patch of an image, origin at (row, col).
struct PatchRegion {
    std::size_t row = 0;
    std::size_t col = 0;
    std::size_t size = 0;

    bool fits(std::size_t image_h, std::size_t image_w) const {
        return size > 0 && row + size <= image_h && col + size <= image_w;
    }
    bool operator==(const PatchRegion&) const = default;
};

}  // namespace biqc
