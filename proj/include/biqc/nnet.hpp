#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "biqc/tensor.hpp"

// Single-sample layer primitives with explicit forward and backward passes.
//
// Spatial layers take (C, H, W); linear and the pointwise layers take any
// shape (linear requires rank 1). Convolution is cross-correlation with zero
// padding and stride 1.

namespace biqc::nnet {

enum class LayerKind { Conv2d, MaxPool2d, Relu, Linear, Sigmoid, Tanh, GlobalAvgPool };

const char* layer_name(LayerKind kind);

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    static LayerSpec conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t padding) {
        return {LayerKind::Conv2d, in, out, kernel, 1, padding, 0, 0};
    }
    static LayerSpec maxpool2d(std::size_t kernel, std::size_t stride) {
        return {LayerKind::MaxPool2d, 0, 0, kernel, stride, 0, 0, 0};
    }
    static LayerSpec linear(std::size_t in, std::size_t out) { return {LayerKind::Linear, 0, 0, 0, 1, 0, in, out}; }
    static LayerSpec relu() { return {LayerKind::Relu}; }
    static LayerSpec sigmoid() { return {LayerKind::Sigmoid}; }
    static LayerSpec tanh() { return {LayerKind::Tanh}; }
    static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }

    bool has_params() const { return kind == LayerKind::Conv2d || kind == LayerKind::Linear; }
    std::vector<std::size_t> weight_shape() const;
    std::vector<std::size_t> bias_shape() const;
    std::string describe() const;
};

/// Empty tensors for parameter-free layers.
struct LayerParams {
    TensorF weight;
    TensorF bias;
};

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero bias.
LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng);

/// Output shape for a given input shape; throws on incompatible input.
std::vector<std::size_t> output_shape(const LayerSpec& spec, const std::vector<std::size_t>& input_shape);

struct LayerCache {
    TensorF input;
    TensorF output;
    std::vector<std::size_t> argmax;  // maxpool: flat input index per output cell
};

struct ForwardResult {
    TensorF output;
    LayerCache cache;
};

struct GradBundle {
    TensorF input_grad;
    TensorF weight_grad;
    TensorF bias_grad;
};

ForwardResult forward(const LayerSpec& spec, const LayerParams& params, const TensorF& input);
/// With want_input_grad = false a conv layer leaves input_grad at zero.
GradBundle backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                    const TensorF& upstream, bool want_input_grad = true);

double sigmoid(double x);

/// Flat index of the largest value; ties resolve to the smallest index.
std::size_t argmax(const TensorF& t);

/// Centres a patch on the argmax cell of a (1, h, w) or (h, w) attention map,
/// after scaling cell coordinates by `downsample_factor`, and clamps it inside
/// the image.
PatchRegion attention_locate(const TensorF& attention_map, std::size_t downsample_factor, std::size_t patch_size,
                             std::size_t image_h, std::size_t image_w);

}  // namespace biqc::nnet
