#include "biqc/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace biqc::nnet {

namespace {

[[noreturn]] void shape_error(const LayerSpec& spec, const std::vector<std::size_t>& shape, const std::string& why) {
    throw std::invalid_argument(spec.describe() + ": input shape " + TensorF::shape_string(shape) + " " + why);
}

void check_params(const LayerSpec& spec, const LayerParams& params) {
    if (!spec.has_params()) return;
    if (params.weight.shape() != spec.weight_shape() || params.bias.shape() != spec.bias_shape()) {
        throw std::invalid_argument(spec.describe() + ": parameter shapes " + params.weight.shape_string() + " / " +
                                    params.bias.shape_string() + " do not match expected " +
                                    TensorF::shape_string(spec.weight_shape()) + " / " +
                                    TensorF::shape_string(spec.bias_shape()));
    }
}

// out[oc] += sum_ic sum_ky,kx w[oc,ic,ky,kx] * in[ic, y+ky-p, x+kx-p]
void conv_forward(const LayerSpec& s, const TensorF& w, const TensorF& b, const TensorF& in, TensorF& out) {
    const std::size_t H = in.dim(1), W = in.dim(2);
    const std::size_t OH = out.dim(1), OW = out.dim(2);
    const std::size_t K = s.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(s.padding);
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
        for (std::size_t y = 0; y < OH; ++y) {
            double* orow = out.data() + (oc * OH + y) * OW;
            std::fill(orow, orow + OW, b[oc]);
            for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                const double* src = in.data() + ic * H * W;
                const double* wk = w.data() + (oc * s.in_channels + ic) * K * K;
                for (std::size_t ky = 0; ky < K; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    const double* irow = src + static_cast<std::size_t>(iy) * W;
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const double wv = wk[ky * K + kx];
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                        const std::ptrdiff_t xa = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t xb =
                            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W) - dx, 0, static_cast<std::ptrdiff_t>(OW));
                        for (std::ptrdiff_t x = xa; x < xb; ++x) orow[x] += wv * irow[x + dx];
                    }
                }
            }
        }
    }
}

void conv_backward(const LayerSpec& s, const TensorF& w, const TensorF& in, const TensorF& g, GradBundle& out,
                   bool want_input_grad) {
    const std::size_t H = in.dim(1), W = in.dim(2);
    const std::size_t OH = g.dim(1), OW = g.dim(2);
    const std::size_t K = s.kernel;
    const auto pad = static_cast<std::ptrdiff_t>(s.padding);
    for (std::size_t oc = 0; oc < s.out_channels; ++oc) {
        const double* go = g.data() + oc * OH * OW;
        double bsum = 0.0;
        for (std::size_t k = 0; k < OH * OW; ++k) bsum += go[k];
        out.bias_grad[oc] = bsum;
        double* wg = out.weight_grad.data() + oc * s.in_channels * K * K;
        for (std::size_t y = 0; y < OH; ++y) {
            const double* grow = go + y * OW;
            for (std::size_t ic = 0; ic < s.in_channels; ++ic) {
                const double* wk = w.data() + (oc * s.in_channels + ic) * K * K;
                for (std::size_t ky = 0; ky < K; ++ky) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
                    const double* irow = in.data() + (ic * H + static_cast<std::size_t>(iy)) * W;
                    double* drow = out.input_grad.data() + (ic * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t kx = 0; kx < K; ++kx) {
                        const double wv = wk[ky * K + kx];
                        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                        const std::ptrdiff_t xa = std::max<std::ptrdiff_t>(0, -dx);
                        const std::ptrdiff_t xb =
                            std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(W) - dx, 0, static_cast<std::ptrdiff_t>(OW));
                        if (want_input_grad) {
                            for (std::ptrdiff_t x = xa; x < xb; ++x) drow[x + dx] += wv * grow[x];
                        }
                        double acc[4] = {0.0, 0.0, 0.0, 0.0};
                        std::ptrdiff_t x = xa;
                        for (; x + 4 <= xb; x += 4) {
                            for (std::ptrdiff_t l = 0; l < 4; ++l) acc[l] += grow[x + l] * irow[x + l + dx];
                        }
                        for (; x < xb; ++x) acc[0] += grow[x] * irow[x + dx];
                        wg[(ic * K + ky) * K + kx] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
                    }
                }
            }
        }
    }
}

}  // namespace

const char* layer_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Linear: return "linear";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::Tanh: return "tanh";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
    }
    return "?";
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
    if (kind == LayerKind::Conv2d) return {out_channels, in_channels, kernel, kernel};
    if (kind == LayerKind::Linear) return {out_features, in_features};
    return {};
}

std::vector<std::size_t> LayerSpec::bias_shape() const {
    if (kind == LayerKind::Conv2d) return {out_channels};
    if (kind == LayerKind::Linear) return {out_features};
    return {};
}

std::string LayerSpec::describe() const {
    std::string s = layer_name(kind);
    switch (kind) {
        case LayerKind::Conv2d:
            return s + "(" + std::to_string(in_channels) + "->" + std::to_string(out_channels) + ", k=" +
                   std::to_string(kernel) + ", pad=" + std::to_string(padding) + ")";
        case LayerKind::MaxPool2d:
            return s + "(k=" + std::to_string(kernel) + ", stride=" + std::to_string(stride) + ")";
        case LayerKind::Linear:
            return s + "(" + std::to_string(in_features) + "->" + std::to_string(out_features) + ")";
        default:
            return s;
    }
}

LayerParams init_params(const LayerSpec& spec, std::mt19937_64& rng) {
    if (!spec.has_params()) return {};
    double fan_in = 0.0, fan_out = 0.0;
    if (spec.kind == LayerKind::Conv2d) {
        const double area = static_cast<double>(spec.kernel * spec.kernel);
        fan_in = static_cast<double>(spec.in_channels) * area;
        fan_out = static_cast<double>(spec.out_channels) * area;
    } else {
        fan_in = static_cast<double>(spec.in_features);
        fan_out = static_cast<double>(spec.out_features);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    LayerParams p{TensorF(spec.weight_shape()), TensorF(spec.bias_shape())};
    for (double& v : p.weight.values()) v = dist(rng);
    return p;
}

std::vector<std::size_t> output_shape(const LayerSpec& spec, const std::vector<std::size_t>& in) {
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            if (in.size() != 3 || in[0] != spec.in_channels) shape_error(spec, in, "is not (C_in, H, W)");
            if (spec.kernel == 0 || in[1] + 2 * spec.padding < spec.kernel || in[2] + 2 * spec.padding < spec.kernel) {
                shape_error(spec, in, "is smaller than the kernel");
            }
            return {spec.out_channels, in[1] + 2 * spec.padding - spec.kernel + 1,
                    in[2] + 2 * spec.padding - spec.kernel + 1};
        }
        case LayerKind::MaxPool2d: {
            if (in.size() != 3) shape_error(spec, in, "is not (C, H, W)");
            if (spec.kernel == 0 || spec.stride == 0 || in[1] < spec.kernel || in[2] < spec.kernel) {
                shape_error(spec, in, "is smaller than the pooling window");
            }
            return {in[0], (in[1] - spec.kernel) / spec.stride + 1, (in[2] - spec.kernel) / spec.stride + 1};
        }
        case LayerKind::Linear:
            if (in.size() != 1 || in[0] != spec.in_features) shape_error(spec, in, "is not (in_features)");
            return {spec.out_features};
        case LayerKind::GlobalAvgPool:
            if (in.size() != 3 || in[1] * in[2] == 0) shape_error(spec, in, "is not a non-empty (C, H, W)");
            return {in[0]};
        default:
            return in;
    }
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

ForwardResult forward(const LayerSpec& spec, const LayerParams& params, const TensorF& input) {
    check_params(spec, params);
    TensorF out(output_shape(spec, input.shape()));
    LayerCache cache;
    switch (spec.kind) {
        case LayerKind::Conv2d:
            conv_forward(spec, params.weight, params.bias, input, out);
            break;
        case LayerKind::MaxPool2d: {
            const std::size_t H = input.dim(1), W = input.dim(2);
            const std::size_t OH = out.dim(1), OW = out.dim(2);
            cache.argmax.resize(out.size());
            for (std::size_t c = 0; c < out.dim(0); ++c) {
                for (std::size_t y = 0; y < OH; ++y) {
                    for (std::size_t x = 0; x < OW; ++x) {
                        std::size_t best = (c * H + y * spec.stride) * W + x * spec.stride;
                        for (std::size_t ky = 0; ky < spec.kernel; ++ky) {
                            for (std::size_t kx = 0; kx < spec.kernel; ++kx) {
                                const std::size_t idx = (c * H + y * spec.stride + ky) * W + x * spec.stride + kx;
                                if (input[idx] > input[best]) best = idx;
                            }
                        }
                        const std::size_t o = (c * OH + y) * OW + x;
                        cache.argmax[o] = best;
                        out[o] = input[best];
                    }
                }
            }
            break;
        }
        case LayerKind::Relu:
            for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
            break;
        case LayerKind::Sigmoid:
            for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid(input[i]);
            break;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::tanh(input[i]);
            break;
        case LayerKind::Linear:
            for (std::size_t o = 0; o < spec.out_features; ++o) {
                double acc = params.bias[o];
                const double* wrow = params.weight.data() + o * spec.in_features;
                for (std::size_t i = 0; i < spec.in_features; ++i) acc += wrow[i] * input[i];
                out[o] = acc;
            }
            break;
        case LayerKind::GlobalAvgPool: {
            const std::size_t area = input.dim(1) * input.dim(2);
            for (std::size_t c = 0; c < input.dim(0); ++c) {
                double acc = 0.0;
                for (std::size_t k = 0; k < area; ++k) acc += input[c * area + k];
                out[c] = acc / static_cast<double>(area);
            }
            break;
        }
    }
    cache.input = input;
    cache.output = out;
    return {std::move(out), std::move(cache)};
}

GradBundle backward(const LayerSpec& spec, const LayerParams& params, const LayerCache& cache,
                    const TensorF& upstream, bool want_input_grad) {
    check_params(spec, params);
    if (upstream.shape() != cache.output.shape()) {
        throw std::invalid_argument(spec.describe() + ": upstream gradient shape " + upstream.shape_string() +
                                    " does not match cached output shape " + cache.output.shape_string());
    }
    GradBundle g{TensorF(cache.input.shape()), {}, {}};
    if (spec.has_params()) {
        g.weight_grad = TensorF(spec.weight_shape());
        g.bias_grad = TensorF(spec.bias_shape());
    }
    const TensorF& x = cache.input;
    const TensorF& y = cache.output;
    switch (spec.kind) {
        case LayerKind::Conv2d:
            conv_backward(spec, params.weight, x, upstream, g, want_input_grad);
            break;
        case LayerKind::MaxPool2d:
            if (cache.argmax.size() != upstream.size()) throw std::invalid_argument("maxpool2d: cache mismatch");
            for (std::size_t o = 0; o < upstream.size(); ++o) g.input_grad[cache.argmax[o]] += upstream[o];
            break;
        case LayerKind::Relu:
            for (std::size_t i = 0; i < x.size(); ++i) g.input_grad[i] = x[i] > 0.0 ? upstream[i] : 0.0;
            break;
        case LayerKind::Sigmoid:
            for (std::size_t i = 0; i < x.size(); ++i) g.input_grad[i] = upstream[i] * y[i] * (1.0 - y[i]);
            break;
        case LayerKind::Tanh:
            for (std::size_t i = 0; i < x.size(); ++i) g.input_grad[i] = upstream[i] * (1.0 - y[i] * y[i]);
            break;
        case LayerKind::Linear:
            for (std::size_t o = 0; o < spec.out_features; ++o) {
                const double go = upstream[o];
                g.bias_grad[o] = go;
                const double* wrow = params.weight.data() + o * spec.in_features;
                double* gwrow = g.weight_grad.data() + o * spec.in_features;
                for (std::size_t i = 0; i < spec.in_features; ++i) {
                    gwrow[i] = go * x[i];
                    g.input_grad[i] += go * wrow[i];
                }
            }
            break;
        case LayerKind::GlobalAvgPool: {
            const std::size_t area = x.dim(1) * x.dim(2);
            for (std::size_t c = 0; c < x.dim(0); ++c) {
                const double share = upstream[c] / static_cast<double>(area);
                std::fill(g.input_grad.data() + c * area, g.input_grad.data() + (c + 1) * area, share);
            }
            break;
        }
    }
    return g;
}

std::size_t argmax(const TensorF& t) {
    if (t.empty()) throw std::invalid_argument("argmax: empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < t.size(); ++i) {
        if (t[i] > t[best]) best = i;
    }
    return best;
}

PatchRegion attention_locate(const TensorF& attention_map, std::size_t downsample_factor, std::size_t patch_size,
                             std::size_t image_h, std::size_t image_w) {
    const bool single_channel = attention_map.rank() == 2 || (attention_map.rank() == 3 && attention_map.dim(0) == 1);
    if (!single_channel || attention_map.empty()) {
        throw std::invalid_argument("attention_locate: expected a single-channel map, got shape " +
                                    attention_map.shape_string());
    }
    if (patch_size == 0 || patch_size > image_h || patch_size > image_w) {
        throw std::invalid_argument("attention_locate: patch size " + std::to_string(patch_size) +
                                    " does not fit a " + std::to_string(image_h) + "x" + std::to_string(image_w) +
                                    " image");
    }
    const std::size_t map_w = attention_map.shape().back();
    const std::size_t cell = argmax(attention_map);
    const std::size_t center_r = (cell / map_w) * downsample_factor + downsample_factor / 2;
    const std::size_t center_c = (cell % map_w) * downsample_factor + downsample_factor / 2;
    auto place = [&](std::size_t center, std::size_t extent) {
        const std::size_t half = patch_size / 2;
        const std::size_t origin = center > half ? center - half : 0;
        return std::min(origin, extent - patch_size);
    };
    return {place(center_r, image_h), place(center_c, image_w), patch_size};
}

}  // namespace biqc::nnet
