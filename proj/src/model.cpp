#include "biqc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "biqc/kv.hpp"

namespace biqc::model {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2;

struct Layers {
    nnet::LayerSpec conv1, relu, pool, conv2, attention, gap, encoder0, encoder_later, mlp1, mlp2, tanh, head;
};

Layers layers_for(const BiqcConfig& c) {
    const std::size_t h = c.patch_size;
    const auto d = static_cast<std::size_t>(c.ansatz.num_qubits);
    const std::size_t angles = c.ansatz.input_size();
    const std::size_t pad = c.cnn.kernel / 2;
    return {nnet::LayerSpec::conv2d(1, c.cnn.conv1_channels, c.cnn.kernel, pad),
            nnet::LayerSpec::relu(),
            nnet::LayerSpec::maxpool2d(2, 2),
            nnet::LayerSpec::conv2d(c.cnn.conv1_channels, c.cnn.conv2_channels, c.cnn.kernel, pad),
            nnet::LayerSpec::conv2d(c.cnn.conv2_channels, 1, 1, 0),
            nnet::LayerSpec::global_avg_pool(),
            nnet::LayerSpec::linear(h * h, angles),
            nnet::LayerSpec::linear(d, angles),
            nnet::LayerSpec::linear(angles, d),
            nnet::LayerSpec::linear(d, d),
            nnet::LayerSpec::tanh(),
            nnet::LayerSpec::linear(fusion_dim(c), 1)};
}

std::string encoder_name(std::size_t block) { return "encoder" + std::to_string(block); }
std::string theta_name(std::size_t block) { return "theta" + std::to_string(block); }

nnet::LayerParams layer_params(const ParamSet& p, const std::string& name) {
    return {p.at(name + ".weight"), p.at(name + ".bias")};
}

void accumulate(ParamSet& grads, const std::string& name, const nnet::GradBundle& g) {
    auto add = [](TensorF& dst, const TensorF& src) {
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
    };
    add(grads.at(name + ".weight"), g.weight_grad);
    add(grads.at(name + ".bias"), g.bias_grad);
}

ansatz::AnsatzParams ansatz_params(const BiqcConfig& c, const ParamSet& p) {
    ansatz::AnsatzParams ap;
    for (int l = 0; l < c.ansatz.num_blocks; ++l) ap.theta.push_back(p.at(theta_name(static_cast<std::size_t>(l))));
    return ap;
}

// angles = (pi/2) tanh(W x + b)
std::vector<double> encode(const nnet::LayerSpec& spec, const nnet::LayerParams& lp, const TensorF& input,
                           nnet::LayerCache& cache) {
    auto fwd = nnet::forward(spec, lp, input);
    std::vector<double> angles(fwd.output.size());
    for (std::size_t i = 0; i < angles.size(); ++i) angles[i] = kHalfPi * std::tanh(fwd.output[i]);
    cache = std::move(fwd.cache);
    return angles;
}

TensorF encode_backward_pre(const nnet::LayerCache& cache, std::span<const double> angle_grad) {
    TensorF g(cache.output.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double t = std::tanh(cache.output[i]);
        g[i] = angle_grad[i] * kHalfPi * (1.0 - t * t);
    }
    return g;
}

BranchTrace run_branch(const BiqcConfig& c, const Layers& L, const ParamSet& p, const TensorF& image,
                       const PatchRegion& region, std::mt19937_64& rng) {
    BranchTrace b;
    b.region = region;
    b.pixels = spectral::extract_patch(image, region).reshaped({region.size * region.size});
    b.angles = encode(L.encoder0, layer_params(p, encoder_name(0)), b.pixels, b.encoder);

    if (topology(c).quantum_circuit) {
        b.later_encoders.resize(static_cast<std::size_t>(c.ansatz.num_blocks));
        auto encoder = [&](std::size_t block, std::span<const double> previous) {
            TensorF in({previous.size()}, std::vector<double>(previous.begin(), previous.end()));
            return encode(L.encoder_later, layer_params(p, encoder_name(block)), in, b.later_encoders[block]);
        };
        b.blocks = ansatz::forward_blocks(c.ansatz, ansatz_params(c, p), b.angles, encoder, rng);
        b.features = b.blocks.h_quantum();
    } else {
        TensorF x({b.angles.size()}, b.angles);
        for (const auto& [spec, name] : {std::pair{L.mlp1, "mlp1"}, std::pair{L.mlp2, "mlp2"}}) {
            auto lin = nnet::forward(spec, layer_params(p, name), x);
            auto act = nnet::forward(L.tanh, {}, lin.output);
            b.mlp.push_back(std::move(lin.cache));
            b.mlp.push_back(std::move(act.cache));
            x = std::move(act.output);
        }
        b.features = x.values();
    }
    return b;
}

std::size_t branch_backward(const BiqcConfig& c, const Layers& L, const ParamSet& p, const BranchTrace& b,
                            std::span<const double> feature_grad, ParamSet& grads) {
    std::vector<double> angle_grad;
    std::size_t evaluations = 0;
    if (topology(c).quantum_circuit) {
        auto encoder_backward = [&](std::size_t block, std::span<const double> g_angles) {
            const nnet::LayerCache& cache = b.later_encoders[block];
            const std::string name = encoder_name(block);
            auto g = nnet::backward(L.encoder_later, layer_params(p, name), cache, encode_backward_pre(cache, g_angles));
            accumulate(grads, name, g);
            return g.input_grad.values();
        };
        auto bg = ansatz::backward_blocks(c.ansatz, ansatz_params(c, p), b.blocks, feature_grad, encoder_backward);
        for (std::size_t l = 0; l < bg.theta.size(); ++l) {
            TensorF& dst = grads.at(theta_name(l));
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += bg.theta[l][i];
        }
        angle_grad = std::move(bg.first_input);
        evaluations = bg.circuit_evaluations;
    } else {
        TensorF g({feature_grad.size()}, std::vector<double>(feature_grad.begin(), feature_grad.end()));
        const std::pair<nnet::LayerSpec, const char*> stages[] = {{L.mlp2, "mlp2"}, {L.mlp1, "mlp1"}};
        for (std::size_t s = 0; s < 2; ++s) {
            const std::size_t base = 2 * (1 - s);
            g = nnet::backward(L.tanh, {}, b.mlp[base + 1], g).input_grad;
            auto lg = nnet::backward(stages[s].first, layer_params(p, stages[s].second), b.mlp[base], g);
            accumulate(grads, stages[s].second, lg);
            g = std::move(lg.input_grad);
        }
        angle_grad = g.values();
    }
    auto g0 = nnet::backward(L.encoder0, layer_params(p, encoder_name(0)), b.encoder,
                             encode_backward_pre(b.encoder, angle_grad));
    accumulate(grads, encoder_name(0), g0);
    return evaluations;
}

}  // namespace

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::EVC: return "Ab-EVC";
        case Ablation::OFC: return "Ab-OFC";
        case Ablation::HSF: return "Ab-HSF";
        case Ablation::Quantum: return "Ab-Quantum";
    }
    return "?";
}

Ablation parse_ablation(std::string_view name) {
    for (Ablation a : {Ablation::EVC, Ablation::OFC, Ablation::HSF, Ablation::Quantum}) {
        if (name == ablation_name(a)) return a;
    }
    throw std::invalid_argument("unknown ablation variant '" + std::string(name) +
                                "' (expected Ab-EVC, Ab-OFC, Ab-HSF or Ab-Quantum)");
}

bool AblationSet::contains(Ablation a) const {
    switch (a) {
        case Ablation::EVC: return evc;
        case Ablation::OFC: return ofc;
        case Ablation::HSF: return hsf;
        case Ablation::Quantum: return quantum;
    }
    return false;
}

void AblationSet::insert(Ablation a) {
    switch (a) {
        case Ablation::EVC: evc = true; break;
        case Ablation::OFC: ofc = true; break;
        case Ablation::HSF: hsf = true; break;
        case Ablation::Quantum: quantum = true; break;
    }
}

std::string AblationSet::to_string() const {
    std::string s;
    for (Ablation a : {Ablation::EVC, Ablation::OFC, Ablation::HSF, Ablation::Quantum}) {
        if (!contains(a)) continue;
        if (!s.empty()) s += "+";
        s += ablation_name(a);
    }
    return s.empty() ? "none" : s;
}

AblationSet AblationSet::parse(std::string_view text) {
    AblationSet set;
    if (text.empty() || text == "none") return set;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find_first_of("+,", start);
        if (end == std::string_view::npos) end = text.size();
        set.insert(parse_ablation(text.substr(start, end - start)));
        start = end + 1;
    }
    return set;
}

std::size_t default_patch_size(std::size_t image_h, std::size_t image_w) {
    return std::max(image_h, image_w) <= 32 ? 4 : 32;
}

Topology topology(const BiqcConfig& c) {
    const AblationSet& a = c.ablation;
    Topology t;
    t.cnn = !a.evc;
    t.lsf_in_fusion = !a.evc;
    t.attention = !a.evc && !a.ofc && !a.hsf;
    t.metric = !a.hsf;
    t.quantum_circuit = !a.quantum;
    return t;
}

std::size_t fusion_dim(const BiqcConfig& c) {
    const Topology t = topology(c);
    const auto d = static_cast<std::size_t>(c.ansatz.num_qubits);
    return (t.lsf_in_fusion ? c.lsf_feature_dim() : 0) + (t.attention ? d : 0) + (t.metric ? d : 0);
}

void validate(const BiqcConfig& c) {
    ansatz::validate(c.ansatz);
    spectral::validate(c.spectral);
    if (c.patch_size == 0 || c.spectral.patch_size != c.patch_size) {
        throw std::invalid_argument("BiqcConfig: unresolved patch size (call resolve())");
    }
    if (c.image_h < kFeatureStride || c.image_w < kFeatureStride) {
        throw std::invalid_argument("BiqcConfig: image must be at least 4x4");
    }
    if (c.patch_size > c.image_h || c.patch_size > c.image_w) {
        throw std::invalid_argument("BiqcConfig: patch size " + std::to_string(c.patch_size) + " exceeds image " +
                                    std::to_string(c.image_h) + "x" + std::to_string(c.image_w));
    }
    if (c.cnn.conv1_channels == 0 || c.cnn.conv2_channels == 0 || c.cnn.kernel % 2 == 0) {
        throw std::invalid_argument("BiqcConfig: CNN needs non-zero widths and an odd kernel");
    }
    if (fusion_dim(c) == 0) {
        throw std::invalid_argument("BiqcConfig: ablation set " + c.ablation.to_string() + " leaves nothing to fuse");
    }
}

BiqcConfig resolve(BiqcConfig c) {
    if (c.patch_size == 0) c.patch_size = default_patch_size(c.image_h, c.image_w);
    c.spectral.patch_size = c.patch_size;
    validate(c);
    return c;
}

BiqcConfig apply_ablation(BiqcConfig config, Ablation variant) {
    config.ablation.insert(variant);
    return config;
}

std::map<std::string, std::vector<std::size_t>> param_shapes(const BiqcConfig& c) {
    const Layers L = layers_for(c);
    const Topology t = topology(c);
    std::map<std::string, std::vector<std::size_t>> shapes;
    auto add = [&](const std::string& name, const nnet::LayerSpec& spec) {
        shapes[name + ".weight"] = spec.weight_shape();
        shapes[name + ".bias"] = spec.bias_shape();
    };
    if (t.cnn) {
        add("conv1", L.conv1);
        add("conv2", L.conv2);
    }
    if (t.attention) add("attention", L.attention);
    if (t.any_patch()) {
        add(encoder_name(0), L.encoder0);
        if (t.quantum_circuit) {
            for (int l = 0; l < c.ansatz.num_blocks; ++l) {
                const auto block = static_cast<std::size_t>(l);
                if (l > 0) add(encoder_name(block), L.encoder_later);
                shapes[theta_name(block)] = ansatz::theta_shape(c.ansatz);
            }
        } else {
            add("mlp1", L.mlp1);
            add("mlp2", L.mlp2);
        }
    }
    add("head", L.head);
    return shapes;
}

ParamSet init_params(const BiqcConfig& config, std::uint64_t seed) {
    const BiqcConfig c = resolve(config);
    const Layers L = layers_for(c);
    std::mt19937_64 rng(seed);
    ParamSet p;
    const auto shapes = param_shapes(c);
    auto layer = [&](const std::string& name, const nnet::LayerSpec& spec) {
        if (!shapes.contains(name + ".weight")) return;
        auto lp = nnet::init_params(spec, rng);
        p[name + ".weight"] = std::move(lp.weight);
        p[name + ".bias"] = std::move(lp.bias);
    };
    layer("conv1", L.conv1);
    layer("conv2", L.conv2);
    layer("attention", L.attention);
    layer(encoder_name(0), L.encoder0);
    for (int l = 1; l < c.ansatz.num_blocks; ++l) layer(encoder_name(static_cast<std::size_t>(l)), L.encoder_later);
    layer("mlp1", L.mlp1);
    layer("mlp2", L.mlp2);
    layer("head", L.head);
    std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
    for (int l = 0; l < c.ansatz.num_blocks; ++l) {
        const std::string name = theta_name(static_cast<std::size_t>(l));
        if (!shapes.contains(name)) continue;
        TensorF t(shapes.at(name));
        for (double& v : t.values()) v = angle(rng);
        p[name] = std::move(t);
    }
    return p;
}

ParamSet zeros_like(const ParamSet& params) {
    ParamSet z;
    for (const auto& [name, t] : params) z.emplace(name, TensorF(t.shape()));
    return z;
}

void check_params(const BiqcConfig& config, const ParamSet& params) {
    const auto shapes = param_shapes(config);
    for (const auto& [name, shape] : shapes) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("parameters: missing tensor '" + name + "'");
        if (it->second.shape() != shape) {
            throw std::invalid_argument("parameters: '" + name + "' has shape " + it->second.shape_string() +
                                        ", expected " + TensorF::shape_string(shape));
        }
    }
    for (const auto& [name, t] : params) {
        if (!shapes.contains(name)) throw std::invalid_argument("parameters: unexpected tensor '" + name + "'");
    }
}

void check_image(const BiqcConfig& c, const TensorF& image) {
    if (image.rank() != 2 || image.dim(0) != c.image_h || image.dim(1) != c.image_w) {
        throw std::invalid_argument("biqc_forward: image shape " + image.shape_string() + " does not match (" +
                                    std::to_string(c.image_h) + ", " + std::to_string(c.image_w) + ")");
    }
    constexpr double tol = 1e-6;
    for (double v : image.values()) {
        if (!(v >= -kHalfPi - tol && v <= kHalfPi + tol)) {
            throw std::invalid_argument("biqc_forward: pixel value " + std::to_string(v) +
                                        " outside [-pi/2, pi/2]; normalize the image first");
        }
    }
}

ForwardTrace biqc_forward(const BiqcConfig& config, const ParamSet& params, const TensorF& image,
                          std::mt19937_64& rng, const std::optional<PatchRegion>& metric_patch) {
    const BiqcConfig c = resolve(config);
    check_params(c, params);
    check_image(c, image);
    const Layers L = layers_for(c);
    const Topology topo = topology(c);

    ForwardTrace tr;
    if (topo.cnn) {
        TensorF x = image.reshaped({1, c.image_h, c.image_w});
        const std::pair<const nnet::LayerSpec*, const char*> stack[] = {
            {&L.conv1, "conv1"}, {&L.relu, nullptr}, {&L.pool, nullptr},
            {&L.conv2, "conv2"}, {&L.relu, nullptr}, {&L.pool, nullptr}};
        for (const auto& [spec, name] : stack) {
            auto r = nnet::forward(*spec, name ? layer_params(params, name) : nnet::LayerParams{}, x);
            tr.cnn.push_back(std::move(r.cache));
            x = std::move(r.output);
        }
        tr.z_lsf = std::move(x);
        auto g = nnet::forward(L.gap, {}, tr.z_lsf);
        tr.lsf_features = g.output.values();
        tr.gap = std::move(g.cache);
    }
    if (topo.lsf_in_fusion) tr.fused = tr.lsf_features;

    if (topo.attention) {
        auto a = nnet::forward(L.attention, layer_params(params, "attention"), tr.z_lsf);
        tr.a_hsf = std::move(a.output);
        tr.attention_conv = std::move(a.cache);
        tr.attention_cell = nnet::argmax(tr.a_hsf);
        tr.gate = nnet::sigmoid(tr.a_hsf[tr.attention_cell]);
        const PatchRegion region = nnet::attention_locate(tr.a_hsf, kFeatureStride, c.patch_size, c.image_h, c.image_w);
        tr.attention_branch = run_branch(c, L, params, image, region, rng);
        tr.circuit_evaluations += tr.attention_branch->blocks.circuit_evaluations;
        for (double v : tr.attention_branch->features) tr.fused.push_back(tr.gate * v);
    }
    if (topo.metric) {
        const PatchRegion region = metric_patch ? *metric_patch : spectral::select_hsf_patch(image, c.spectral).region;
        if (!region.fits(c.image_h, c.image_w) || region.size != c.patch_size) {
            throw std::invalid_argument("biqc_forward: metric patch does not fit the configured image/patch size");
        }
        tr.metric_branch = run_branch(c, L, params, image, region, rng);
        tr.circuit_evaluations += tr.metric_branch->blocks.circuit_evaluations;
        tr.fused.insert(tr.fused.end(), tr.metric_branch->features.begin(), tr.metric_branch->features.end());
    }

    auto head = nnet::forward(L.head, layer_params(params, "head"), TensorF({tr.fused.size()}, tr.fused));
    tr.logit = head.output[0];
    tr.head = std::move(head.cache);
    tr.probability = nnet::sigmoid(std::clamp(tr.logit, -kLogitClamp, kLogitClamp));
    return tr;
}

Gradients biqc_backward(const BiqcConfig& config, const ParamSet& params, const ForwardTrace& trace, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("biqc_backward: label must be 0 or 1");
    const BiqcConfig c = resolve(config);
    check_params(c, params);
    const Layers L = layers_for(c);
    const Topology topo = topology(c);
    if (trace.fused.size() != fusion_dim(c) || topo.attention != trace.attention_branch.has_value() ||
        topo.metric != trace.metric_branch.has_value() || (topo.cnn && trace.cnn.size() != 6)) {
        throw std::invalid_argument("biqc_backward: trace was not produced by this configuration");
    }

    Gradients out{zeros_like(params), trace.probability - static_cast<double>(label), 0};
    auto hg = nnet::backward(L.head, layer_params(params, "head"), trace.head, TensorF({1}, {out.logit_grad}));
    accumulate(out.params, "head", hg);
    const std::vector<double>& g_fused = hg.input_grad.values();

    const auto d = static_cast<std::size_t>(c.ansatz.num_qubits);
    std::size_t offset = 0;
    TensorF g_z;
    if (topo.cnn) g_z = TensorF(trace.z_lsf.shape());
    if (topo.lsf_in_fusion) {
        TensorF g_lsf({c.lsf_feature_dim()},
                      std::vector<double>(g_fused.begin(), g_fused.begin() + static_cast<std::ptrdiff_t>(c.lsf_feature_dim())));
        g_z = nnet::backward(L.gap, {}, trace.gap, g_lsf).input_grad;
        offset += c.lsf_feature_dim();
    }
    if (topo.attention) {
        const BranchTrace& b = *trace.attention_branch;
        std::vector<double> g_h(d);
        double g_gate = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            g_h[j] = trace.gate * g_fused[offset + j];
            g_gate += b.features[j] * g_fused[offset + j];
        }
        offset += d;
        out.circuit_evaluations += branch_backward(c, L, params, b, g_h, out.params);

        TensorF g_a(trace.a_hsf.shape());
        g_a[trace.attention_cell] = g_gate * trace.gate * (1.0 - trace.gate);
        auto ag = nnet::backward(L.attention, layer_params(params, "attention"), trace.attention_conv, g_a);
        accumulate(out.params, "attention", ag);
        for (std::size_t i = 0; i < g_z.size(); ++i) g_z[i] += ag.input_grad[i];
    }
    if (topo.metric) {
        std::span<const double> g_h(g_fused.data() + offset, d);
        out.circuit_evaluations += branch_backward(c, L, params, *trace.metric_branch, g_h, out.params);
    }
    if (topo.cnn) {
        const std::pair<const nnet::LayerSpec*, const char*> stack[] = {
            {&L.conv1, "conv1"}, {&L.relu, nullptr}, {&L.pool, nullptr},
            {&L.conv2, "conv2"}, {&L.relu, nullptr}, {&L.pool, nullptr}};
        TensorF g = std::move(g_z);
        for (std::size_t i = 6; i-- > 0;) {
            const auto& [spec, name] = stack[i];
            auto lg = nnet::backward(*spec, name ? layer_params(params, name) : nnet::LayerParams{}, trace.cnn[i], g, i > 0);
            if (name) accumulate(out.params, name, lg);
            if (i > 0) g = std::move(lg.input_grad);
        }
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> to_key_values(const BiqcConfig& c) {
    auto u = [](std::size_t v) { return std::to_string(v); };
    return {
        {"model.image_h", u(c.image_h)},
        {"model.image_w", u(c.image_w)},
        {"model.patch_size", u(c.patch_size)},
        {"model.ansatz.num_qubits", std::to_string(c.ansatz.num_qubits)},
        {"model.ansatz.num_blocks", std::to_string(c.ansatz.num_blocks)},
        {"model.ansatz.layers_per_block", std::to_string(c.ansatz.layers_per_block)},
        {"model.ansatz.noise_level", kv::format_double(c.ansatz.noise_level)},
        {"model.spectral.patch_size", u(c.spectral.patch_size)},
        {"model.spectral.cutoff", kv::format_double(c.spectral.cutoff)},
        {"model.spectral.epsilon", kv::format_double(c.spectral.epsilon)},
        {"model.spectral.folded_frequencies", c.spectral.folded_frequencies ? "true" : "false"},
        {"model.cnn.conv1_channels", u(c.cnn.conv1_channels)},
        {"model.cnn.conv2_channels", u(c.cnn.conv2_channels)},
        {"model.cnn.kernel", u(c.cnn.kernel)},
        {"model.ablation", c.ablation.to_string()},
    };
}

BiqcConfig biqc_config_from_key_values(const std::map<std::string, std::string>& m) {
    BiqcConfig c;
    c.image_h = kv::get_uint(m, "model.image_h");
    c.image_w = kv::get_uint(m, "model.image_w");
    c.patch_size = kv::get_uint(m, "model.patch_size");
    c.ansatz.num_qubits = static_cast<int>(kv::get_uint(m, "model.ansatz.num_qubits"));
    c.ansatz.num_blocks = static_cast<int>(kv::get_uint(m, "model.ansatz.num_blocks"));
    c.ansatz.layers_per_block = static_cast<int>(kv::get_uint(m, "model.ansatz.layers_per_block"));
    c.ansatz.noise_level = kv::get_double(m, "model.ansatz.noise_level");
    c.spectral.patch_size = kv::get_uint(m, "model.spectral.patch_size");
    c.spectral.cutoff = kv::get_double(m, "model.spectral.cutoff");
    c.spectral.epsilon = kv::get_double(m, "model.spectral.epsilon");
    c.spectral.folded_frequencies = kv::get_bool(m, "model.spectral.folded_frequencies");
    c.cnn.conv1_channels = kv::get_uint(m, "model.cnn.conv1_channels");
    c.cnn.conv2_channels = kv::get_uint(m, "model.cnn.conv2_channels");
    c.cnn.kernel = kv::get_uint(m, "model.cnn.kernel");
    c.ablation = AblationSet::parse(kv::require(m, "model.ablation"));
    return c;
}

}  // namespace biqc::model
