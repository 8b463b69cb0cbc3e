#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "biqc/ansatz.hpp"
#include "biqc/nnet.hpp"
#include "biqc/spectral.hpp"
#include "biqc/tensor.hpp"

// End-to-end hybrid classifier.
//
//   image ──conv/relu/pool x2──> Z_LSF ──GAP──────────────> lsf features ─┐
//                                  └─1x1 conv─> A_HSF ─argmax─> patch A   │
//   image ──r-metric tiles──────────────────────────────────> patch M     │
//   patch A, M ──encoder──> quantum blocks (shared) ──> h_A * sigma(max A_HSF), h_M
//   [lsf | h_A | h_M] ──linear──> sigmoid ──> p
//
// Patch selection is a constant for the backward pass.

namespace biqc::model {

enum class Ablation { EVC, OFC, HSF, Quantum };

const char* ablation_name(Ablation a);
Ablation parse_ablation(std::string_view name);

struct AblationSet {
    bool evc = false;
    bool ofc = false;
    bool hsf = false;
    bool quantum = false;

    bool contains(Ablation a) const;
    void insert(Ablation a);
    bool empty() const { return !(evc || ofc || hsf || quantum); }
    /// "none" or a '+'-joined list such as "Ab-OFC+Ab-Quantum".
    std::string to_string() const;
    static AblationSet parse(std::string_view text);

    bool operator==(const AblationSet&) const = default;
};

struct CnnConfig {
    std::size_t conv1_channels = 8;
    std::size_t conv2_channels = 16;
    std::size_t kernel = 3;

    bool operator==(const CnnConfig&) const = default;
};

struct BiqcConfig {
    std::size_t image_h = 8;
    std::size_t image_w = 8;
    std::size_t patch_size = 0;  // 0 selects the default rule
    ansatz::AnsatzConfig ansatz;
    spectral::SpectralConfig spectral;
    CnnConfig cnn;
    AblationSet ablation;

    std::size_t lsf_feature_dim() const { return cnn.conv2_channels; }
    bool operator==(const BiqcConfig&) const = default;
};

/// 4 for images up to 32 px on the long side, 32 above that.
std::size_t default_patch_size(std::size_t image_h, std::size_t image_w);

/// Fills in the patch size (and the spectral patch size) and validates.
BiqcConfig resolve(BiqcConfig config);
void validate(const BiqcConfig& config);

BiqcConfig apply_ablation(BiqcConfig config, Ablation variant);

/// Which parts of the network a config actually instantiates.
struct Topology {
    bool cnn = true;             // EVC
    bool lsf_in_fusion = true;
    bool attention = true;       // OFC patch + gate
    bool metric = true;          // VVS patch
    bool quantum_circuit = true; // Fusiform; false means the MLP stand-in
    bool any_patch() const { return attention || metric; }
};

Topology topology(const BiqcConfig& config);
std::size_t fusion_dim(const BiqcConfig& config);

/// Spatial downsampling between the image and Z_LSF (two 2x2 pools).
inline constexpr std::size_t kFeatureStride = 4;

/// Ordered name -> tensor map; iteration order is the canonical parameter order.
using ParamSet = std::map<std::string, TensorF>;

std::map<std::string, std::vector<std::size_t>> param_shapes(const BiqcConfig& config);
ParamSet init_params(const BiqcConfig& config, std::uint64_t seed);
ParamSet zeros_like(const ParamSet& params);
void check_params(const BiqcConfig& config, const ParamSet& params);

struct BranchTrace {
    PatchRegion region;
    TensorF pixels;                        // flattened patch, (h*h)
    nnet::LayerCache encoder;              // first-block encoder (linear part)
    std::vector<double> angles;            // first-block angles
    ansatz::BlocksTrace blocks;            // circuit path
    std::vector<nnet::LayerCache> later_encoders;  // index l >= 1
    std::vector<nnet::LayerCache> mlp;     // MLP path: linear, tanh, linear, tanh
    std::vector<double> features;          // h_Quantum (or its MLP stand-in), length d
};

struct ForwardTrace {
    std::vector<nnet::LayerCache> cnn;  // conv1, relu, pool, conv2, relu, pool
    TensorF z_lsf;
    nnet::LayerCache gap;
    std::vector<double> lsf_features;
    nnet::LayerCache attention_conv;
    TensorF a_hsf;
    std::size_t attention_cell = 0;
    double gate = 1.0;  // sigma(max A_HSF)
    std::optional<BranchTrace> attention_branch;
    std::optional<BranchTrace> metric_branch;
    std::vector<double> fused;  // pre-head feature vector
    nnet::LayerCache head;
    double logit = 0.0;
    double probability = 0.5;
    std::size_t circuit_evaluations = 0;
};

/// Logit clamp applied before the sigmoid.
inline constexpr double kLogitClamp = 30.0;

/// Throws if the image is not (image_h, image_w) or not within [-pi/2, pi/2].
void check_image(const BiqcConfig& config, const TensorF& image);

/// `metric_patch` may be supplied when the caller has cached the r-metric
/// selection for this image; it is recomputed otherwise.
ForwardTrace biqc_forward(const BiqcConfig& config, const ParamSet& params, const TensorF& image,
                          std::mt19937_64& rng, const std::optional<PatchRegion>& metric_patch = std::nullopt);

struct Gradients {
    ParamSet params;
    double logit_grad = 0.0;
    std::size_t circuit_evaluations = 0;
};

/// Gradient of BCE(p, label) with respect to every parameter.
Gradients biqc_backward(const BiqcConfig& config, const ParamSet& params, const ForwardTrace& trace, int label);

/// Key/value form used inside checkpoints. Doubles are printed round-trip exact.
std::vector<std::pair<std::string, std::string>> to_key_values(const BiqcConfig& config);
BiqcConfig biqc_config_from_key_values(const std::map<std::string, std::string>& kv);

}  // namespace biqc::model
