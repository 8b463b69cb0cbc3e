#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "biqc/data.hpp"
#include "biqc/model.hpp"

namespace biqc::train {

struct TrainConfig {
    double learning_rate = 1e-3;
    double weight_decay = 5e-4;
    std::size_t max_epochs = 10000;
    std::size_t patience = 50;
    double min_delta = 1e-6;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
    bool train_with_noise = false;    // noise off during gradient passes unless set
    bool monitor_validation = false;  // early stopping on test loss instead of train loss
    std::size_t threads = 0;          // 0: BIQC_THREADS or hardware concurrency

    bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

/// Worker count: cfg.threads if set, else hardware concurrency, capped by BIQC_THREADS.
std::size_t resolve_threads(std::size_t requested);

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;
inline constexpr double kProbClamp = 1e-7;

struct OptState {
    model::ParamSet m;
    model::ParamSet v;
    std::uint64_t step = 0;
};

OptState init_opt_state(const model::ParamSet& params);

double bce_loss(double p, int y);
/// dL/dp at the clamped probability.
double bce_grad(double p, int y);

/// Throws std::runtime_error naming the tensor when a gradient is not finite.
void adamw_step(model::ParamSet& params, const model::ParamSet& grads, OptState& state, const TrainConfig& cfg);

/// Fraction of samples with (p >= 0.5) == label.
double accuracy(std::span<const double> probabilities, std::span<const int> labels);

/// Rank statistic with ties counted 1/2. Throws unless both classes are present.
double auc(std::span<const double> scores, std::span<const int> labels);

/// (1/n) sum_j (-1)^j x_j, n >= 2.
double nyquist_coefficient(std::span<const double> features);

/// r-metric patch per image, or nullopt when the config has no metric branch.
std::vector<std::optional<PatchRegion>> metric_patches(const model::BiqcConfig& config, const data::Dataset& ds);

struct EvalReport {
    double accuracy = 0.0;
    double auc = 0.0;  // NaN when the split holds a single class
    double loss = 0.0;
    std::vector<double> probabilities;
    std::vector<std::vector<double>> features;  // fused pre-head vectors
    std::size_t circuit_evaluations = 0;
};

/// Forward-only pass over a dataset. Noise (if configured) draws from a
/// per-sample stream derived from `seed`.
EvalReport evaluate(const model::BiqcConfig& config, const model::ParamSet& params, const data::Dataset& ds,
                    std::uint64_t seed, const std::vector<std::optional<PatchRegion>>& patches = {},
                    std::size_t threads = 1);

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double loss = 0.0;      // mean train BCE over the epoch's mini-batches
    double train_acc = 0.0;
    double test_acc = 0.0;
    double test_auc = 0.0;
    double test_loss = 0.0;
};

struct TrainResult {
    model::ParamSet params;
    std::vector<EpochMetrics> log;
    bool stopped_early = false;
    std::size_t circuit_evaluations = 0;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

TrainResult train_loop(const model::BiqcConfig& config, model::ParamSet params, const data::Dataset& train_set,
                       const data::Dataset& test_set, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log);
void write_spectrum_csv(const std::filesystem::path& path, const std::vector<int>& labels,
                        const std::vector<double>& coefficients);
void write_features_csv(const std::filesystem::path& path, const std::vector<int>& labels,
                        const std::vector<std::vector<double>>& features);

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& cfg);
TrainConfig train_config_from_key_values(const std::map<std::string, std::string>& kv);

struct Snapshot {
    model::BiqcConfig config;
    TrainConfig train;
    model::ParamSet params;
};

data::Checkpoint make_checkpoint(const Snapshot& snapshot);
Snapshot restore_checkpoint(const data::Checkpoint& checkpoint);

}  // namespace biqc::train
