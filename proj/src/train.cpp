#include "biqc/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>

#include "biqc/kv.hpp"

namespace biqc::train {

namespace {

// Independent stream per (seed, sample, epoch, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint32_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32),
                      tag};
    return std::mt19937_64(seq);
}

constexpr std::uint32_t kTagTrain = 0x7a11;
constexpr std::uint32_t kTagEval = 0xe7a1;
constexpr std::uint32_t kTagShuffle = 0x5eed;

// Runs fn(i) for i in [0, n). Results must go to per-index slots so the
// outcome does not depend on the worker count.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void check_label(int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("label must be 0 or 1, got " + std::to_string(y));
}

void check_compatible(const model::BiqcConfig& config, const data::Dataset& ds, const char* which) {
    data::check_dataset(ds);
    if (ds.size() == 0) throw std::invalid_argument(std::string(which) + " split is empty");
    if (ds.height != config.image_h || ds.width != config.image_w) {
        throw std::invalid_argument(std::string(which) + " images are " + std::to_string(ds.height) + "x" +
                                    std::to_string(ds.width) + " but the model expects " +
                                    std::to_string(config.image_h) + "x" + std::to_string(config.image_w));
    }
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (!(cfg.weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (cfg.max_epochs == 0) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (!(cfg.min_delta >= 0.0)) throw std::invalid_argument("TrainConfig: min_delta must be >= 0");
    if (cfg.batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

std::size_t resolve_threads(std::size_t requested) {
    std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("BIQC_THREADS"); env && *env) {
        char* end = nullptr;
        const unsigned long cap = std::strtoul(env, &end, 10);
        if (*end != '\0' || cap == 0) throw std::invalid_argument(std::string("BIQC_THREADS must be a positive integer, got ") + env);
        n = std::min<std::size_t>(n, cap);
    }
    return n;
}

OptState init_opt_state(const model::ParamSet& params) {
    return {model::zeros_like(params), model::zeros_like(params), 0};
}

double bce_loss(double p, int y) {
    check_label(y);
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return y == 1 ? -std::log(q) : -std::log(1.0 - q);
}

double bce_grad(double p, int y) {
    check_label(y);
    const double q = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    return (q - y) / (q * (1.0 - q));
}

void adamw_step(model::ParamSet& params, const model::ParamSet& grads, OptState& state, const TrainConfig& cfg) {
    for (const auto& [name, g] : grads) {
        auto it = params.find(name);
        if (it == params.end()) throw std::invalid_argument("adamw_step: gradient for unknown parameter " + name);
        if (g.shape() != it->second.shape()) {
            throw std::invalid_argument("adamw_step: gradient shape " + g.shape_string() + " does not match " + name +
                                        " " + it->second.shape_string());
        }
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (!std::isfinite(g[i])) {
                throw std::runtime_error("non-finite gradient in " + name + "[" + std::to_string(i) + "] at step " +
                                         std::to_string(state.step + 1));
            }
        }
    }
    if (grads.size() != params.size()) throw std::invalid_argument("adamw_step: gradient set does not cover all parameters");

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(kAdamBeta1, t);
    const double c2 = 1.0 - std::pow(kAdamBeta2, t);
    for (auto& [name, theta] : params) {
        const TensorF& g = grads.at(name);
        auto mi = state.m.try_emplace(name, theta.shape()).first;
        auto vi = state.v.try_emplace(name, theta.shape()).first;
        TensorF& m = mi->second;
        TensorF& v = vi->second;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
            v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            theta[i] = theta[i] - cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + kAdamEps)) -
                       cfg.learning_rate * cfg.weight_decay * theta[i];
        }
    }
}

double accuracy(std::span<const double> probabilities, std::span<const int> labels) {
    if (probabilities.size() != labels.size() || labels.empty()) {
        throw std::invalid_argument("accuracy: need equal-length, non-empty inputs");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        check_label(labels[i]);
        hits += static_cast<int>(probabilities[i] >= 0.5) == labels[i];
    }
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auc: scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Mann-Whitney U from mid-ranks. Ranks are doubled so tie groups stay integral.
    std::uint64_t rank2_pos = 0, n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const std::uint64_t mid2 = i + j + 1;  // 2 * average of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            check_label(labels[order[k]]);
            if (labels[order[k]] == 1) {
                rank2_pos += mid2;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::uint64_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("auc: both classes must be present");
    const std::uint64_t u2 = rank2_pos - n_pos * (n_pos + 1);
    return static_cast<double>(u2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double nyquist_coefficient(std::span<const double> features) {
    if (features.size() < 2) throw std::invalid_argument("nyquist_coefficient: need at least 2 values");
    double s = 0.0;
    for (std::size_t j = 0; j < features.size(); ++j) s += (j % 2 == 0) ? features[j] : -features[j];
    return s / static_cast<double>(features.size());
}

std::vector<std::optional<PatchRegion>> metric_patches(const model::BiqcConfig& config, const data::Dataset& ds) {
    std::vector<std::optional<PatchRegion>> out(ds.size());
    if (!model::topology(config).metric) return out;
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = spectral::select_hsf_patch(ds.images[i], config.spectral).region;
    return out;
}

EvalReport evaluate(const model::BiqcConfig& config, const model::ParamSet& params, const data::Dataset& ds,
                    std::uint64_t seed, const std::vector<std::optional<PatchRegion>>& patches, std::size_t threads) {
    check_compatible(config, ds, "evaluation");
    if (!patches.empty() && patches.size() != ds.size()) throw std::invalid_argument("evaluate: patch cache size mismatch");
    EvalReport r;
    r.probabilities.resize(ds.size());
    r.features.resize(ds.size());
    std::vector<std::size_t> evals(ds.size());
    parallel_for(ds.size(), threads, [&](std::size_t i) {
        auto rng = stream(seed, i, 0, kTagEval);
        const auto tr = model::biqc_forward(config, params, ds.images[i], rng,
                                            patches.empty() ? std::nullopt : patches[i]);
        r.probabilities[i] = tr.probability;
        r.features[i] = tr.fused;
        evals[i] = tr.circuit_evaluations;
    });
    double loss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        loss += bce_loss(r.probabilities[i], ds.labels[i]);
        r.circuit_evaluations += evals[i];
    }
    r.loss = loss / static_cast<double>(ds.size());
    r.accuracy = accuracy(r.probabilities, ds.labels);
    const auto pos = std::count(ds.labels.begin(), ds.labels.end(), 1);
    r.auc = (pos == 0 || pos == static_cast<std::ptrdiff_t>(ds.size())) ? std::numeric_limits<double>::quiet_NaN()
                                                                         : auc(r.probabilities, ds.labels);
    return r;
}

TrainResult train_loop(const model::BiqcConfig& config, model::ParamSet params, const data::Dataset& train_set,
                       const data::Dataset& test_set, const TrainConfig& cfg, const EpochCallback& on_epoch) {
    validate(cfg);
    model::validate(config);
    model::check_params(config, params);
    check_compatible(config, train_set, "train");
    check_compatible(config, test_set, "test");

    model::BiqcConfig grad_config = config;
    if (!cfg.train_with_noise) grad_config.ansatz.noise_level = 0.0;

    const std::size_t threads = resolve_threads(cfg.threads);
    const auto train_patches = metric_patches(config, train_set);
    const auto test_patches = metric_patches(config, test_set);
    const std::size_t n = train_set.size();

    TrainResult result;
    OptState opt = init_opt_state(params);
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<std::size_t> order(n);
    std::vector<double> probs(n);
    std::vector<model::Gradients> grads(std::min(cfg.batch_size, n));

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        auto shuffle_rng = stream(cfg.seed, epoch, 0, kTagShuffle);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            parallel_for(count, threads, [&](std::size_t k) {
                const std::size_t idx = order[start + k];
                auto rng = stream(cfg.seed, idx, epoch, kTagTrain);
                const auto tr = model::biqc_forward(grad_config, params, train_set.images[idx], rng, train_patches[idx]);
                probs[idx] = tr.probability;
                grads[k] = model::biqc_backward(grad_config, params, tr, train_set.labels[idx]);
                grads[k].circuit_evaluations += tr.circuit_evaluations;
            });
            model::ParamSet mean = model::zeros_like(params);
            const double scale = 1.0 / static_cast<double>(count);
            for (std::size_t k = 0; k < count; ++k) {
                for (auto& [name, t] : mean) {
                    const TensorF& g = grads[k].params.at(name);
                    for (std::size_t i = 0; i < t.size(); ++i) t[i] += g[i] * scale;
                }
                result.circuit_evaluations += grads[k].circuit_evaluations;
            }
            adamw_step(params, mean, opt, cfg);
        }

        EpochMetrics em;
        em.epoch = epoch;
        for (std::size_t i = 0; i < n; ++i) em.loss += bce_loss(probs[i], train_set.labels[i]);
        em.loss /= static_cast<double>(n);
        em.train_acc = accuracy(probs, train_set.labels);
        const EvalReport test = evaluate(config, params, test_set, cfg.seed, test_patches, threads);
        em.test_acc = test.accuracy;
        em.test_auc = test.auc;
        em.test_loss = test.loss;
        result.circuit_evaluations += test.circuit_evaluations;
        result.log.push_back(em);
        if (on_epoch) on_epoch(em);

        const double monitored = cfg.monitor_validation ? em.test_loss : em.loss;
        if (monitored < best - cfg.min_delta) {
            best = monitored;
            stale = 0;
        } else {
            ++stale;
        }
        if (stale >= cfg.patience) {
            result.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    result.params = std::move(params);
    return result;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

}  // namespace

void write_metrics_csv(const std::filesystem::path& path, const std::vector<EpochMetrics>& log) {
    auto out = open_csv(path);
    out << "epoch,loss,train_acc,test_acc,test_auc\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << kv::format_double(e.loss) << ',' << kv::format_double(e.train_acc) << ','
            << kv::format_double(e.test_acc) << ',' << kv::format_double(e.test_auc) << '\n';
    }
}

void write_spectrum_csv(const std::filesystem::path& path, const std::vector<int>& labels,
                        const std::vector<double>& coefficients) {
    if (labels.size() != coefficients.size()) throw std::invalid_argument("write_spectrum_csv: length mismatch");
    auto out = open_csv(path);
    out << "sample_id,label,coefficient\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << i << ',' << labels[i] << ',' << kv::format_double(coefficients[i]) << '\n';
    }
}

void write_features_csv(const std::filesystem::path& path, const std::vector<int>& labels,
                        const std::vector<std::vector<double>>& features) {
    if (labels.size() != features.size()) throw std::invalid_argument("write_features_csv: length mismatch");
    auto out = open_csv(path);
    out << "sample_id,label";
    const std::size_t k = features.empty() ? 0 : features[0].size();
    for (std::size_t j = 0; j < k; ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (features[i].size() != k) throw std::invalid_argument("write_features_csv: ragged feature rows");
        out << i << ',' << labels[i];
        for (double v : features[i]) out << ',' << kv::format_double(v);
        out << '\n';
    }
}

std::vector<std::pair<std::string, std::string>> to_key_values(const TrainConfig& c) {
    return {
        {"train.learning_rate", kv::format_double(c.learning_rate)},
        {"train.weight_decay", kv::format_double(c.weight_decay)},
        {"train.max_epochs", std::to_string(c.max_epochs)},
        {"train.patience", std::to_string(c.patience)},
        {"train.min_delta", kv::format_double(c.min_delta)},
        {"train.batch_size", std::to_string(c.batch_size)},
        {"train.seed", std::to_string(c.seed)},
        {"train.train_with_noise", c.train_with_noise ? "true" : "false"},
        {"train.monitor_validation", c.monitor_validation ? "true" : "false"},
        {"train.threads", std::to_string(c.threads)},
    };
}

TrainConfig train_config_from_key_values(const std::map<std::string, std::string>& m) {
    TrainConfig c;
    c.learning_rate = kv::get_double(m, "train.learning_rate");
    c.weight_decay = kv::get_double(m, "train.weight_decay");
    c.max_epochs = kv::get_uint(m, "train.max_epochs");
    c.patience = kv::get_uint(m, "train.patience");
    c.min_delta = kv::get_double(m, "train.min_delta");
    c.batch_size = kv::get_uint(m, "train.batch_size");
    c.seed = kv::get_uint(m, "train.seed");
    c.train_with_noise = kv::get_bool(m, "train.train_with_noise");
    c.monitor_validation = kv::get_bool(m, "train.monitor_validation");
    c.threads = kv::get_uint(m, "train.threads");
    return c;
}

data::Checkpoint make_checkpoint(const Snapshot& s) {
    data::Checkpoint ck;
    ck.config = model::to_key_values(s.config);
    for (auto& kvp : to_key_values(s.train)) ck.config.push_back(std::move(kvp));
    for (const auto& [name, t] : s.params) ck.tensors.push_back({name, t});
    return ck;
}

Snapshot restore_checkpoint(const data::Checkpoint& ck) {
    std::map<std::string, std::string> m(ck.config.begin(), ck.config.end());
    Snapshot s;
    s.config = model::biqc_config_from_key_values(m);
    s.train = train_config_from_key_values(m);
    for (const auto& nt : ck.tensors) {
        if (!s.params.emplace(nt.name, nt.tensor).second) {
            throw std::runtime_error("checkpoint: duplicate tensor '" + nt.name + "'");
        }
    }
    model::check_params(s.config, s.params);
    return s;
}

}  // namespace biqc::train
