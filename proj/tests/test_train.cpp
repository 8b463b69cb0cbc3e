#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "biqc/train.hpp"
#include "oracles.hpp"

using namespace biqc;
using namespace biqc::train;

namespace {

model::BiqcConfig tiny_config(std::optional<model::Ablation> ab = {}) {
    model::BiqcConfig c;
    c.ansatz.num_qubits = 2;
    c.ansatz.num_blocks = 1;
    c.ansatz.layers_per_block = 1;
    if (ab) c.ablation.insert(*ab);
    return model::resolve(c);
}

// Left half bright for class 1, right half bright for class 0.
data::Dataset separable(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    data::Dataset ds{"toy", 8, 8, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        TensorF im({8, 8});
        for (std::size_t r = 0; r < 8; ++r)
            for (std::size_t c = 0; c < 8; ++c) {
                const bool bright = (c < 4) == (y == 1);
                im.at(r, c) = std::clamp((bright ? 1.2 : -1.2) + jitter(rng), -1.5, 1.5);
            }
        ds.images.push_back(std::move(im));
        ds.labels.push_back(y);
    }
    return ds;
}

}  // namespace

TEST(Bce, Examples) {
    EXPECT_NEAR(bce_loss(0.5, 0), std::log(2.0), 1e-12);
    EXPECT_NEAR(bce_loss(0.5, 1), 0.693147, 1e-6);
    EXPECT_NEAR(bce_loss(0.9, 1), -std::log(0.9), 1e-12);
    EXPECT_NEAR(bce_loss(0.9, 1), 0.105361, 1e-6);
    EXPECT_NEAR(bce_loss(1.0, 1), 1e-7, 1e-9);
    EXPECT_NEAR(bce_loss(0.0, 0), 1e-7, 1e-9);
    EXPECT_TRUE(std::isfinite(bce_loss(0.0, 1)));
    EXPECT_THROW(bce_loss(0.5, 2), std::invalid_argument);
    EXPECT_NEAR(bce_grad(0.9, 1), (0.9 - 1) / (0.9 * 0.1), 1e-12);
}

TEST(AdamW, HandDerivedFirstStep) {
    model::ParamSet p{{"w", TensorF({1}, 1.0)}};
    const model::ParamSet g{{"w", TensorF({1}, 1.0)}};
    auto st = init_opt_state(p);
    TrainConfig cfg;
    adamw_step(p, g, st, cfg);
    EXPECT_NEAR(p.at("w")[0], 1.0 - 1e-3 * (1.0 / (1.0 + 1e-8)) - 1e-3 * 5e-4, 1e-15);
    EXPECT_NEAR(p.at("w")[0], 0.9989995, 1e-9);
    EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientNoDecayIsNoop) {
    std::mt19937_64 rng(0);
    model::ParamSet p{{"a", oracle::random_tensor({3, 2}, rng)}, {"b", oracle::random_tensor({4}, rng)}};
    const auto before = p;
    auto st = init_opt_state(p);
    TrainConfig cfg;
    cfg.weight_decay = 0.0;
    for (int i = 0; i < 5; ++i) adamw_step(p, model::zeros_like(p), st, cfg);
    EXPECT_EQ(p, before);
}

TEST(AdamW, RejectsNonFiniteAndMismatch) {
    model::ParamSet p{{"w", TensorF({2}, 1.0)}};
    auto st = init_opt_state(p);
    TrainConfig cfg;
    model::ParamSet bad{{"w", TensorF({2}, {0.0, std::numeric_limits<double>::quiet_NaN()})}};
    try {
        adamw_step(p, bad, st, cfg);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("w[1]"), std::string::npos);
    }
    EXPECT_EQ(p.at("w")[0], 1.0);
    EXPECT_THROW(adamw_step(p, {{"w", TensorF({3})}}, st, cfg), std::invalid_argument);
}

TEST(AdamW, StepShrinksWithLearningRate) {
    std::mt19937_64 rng(1);
    model::ParamSet p{{"a", oracle::random_tensor({5}, rng)}};
    const model::ParamSet g{{"a", oracle::random_tensor({5}, rng)}};
    double prev = std::numeric_limits<double>::infinity();
    for (double lr : {1e-2, 1e-4, 1e-6, 1e-8}) {
        auto q = p;
        auto st = init_opt_state(q);
        TrainConfig cfg;
        cfg.learning_rate = lr;
        adamw_step(q, g, st, cfg);
        double change = 0.0;
        for (std::size_t i = 0; i < 5; ++i) change = std::max(change, std::abs(q.at("a")[i] - p.at("a")[i]));
        EXPECT_LT(change, prev);
        EXPECT_LE(change, 1.01 * lr);
        prev = change;
    }
}

TEST(Auc, Examples) {
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{0.8, 0.6, 0.4, 0.2}, std::vector<int>{1, 0, 1, 0}), 0.75);
    EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), std::invalid_argument);
}

TEST(Auc, EqualsBruteForceAndRankInvariant) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 2 + rng() % 19;
        std::vector<double> s(n);
        std::vector<int> y(n);
        std::uniform_int_distribution<int> level(0, 5);  // coarse levels force ties
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = level(rng) / 5.0;
            y[i] = static_cast<int>(rng() % 2);
        }
        y[0] = 0;
        y[1] = 1;
        const double a = auc(s, y);
        EXPECT_EQ(a, oracle::brute_auc(s, y));
        std::vector<double> t(n);
        for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) - 7;
        EXPECT_EQ(auc(t, y), a);
    }
}

TEST(Accuracy, ThresholdAtOneHalf) {
    EXPECT_DOUBLE_EQ(accuracy(std::vector<double>{0.5, 0.49, 0.9, 0.1}, std::vector<int>{1, 0, 0, 0}), 0.75);
}

TEST(Nyquist, Examples) {
    EXPECT_DOUBLE_EQ(nyquist_coefficient(std::vector<double>{1, 1, 1, 1}), 0.0);
    EXPECT_DOUBLE_EQ(nyquist_coefficient(std::vector<double>{1, -1, 1, -1}), 1.0);
    EXPECT_DOUBLE_EQ(nyquist_coefficient(std::vector<double>{3, 1, 4, 1}), 1.25);
    EXPECT_THROW(nyquist_coefficient(std::vector<double>{1}), std::invalid_argument);
}

TEST(Loop, PatienceZeroRunsOneEpoch) {
    const auto c = tiny_config(model::Ablation::HSF);
    const auto ds = separable(8, 1);
    TrainConfig cfg;
    cfg.patience = 0;
    const auto r = train_loop(c, model::init_params(c, 1), ds, ds, cfg);
    EXPECT_EQ(r.log.size(), 1u);
}

TEST(Loop, SeparableReachesPerfectTrainAccuracy) {
    const auto c = tiny_config(model::Ablation::HSF);
    const auto train_set = separable(10, 2), test_set = separable(6, 3);
    TrainConfig cfg;
    cfg.max_epochs = 200;
    cfg.learning_rate = 1e-2;
    cfg.batch_size = 4;
    cfg.seed = 5;
    const auto r = train_loop(c, model::init_params(c, 5), train_set, test_set, cfg);
    bool reached = false;
    for (const auto& e : r.log) reached = reached || e.train_acc == 1.0;
    EXPECT_TRUE(reached);
}

TEST(Loop, ReproducibleAndThreadCountIndependent) {
    const auto c = tiny_config();
    const auto ds = separable(12, 4);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 5;
    cfg.seed = 9;
    cfg.threads = 1;
    const auto a = train_loop(c, model::init_params(c, 9), ds, ds, cfg);
    const auto b = train_loop(c, model::init_params(c, 9), ds, ds, cfg);
    cfg.threads = 3;
    const auto t = train_loop(c, model::init_params(c, 9), ds, ds, cfg);
    ASSERT_EQ(a.log.size(), 3u);
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        EXPECT_EQ(a.log[i].loss, b.log[i].loss);
        EXPECT_EQ(a.log[i].loss, t.log[i].loss);
    }
    EXPECT_EQ(a.params, b.params);
    EXPECT_EQ(a.params, t.params);
}

TEST(Loop, TinyStepAlongNegativeGradientDoesNotIncreaseLoss) {
    const auto c = tiny_config(model::Ablation::Quantum);
    const auto ds = separable(6, 7);
    auto p = model::init_params(c, 3);
    auto mean_loss = [&](const model::ParamSet& q) {
        double s = 0.0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            std::mt19937_64 rng(0);
            s += bce_loss(model::biqc_forward(c, q, ds.images[i], rng).probability, ds.labels[i]);
        }
        return s / static_cast<double>(ds.size());
    };
    model::ParamSet grad = model::zeros_like(p);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::mt19937_64 rng(0);
        const auto tr = model::biqc_forward(c, p, ds.images[i], rng);
        const auto g = model::biqc_backward(c, p, tr, ds.labels[i]);
        for (auto& [name, t] : grad)
            for (std::size_t k = 0; k < t.size(); ++k) t[k] += g.params.at(name)[k] / static_cast<double>(ds.size());
    }
    const double before = mean_loss(p);
    for (auto& [name, t] : p)
        for (std::size_t k = 0; k < t.size(); ++k) t[k] -= 1e-6 * grad.at(name)[k];
    EXPECT_LE(mean_loss(p), before + 1e-8);
}

TEST(Loop, RejectsMismatchedData) {
    const auto c = tiny_config();
    auto ds = separable(4, 1);
    TrainConfig cfg;
    data::Dataset wrong{"w", 6, 6, {TensorF({6, 6})}, {0}};
    EXPECT_THROW(train_loop(c, model::init_params(c, 1), wrong, ds, cfg), std::invalid_argument);
    data::Dataset empty{"e", 8, 8, {}, {}};
    EXPECT_THROW(train_loop(c, model::init_params(c, 1), ds, empty, cfg), std::invalid_argument);
}

TEST(Evaluate, AccuracyConsistentWithProbabilities) {
    const auto c = tiny_config();
    const auto ds = separable(10, 2);
    const auto p = model::init_params(c, 2);
    const auto r = evaluate(c, p, ds, 1);
    EXPECT_DOUBLE_EQ(r.accuracy, accuracy(r.probabilities, ds.labels));
    double loss = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) loss += bce_loss(r.probabilities[i], ds.labels[i]);
    EXPECT_NEAR(r.loss, loss / ds.size(), 1e-15);
    EXPECT_EQ(r.features[0].size(), model::fusion_dim(c));
}

TEST(Csv, HeadersAndRows) {
    const auto dir = std::filesystem::temp_directory_path() / "biqc_csv_test";
    std::filesystem::create_directories(dir);
    write_metrics_csv(dir / "m.csv", {{1, 0.5, 0.6, 0.7, 0.8, 0.0}});
    write_spectrum_csv(dir / "s.csv", {0, 1}, {0.25, -0.5});
    write_features_csv(dir / "f.csv", {1}, {{1.0, 2.0, 3.0}});
    auto first_line = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::string s;
        std::getline(in, s);
        return s;
    };
    EXPECT_EQ(first_line(dir / "m.csv"), "epoch,loss,train_acc,test_acc,test_auc");
    EXPECT_EQ(first_line(dir / "s.csv"), "sample_id,label,coefficient");
    EXPECT_EQ(first_line(dir / "f.csv"), "sample_id,label,f0,f1,f2");
    std::filesystem::remove_all(dir);
}

TEST(Checkpoint, SnapshotRoundTrip) {
    model::BiqcConfig c = tiny_config();
    c.ansatz.noise_level = 0.07;
    TrainConfig t;
    t.seed = 123;
    t.learning_rate = 3e-4;
    t.monitor_validation = true;
    const Snapshot s{c, t, model::init_params(c, 8)};
    const auto path = std::filesystem::temp_directory_path() / "biqc_snapshot_test.biqc";
    data::save_checkpoint(path, make_checkpoint(s));
    const auto back = restore_checkpoint(data::load_checkpoint(path));
    EXPECT_EQ(back.config, s.config);
    EXPECT_EQ(back.train, s.train);
    EXPECT_EQ(back.params, s.params);
    std::filesystem::remove(path);
}
