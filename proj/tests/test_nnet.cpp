#include <gtest/gtest.h>

#include <random>

#include "biqc/nnet.hpp"
#include "oracles.hpp"

using namespace biqc;
using namespace biqc::nnet;

namespace {

// Scalar probe L = sum(w * forward(x)) and its finite differences.
struct Probe {
    LayerSpec spec;
    LayerParams params;
    TensorF x;
    TensorF w;

    double eval() const {
        const auto y = forward(spec, params, x).output;
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += w[i] * y[i];
        return s;
    }
    double diff(double& slot, double h) {
        const double v0 = slot;
        slot = v0 + h;
        const double fp = eval();
        slot = v0 - h;
        const double fm = eval();
        slot = v0;
        return (fp - fm) / (2 * h);
    }
};

void check_gradients(const LayerSpec& spec, std::vector<std::size_t> in_shape, std::mt19937_64& rng) {
    Probe p{spec, init_params(spec, rng), oracle::random_tensor(in_shape, rng), {}};
    for (double& v : p.params.bias.values()) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
    // Keep inputs off the ReLU kink.
    for (double& v : p.x.values())
        if (std::abs(v) < 1e-3) v = 0.5;
    const auto fr = forward(spec, p.params, p.x);
    p.w = oracle::random_tensor(fr.output.shape(), rng);
    const auto g = backward(spec, p.params, fr.cache, p.w);
    const double h = 1e-4;
    for (std::size_t i = 0; i < p.x.size(); ++i) EXPECT_NEAR(g.input_grad[i], p.diff(p.x[i], h), 1e-4) << spec.describe();
    for (std::size_t i = 0; i < p.params.weight.size(); ++i)
        EXPECT_NEAR(g.weight_grad[i], p.diff(p.params.weight[i], h), 1e-4) << spec.describe();
    for (std::size_t i = 0; i < p.params.bias.size(); ++i)
        EXPECT_NEAR(g.bias_grad[i], p.diff(p.params.bias[i], h), 1e-4) << spec.describe();
}

}  // namespace

TEST(Forward, Examples) {
    LayerParams conv{TensorF({1, 1, 1, 1}, 2.0), TensorF({1}, 0.0)};
    const auto y = forward(LayerSpec::conv2d(1, 1, 1, 0), conv, TensorF({1, 2, 2}, {1, 2, 3, 4})).output;
    EXPECT_EQ(y.values(), (std::vector<double>{2, 4, 6, 8}));

    const auto m = forward(LayerSpec::maxpool2d(2, 2), {}, TensorF({1, 2, 2}, {1, 2, 3, 4})).output;
    EXPECT_EQ(m.values(), (std::vector<double>{4}));

    LayerParams lin{TensorF({2, 2}, {1, 0, 0, 1}), TensorF({2}, {0.5, -0.5})};
    const auto l = forward(LayerSpec::linear(2, 2), lin, TensorF({2}, {2, 3})).output;
    EXPECT_EQ(l.values(), (std::vector<double>{2.5, 2.5}));
}

TEST(Forward, ConvIsCrossCorrelationWithZeroPadding) {
    LayerParams p{TensorF({1, 1, 3, 3}, {0, 0, 0, 0, 0, 1, 0, 0, 0}), TensorF({1}, 0.0)};
    const auto y = forward(LayerSpec::conv2d(1, 1, 3, 1), p, TensorF({1, 2, 2}, {1, 2, 3, 4})).output;
    // Kernel tap at (1, 2) reads the right neighbour.
    EXPECT_EQ(y.values(), (std::vector<double>{2, 0, 4, 0}));
}

TEST(Backward, SigmoidAtZero) {
    const auto fr = forward(LayerSpec::sigmoid(), {}, TensorF({1}, 0.0));
    EXPECT_DOUBLE_EQ(backward(LayerSpec::sigmoid(), {}, fr.cache, TensorF({1}, 1.0)).input_grad[0], 0.25);
}

TEST(Backward, MaxPoolTiesRouteToFirst) {
    const auto fr = forward(LayerSpec::maxpool2d(2, 2), {}, TensorF({1, 2, 2}, 1.0));
    const auto g = backward(LayerSpec::maxpool2d(2, 2), {}, fr.cache, TensorF({1, 1, 1}, 1.0));
    EXPECT_EQ(g.input_grad.values(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Backward, MatchesFiniteDifferencesOnRandomShapes) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<std::size_t> small(1, 3), side(3, 7);
        const std::size_t c = small(rng), o = small(rng), h = side(rng), w = side(rng);
        const std::size_t k = seed % 2 ? 3 : 1;
        check_gradients(LayerSpec::conv2d(c, o, k, k / 2), {c, h, w}, rng);
        check_gradients(LayerSpec::conv2d(c, o, 3, 0), {c, h, w}, rng);
        check_gradients(LayerSpec::maxpool2d(2, 2), {c, h, w}, rng);
        check_gradients(LayerSpec::relu(), {c, h, w}, rng);
        check_gradients(LayerSpec::sigmoid(), {c, h}, rng);
        check_gradients(LayerSpec::tanh(), {h}, rng);
        check_gradients(LayerSpec::global_avg_pool(), {c, h, w}, rng);
        check_gradients(LayerSpec::linear(h, w), {h}, rng);
    }
}

TEST(Properties, ShapeInferenceDeterminismNoMutation) {
    std::mt19937_64 rng(4);
    const std::vector<std::pair<LayerSpec, std::vector<std::size_t>>> cases = {
        {LayerSpec::conv2d(2, 3, 3, 1), {2, 5, 6}}, {LayerSpec::conv2d(1, 2, 3, 0), {1, 5, 5}},
        {LayerSpec::maxpool2d(2, 2), {3, 5, 7}},    {LayerSpec::linear(4, 2), {4}},
        {LayerSpec::global_avg_pool(), {3, 4, 4}},  {LayerSpec::relu(), {2, 2}}};
    for (const auto& [spec, shape] : cases) {
        const auto params = init_params(spec, rng);
        const auto x = oracle::random_tensor(shape, rng);
        const TensorF copy = x;
        const auto a = forward(spec, params, x);
        const auto b = forward(spec, params, x);
        EXPECT_EQ(a.output.shape(), output_shape(spec, shape)) << spec.describe();
        EXPECT_EQ(a.output, b.output);
        EXPECT_EQ(x, copy);
    }
}

TEST(Errors, ShapeMismatchNamesLayer) {
    std::mt19937_64 rng(0);
    const auto spec = LayerSpec::conv2d(2, 1, 3, 1);
    try {
        forward(spec, init_params(spec, rng), TensorF({3, 4, 4}));
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("(3, 4, 4)"), std::string::npos);
    }
    EXPECT_THROW(forward(LayerSpec::linear(3, 1), init_params(LayerSpec::linear(3, 1), rng), TensorF({4})),
                 std::invalid_argument);
}

TEST(Init, GlorotRange) {
    std::mt19937_64 rng(1);
    const auto spec = LayerSpec::linear(30, 10);
    const auto p = init_params(spec, rng);
    const double lim = std::sqrt(6.0 / 40.0);
    for (double v : p.weight.values()) EXPECT_LE(std::abs(v), lim);
    for (double v : p.bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, Locate) {
    TensorF map({1, 8, 8}, 0.0);
    map.at(0, 1, 2) = 5.0;
    EXPECT_EQ(attention_locate(map, 4, 4, 32, 32), (PatchRegion{4, 8, 4}));
    EXPECT_EQ(attention_locate(TensorF({8, 8}, 1.0), 4, 4, 32, 32), (PatchRegion{0, 0, 4}));
    TensorF edge({8, 8}, 0.0);
    edge.at(7, 7) = 1.0;
    const auto r = attention_locate(edge, 4, 8, 32, 32);
    EXPECT_EQ(r, (PatchRegion{24, 24, 8}));
    EXPECT_TRUE(r.fits(32, 32));
}

TEST(Attention, ExhaustiveCellPositions) {
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) {
            TensorF map({8, 8}, 0.0);
            map.at(i, j) = 1.0;
            const auto r = attention_locate(map, 4, 6, 32, 32);
            ASSERT_TRUE(r.fits(32, 32));
            const auto expect = [](std::size_t cell) {
                const long c = static_cast<long>(cell * 4 + 2) - 3;
                return static_cast<std::size_t>(std::clamp(c, 0L, 26L));
            };
            EXPECT_EQ(r.row, expect(i));
            EXPECT_EQ(r.col, expect(j));
        }
}
