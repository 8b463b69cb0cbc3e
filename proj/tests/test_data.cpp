#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "biqc/data.hpp"
#include "oracles.hpp"

using namespace biqc;
using namespace biqc::data;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = fs::temp_directory_path() / ("biqc_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> b{0, 0, 8, 3};
    for (std::uint32_t v : {n, rows, cols})
        for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back(static_cast<std::uint8_t>(i % 251));
    return b;
}

std::vector<std::uint8_t> idx_labels(const std::vector<std::uint8_t>& labels) {
    std::vector<std::uint8_t> b{0, 0, 8, 1};
    const auto n = static_cast<std::uint32_t>(labels.size());
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(n >> s));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

}  // namespace

TEST(Idx, ParsesHeaderAndPixels) {
    TempDir dir;
    write_bytes(dir.path() / "img", idx_images(2, 8, 8));
    write_bytes(dir.path() / "lab", idx_labels({3, 5}));
    const auto ds = load_idx(dir.path() / "img", dir.path() / "lab", {3, 5});
    ASSERT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.height, 8u);
    EXPECT_EQ(ds.width, 8u);
    EXPECT_EQ(ds.images[1].at(0, 1), 65.0);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));
}

TEST(Idx, FiltersAndRemaps) {
    TempDir dir;
    std::vector<std::uint8_t> labels;
    for (int i = 0; i < 20; ++i) labels.push_back(static_cast<std::uint8_t>(i % 10));
    write_bytes(dir.path() / "img", idx_images(20, 2, 2));
    write_bytes(dir.path() / "lab", idx_labels(labels));
    const auto ds = load_idx(dir.path() / "img", dir.path() / "lab", {3, 5});
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0, 1}));
    check_dataset(ds);
}

TEST(Idx, Errors) {
    TempDir dir;
    auto bad = idx_images(1, 2, 2);
    bad[3] = 9;
    write_bytes(dir.path() / "bad", bad);
    write_bytes(dir.path() / "lab", idx_labels({3}));
    try {
        load_idx(dir.path() / "bad", dir.path() / "lab", {3, 5});
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("0x00000809"), std::string::npos);
    }
    auto trunc = idx_images(2, 4, 4);
    trunc.resize(trunc.size() - 5);
    write_bytes(dir.path() / "trunc", trunc);
    write_bytes(dir.path() / "lab2", idx_labels({3, 5}));
    EXPECT_THROW(load_idx(dir.path() / "trunc", dir.path() / "lab2", {3, 5}), std::runtime_error);
    write_bytes(dir.path() / "img3", idx_images(3, 2, 2));
    EXPECT_THROW(load_idx(dir.path() / "img3", dir.path() / "lab2", {3, 5}), std::runtime_error);
}

TEST(Idx, WriteReadRoundTrip) {
    TempDir dir;
    std::vector<TensorF> images{TensorF({2, 3}, {0, 1, 2, 253, 254, 255}), TensorF({2, 3}, 7.0)};
    write_idx(dir.path() / "i", dir.path() / "l", images, {5, 3});
    const auto ds = load_idx(dir.path() / "i", dir.path() / "l", {3, 5});
    EXPECT_EQ(ds.images, images);
    EXPECT_EQ(ds.labels, (std::vector<int>{1, 0}));
}

TEST(Pgm, ParsesBytes) {
    TempDir dir;
    std::vector<std::uint8_t> b{'P', '5', ' ', '2', ' ', '2', ' ', '2', '5', '5', '\n', 0, 128, 255, 64};
    write_bytes(dir.path() / "a.pgm", b);
    EXPECT_EQ(read_pgm(dir.path() / "a.pgm").values(), (std::vector<double>{0, 128, 255, 64}));
    std::vector<std::uint8_t> comment{'P', '5', '\n', '#', ' ', 'x', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', 9};
    write_bytes(dir.path() / "c.pgm", comment);
    EXPECT_EQ(read_pgm(dir.path() / "c.pgm").values(), (std::vector<double>{9}));
    write_bytes(dir.path() / "p2.pgm", {'P', '2', ' ', '1', ' ', '1', ' ', '2', '5', '5', '\n', '0'});
    EXPECT_THROW(read_pgm(dir.path() / "p2.pgm"), std::runtime_error);
}

TEST(Pgm, DirectoryLoading) {
    TempDir dir;
    write_pgm(dir.path() / "square_1.pgm", TensorF({4, 4}, 10.0));
    write_pgm(dir.path() / "disc_0.pgm", TensorF({4, 4}, 20.0));
    write_pgm(dir.path() / "other.pgm", TensorF({4, 4}, 30.0));
    const auto ds = load_pgm_dir(dir.path(), "disc", "square");
    EXPECT_EQ(ds.size(), 2u);
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1}));
    EXPECT_EQ(ds.images[0][0], 20.0);

    TempDir empty;
    EXPECT_THROW(load_pgm_dir(empty.path(), "disc", "square"), std::runtime_error);

    TempDir mixed;
    write_pgm(mixed.path() / "a_0.pgm", TensorF({32, 32}));
    write_pgm(mixed.path() / "a_1.pgm", TensorF({96, 96}));
    try {
        load_pgm_dir(mixed.path(), "a", "b");
        FAIL();
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("32x32"), std::string::npos);
        EXPECT_NE(msg.find("96x96"), std::string::npos);
    }
}

TEST(Normalize, Examples) {
    const auto a = normalize_minmax(TensorF({1, 3}, {0, 127.5, 255}));
    EXPECT_DOUBLE_EQ(a[0], -std::numbers::pi / 2);
    EXPECT_NEAR(a[1], 0.0, 1e-15);
    EXPECT_DOUBLE_EQ(a[2], std::numbers::pi / 2);
    EXPECT_EQ(normalize_minmax(TensorF({2, 2}, 4.0)).values(), std::vector<double>(4, 0.0));
}

TEST(Normalize, AlwaysInsideRange) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 200; ++t) {
        const auto img = oracle::random_tensor({5, 7}, rng, -1e3 * t, 1e-3 + 1e2 * t);
        for (double v : normalize_minmax(img).values()) {
            EXPECT_GE(v, -std::numbers::pi / 2);
            EXPECT_LE(v, std::numbers::pi / 2);
        }
    }
}

TEST(Resize, AreaAverages) {
    TensorF img({4, 4});
    for (std::size_t i = 0; i < 16; ++i) img[i] = static_cast<double>(i);
    const auto r = resize_area(img, 2, 2);
    EXPECT_DOUBLE_EQ(r.at(0, 0), (0 + 1 + 4 + 5) / 4.0);
    EXPECT_DOUBLE_EQ(r.at(1, 1), (10 + 11 + 14 + 15) / 4.0);
    // Non-integer ratio preserves the mean.
    std::mt19937_64 rng(2);
    const auto big = oracle::random_tensor({28, 28}, rng, 0, 255);
    const auto small = resize_area(big, 8, 8);
    double m1 = 0, m2 = 0;
    for (double v : big.values()) m1 += v / big.size();
    for (double v : small.values()) m2 += v / small.size();
    EXPECT_NEAR(m1, m2, 1e-9);
}

TEST(Texture, ShapeBalanceDeterminism) {
    const auto a = gen_texture(50, 64, 7);
    EXPECT_EQ(a.size(), 100u);
    EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 1), 50);
    const auto b = gen_texture(50, 64, 7);
    EXPECT_EQ(a.images, b.images);
    EXPECT_EQ(a.labels, b.labels);
    for (const auto& im : a.images) {
        const auto [lo, hi] = std::minmax_element(im.values().begin(), im.values().end());
        EXPECT_GE(*hi, 200.0);
        EXPECT_LE(*lo, 20.0);
    }
    EXPECT_THROW(gen_texture(1, 32, 0), std::invalid_argument);
    EXPECT_NE(gen_texture(2, 64, 8).images, gen_texture(2, 64, 9).images);
}

TEST(Split, DisjointAndSeeded) {
    Dataset ds{"n", 1, 1, {}, {}};
    for (int i = 0; i < 10; ++i) {
        ds.images.push_back(TensorF({1, 1}, static_cast<double>(i)));
        ds.labels.push_back(i % 2);
    }
    const auto [tr, te] = split(ds, 6, 4, 3);
    EXPECT_EQ(tr.size(), 6u);
    EXPECT_EQ(te.size(), 4u);
    std::vector<double> seen;
    for (const auto& im : tr.images) seen.push_back(im[0]);
    for (const auto& im : te.images) seen.push_back(im[0]);
    std::sort(seen.begin(), seen.end());
    for (int i = 0; i < 10; ++i) EXPECT_EQ(seen[i], i);
    EXPECT_EQ(split(ds, 6, 4, 3).first.images, tr.images);
    EXPECT_THROW(split(ds, 8, 4, 3), std::invalid_argument);
}

TEST(Checkpoint, RoundTripBitwise) {
    TempDir dir;
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Checkpoint ck;
        ck.config = {{"a.b", "1"}, {"x", std::to_string(trial)}, {"empty", ""}};
        const std::size_t n = rng() % 5;
        for (std::size_t k = 0; k < n; ++k) {
            std::vector<std::size_t> shape;
            for (std::size_t r = 0; r < rng() % 4; ++r) shape.push_back(1 + rng() % 4);
            auto t = oracle::random_tensor(shape, rng, -1e300, 1e300);
            if (!t.empty()) t[0] = -0.0;
            ck.tensors.push_back({"t" + std::to_string(k), t});
        }
        save_checkpoint(dir.path() / "ck", ck);
        const auto back = load_checkpoint(dir.path() / "ck");
        EXPECT_EQ(back, ck);
        for (std::size_t k = 0; k < n; ++k) {
            const auto& a = ck.tensors[k].tensor.values();
            const auto& b = back.tensors[k].tensor.values();
            EXPECT_EQ(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)), 0);
        }
    }
}

TEST(Checkpoint, TruncationAndVersion) {
    TempDir dir;
    Checkpoint ck;
    ck.tensors = {{"conv1.weight", TensorF({2, 2}, 1.0)}, {"head.bias", TensorF({3}, 2.0)}};
    save_checkpoint(dir.path() / "ck", ck);
    const auto full = fs::file_size(dir.path() / "ck");
    fs::resize_file(dir.path() / "ck", full - 4);
    try {
        load_checkpoint(dir.path() / "ck");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("head.bias"), std::string::npos);
    }
    ck.version = 7;
    save_checkpoint(dir.path() / "v", ck);
    try {
        load_checkpoint(dir.path() / "v");
        FAIL();
    } catch (const std::runtime_error& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find('7'), std::string::npos);
        EXPECT_NE(msg.find('1'), std::string::npos);
    }
    write_bytes(dir.path() / "m", {'N', 'O', 'P', 'E'});
    EXPECT_THROW(load_checkpoint(dir.path() / "m"), std::runtime_error);
}
