#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "biqc/tensor.hpp"

namespace biqc::data {

/// Grayscale images of one resolution with binary labels.
struct Dataset {
    std::string name;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<TensorF> images;  // each (height, width)
    std::vector<int> labels;      // 0 or 1

    std::size_t size() const { return images.size(); }
};

/// Throws if lengths, resolutions or labels violate the dataset invariants.
void check_dataset(const Dataset& ds);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801),
/// keeps the two requested classes and relabels keep.first -> 0, keep.second -> 1.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::pair<int, int> keep);

/// Writes an IDX pair with raw 0..255 byte pixels (values are rounded and clamped).
void write_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
               const std::vector<TensorF>& images, const std::vector<std::uint8_t>& labels);

/// Binary PGM (P5, maxval 255).
TensorF read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const TensorF& image);

/// Every *.pgm in `dir` whose filename starts with one of the prefixes, in
/// lexicographic order. Files matching neither prefix are skipped.
Dataset load_pgm_dir(const std::filesystem::path& dir, const std::string& class0_prefix,
                     const std::string& class1_prefix);

/// x' = -pi/2 + (x - min) / (max - min) * pi per image; constant images map to zeros.
TensorF normalize_minmax(const TensorF& image);
void normalize_all(Dataset& ds);

/// Area-weighted box resampling to (out_h, out_w).
TensorF resize_area(const TensorF& image, std::size_t out_h, std::size_t out_w);
Dataset resize_all(const Dataset& ds, std::size_t out_h, std::size_t out_w);

/// Class 0: filled discs (radius 3-6), class 1: filled squares (side 6-12),
/// 10-20 shapes per image at intensity 255 over a 0 background, plus uniform
/// noise in [0, 20]. Labels alternate 0, 1, 0, 1, ...
Dataset gen_texture(std::size_t n_per_class, std::size_t resolution, std::uint64_t seed);

/// Seeded shuffle followed by a head/tail split.
std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t train_count, std::size_t test_count,
                                  std::uint64_t seed);

// Checkpoint file: "BIQC", u32 version, u32 length + key=value config text,
// then until EOF per tensor: u32 length + name, u32 rank, u64 dims, f64 values.
// All integers and reals are little-endian.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    TensorF tensor;
    bool operator==(const NamedTensor&) const = default;
};

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<NamedTensor> tensors;
    bool operator==(const Checkpoint&) const = default;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace biqc::data
