#include "biqc/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace biqc::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const fs::path& path) {
    if (offset + 4 > buf.size()) throw std::runtime_error(path.string() + ": truncated IDX header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", v);
    return buf;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Little-endian binary helpers for the checkpoint format.
template <typename T>
void put(std::ostream& out, T v) {
    static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> buf) : buf_(std::move(buf)) {}

    bool at_end() const { return pos_ == buf_.size(); }
    template <typename T>
    bool get(T& v) {
        if (pos_ + sizeof v > buf_.size()) return false;
        std::memcpy(&v, buf_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return true;
    }
    bool get_bytes(std::string& s, std::size_t n) {
        if (pos_ + n > buf_.size()) return false;
        s.assign(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return true;
    }

private:
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void check_dataset(const Dataset& ds) {
    if (ds.images.size() != ds.labels.size()) {
        throw std::invalid_argument("dataset '" + ds.name + "': " + std::to_string(ds.images.size()) +
                                    " images but " + std::to_string(ds.labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const TensorF& im = ds.images[i];
        if (im.rank() != 2 || im.dim(0) != ds.height || im.dim(1) != ds.width) {
            throw std::invalid_argument("dataset '" + ds.name + "': image " + std::to_string(i) + " has shape " +
                                        im.shape_string() + ", expected (" + std::to_string(ds.height) + ", " +
                                        std::to_string(ds.width) + ")");
        }
        if (ds.labels[i] != 0 && ds.labels[i] != 1) {
            throw std::invalid_argument("dataset '" + ds.name + "': label " + std::to_string(ds.labels[i]) +
                                        " at index " + std::to_string(i) + " is not 0 or 1");
        }
    }
}

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path, std::pair<int, int> keep) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != 0x00000803) {
        throw std::runtime_error(images_path.string() + ": bad IDX image magic " + hex32(img_magic) +
                                 " (expected 0x00000803)");
    }
    const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != 0x00000801) {
        throw std::runtime_error(labels_path.string() + ": bad IDX label magic " + hex32(lab_magic) +
                                 " (expected 0x00000801)");
    }
    const std::size_t n = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t n_labels = read_be32(lab, 4, labels_path);
    if (n != n_labels) {
        throw std::runtime_error("IDX dimension mismatch: " + std::to_string(n) + " images vs " +
                                 std::to_string(n_labels) + " labels");
    }
    if (img.size() < 16 + n * rows * cols) {
        throw std::runtime_error(images_path.string() + ": truncated, expected " + std::to_string(n * rows * cols) +
                                 " pixel bytes after the header");
    }
    if (lab.size() < 8 + n) throw std::runtime_error(labels_path.string() + ": truncated label payload");

    Dataset ds{"idx", rows, cols, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const int label = lab[8 + i];
        if (label != keep.first && label != keep.second) continue;
        TensorF im({rows, cols});
        const std::uint8_t* src = img.data() + 16 + i * rows * cols;
        for (std::size_t k = 0; k < rows * cols; ++k) im[k] = src[k];
        ds.images.push_back(std::move(im));
        ds.labels.push_back(label == keep.first ? 0 : 1);
    }
    return ds;
}

void write_idx(const fs::path& images_path, const fs::path& labels_path, const std::vector<TensorF>& images,
               const std::vector<std::uint8_t>& labels) {
    if (images.size() != labels.size()) throw std::invalid_argument("write_idx: image/label count mismatch");
    const std::size_t rows = images.empty() ? 0 : images[0].dim(0);
    const std::size_t cols = images.empty() ? 0 : images[0].dim(1);
    std::ofstream im(images_path, std::ios::binary), lb(labels_path, std::ios::binary);
    if (!im || !lb) throw std::runtime_error("write_idx: cannot open output files");
    write_be32(im, 0x00000803);
    write_be32(im, static_cast<std::uint32_t>(images.size()));
    write_be32(im, static_cast<std::uint32_t>(rows));
    write_be32(im, static_cast<std::uint32_t>(cols));
    for (const auto& t : images) {
        if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) throw std::invalid_argument("write_idx: ragged images");
        for (double v : t.values()) im.put(static_cast<char>(to_byte(v)));
    }
    write_be32(lb, 0x00000801);
    write_be32(lb, static_cast<std::uint32_t>(labels.size()));
    for (auto l : labels) lb.put(static_cast<char>(l));
}

TensorF read_pgm(const fs::path& path) {
    const auto buf = read_file(path);
    std::size_t pos = 0;
    // Header tokens are separated by whitespace; '#' starts a comment line.
    auto token = [&]() {
        while (pos < buf.size()) {
            if (std::isspace(buf[pos])) {
                ++pos;
            } else if (buf[pos] == '#') {
                while (pos < buf.size() && buf[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < buf.size() && !std::isspace(buf[pos]) && buf[pos] != '#') t += static_cast<char>(buf[pos++]);
        return t;
    };
    const std::string magic = token();
    if (magic != "P5") throw std::runtime_error(path.string() + ": not a binary PGM (magic '" + magic + "', expected P5)");
    std::size_t width = 0, height = 0, maxval = 0;
    try {
        width = std::stoul(token());
        height = std::stoul(token());
        maxval = std::stoul(token());
    } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ": malformed PGM header");
    }
    if (maxval != 255) throw std::runtime_error(path.string() + ": maxval " + std::to_string(maxval) + " unsupported (need 255)");
    if (width == 0 || height == 0) throw std::runtime_error(path.string() + ": empty PGM image");
    ++pos;  // single whitespace byte before the raster
    if (pos + width * height > buf.size()) throw std::runtime_error(path.string() + ": truncated PGM raster");
    TensorF im({height, width});
    for (std::size_t k = 0; k < width * height; ++k) im[k] = buf[pos + k];
    return im;
}

void write_pgm(const fs::path& path, const TensorF& image) {
    if (image.rank() != 2) throw std::invalid_argument("write_pgm: expected a rank-2 image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    for (double v : image.values()) out.put(static_cast<char>(to_byte(v)));
}

Dataset load_pgm_dir(const fs::path& dir, const std::string& class0_prefix, const std::string& class1_prefix) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + ": not a directory");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());

    Dataset ds{dir.filename().string(), 0, 0, {}, {}};
    std::string first_file;
    for (const auto& f : files) {
        const std::string stem = f.filename().string();
        int label = -1;
        if (stem.starts_with(class0_prefix)) label = 0;
        else if (stem.starts_with(class1_prefix)) label = 1;
        if (label < 0) continue;
        TensorF im = read_pgm(f);
        if (ds.images.empty()) {
            ds.height = im.dim(0);
            ds.width = im.dim(1);
            first_file = stem;
        } else if (im.dim(0) != ds.height || im.dim(1) != ds.width) {
            throw std::runtime_error("inconsistent resolutions in " + dir.string() + ": " + first_file + " is " +
                                     std::to_string(ds.width) + "x" + std::to_string(ds.height) + " but " + stem +
                                     " is " + std::to_string(im.dim(1)) + "x" + std::to_string(im.dim(0)));
        }
        ds.images.push_back(std::move(im));
        ds.labels.push_back(label);
    }
    if (ds.images.empty()) {
        throw std::runtime_error(dir.string() + ": no PGM files with prefix '" + class0_prefix + "' or '" +
                                 class1_prefix + "'");
    }
    return ds;
}

TensorF normalize_minmax(const TensorF& image) {
    TensorF out(image.shape());
    if (image.empty()) return out;
    const auto [lo, hi] = std::minmax_element(image.values().begin(), image.values().end());
    const double min = *lo, max = *hi;
    if (max == min) return out;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = -std::numbers::pi / 2 + (image[i] - min) / (max - min) * std::numbers::pi;
        out[i] = std::clamp(v, -std::numbers::pi / 2, std::numbers::pi / 2);
    }
    return out;
}

void normalize_all(Dataset& ds) {
    for (auto& im : ds.images) im = normalize_minmax(im);
}

TensorF resize_area(const TensorF& image, std::size_t out_h, std::size_t out_w) {
    if (image.rank() != 2 || out_h == 0 || out_w == 0) throw std::invalid_argument("resize_area: bad shapes");
    const std::size_t in_h = image.dim(0), in_w = image.dim(1);
    // Each output cell covers [i*sy, (i+1)*sy) in input coordinates.
    auto weights = [](std::size_t in, std::size_t out) {
        std::vector<std::vector<std::pair<std::size_t, double>>> w(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t o = 0; o < out; ++o) {
            const double a = o * scale, b = (o + 1) * scale;
            for (auto i = static_cast<std::size_t>(a); i < in && static_cast<double>(i) < b; ++i) {
                const double overlap = std::min(b, i + 1.0) - std::max(a, static_cast<double>(i));
                if (overlap > 0) w[o].emplace_back(i, overlap / scale);
            }
        }
        return w;
    };
    const auto wy = weights(in_h, out_h), wx = weights(in_w, out_w);
    TensorF out({out_h, out_w});
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (const auto& [iy, ay] : wy[y]) {
                for (const auto& [ix, ax] : wx[x]) acc += ay * ax * image.at(iy, ix);
            }
            out.at(y, x) = acc;
        }
    }
    return out;
}

Dataset resize_all(const Dataset& ds, std::size_t out_h, std::size_t out_w) {
    Dataset out{ds.name, out_h, out_w, {}, ds.labels};
    out.images.reserve(ds.size());
    for (const auto& im : ds.images) out.images.push_back(resize_area(im, out_h, out_w));
    return out;
}

Dataset gen_texture(std::size_t n_per_class, std::size_t resolution, std::uint64_t seed) {
    if (resolution < 64) throw std::invalid_argument("gen_texture: resolution must be >= 64");
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); };
    std::uniform_real_distribution<double> noise(0.0, 20.0);
    const long n = static_cast<long>(resolution);

    Dataset ds{"synthetic", resolution, resolution, {}, {}};
    for (std::size_t s = 0; s < 2 * n_per_class; ++s) {
        const int label = static_cast<int>(s % 2);
        TensorF im({resolution, resolution});
        const long shapes = uniform_int(10, 20);
        for (long k = 0; k < shapes; ++k) {
            if (label == 0) {
                const long r = uniform_int(3, 6);
                const long cy = uniform_int(r, n - 1 - r), cx = uniform_int(r, n - 1 - r);
                for (long y = cy - r; y <= cy + r; ++y) {
                    for (long x = cx - r; x <= cx + r; ++x) {
                        if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) {
                            im.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 255.0;
                        }
                    }
                }
            } else {
                const long side = uniform_int(6, 12);
                const long y0 = uniform_int(0, n - side), x0 = uniform_int(0, n - side);
                for (long y = y0; y < y0 + side; ++y) {
                    for (long x = x0; x < x0 + side; ++x) {
                        im.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 255.0;
                    }
                }
            }
        }
        for (double& v : im.values()) v = std::min(255.0, v + noise(rng));
        ds.images.push_back(std::move(im));
        ds.labels.push_back(label);
    }
    return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, std::size_t train_count, std::size_t test_count,
                                  std::uint64_t seed) {
    if (train_count + test_count > ds.size()) {
        throw std::invalid_argument("split: requested " + std::to_string(train_count) + " + " +
                                    std::to_string(test_count) + " samples from a dataset of " +
                                    std::to_string(ds.size()));
    }
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    Dataset train{ds.name + "-train", ds.height, ds.width, {}, {}};
    Dataset test{ds.name + "-test", ds.height, ds.width, {}, {}};
    for (std::size_t k = 0; k < train_count + test_count; ++k) {
        Dataset& dst = k < train_count ? train : test;
        dst.images.push_back(ds.images[order[k]]);
        dst.labels.push_back(ds.labels[order[k]]);
    }
    return {std::move(train), std::move(test)};
}

void save_checkpoint(const fs::path& path, const Checkpoint& ck) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    out.write("BIQC", 4);
    put<std::uint32_t>(out, ck.version);
    std::string text;
    for (const auto& [k, v] : ck.config) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw std::invalid_argument("save_checkpoint: config entry '" + k + "' is not representable");
        }
        text += k + "=" + v + "\n";
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ck.tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    Reader in(read_file(path));
    std::string magic;
    if (!in.get_bytes(magic, 4) || magic != "BIQC") throw std::runtime_error(path.string() + ": not a BIQC checkpoint");
    Checkpoint ck;
    if (!in.get(ck.version)) throw std::runtime_error(path.string() + ": truncated header");
    if (ck.version != kCheckpointVersion) {
        throw std::runtime_error(path.string() + ": checkpoint version " + std::to_string(ck.version) +
                                 " is not supported (this build reads version " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    std::uint32_t text_len = 0;
    std::string text;
    if (!in.get(text_len) || !in.get_bytes(text, text_len)) throw std::runtime_error(path.string() + ": truncated config");
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error(path.string() + ": malformed config line '" + line + "'");
        ck.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    while (!in.at_end()) {
        std::uint32_t name_len = 0, rank = 0;
        std::string name;
        if (!in.get(name_len) || !in.get_bytes(name, name_len)) {
            throw std::runtime_error(path.string() + ": truncated tensor name after tensor " +
                                     std::to_string(ck.tensors.size()));
        }
        auto fail = [&](const char* what) {
            return std::runtime_error(path.string() + ": truncated " + what + " in tensor '" + name + "'");
        };
        if (!in.get(rank)) throw fail("rank");
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) {
            std::uint64_t v = 0;
            if (!in.get(v)) throw fail("dimensions");
            d = static_cast<std::size_t>(v);
        }
        TensorF t(shape);
        for (double& v : t.values()) {
            if (!in.get(v)) throw fail("payload");
        }
        ck.tensors.push_back({std::move(name), std::move(t)});
    }
    return ck;
}

}  // namespace biqc::data
