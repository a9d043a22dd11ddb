#include "dbigan/data.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dbigan/error.hpp"
#include "dbigan/hash.hpp"

namespace fs = std::filesystem;

namespace dbigan {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.shape = shape;
    out.images = images.gather_batch(rows);
    out.classes.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (std::size_t r : rows) {
        if (r >= size()) throw ConfigError("dataset subset row " + std::to_string(r) + " out of range");
        out.classes.push_back(classes[r]);
        out.ids.push_back(ids[r]);
    }
    return out;
}

namespace {

std::string padded_id(const std::string& split, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", split.c_str(), i);
    return buf;
}

std::vector<unsigned char> read_all(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("missing file: " + path.string());
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t be32(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
}

fs::path first_existing(const fs::path& root, std::initializer_list<const char*> names) {
    for (const char* n : names) {
        if (fs::exists(root / n)) return root / n;
    }
    return root / *names.begin();
}

Dataset read_mnist_split(const fs::path& images_path, const fs::path& labels_path, const std::string& split) {
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);
    if (img.size() < 16 || be32(img.data()) != 0x00000803) {
        throw IoError("corrupt idx image file (bad magic): " + images_path.string());
    }
    if (lab.size() < 8 || be32(lab.data()) != 0x00000801) {
        throw IoError("corrupt idx label file (bad magic): " + labels_path.string());
    }
    const std::size_t n = be32(img.data() + 4);
    const std::size_t rows = be32(img.data() + 8);
    const std::size_t cols = be32(img.data() + 12);
    if (img.size() != 16 + n * rows * cols) throw IoError("truncated idx image file: " + images_path.string());
    if (be32(lab.data() + 4) != n || lab.size() != 8 + n) {
        throw IoError("idx label file does not match image count: " + labels_path.string());
    }
    Dataset d;
    d.shape = ImageShape{rows, cols, 1};
    d.images = Tensor({n, rows, cols, 1});
    const unsigned char* px = img.data() + 16;
    for (std::size_t i = 0; i < n * rows * cols; ++i) d.images[i] = scale_pixel(px[i]);
    d.classes.resize(n);
    d.ids.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (lab[8 + i] > 9) throw IoError("label out of range in " + labels_path.string());
        d.classes[i] = lab[8 + i];
        d.ids[i] = padded_id(split, i);
    }
    return d;
}

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

void append_cifar_batch(const fs::path& path, Dataset& d, const std::string& split) {
    const auto bytes = read_all(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
        throw IoError("corrupt binary batch (size not a multiple of " + std::to_string(kCifarRecord) +
                      "): " + path.string());
    }
    const std::size_t n = bytes.size() / kCifarRecord;
    const std::size_t plane = kCifarSide * kCifarSide;
    const std::size_t start = d.classes.size();
    Tensor grown({start + n, kCifarSide, kCifarSide, 3});
    std::copy(d.images.values().begin(), d.images.values().end(), grown.data());
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec = bytes.data() + r * kCifarRecord;
        if (rec[0] > 9) throw IoError("label out of range in " + path.string());
        d.classes.push_back(rec[0]);
        d.ids.push_back(padded_id(split, start + r));
        double* out = grown.data() + (start + r) * plane * 3;
        // Stored planar (all R, then G, then B); converted to interleaved HWC.
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t ch = 0; ch < 3; ++ch) out[p * 3 + ch] = scale_pixel(rec[1 + ch * plane + p]);
        }
    }
    d.images = std::move(grown);
}

bool is_hidden(const fs::path& p) {
    const auto name = p.filename().string();
    return !name.empty() && name[0] == '.';
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (is_hidden(entry.path())) continue;
        if (directories ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end(), [](const fs::path& a, const fs::path& b) {
        return a.filename().string() < b.filename().string();
    });
    return out;
}

// Decodes one file into `pixels` (appended); false when it is not an image.
bool append_image(const fs::path& file, const ImageShape& shape, std::vector<double>& pixels) {
    const int mode = shape.channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR;
    cv::Mat img = cv::imread(file.string(), mode);
    if (img.empty()) return false;
    if (img.depth() != CV_8U) img.convertTo(img, CV_8U);
    if (shape.channels == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
    if (static_cast<std::size_t>(img.rows) != shape.height || static_cast<std::size_t>(img.cols) != shape.width) {
        cv::resize(img, img, cv::Size(static_cast<int>(shape.width), static_cast<int>(shape.height)), 0, 0,
                   cv::INTER_AREA);
    }
    if (!img.isContinuous()) img = img.clone();
    const std::size_t ps = shape.pixels();
    const std::size_t base = pixels.size();
    pixels.resize(base + ps);
    for (std::size_t i = 0; i < ps; ++i) pixels[base + i] = scale_pixel(img.data[i]);
    return true;
}

void draw_motif(double* img, const SyntheticSpec& s, bool abnormal, std::mt19937_64& rng) {
    const std::size_t h = s.shape.height, w = s.shape.width;
    std::fill(img, img + h * w, -1.0);
    std::uniform_int_distribution<std::size_t> extent_dist(s.min_extent, s.max_extent);
    const std::size_t e = extent_dist(rng);
    std::uniform_int_distribution<std::size_t> y_dist(0, h - e), x_dist(0, w - e);
    const std::size_t y0 = y_dist(rng), x0 = x_dist(rng);
    std::uniform_real_distribution<double> fg_dist(1.0 - s.intensity_jitter, 1.0);
    const double fg = fg_dist(rng);
    // Arms are centred inside the bounding box; the offset rounds down.
    const std::size_t arm = (e - s.stroke) / 2;
    for (std::size_t y = y0; y < y0 + e; ++y) {
        for (std::size_t x = x0; x < x0 + e; ++x) {
            bool on = true;
            if (abnormal) {
                const bool in_row = y >= y0 + arm && y < y0 + arm + s.stroke;
                const bool in_col = x >= x0 + arm && x < x0 + arm + s.stroke;
                on = in_row || in_col;
            }
            if (on) img[y * w + x] = fg;
        }
    }
    if (s.pixel_noise > 0.0) {
        std::normal_distribution<double> noise(0.0, s.pixel_noise);
        for (std::size_t i = 0; i < h * w; ++i) img[i] = std::clamp(img[i] + noise(rng), -1.0, 1.0);
    }
}

Dataset synth_split(const SyntheticSpec& s, std::size_t normal, std::size_t abnormal, const std::string& split,
                    std::mt19937_64& rng) {
    const std::size_t n = normal + abnormal;
    Dataset d;
    d.shape = s.shape;
    d.images = Tensor({n, s.shape.height, s.shape.width, 1});
    d.classes.resize(n);
    d.ids.resize(n);
    // Normal samples first, then abnormal; loaders shuffle per epoch anyway.
    for (std::size_t i = 0; i < n; ++i) {
        const bool ab = i >= normal;
        draw_motif(d.images.data() + i * s.shape.pixels(), s, ab, rng);
        d.classes[i] = ab ? 1 : 0;
        d.ids[i] = padded_id(split, i);
    }
    return d;
}

} // namespace

DatasetHandle load_mnist(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("dataset root does not exist: " + root.string());
    DatasetHandle h;
    h.name = "mnist";
    for (int k = 0; k < 10; ++k) h.class_names.push_back(std::to_string(k));
    h.train = read_mnist_split(first_existing(root, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"}),
                               first_existing(root, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"}),
                               "train");
    h.test = read_mnist_split(first_existing(root, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"}),
                              first_existing(root, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"}), "test");
    if (!(h.train.shape == h.test.shape)) throw IoError("mnist train/test image shapes differ");
    return h;
}

DatasetHandle load_cifar10(const fs::path& root_in) {
    fs::path root = root_in;
    if (fs::is_directory(root / "cifar-10-batches-bin")) root /= "cifar-10-batches-bin";
    if (!fs::is_directory(root)) throw IoError("dataset root does not exist: " + root_in.string());
    DatasetHandle h;
    h.name = "cifar10";
    h.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
    std::ifstream meta(root / "batches.meta.txt");
    if (meta) {
        std::vector<std::string> names;
        for (std::string line; std::getline(meta, line);) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) names.push_back(line);
        }
        if (names.size() == 10) h.class_names = names;
    }
    for (Dataset* d : {&h.train, &h.test}) {
        d->shape = ImageShape{kCifarSide, kCifarSide, 3};
        d->images = Tensor({0, kCifarSide, kCifarSide, 3});
    }
    for (int b = 1; b <= 5; ++b) {
        append_cifar_batch(root / ("data_batch_" + std::to_string(b) + ".bin"), h.train, "train");
    }
    append_cifar_batch(root / "test_batch.bin", h.test, "test");
    return h;
}

DatasetHandle load_benchmark(const std::string& name, const fs::path& root) {
    if (name == "mnist") return load_mnist(root);
    if (name == "cifar10") return load_cifar10(root);
    throw ConfigError("unknown benchmark dataset '" + name + "' (expected mnist or cifar10)");
}

DatasetHandle load_folder(const fs::path& root, const ImageShape& shape, FolderLoadReport* report) {
    shape.validate();
    if (!fs::is_directory(root)) throw IoError("dataset root does not exist: " + root.string());
    const std::array<std::string, 2> splits{"train", "test"};
    std::set<std::string> names;
    for (const auto& split : splits) {
        if (!fs::is_directory(root / split)) throw IoError("missing split directory: " + (root / split).string());
        for (const auto& dir : sorted_entries(root / split, true)) names.insert(dir.filename().string());
    }
    if (names.empty()) throw IoError("no class directories under " + root.string());

    DatasetHandle h;
    h.name = root.filename().empty() ? root.parent_path().filename().string() : root.filename().string();
    h.class_names.assign(names.begin(), names.end());
    FolderLoadReport local;

    for (const auto& split : splits) {
        Dataset& d = split == "train" ? h.train : h.test;
        d.shape = shape;
        std::vector<double> pixels;
        for (std::size_t cls = 0; cls < h.class_names.size(); ++cls) {
            const fs::path dir = root / split / h.class_names[cls];
            if (!fs::is_directory(dir)) continue;
            std::size_t found = 0;
            for (const auto& file : sorted_entries(dir, false)) {
                if (!append_image(file, shape, pixels)) {
                    ++local.skipped;
                    continue;
                }
                d.classes.push_back(static_cast<int>(cls));
                d.ids.push_back(split + "/" + h.class_names[cls] + "/" + file.filename().string());
                ++found;
                ++local.loaded;
            }
            if (found == 0) throw IoError("class directory contains no images: " + dir.string());
        }
        d.images = Tensor({d.classes.size(), shape.height, shape.width, shape.channels});
        std::copy(pixels.begin(), pixels.end(), d.images.data());
    }
    if (report) *report = local;
    return h;
}

Dataset load_image_files(const fs::path& dir, const ImageShape& shape, FolderLoadReport* report) {
    shape.validate();
    if (!fs::is_directory(dir)) throw IoError("image directory does not exist: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && !is_hidden(entry.path())) files.push_back(fs::relative(entry.path(), dir));
    }
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        return a.generic_string() < b.generic_string();
    });
    Dataset d;
    d.shape = shape;
    FolderLoadReport local;
    std::vector<double> pixels;
    for (const auto& rel : files) {
        if (!append_image(dir / rel, shape, pixels)) {
            ++local.skipped;
            continue;
        }
        d.classes.push_back(-1);
        d.ids.push_back(rel.generic_string());
        ++local.loaded;
    }
    if (d.classes.empty()) throw IoError("no decodable images under " + dir.string());
    d.images = Tensor({d.classes.size(), shape.height, shape.width, shape.channels});
    std::copy(pixels.begin(), pixels.end(), d.images.data());
    if (report) *report = local;
    return d;
}

void validate_synthetic_spec(const SyntheticSpec& s) {
    s.shape.validate();
    if (s.shape.channels != 1) throw ConfigError("synthetic dataset is grayscale; channels must be 1");
    if (s.train_normal == 0 || s.test_normal == 0 || s.test_abnormal == 0) {
        throw ConfigError("synthetic counts must be >= 1 (train_normal, test_normal, test_abnormal)");
    }
    if (s.min_extent < 3 || s.min_extent > s.max_extent) throw ConfigError("synthetic extent range is invalid");
    if (s.max_extent > std::min(s.shape.height, s.shape.width)) {
        throw ConfigError("synthetic max_extent exceeds image size");
    }
    if (s.stroke == 0 || s.stroke >= s.min_extent) throw ConfigError("synthetic stroke must be in [1, min_extent)");
    if (s.intensity_jitter < 0.0 || s.intensity_jitter > 1.0) throw ConfigError("intensity_jitter must be in [0, 1]");
    if (s.pixel_noise < 0.0) throw ConfigError("pixel_noise must be >= 0");
}

DatasetHandle make_synthetic(const SyntheticSpec& spec) {
    validate_synthetic_spec(spec);
    DatasetHandle h;
    h.name = "synthetic";
    h.class_names = {"square", "cross"};
    std::mt19937_64 rng(spec.seed);
    h.train = synth_split(spec, spec.train_normal, spec.train_abnormal, "train", rng);
    h.test = synth_split(spec, spec.test_normal, spec.test_abnormal, "test", rng);
    return h;
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    // Explicit Fisher-Yates: std::shuffle's draw pattern is implementation-defined.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                             bool drop_last)
    : data_(&data), batch_size_(batch_size), drop_last_(drop_last), order_(shuffled_order(data.size(), seed, epoch)) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

bool BatchIterator::next(Batch& out) {
    const std::size_t remaining = order_.size() - pos_;
    if (remaining == 0 || (drop_last_ && remaining < batch_size_)) return false;
    const std::size_t take = std::min(batch_size_, remaining);
    out.rows.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                    order_.begin() + static_cast<std::ptrdiff_t>(pos_ + take));
    pos_ += take;
    out.images = data_->images.gather_batch(out.rows);
    out.classes.clear();
    for (std::size_t r : out.rows) out.classes.push_back(data_->classes[r]);
    for (double v : out.images.values()) {
        if (!(v >= -1.0 && v <= 1.0)) throw NumericError("batch pixel outside [-1, 1]");
    }
    return true;
}

std::string dataset_checksum(const DatasetHandle& h) {
    std::string bytes;
    auto put_split = [&](const Dataset& d) {
        const std::array<std::uint64_t, 4> dims{d.size(), d.shape.height, d.shape.width, d.shape.channels};
        bytes.append(reinterpret_cast<const char*>(dims.data()), sizeof dims);
        for (double v : d.images.values()) {
            const float f = static_cast<float>(v);
            bytes.append(reinterpret_cast<const char*>(&f), sizeof f);
        }
        for (std::size_t i = 0; i < d.size(); ++i) {
            bytes += d.ids[i];
            bytes += '\0';
            bytes += std::to_string(d.classes[i]);
            bytes += '\n';
        }
    };
    put_split(h.train);
    put_split(h.test);
    return sha256_hex(bytes);
}

nlohmann::json dataset_manifest(const DatasetHandle& h) {
    auto counts = [&](const Dataset& d) {
        nlohmann::json per = nlohmann::json::object();
        for (std::size_t c = 0; c < h.class_names.size(); ++c) {
            per[h.class_names[c]] = std::count(d.classes.begin(), d.classes.end(), static_cast<int>(c));
        }
        return nlohmann::json{{"total", d.size()}, {"per_class", per}};
    };
    const ImageShape& s = h.train.size() ? h.train.shape : h.test.shape;
    return nlohmann::json{{"name", h.name},
                          {"classes", h.class_names},
                          {"image_shape", {s.height, s.width, s.channels}},
                          {"counts", {{"train", counts(h.train)}, {"test", counts(h.test)}}},
                          {"checksum", dataset_checksum(h)}};
}

void write_dataset_manifest(const DatasetHandle& h, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dataset manifest " + path.string());
    out << dataset_manifest(h).dump(2) << '\n';
}

} // namespace dbigan
