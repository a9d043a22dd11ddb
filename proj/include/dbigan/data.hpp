#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbigan/nets.hpp"
#include "dbigan/tensor.hpp"

namespace dbigan {

// One split of a labelled image dataset. Images are NHWC in [-1, 1].
struct Dataset {
    ImageShape shape;
    Tensor images;
    std::vector<int> classes;     // class id per sample
    std::vector<std::string> ids; // stable sample identifiers

    std::size_t size() const { return classes.size(); }
    Dataset subset(std::span<const std::size_t> rows) const;
};

struct DatasetHandle {
    std::string name;
    std::vector<std::string> class_names; // indexed by class id
    Dataset train;
    Dataset test;
};

// Affine pixel scaling: 0 -> -1, 255 -> +1.
inline double scale_pixel(std::uint8_t v) { return static_cast<double>(v) / 127.5 - 1.0; }

// "mnist" (idx files) or "cifar10" (binary batches). Throws IoError with the
// missing or malformed file in the message.
DatasetHandle load_benchmark(const std::string& name, const std::filesystem::path& root);
DatasetHandle load_mnist(const std::filesystem::path& root);
DatasetHandle load_cifar10(const std::filesystem::path& root);

struct FolderLoadReport {
    std::size_t loaded = 0;
    std::size_t skipped = 0; // files that did not decode as images
};

// Layout root/{train,test}/{class}/<image files>; classes are the sorted
// union of directory names, files are read in lexicographic order and resized
// to `shape`.
DatasetHandle load_folder(const std::filesystem::path& root, const ImageShape& shape,
                          FolderLoadReport* report = nullptr);

// Every decodable image under `dir` (recursive, lexicographic by relative
// path), resized to `shape`. Class ids are -1.
Dataset load_image_files(const std::filesystem::path& dir, const ImageShape& shape,
                         FolderLoadReport* report = nullptr);

enum class NormalMotif { FilledSquare };
enum class AbnormalMotif { Cross };

// Class 0 is the normal motif ("square"), class 1 the abnormal one ("cross").
struct SyntheticSpec {
    ImageShape shape{16, 16, 1};
    NormalMotif normal = NormalMotif::FilledSquare;
    AbnormalMotif abnormal = AbnormalMotif::Cross;
    std::size_t min_extent = 6; // motif side length range, pixels
    std::size_t max_extent = 10;
    std::size_t stroke = 2;            // cross arm thickness
    double intensity_jitter = 0.2;     // foreground drawn in [1 - jitter, 1]
    double pixel_noise = 0.0;          // additive Gaussian noise std (clamped to [-1, 1])
    std::size_t train_normal = 500;
    std::size_t train_abnormal = 0;
    std::size_t test_normal = 100;
    std::size_t test_abnormal = 100;
    std::uint64_t seed = 7;
};

// Throws ConfigError for zero counts or an impossible motif geometry.
void validate_synthetic_spec(const SyntheticSpec& spec);
DatasetHandle make_synthetic(const SyntheticSpec& spec);

// Seeded permutation of [0, n) for an epoch.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

// Yields batches of a split in seeded-shuffle order. The final partial batch
// is kept unless `drop_last` is set.
class BatchIterator {
public:
    BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch,
                  bool drop_last = false);

    struct Batch {
        Tensor images;
        std::vector<int> classes;
        std::vector<std::size_t> rows;
    };

    bool next(Batch& out);

private:
    const Dataset* data_;
    std::size_t batch_size_;
    bool drop_last_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

std::string dataset_checksum(const DatasetHandle& h);
nlohmann::json dataset_manifest(const DatasetHandle& h);
void write_dataset_manifest(const DatasetHandle& h, const std::filesystem::path& path);

} // namespace dbigan
