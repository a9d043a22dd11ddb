#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbigan/data.hpp"
#include "dbigan/nets.hpp"
#include "dbigan/scoring.hpp"

namespace dbigan {

struct ProtocolSpec {
    int anomaly_class = 0;
    std::vector<int> normal_classes;
};

struct ProtocolSplits {
    ProtocolSpec spec;
    Dataset train;                 // normal classes only
    Dataset test;                  // every test sample
    std::vector<Label> test_labels; // aligned with `test`
};

// One-vs-rest: `anomaly_class` is abnormal, every other class is normal.
ProtocolSplits build_protocol(const DatasetHandle& data, int anomaly_class);

// Probability that a random ABNORMAL score exceeds a random NORMAL one, ties
// counting one half. Rank-sum with midranks. Throws unless both labels occur;
// UNKNOWN labels are rejected.
double auroc(std::span<const double> scores, std::span<const Label> labels);

struct EvalReport {
    std::map<std::string, double> auroc; // a_x, d_x_anomaly, l_g, l_d
    std::size_t normal_count = 0;
    std::size_t abnormal_count = 0;
    nlohmann::json config;
};

EvalReport evaluate_scores(const std::vector<ScoreRecord>& records, const nlohmann::json& config_echo);
nlohmann::json to_json(const EvalReport& r);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

// 2 x n tile grid: originals on the top row, G(E_r(x), c_x) below, one column
// per sample. Pixels map [-1, 1] -> [0, 255]. A JSON sidecar (same stem,
// ".json") lists sample ids and labels per column.
void reconstruction_grid(const ModelState& state, const Tensor& images, const std::vector<std::string>& ids,
                         const std::vector<Label>& labels, const std::filesystem::path& png_path);

std::uint8_t to_byte(double v);

enum class EncoderChoice { Er, Eg };
std::string to_string(EncoderChoice e);

struct ProjectionOptions {
    std::uint64_t seed = 0;
    std::size_t tsne_min_samples = 50; // below this the top-2 principal components are used
    double perplexity = 30.0;
    std::size_t iterations = 750;
};

// Exact t-SNE to 2-D.
Tensor tsne_2d(const Tensor& points, const ProjectionOptions& options);
// Projection onto the top-2 principal components, sign-normalised.
Tensor pca_2d(const Tensor& points);
// Identity for 2-D input; otherwise t-SNE or PCA by sample count.
Tensor project_2d(const Tensor& points, const ProjectionOptions& options);

struct ProjectionResult {
    Tensor codes;  // (n, d_z)
    Tensor coords; // (n, 2)
    std::string method; // identity | pca | tsne
};

// Encodes with E_r (paired with c_x) or E_g, projects to 2-D, and writes
// `csv_path` (sample_id, dim1, dim2, label) and a scatter PNG.
ProjectionResult latent_projection(const ModelState& state, const Tensor& images, const std::vector<std::string>& ids,
                                   const std::vector<Label>& labels, EncoderChoice which,
                                   const ProjectionOptions& options, const std::filesystem::path& csv_path,
                                   const std::filesystem::path& png_path);

} // namespace dbigan
