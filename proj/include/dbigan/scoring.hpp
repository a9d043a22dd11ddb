#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbigan/nets.hpp"
#include "dbigan/tensor.hpp"

namespace dbigan {

enum class Label { Normal, Abnormal, Unknown };
std::string to_string(Label l);
Label parse_label(const std::string& s);

enum class DiscriminatorLossMode { FeatureMatch, CrossEntropy };
std::string to_string(DiscriminatorLossMode m);
DiscriminatorLossMode parse_discriminator_loss_mode(const std::string& s);

struct ScoreConfig {
    double alpha = 0.1;
    DiscriminatorLossMode l_d_mode = DiscriminatorLossMode::FeatureMatch;
    std::size_t batch_size = 64; // evaluation chunking only; scores do not depend on it

    void validate() const; // alpha in [0, 1]
};

nlohmann::json to_json(const ScoreConfig& c);
ScoreConfig score_config_from_json(const nlohmann::json& j);

struct ScoreRecord {
    std::string sample_id;
    double l_g = 0.0;
    double l_d = 0.0;
    double a_x = 0.0;
    double d_x = 0.5;         // D(x, E_r(x))
    double d_x_anomaly = 0.5; // 1 - d_x
    Label label = Label::Unknown;
};

// Per-sample mean |x - G(E_r(x), c_x)|, shape (batch).
Tensor reconstruction_loss(const ModelState& state, const Tensor& x);

struct DiscriminatorScores {
    Tensor l_d; // (batch)
    Tensor d_x; // (batch), D(x, E_r(x)) clamped
};
// FEATURE_MATCH: mean |f(x, E_r(x)) - f(G(E_r(x), c_x), E_r(x))| over D's
// penultimate features. CROSS_ENTROPY: -log D(x, E_r(x)).
DiscriminatorScores discriminator_loss(const ModelState& state, const Tensor& x, DiscriminatorLossMode mode);

// a_x = alpha * l_g + (1 - alpha) * l_d; d_x_anomaly = 1 - d_x.
ScoreRecord anomaly_score(const std::string& sample_id, double l_g, double l_d, double d_x, Label label,
                          const ScoreConfig& config);

// Scores every row of `images`, in order. Read-only on the state.
std::vector<ScoreRecord> score_images(const ModelState& state, const Tensor& images,
                                      const std::vector<std::string>& ids, const std::vector<Label>& labels,
                                      const ScoreConfig& config);

std::vector<std::string> score_columns();
void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path);

} // namespace dbigan
