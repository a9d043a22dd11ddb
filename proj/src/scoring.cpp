#include "dbigan/scoring.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dbigan/error.hpp"

namespace dbigan {

std::string to_string(Label l) {
    switch (l) {
    case Label::Normal: return "NORMAL";
    case Label::Abnormal: return "ABNORMAL";
    case Label::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

Label parse_label(const std::string& s) {
    if (s == "NORMAL") return Label::Normal;
    if (s == "ABNORMAL") return Label::Abnormal;
    if (s == "UNKNOWN") return Label::Unknown;
    throw ConfigError("unknown label '" + s + "'");
}

std::string to_string(DiscriminatorLossMode m) {
    return m == DiscriminatorLossMode::FeatureMatch ? "FEATURE_MATCH" : "CROSS_ENTROPY";
}

DiscriminatorLossMode parse_discriminator_loss_mode(const std::string& s) {
    if (s == "FEATURE_MATCH") return DiscriminatorLossMode::FeatureMatch;
    if (s == "CROSS_ENTROPY") return DiscriminatorLossMode::CrossEntropy;
    throw ConfigError("score.l_d_mode: expected FEATURE_MATCH or CROSS_ENTROPY, got '" + s + "'");
}

void ScoreConfig::validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("score.alpha: must be in [0, 1]");
    if (batch_size == 0) throw ConfigError("score.batch_size: must be >= 1");
}

nlohmann::json to_json(const ScoreConfig& c) {
    return {{"alpha", c.alpha}, {"l_d_mode", to_string(c.l_d_mode)}, {"batch_size", c.batch_size}};
}

ScoreConfig score_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("score: expected an object");
    ScoreConfig c;
    for (const auto& [k, v] : j.items()) {
        try {
            if (k == "alpha") c.alpha = v.get<double>();
            else if (k == "l_d_mode") c.l_d_mode = parse_discriminator_loss_mode(v.get<std::string>());
            else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
            else throw ConfigError("score." + k + ": unknown field");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("score." + k + ": wrong type (" + e.what() + ")");
        }
    }
    c.validate();
    return c;
}

namespace {

Tensor per_sample_mean_abs(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ConfigError("shape mismatch: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
    const std::size_t n = a.batch();
    const std::size_t k = a.sample_size();
    Tensor out(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += std::abs(a[i * k + j] - b[i * k + j]);
        out[i] = k ? s / static_cast<double>(k) : 0.0;
    }
    return out;
}

} // namespace

Tensor reconstruction_loss(const ModelState& state, const Tensor& x) {
    check_image_batch(state, x);
    const TargetVariable cx = real_target(x.batch(), state.d_c());
    const Tensor recon = generator_forward(state, encoder_r_forward(state, x, cx), cx);
    return per_sample_mean_abs(x, recon);
}

DiscriminatorScores discriminator_loss(const ModelState& state, const Tensor& x, DiscriminatorLossMode mode) {
    check_image_batch(state, x);
    const TargetVariable cx = real_target(x.batch(), state.d_c());
    const Tensor code = encoder_r_forward(state, x, cx);
    const DiscriminatorOutput real = discriminator_evaluate(state, x, code);
    DiscriminatorScores out;
    out.d_x = real.probability;
    if (mode == DiscriminatorLossMode::CrossEntropy) {
        out.l_d = Tensor(Shape{x.batch()});
        for (std::size_t i = 0; i < x.batch(); ++i) out.l_d[i] = -std::log(real.probability[i]);
    } else {
        const Tensor recon = generator_forward(state, code, cx);
        const DiscriminatorOutput fake = discriminator_evaluate(state, recon, code);
        out.l_d = per_sample_mean_abs(real.features, fake.features);
    }
    return out;
}

ScoreRecord anomaly_score(const std::string& sample_id, double l_g, double l_d, double d_x, Label label,
                          const ScoreConfig& config) {
    config.validate();
    ScoreRecord r;
    r.sample_id = sample_id;
    r.l_g = l_g;
    r.l_d = l_d;
    r.a_x = config.alpha * l_g + (1.0 - config.alpha) * l_d;
    r.d_x = d_x;
    r.d_x_anomaly = 1.0 - d_x;
    r.label = label;
    if (!std::isfinite(r.l_g) || !std::isfinite(r.l_d) || !std::isfinite(r.a_x) || !std::isfinite(r.d_x)) {
        throw NumericError("non-finite score for sample " + sample_id);
    }
    return r;
}

std::vector<ScoreRecord> score_images(const ModelState& state, const Tensor& images,
                                      const std::vector<std::string>& ids, const std::vector<Label>& labels,
                                      const ScoreConfig& config) {
    config.validate();
    const std::size_t n = images.batch();
    if (ids.size() != n || labels.size() != n) throw ConfigError("score_images: ids/labels do not match images");
    std::vector<ScoreRecord> out;
    out.reserve(n);
    // Every network is per-sample, so chunking does not change any score.
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
        const std::size_t count = std::min(config.batch_size, n - begin);
        const Tensor x = images.slice_batch(begin, count);
        const Tensor l_g = reconstruction_loss(state, x);
        const DiscriminatorScores d = discriminator_loss(state, x, config.l_d_mode);
        for (std::size_t i = 0; i < count; ++i) {
            out.push_back(anomaly_score(ids[begin + i], l_g[i], d.l_d[i], d.d_x[i], labels[begin + i], config));
        }
    }
    return out;
}

std::vector<std::string> score_columns() { return {"sample_id", "l_g", "l_d", "a_x", "d_x_anomaly", "label"}; }

void write_scores_csv(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "sample_id,l_g,l_d,a_x,d_x_anomaly,label\n";
    out.precision(17);
    for (const auto& r : records) {
        if (r.sample_id.find_first_of("\r\n") != std::string::npos) throw IoError("sample id contains a line break");
        out << r.sample_id << ',' << r.l_g << ',' << r.l_d << ',' << r.a_x << ',' << r.d_x_anomaly << ','
            << to_string(r.label) << '\n';
    }
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ScoreRecord> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "sample_id,l_g,l_d,a_x,d_x_anomaly,label") throw IoError("unexpected scores header in " + path.string());
    std::vector<ScoreRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        // Numeric columns are split from the right so ids may contain commas.
        std::vector<std::string> f;
        std::string rest = line;
        for (int k = 0; k < 5; ++k) {
            const auto pos = rest.rfind(',');
            if (pos == std::string::npos) break;
            f.insert(f.begin(), rest.substr(pos + 1));
            rest.erase(pos);
        }
        f.insert(f.begin(), rest);
        if (f.size() != 6) throw IoError("malformed scores row in " + path.string() + ": " + line);
        ScoreRecord r;
        r.sample_id = f[0];
        r.l_g = std::stod(f[1]);
        r.l_d = std::stod(f[2]);
        r.a_x = std::stod(f[3]);
        r.d_x_anomaly = std::stod(f[4]);
        r.d_x = 1.0 - r.d_x_anomaly;
        r.label = parse_label(f[5]);
        out.push_back(r);
    }
    return out;
}

} // namespace dbigan
