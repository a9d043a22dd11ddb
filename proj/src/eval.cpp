#include "dbigan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dbigan/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dbigan {

ProtocolSplits build_protocol(const DatasetHandle& data, int anomaly_class) {
    const int n_classes = static_cast<int>(data.class_names.size());
    if (anomaly_class < 0 || anomaly_class >= n_classes) {
        throw ConfigError("unknown anomaly class id " + std::to_string(anomaly_class) + " (dataset has " +
                          std::to_string(n_classes) + " classes)");
    }
    ProtocolSplits p;
    p.spec.anomaly_class = anomaly_class;
    for (int c = 0; c < n_classes; ++c) {
        if (c != anomaly_class) p.spec.normal_classes.push_back(c);
    }
    if (p.spec.normal_classes.empty()) throw ConfigError("protocol has no normal classes");

    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        if (data.train.classes[i] != anomaly_class) keep.push_back(i);
    }
    if (keep.empty()) throw ConfigError("protocol train split is empty");
    p.train = data.train.subset(keep);
    p.test = data.test;
    p.test_labels.reserve(p.test.size());
    for (int c : p.test.classes) p.test_labels.push_back(c == anomaly_class ? Label::Abnormal : Label::Normal);
    return p;
}

double auroc(std::span<const double> scores, std::span<const Label> labels) {
    if (scores.size() != labels.size()) throw ConfigError("auroc: scores and labels differ in length");
    std::uint64_t n_pos = 0, n_neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) throw NumericError("auroc: non-finite score");
        if (labels[i] == Label::Abnormal) ++n_pos;
        else if (labels[i] == Label::Normal) ++n_neg;
        else throw ConfigError("auroc: UNKNOWN label in input");
    }
    if (n_pos == 0 || n_neg == 0) throw ConfigError("auroc needs both NORMAL and ABNORMAL samples");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the abnormal rank sum, kept integral: a tie block over ranks
    // [i+1, j] has midrank (i + 1 + j) / 2.
    std::uint64_t twice_rank_sum = 0;
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const std::uint64_t twice_mid = i + 1 + j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[idx[k]] == Label::Abnormal) twice_rank_sum += twice_mid;
        }
        i = j;
    }
    const std::uint64_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
    return static_cast<double>(twice_u) / static_cast<double>(2 * n_pos * n_neg);
}

EvalReport evaluate_scores(const std::vector<ScoreRecord>& records, const json& config_echo) {
    EvalReport r;
    r.config = config_echo;
    std::vector<Label> labels;
    std::vector<double> a_x, d_x, l_g, l_d;
    for (const auto& rec : records) {
        if (rec.label == Label::Unknown) continue;
        labels.push_back(rec.label);
        a_x.push_back(rec.a_x);
        d_x.push_back(rec.d_x_anomaly);
        l_g.push_back(rec.l_g);
        l_d.push_back(rec.l_d);
        (rec.label == Label::Normal ? r.normal_count : r.abnormal_count) += 1;
    }
    r.auroc["a_x"] = auroc(a_x, labels);
    r.auroc["d_x_anomaly"] = auroc(d_x, labels);
    r.auroc["l_g"] = auroc(l_g, labels);
    r.auroc["l_d"] = auroc(l_d, labels);
    return r;
}

json to_json(const EvalReport& r) {
    json au = json::object();
    for (const auto& [k, v] : r.auroc) au[k] = v;
    return json{{"auroc", au},
                {"counts", {{"NORMAL", r.normal_count}, {"ABNORMAL", r.abnormal_count}}},
                {"config", r.config}};
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

std::uint8_t to_byte(double v) {
    const double scaled = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(scaled);
}

namespace {

void blit(cv::Mat& canvas, const double* img, const ImageShape& s, std::size_t row, std::size_t col) {
    for (std::size_t y = 0; y < s.height; ++y) {
        auto* dst = canvas.ptr<std::uint8_t>(static_cast<int>(row * s.height + y));
        for (std::size_t x = 0; x < s.width; ++x) {
            for (std::size_t ch = 0; ch < s.channels; ++ch) {
                // OpenCV stores colour as BGR.
                const std::size_t out_ch = s.channels == 3 ? 2 - ch : ch;
                dst[(col * s.width + x) * s.channels + out_ch] = to_byte(img[(y * s.width + x) * s.channels + ch]);
            }
        }
    }
}

void write_png(const fs::path& path, const cv::Mat& img) {
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write image " + path.string());
}

TargetVariable real_target_for(const ModelState& s, std::size_t n) { return real_target(n, s.d_c()); }

} // namespace

void reconstruction_grid(const ModelState& state, const Tensor& images, const std::vector<std::string>& ids,
                         const std::vector<Label>& labels, const fs::path& png_path) {
    const std::size_t n = images.rank() ? images.batch() : 0;
    if (n == 0) throw ConfigError("reconstruction grid needs at least one sample");
    if (ids.size() != n || labels.size() != n) throw ConfigError("reconstruction grid: ids/labels do not match");
    check_image_batch(state, images);
    const ImageShape s = state.image();
    const TargetVariable cx = real_target_for(state, n);
    const Tensor recon = generator_forward(state, encoder_r_forward(state, images, cx), cx);

    cv::Mat canvas(static_cast<int>(2 * s.height), static_cast<int>(n * s.width),
                   s.channels == 3 ? CV_8UC3 : CV_8UC1, cv::Scalar::all(0));
    for (std::size_t i = 0; i < n; ++i) {
        blit(canvas, images.data() + i * s.pixels(), s, 0, i);
        blit(canvas, recon.data() + i * s.pixels(), s, 1, i);
    }
    write_png(png_path, canvas);

    json cols = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        cols.push_back({{"column", i}, {"sample_id", ids[i]}, {"label", to_string(labels[i])}});
    }
    json sidecar{{"layout", {{"rows", 2}, {"columns", n}}},
                 {"row_contents", {"original", "reconstruction"}},
                 {"tile", {s.height, s.width, s.channels}},
                 {"samples", cols}};
    fs::path side = png_path;
    side.replace_extension(".json");
    write_json_file(side, sidecar);
}

std::string to_string(EncoderChoice e) { return e == EncoderChoice::Er ? "E_r" : "E_g"; }

Tensor pca_2d(const Tensor& points) {
    const std::size_t n = points.batch();
    const std::size_t d = points.sample_size();
    if (d < 2) throw ConfigError("projection needs at least 2 dimensions");
    Eigen::MatrixXd X(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) X(i, j) = points[i * d + j];
    X.rowwise() -= X.colwise().mean();
    const Eigen::MatrixXd cov = (X.transpose() * X) / std::max<double>(1.0, static_cast<double>(n) - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    Tensor out(Shape{n, 2});
    for (int k = 0; k < 2; ++k) {
        // Eigenvalues come sorted ascending.
        Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        const Eigen::VectorXd proj = X * v;
        for (std::size_t i = 0; i < n; ++i) out[i * 2 + k] = proj(static_cast<Eigen::Index>(i));
    }
    return out;
}

namespace {

// Row-conditional affinities with a per-point precision found by bisection so
// the entropy matches log(perplexity).
std::vector<double> tsne_affinities(const std::vector<double>& dist2, std::size_t n, double perplexity) {
    std::vector<double> P(n * n, 0.0);
    const double target = std::log(perplexity);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        for (int iter = 0; iter < 100; ++iter) {
            double sum = 0.0, weighted = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * dist2[i * n + j]);
                sum += row[j];
                weighted += row[j] * dist2[i * n + j];
            }
            sum = std::max(sum, 1e-300);
            const double entropy = std::log(sum) + beta * weighted / sum;
            const double diff = entropy - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += row[j];
        sum = std::max(sum, 1e-300);
        for (std::size_t j = 0; j < n; ++j) P[i * n + j] = row[j] / sum;
    }
    std::vector<double> sym(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            sym[i * n + j] = std::max((P[i * n + j] + P[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
    return sym;
}

} // namespace

Tensor tsne_2d(const Tensor& points, const ProjectionOptions& o) {
    const std::size_t n = points.batch();
    const std::size_t d = points.sample_size();
    if (n < 4) throw ConfigError("t-SNE needs at least 4 samples");
    std::vector<double> dist2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double t = points[i * d + k] - points[j * d + k];
                s += t * t;
            }
            dist2[i * n + j] = dist2[j * n + i] = s;
        }
    const double perplexity = std::min(o.perplexity, (static_cast<double>(n) - 1.0) / 3.0);
    const std::vector<double> P = tsne_affinities(dist2, n, perplexity);

    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> init(0.0, 1e-4);
    std::vector<double> Y(n * 2), update(n * 2, 0.0), gains(n * 2, 1.0), grad(n * 2);
    for (auto& y : Y) y = init(rng);
    std::vector<double> num(n * n);
    const double learning_rate = 200.0;
    for (std::size_t it = 0; it < o.iterations; ++it) {
        const double exaggeration = it < 100 ? 12.0 : 1.0;
        const double momentum = it < 250 ? 0.5 : 0.8;
        double qsum = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) {
                    num[i * n + j] = 0.0;
                    continue;
                }
                const double dx = Y[2 * i] - Y[2 * j], dy = Y[2 * i + 1] - Y[2 * j + 1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                qsum += num[i * n + j];
            }
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = std::max(num[i * n + j] / qsum, 1e-12);
                const double mult = 4.0 * (exaggeration * P[i * n + j] - q) * num[i * n + j];
                grad[2 * i] += mult * (Y[2 * i] - Y[2 * j]);
                grad[2 * i + 1] += mult * (Y[2 * i + 1] - Y[2 * j + 1]);
            }
        for (std::size_t k = 0; k < n * 2; ++k) {
            const bool same_sign = (grad[k] > 0) == (update[k] > 0);
            gains[k] = std::max(same_sign ? gains[k] * 0.8 : gains[k] + 0.2, 0.01);
            update[k] = momentum * update[k] - learning_rate * gains[k] * grad[k];
            Y[k] += update[k];
        }
        for (int c = 0; c < 2; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += Y[2 * i + c];
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) Y[2 * i + c] -= mean;
        }
    }
    return Tensor(Shape{n, 2}, Y);
}

Tensor project_2d(const Tensor& points, const ProjectionOptions& options) {
    const std::size_t d = points.sample_size();
    if (d < 2) throw ConfigError("latent projection needs d_z >= 2");
    if (d == 2) return points.reshaped(Shape{points.batch(), 2});
    if (points.batch() < options.tsne_min_samples) return pca_2d(points);
    return tsne_2d(points, options);
}

namespace {

void write_scatter(const fs::path& path, const Tensor& coords, const std::vector<Label>& labels) {
    constexpr int size = 480, margin = 24;
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
    const std::size_t n = coords.batch();
    double lo[2] = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    double hi[2] = {-lo[0], -lo[1]};
    for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 2; ++c) {
            lo[c] = std::min(lo[c], coords[i * 2 + c]);
            hi[c] = std::max(hi[c], coords[i * 2 + c]);
        }
    auto pixel = [&](double v, int c) {
        const double span = hi[c] - lo[c] > 0 ? hi[c] - lo[c] : 1.0;
        return margin + static_cast<int>(std::lround((v - lo[c]) / span * (size - 2 * margin)));
    };
    cv::rectangle(img, {margin / 2, margin / 2}, {size - margin / 2, size - margin / 2}, cv::Scalar(200, 200, 200));
    for (std::size_t i = 0; i < n; ++i) {
        const cv::Scalar colour = labels[i] == Label::Abnormal ? cv::Scalar(40, 40, 220)
                                  : labels[i] == Label::Normal ? cv::Scalar(200, 110, 30)
                                                               : cv::Scalar(130, 130, 130);
        const cv::Point p(pixel(coords[i * 2], 0), size - pixel(coords[i * 2 + 1], 1));
        cv::circle(img, p, 3, colour, cv::FILLED, cv::LINE_8);
    }
    write_png(path, img);
}

} // namespace

ProjectionResult latent_projection(const ModelState& state, const Tensor& images, const std::vector<std::string>& ids,
                                   const std::vector<Label>& labels, EncoderChoice which,
                                   const ProjectionOptions& options, const fs::path& csv_path,
                                   const fs::path& png_path) {
    const std::size_t n = images.rank() ? images.batch() : 0;
    if (n < 10) throw ConfigError("latent projection needs at least 10 samples");
    if (ids.size() != n || labels.size() != n) throw ConfigError("latent projection: ids/labels do not match");
    if (state.d_z() < 2) throw ConfigError("latent projection needs d_z >= 2");
    check_image_batch(state, images);
    ProjectionResult r;
    const TargetVariable cx = real_target_for(state, n);
    if (which == EncoderChoice::Er) {
        r.codes = encoder_r_forward(state, images, cx);
    } else {
        if (!state.has(NetId::Eg)) throw ConfigError("model has no E_g");
        r.codes = encoder_g_forward(state, images, state.net(NetId::Eg).takes_target() ? &cx : nullptr);
    }
    r.method = state.d_z() == 2 ? "identity" : n < options.tsne_min_samples ? "pca" : "tsne";
    r.coords = project_2d(r.codes, options);

    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + csv_path.string());
    out << "sample_id,dim1,dim2,label\n";
    out.precision(17);
    for (std::size_t i = 0; i < n; ++i) {
        out << ids[i] << ',' << r.coords[i * 2] << ',' << r.coords[i * 2 + 1] << ',' << to_string(labels[i]) << '\n';
    }
    if (!out) throw IoError("write failed for " + csv_path.string());
    write_scatter(png_path, r.coords, labels);
    return r;
}

} // namespace dbigan
