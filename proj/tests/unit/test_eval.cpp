#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <opencv2/imgcodecs.hpp>

#include "dbigan/error.hpp"
#include "dbigan/eval.hpp"
#include "dbigan/hash.hpp"
#include "support/oracles.hpp"

using namespace dbigan;
namespace fs = std::filesystem;

namespace {

DatasetHandle labelled_handle(int classes, std::size_t per_class) {
    DatasetHandle h;
    h.name = "toy";
    for (int c = 0; c < classes; ++c) h.class_names.push_back("c" + std::to_string(c));
    for (Dataset* d : {&h.train, &h.test}) {
        d->shape = ImageShape{4, 4, 1};
        const std::size_t n = classes * per_class;
        d->images = Tensor(Shape{n, 4, 4, 1});
        for (std::size_t i = 0; i < n; ++i) {
            d->classes.push_back(static_cast<int>(i % classes));
            d->ids.push_back((d == &h.train ? "train-" : "test-") + std::to_string(i));
        }
    }
    return h;
}

std::vector<std::string> ids_for(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
    return ids;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("eval") {

TEST_CASE("AUROC of N = (0.1, 0.4), A = (0.3, 0.9) is 0.75") {
    const std::vector<double> s{0.1, 0.4, 0.3, 0.9};
    const std::vector<Label> l{Label::Normal, Label::Normal, Label::Abnormal, Label::Abnormal};
    CHECK(auroc(s, l) == 0.75);
    CHECK(testing::auroc_brute_force(s, l) == 0.75);
}

TEST_CASE("AUROC edge cases") {
    const std::vector<Label> l{Label::Normal, Label::Normal, Label::Abnormal};
    CHECK(auroc(std::vector<double>{0.1, 0.2, 0.9}, l) == 1.0);
    CHECK(auroc(std::vector<double>{0.5, 0.5, 0.5}, l) == 0.5);
    CHECK(auroc(std::vector<double>{0.9, 0.8, 0.1}, l) == 0.0);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<Label>{Label::Normal, Label::Normal}),
                    ConfigError);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, 0.2}, std::vector<Label>{Label::Normal, Label::Unknown}),
                    ConfigError);
    CHECK_THROWS_AS(auroc(std::vector<double>{0.1, NAN}, std::vector<Label>{Label::Normal, Label::Abnormal}),
                    NumericError);
}

TEST_CASE("AUROC equals the pairwise count on random inputs with ties") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng() % 199;
        std::vector<double> s(n);
        std::vector<Label> l(n);
        const int levels = 1 + static_cast<int>(rng() % 20); // few levels force ties
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = static_cast<double>(rng() % levels) / levels;
            l[i] = rng() % 2 ? Label::Abnormal : Label::Normal;
        }
        l[0] = Label::Normal;
        l[1] = Label::Abnormal;
        CHECK(auroc(s, l) == testing::auroc_brute_force(s, l));
    }
}

TEST_CASE("AUROC is invariant under increasing transforms and flips under relabeling") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> s(60), t(60), u(60);
    std::vector<Label> l(60), flipped(60);
    for (std::size_t i = 0; i < 60; ++i) {
        s[i] = n(rng);
        t[i] = std::exp(s[i]);
        u[i] = 3.0 * s[i] + 1.0;
        l[i] = i % 3 == 0 ? Label::Abnormal : Label::Normal;
        flipped[i] = l[i] == Label::Abnormal ? Label::Normal : Label::Abnormal;
    }
    CHECK(auroc(t, l) == auroc(s, l));
    CHECK(auroc(u, l) == auroc(s, l));
    CHECK(auroc(s, flipped) == doctest::Approx(1.0 - auroc(s, l)).epsilon(1e-15));
}

TEST_CASE("one-vs-rest protocol") {
    const DatasetHandle h = labelled_handle(10, 3);
    const ProtocolSplits p = build_protocol(h, 0);
    CHECK(p.spec.anomaly_class == 0);
    CHECK(p.spec.normal_classes.size() == 9);
    CHECK(std::count(p.train.classes.begin(), p.train.classes.end(), 0) == 0);
    CHECK(p.train.size() == 27);
    CHECK(p.test.size() == 30);
    for (std::size_t i = 0; i < p.test.size(); ++i)
        CHECK(p.test_labels[i] == (p.test.classes[i] == 0 ? Label::Abnormal : Label::Normal));
    CHECK_THROWS_AS(build_protocol(h, 10), ConfigError);
    CHECK_THROWS_AS(build_protocol(h, -1), ConfigError);
    // A single-class dataset leaves no normal class.
    CHECK_THROWS_AS(build_protocol(labelled_handle(1, 3), 0), ConfigError);
}

TEST_CASE("the train split never contains the anomaly class") {
    const DatasetHandle h = labelled_handle(4, 5);
    for (int a = 0; a < 4; ++a) {
        const ProtocolSplits p = build_protocol(h, a);
        for (int c : p.train.classes) CHECK(c != a);
    }
}

TEST_CASE("eval report covers the four score columns") {
    std::vector<ScoreRecord> r;
    for (int i = 0; i < 6; ++i) {
        ScoreRecord s;
        s.sample_id = std::to_string(i);
        s.label = i < 3 ? Label::Normal : Label::Abnormal;
        s.l_g = s.l_d = s.a_x = i;
        s.d_x_anomaly = -i;
        r.push_back(s);
    }
    const EvalReport rep = evaluate_scores(r, {{"k", 1}});
    CHECK(rep.auroc.size() == 4);
    CHECK(rep.auroc.at("a_x") == 1.0);
    CHECK(rep.auroc.at("l_g") == 1.0);
    CHECK(rep.auroc.at("l_d") == 1.0);
    CHECK(rep.auroc.at("d_x_anomaly") == 0.0);
    CHECK(rep.normal_count == 3);
    CHECK(rep.abnormal_count == 3);
    const auto j = to_json(rep);
    CHECK(j["auroc"].contains("d_x_anomaly"));
    CHECK(j["config"]["k"] == 1);
}

TEST_CASE("reconstruction grid: 2 x 8 layout, affine pixel mapping, label sidecar, stable bytes") {
    ModelState s = testing::tiny_model(3);
    std::mt19937_64 rng(1);
    Tensor x = testing::random_images(8, s.image(), rng);
    x[0] = -1.0;
    x[1] = 1.0;
    std::vector<Label> labels(8, Label::Normal);
    labels[5] = Label::Abnormal;
    const fs::path dir = fresh_dir("dbigan_grid");
    reconstruction_grid(s, x, ids_for(8), labels, dir / "a.png");
    reconstruction_grid(s, x, ids_for(8), labels, dir / "b.png");
    CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));

    const cv::Mat img = cv::imread((dir / "a.png").string(), cv::IMREAD_UNCHANGED);
    REQUIRE_FALSE(img.empty());
    CHECK(img.rows % 2 == 0);
    CHECK(img.cols % 8 == 0);
    CHECK(img.cols / 8 == img.rows / 2); // square tiles
    CHECK(to_byte(-1.0) == 0);
    CHECK(to_byte(1.0) == 255);
    CHECK(to_byte(0.0) == 128);
    // First tile, top-left pixel holds the original x[0] = -1 and x[1] = 1.
    const int scale = img.cols / 8 / 4;
    CHECK(img.at<std::uint8_t>(0, 0) == 0);
    CHECK(img.at<std::uint8_t>(0, scale) == 255);

    const nlohmann::json side = nlohmann::json::parse(slurp(dir / "a.json"));
    CHECK(side["layout"]["rows"] == 2);
    CHECK(side["layout"]["columns"] == 8);
    CHECK(side["samples"].size() == 8);
    CHECK(side["samples"][5]["label"] == "ABNORMAL");
    CHECK_THROWS_AS(reconstruction_grid(s, Tensor(Shape{0, 4, 4, 1}), {}, {}, dir / "c.png"), ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("projection: identity for 2-D codes, PCA below 50 samples, seeded t-SNE above") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor two(Shape{12, 2});
    for (auto& v : two.values()) v = n(rng);
    ProjectionOptions o;
    CHECK(project_2d(two, o) == two);

    Tensor small(Shape{20, 5});
    for (auto& v : small.values()) v = n(rng);
    CHECK(project_2d(small, o) == pca_2d(small));

    Tensor big(Shape{60, 5});
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t k = 0; k < 5; ++k) big[i * 5 + k] = n(rng) + (i < 30 ? 4.0 : -4.0);
    o.iterations = 300;
    const Tensor a = project_2d(big, o);
    const Tensor b = tsne_2d(big, o);
    CHECK(a == b);
    CHECK(a.shape() == Shape{60, 2});
    // Two well separated blobs stay separated: centroid gap beats the spread.
    double ca[2] = {0, 0}, cb[2] = {0, 0};
    for (std::size_t i = 0; i < 60; ++i)
        for (int k = 0; k < 2; ++k) (i < 30 ? ca : cb)[k] += a[i * 2 + k] / 30.0;
    double spread = 0.0;
    for (std::size_t i = 0; i < 30; ++i) spread += std::hypot(a[i * 2] - ca[0], a[i * 2 + 1] - ca[1]) / 30.0;
    CHECK(std::hypot(ca[0] - cb[0], ca[1] - cb[1]) > 2.0 * spread);
}

TEST_CASE("PCA recovers the dominant direction") {
    Tensor p(Shape{5, 3});
    for (std::size_t i = 0; i < 5; ++i) {
        p[i * 3 + 0] = static_cast<double>(i) * 10.0;
        p[i * 3 + 1] = (i % 2) ? 1.0 : -1.0;
        p[i * 3 + 2] = 0.0;
    }
    const Tensor c = pca_2d(p);
    // First component orders the points by the first coordinate.
    for (std::size_t i = 1; i < 5; ++i) CHECK(std::abs(c[i * 2] - c[(i - 1) * 2]) == doctest::Approx(10.0));
}

TEST_CASE("latent projection files: one CSV row per sample and stable under a fixed seed") {
    ModelState s = testing::tiny_model(4);
    std::mt19937_64 rng(2);
    const std::size_t n = 12;
    const Tensor x = testing::random_images(n, s.image(), rng);
    std::vector<Label> labels(n, Label::Normal);
    labels[0] = Label::Abnormal;
    const fs::path dir = fresh_dir("dbigan_proj");
    ProjectionOptions o;
    const auto r1 = latent_projection(s, x, ids_for(n), labels, EncoderChoice::Er, o, dir / "p1.csv", dir / "p1.png");
    const auto r2 = latent_projection(s, x, ids_for(n), labels, EncoderChoice::Er, o, dir / "p2.csv", dir / "p2.png");
    CHECK(r1.method == "pca");
    CHECK(r1.codes.shape() == Shape{n, 3});
    CHECK(slurp(dir / "p1.csv") == slurp(dir / "p2.csv"));
    CHECK(slurp(dir / "p1.png") == slurp(dir / "p2.png"));
    std::ifstream in(dir / "p1.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "sample_id,dim1,dim2,label");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == n);
    const auto g = latent_projection(s, x, ids_for(n), labels, EncoderChoice::Eg, o, dir / "g.csv", dir / "g.png");
    CHECK_FALSE(g.codes == r1.codes);
    CHECK_THROWS_AS(latent_projection(s, x.slice_batch(0, 5), ids_for(5), std::vector<Label>(5, Label::Normal),
                                      EncoderChoice::Er, o, dir / "x.csv", dir / "x.png"),
                    ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("latent projection needs d_z >= 2") {
    ArchitectureOptions a;
    a.base_channels = 4;
    a.dense_units = 8;
    a.latent_units = 4;
    ModelState s = build_networks(default_network_configs(ImageShape{4, 4, 1}, 1, 2, a), 0);
    std::mt19937_64 rng(3);
    const Tensor x = testing::random_images(10, s.image(), rng);
    const fs::path dir = fresh_dir("dbigan_proj_dz1");
    CHECK_THROWS_AS(latent_projection(s, x, ids_for(10), std::vector<Label>(10, Label::Normal), EncoderChoice::Er,
                                      ProjectionOptions{}, dir / "x.csv", dir / "x.png"),
                    ConfigError);
    fs::remove_all(dir);
}

}
