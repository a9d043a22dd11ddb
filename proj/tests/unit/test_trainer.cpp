#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include "dbigan/checkpoint.hpp"
#include "dbigan/error.hpp"
#include "dbigan/trainer.hpp"
#include "support/oracles.hpp"

using namespace dbigan;
namespace fs = std::filesystem;

namespace {

Dataset tiny_data(std::size_t n = 24) {
    SyntheticSpec spec;
    spec.shape = ImageShape{8, 8, 1};
    spec.min_extent = 3;
    spec.max_extent = 5;
    spec.stroke = 1;
    spec.train_normal = n;
    spec.test_normal = 2;
    spec.test_abnormal = 2;
    return make_synthetic(spec).train;
}

TrainConfig tiny_config(Scheme scheme = Scheme::Complete) {
    TrainConfig c;
    c.scheme = scheme;
    c.epochs = 2;
    c.batch_size = 8;
    c.d_z = 4;
    c.d_c = 2;
    c.seed = 3;
    c.architecture.base_channels = 4;
    c.architecture.dense_units = 16;
    c.architecture.latent_units = 8;
    return c;
}

std::map<NetId, std::vector<Tensor>> snapshot(const ModelState& s) {
    std::map<NetId, std::vector<Tensor>> out;
    for (NetId id : kAllNets) {
        if (!s.has(id)) continue;
        for (const auto& p : s.net(id).parameters()) out[id].push_back(p.value);
    }
    return out;
}

std::set<NetId> changed(const std::map<NetId, std::vector<Tensor>>& a, const std::map<NetId, std::vector<Tensor>>& b) {
    std::set<NetId> out;
    for (const auto& [id, params] : a)
        if (params != b.at(id)) out.insert(id);
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    return p;
}

double mean_abs(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / a.size();
}

} // namespace

TEST_SUITE("trainer") {

TEST_CASE("two steps from the same seed and data give identical parameters") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config();
    ModelState a = initial_state(c, data.shape);
    ModelState b = initial_state(c, data.shape);
    const Tensor batch = batch_for_step(data, c, 0);
    std::mt19937_64 ra = step_rng(c.seed, 0), rb = step_rng(c.seed, 0);
    const MetricsRow ma = train_step(a, batch, c, ra);
    const MetricsRow mb = train_step(b, batch, c, rb);
    CHECK(bitwise_equal(a, b));
    CHECK(loss_values(ma.losses) == loss_values(mb.losses));
    CHECK(a.step == 1);
}

TEST_CASE("each sub-step updates only its own networks") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config();
    ModelState s = initial_state(c, data.shape);
    auto before = snapshot(s);
    std::vector<std::pair<std::string, std::set<NetId>>> seen;
    auto observer = [&](std::string_view phase, const ModelState& st) {
        auto now = snapshot(st);
        seen.emplace_back(std::string(phase), changed(before, now));
        before = std::move(now);
    };
    std::mt19937_64 rng = step_rng(c.seed, 0);
    train_step(s, batch_for_step(data, c, 0), c, rng, observer);
    REQUIRE(seen.size() == 3);
    CHECK(seen[0] == std::pair<std::string, std::set<NetId>>{"D", {NetId::D}});
    CHECK(seen[1] == std::pair<std::string, std::set<NetId>>{"E", {NetId::Er, NetId::Eg}});
    CHECK(seen[2] == std::pair<std::string, std::set<NetId>>{"G", {NetId::G}});
}

TEST_CASE("zero learning rates leave parameters unchanged but losses are reported") {
    const Dataset data = tiny_data();
    TrainConfig c = tiny_config();
    c.lr_d = c.lr_g = c.lr_er = c.lr_eg = 0.0;
    ModelState s = initial_state(c, data.shape);
    const auto before = snapshot(s);
    std::mt19937_64 rng = step_rng(c.seed, 0);
    const MetricsRow row = train_step(s, batch_for_step(data, c, 0), c, rng);
    CHECK(changed(before, snapshot(s)).empty());
    CHECK(row.losses.adv_d > 0.0);
    CHECK(row.losses.cyc > 0.0);
    CHECK(row.losses.pil > 0.0);
}

TEST_CASE("simple scheme: cyc omits the c_y transformation term") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config(Scheme::Simple);
    ModelState s = initial_state(c, data.shape);
    const Tensor x = batch_for_step(data, c, 0);
    std::mt19937_64 rng = step_rng(c.seed, 0);
    std::mt19937_64 replay = rng;
    const LossDraw draw = draw_loss_inputs(x, c.d_z, c.d_c, c.noise_std, Scheme::Simple, replay);

    std::optional<ModelState> before_g;
    auto observer = [&](std::string_view phase, const ModelState& st) {
        if (phase == "E") before_g = st;
    };
    const MetricsRow row = train_step(s, x, c, rng, observer);
    REQUIRE(before_g);
    const ModelState& st = *before_g;

    // Two-term oracle from plain forwards.
    const TargetVariable cx = real_target(x.batch(), c.d_c);
    const Tensor recon = generator_forward(st, encoder_r_forward(st, x, cx), cx);
    const Tensor via_real = generator_forward(st, encoder_r_forward(st, recon, cx), cx);
    const Tensor generated = generator_forward(st, draw.z_g, draw.c_y_g);
    const Tensor regenerated = generator_forward(st, encoder_g_forward(st, generated), draw.c_y_g);
    const double expected = mean_abs(via_real, x) + mean_abs(regenerated, generated);
    CHECK(row.losses.cyc == doctest::Approx(expected).epsilon(1e-12));
    CHECK(row.losses.pil == doctest::Approx(mean_abs(recon, x)).epsilon(1e-12));
}

TEST_CASE("zero noise feeds the raw batch to the discriminator") {
    const Tensor x(Shape{2, 4, 4, 1}, 0.25);
    std::mt19937_64 rng(0);
    CHECK(draw_loss_inputs(x, 3, 2, 0.0, Scheme::Complete, rng).x_noisy == x);
}

TEST_CASE("non-finite losses abort naming the term") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config();
    ModelState s = initial_state(c, data.shape);
    for (auto& v : s.net(NetId::D).parameters().back().value.values()) v = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng = step_rng(c.seed, 0);
    try {
        train_step(s, batch_for_step(data, c, 0), c, rng);
        FAIL("expected a numeric error");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
}

TEST_CASE("zero epochs return the initial state and no metrics") {
    const Dataset data = tiny_data();
    TrainConfig c = tiny_config();
    c.epochs = 0;
    const TrainResult r = train(data, c);
    CHECK(r.metrics.empty());
    CHECK(r.checkpoints.empty());
    CHECK(bitwise_equal(r.state, initial_state(c, data.shape)));
}

TEST_CASE("an empty dataset is an error") {
    Dataset empty = tiny_data().subset({});
    CHECK_THROWS_AS(train(empty, tiny_config()), ConfigError);
}

TEST_CASE("baseline training never touches E_g and reports zero pil and cyc") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config(Scheme::EgbadBaseline);
    const TrainResult r = train(data, c);
    CHECK_FALSE(r.state.has(NetId::Eg));
    CHECK(r.state.d_c() == 0);
    REQUIRE_FALSE(r.metrics.empty());
    for (const auto& m : r.metrics) {
        CHECK(m.losses.pil == 0.0);
        CHECK(m.losses.cyc == 0.0);
        CHECK(m.losses.latent_z == 0.0);
    }
    CHECK(r.state.parameter_count() < initial_state(tiny_config(), data.shape).parameter_count());
}

TEST_CASE("baseline step: deterministic, D loss 2 ln 2 at D = 0.5, joint G/E update") {
    const Dataset data = tiny_data();
    const TrainConfig c = tiny_config(Scheme::EgbadBaseline);
    ModelState a = initial_state(c, data.shape);
    ModelState b = initial_state(c, data.shape);
    const Tensor x = batch_for_step(data, c, 0);
    std::mt19937_64 ra = step_rng(1, 0), rb = step_rng(1, 0);
    std::vector<std::pair<std::string, std::set<NetId>>> seen;
    auto before = snapshot(a);
    egbad_baseline_step(a, x, c, ra, [&](std::string_view phase, const ModelState& st) {
        auto now = snapshot(st);
        seen.emplace_back(std::string(phase), changed(before, now));
        before = std::move(now);
    });
    egbad_baseline_step(b, x, c, rb);
    CHECK(bitwise_equal(a, b));
    REQUIRE(seen.size() == 2);
    CHECK(seen[0].second == std::set<NetId>{NetId::D});
    CHECK(seen[1].second == std::set<NetId>{NetId::G, NetId::Er});

    ModelState z = initial_state(c, data.shape);
    z.zero_parameters();
    std::mt19937_64 rz(0);
    const LossDraw draw = draw_loss_inputs(x, c.d_z, 0, c.noise_std, Scheme::EgbadBaseline, rz);
    LossBundle bundle;
    CHECK(egbad_discriminator_objective(z, nullptr, draw, bundle).item() ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("metrics CSV and checkpoints are written on schedule") {
    const Dataset data = tiny_data();
    TrainConfig c = tiny_config();
    c.checkpoint_every = 4;
    c.epochs = 3; // 3 steps per epoch, 9 steps
    const fs::path dir = fresh_dir("dbigan_trainer_out");
    TrainOptions o;
    o.out_dir = dir;
    const TrainResult r = train(data, c, o);
    CHECK(r.metrics.size() == 9);
    std::vector<std::string> names;
    for (const auto& p : r.checkpoints) names.push_back(p.filename().string());
    CHECK(names == std::vector<std::string>{"ckpt_00000004", "ckpt_00000008", "ckpt_00000009"});

    std::ifstream in(dir / "metrics.csv");
    std::string header, line;
    std::getline(in, header);
    CHECK(header == "step,epoch,adv_d,adv_g,cyc,pil,latent_z,enc_r,enc_g,total_d,total_g,seconds");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 9);
    const auto loaded = load_checkpoint(dir / "ckpt_00000009");
    CHECK(bitwise_equal(loaded.state, r.state));
    CHECK(train_config_from_json(loaded.extra["train_config"]).seed == c.seed);
    fs::remove_all(dir);
}

TEST_CASE("a failed checkpoint write reports the last good checkpoint") {
    const Dataset data = tiny_data();
    TrainConfig c = tiny_config();
    c.checkpoint_every = 3;
    const fs::path dir = fresh_dir("dbigan_trainer_fail");
    fs::create_directories(dir / checkpoint_filename(6)); // a directory where the file should go
    TrainOptions o;
    o.out_dir = dir;
    try {
        train(data, c, o);
        FAIL("expected an IoError");
    } catch (const IoError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("step 6") != std::string::npos);
        CHECK(msg.find("ckpt_00000003") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("resuming from a checkpoint matches uninterrupted training bit for bit") {
    const Dataset data = tiny_data();
    TrainConfig c = tiny_config();
    c.epochs = 2;
    const TrainResult full = train(data, c);

    const fs::path dir = fresh_dir("dbigan_trainer_resume");
    TrainOptions first;
    first.out_dir = dir;
    first.max_steps = 3;
    const TrainResult half = train(data, c, first);
    REQUIRE_FALSE(half.checkpoints.empty());
    LoadedCheckpoint ck = load_checkpoint(half.checkpoints.back());
    CHECK(ck.state.step == 3);
    const TrainResult rest = resume(std::move(ck.state), data, c);
    CHECK(rest.state.step == full.state.step);
    CHECK(bitwise_equal(rest.state, full.state));
    fs::remove_all(dir);
}

TEST_CASE("config JSON round-trips and rejects unknown or invalid fields") {
    TrainConfig c = tiny_config(Scheme::Simple);
    c.init = InitScheme::FanIn;
    c.lambda_cyc = 0.5;
    const TrainConfig back = train_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK_THROWS_AS(train_config_from_json({{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"batch_size", 1}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"lr_g", -1.0}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"epochs", "ten"}}), ConfigError);
    CHECK_THROWS_AS(train_config_from_json({{"init", "orthogonal"}}), ConfigError);
    try {
        train_config_from_json({{"beta1", 1.5}});
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.beta1") != std::string::npos);
    }
}

TEST_CASE("batches cover each epoch as a permutation") {
    const Dataset data = tiny_data(24);
    TrainConfig c = tiny_config();
    CHECK(steps_per_epoch(24, 8) == 3);
    CHECK(steps_per_epoch(25, 8) == 3);
    CHECK(steps_per_epoch(5, 8) == 1);
    CHECK(steps_per_epoch(0, 8) == 0);
    // Rows are identified by their pixel sums.
    std::multiset<double> sums_batches, sums_data;
    for (std::uint64_t step = 0; step < 3; ++step) {
        const Tensor b = batch_for_step(data, c, step);
        for (std::size_t r = 0; r < b.batch(); ++r) {
            double s = 0;
            for (double v : b.slice_batch(r, 1).values()) s += v;
            sums_batches.insert(s);
        }
    }
    for (std::size_t r = 0; r < data.size(); ++r) {
        double s = 0;
        for (double v : data.images.slice_batch(r, 1).values()) s += v;
        sums_data.insert(s);
    }
    CHECK(sums_batches == sums_data);
}

TEST_CASE("training on synthetic data for 30 epochs lowers the cycle loss") {
    SyntheticSpec spec;
    spec.train_normal = 128;
    const Dataset data = make_synthetic(spec).train;
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = 16;
    c.d_z = 8;
    c.seed = 1;
    c.init = InitScheme::FanIn;
    c.architecture.base_channels = 8;
    c.architecture.dense_units = 64;
    c.architecture.latent_units = 32;
    const TrainResult r = train(data, c);
    const std::size_t spe = steps_per_epoch(data.size(), c.batch_size);
    REQUIRE(r.metrics.size() == 30 * spe);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < spe; ++i) {
        first += r.metrics[i].losses.cyc;
        last += r.metrics[r.metrics.size() - spe + i].losses.cyc;
    }
    CHECK(last < first);
    for (const auto& m : r.metrics)
        for (double v : loss_values(m.losses)) CHECK(std::isfinite(v));
}

}
