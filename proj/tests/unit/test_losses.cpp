#include <doctest.h>

#include <cmath>
#include <random>

#include "dbigan/error.hpp"
#include "dbigan/losses.hpp"
#include "support/oracles.hpp"

using namespace dbigan;
using autograd::Var;

namespace {

// Logit whose sigmoid is p.
double logit(double p) { return std::log(p / (1.0 - p)); }

Var logits_of(std::size_t n, double p) { return Var::constant(Tensor(Shape{n, 1}, logit(p))); }

Var tensor(Shape s, std::vector<double> v) { return Var::constant(Tensor(std::move(s), std::move(v))); }

const double kLn2 = std::log(2.0);
const double kLogEps = std::log(kProbEpsilon);

} // namespace

TEST_SUITE("losses") {

TEST_CASE("adversarial D loss: perfect discriminator gives about zero") {
    std::vector<Var> fakes{logits_of(4, kProbEpsilon), logits_of(4, kProbEpsilon)};
    const double v = adversarial_loss_d(logits_of(4, 1.0 - kProbEpsilon), fakes).item();
    CHECK(v >= 0.0);
    CHECK(v < 1e-5);
}

TEST_CASE("adversarial D loss with every probability at 0.5 is 4 ln 2") {
    std::vector<Var> fakes{logits_of(8, 0.5), logits_of(8, 0.5)};
    CHECK(adversarial_loss_d(logits_of(8, 0.5), fakes).item() == doctest::Approx(4.0 * kLn2).epsilon(1e-12));
}

TEST_CASE("adversarial D loss with D(real) = eps is dominated by -log eps") {
    // The real term appears once per fake batch; fakes at eps contribute nothing.
    std::vector<Var> one{logits_of(2, kProbEpsilon)};
    const double v = adversarial_loss_d(logits_of(2, kProbEpsilon), one).item();
    CHECK(v == doctest::Approx(-kLogEps).epsilon(1e-6));
    CHECK(v == doctest::Approx(16.118).epsilon(1e-4));
}

TEST_CASE("adversarial G loss: fooled discriminator gives about zero, 0.5 gives 3 ln 2") {
    std::vector<Var> fooled{logits_of(3, 1.0 - kProbEpsilon), logits_of(3, 1.0 - kProbEpsilon)};
    CHECK(adversarial_loss_g(fooled, logits_of(3, 1.0 - kProbEpsilon)).item() < 1e-5);
    std::vector<Var> half{logits_of(3, 0.5), logits_of(3, 0.5)};
    CHECK(adversarial_loss_g(half, logits_of(3, 0.5)).item() == doctest::Approx(3.0 * kLn2).epsilon(1e-12));
}

TEST_CASE("adversarial G loss decreases as any D(fake) increases") {
    double previous = 1e9;
    for (double p : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        std::vector<Var> fakes{logits_of(2, p), logits_of(2, 0.5)};
        const double v = adversarial_loss_g(fakes, logits_of(2, 0.5)).item();
        CHECK(v < previous);
        previous = v;
    }
}

TEST_CASE("cycle loss: zero on exact reconstructions") {
    const Var x = tensor({2, 2}, {0.1, -0.3, 0.9, -1.0});
    CycleTerms t{x, x, x, x, x};
    CHECK(cycle_consistency_loss(t).item() == 0.0);
}

TEST_CASE("cycle loss: constant generator output mu gives mean |mu - x| per term") {
    const Var x = tensor({2, 2}, {0.5, -0.5, 1.0, 0.0});
    const Var mu = tensor({2, 2}, {0.25, 0.25, 0.25, 0.25});
    // Oracle: (0.25 + 0.75 + 0.75 + 0.25) / 4 = 0.5 for each of the first two terms.
    CycleTerms t{x, mu, mu, mu, mu};
    CHECK(cycle_consistency_loss(t).item() == doctest::Approx(1.0));
    // Without the c_y branch only the second term and the zero third term remain.
    t.via_random = Var();
    CHECK(cycle_consistency_loss(t).item() == doctest::Approx(0.5));
}

TEST_CASE("cycle loss term 3 is unchanged when both operands flip sign") {
    const Var x = tensor({1, 3}, {0.0, 0.0, 0.0});
    const Var g = tensor({1, 3}, {0.2, -0.4, 0.6});
    const Var r = tensor({1, 3}, {0.1, 0.1, -0.1});
    const Var gn = tensor({1, 3}, {-0.2, 0.4, -0.6});
    const Var rn = tensor({1, 3}, {-0.1, -0.1, 0.1});
    CycleTerms a{x, Var(), x, g, r};
    CycleTerms b{x, Var(), x, gn, rn};
    CHECK(cycle_consistency_loss(a).item() == cycle_consistency_loss(b).item());
}

TEST_CASE("preserved-information loss") {
    const Var ones = tensor({2, 2}, {1, 1, 1, 1});
    const Var zeros = tensor({2, 2}, {0, 0, 0, 0});
    CHECK(preserved_information_loss(ones, zeros, TargetKind::Random).item() == 0.0);
    CHECK(preserved_information_loss(ones, ones, TargetKind::Real).item() == 0.0);
    CHECK(preserved_information_loss(ones, zeros, TargetKind::Real).item() == 1.0);
    CHECK_THROWS_AS(preserved_information_loss(ones, tensor({1, 3}, {0, 0, 0}), TargetKind::Real), ConfigError);
}

TEST_CASE("latent-space loss") {
    const Var a = tensor({1, 3}, {0, 0, 0});
    const Var b = tensor({1, 3}, {1, -1, 2});
    const Var m = tensor({1, 3}, {0.5, 0.5, 0.5});
    CHECK(latent_space_loss(a, a).item() == 0.0);
    CHECK(latent_space_loss(a, b).item() == doctest::Approx(4.0 / 3.0));
    CHECK(latent_space_loss(a, b).item() <= latent_space_loss(a, m).item() + latent_space_loss(m, b).item());
}

TEST_CASE("encoder E_r loss") {
    const Var x = tensor({1, 2}, {1, 1});
    CHECK(encoder_r_loss(logits_of(1, kProbEpsilon), x, x).item() == doctest::Approx(kLogEps).epsilon(1e-6));
    CHECK(encoder_r_loss(logits_of(1, kProbEpsilon), x, x).item() == doctest::Approx(-16.118).epsilon(1e-4));
    const Var zeros = tensor({1, 2}, {0, 0});
    CHECK(encoder_r_loss(logits_of(1, 0.5), x, zeros).item() == doctest::Approx(-kLn2 + 1.0));
    CHECK(encoder_r_loss(logits_of(1, 0.5), x, zeros).item() == doctest::Approx(0.307).epsilon(1e-3));
}

TEST_CASE("total losses") {
    LossWeights w;
    CHECK(w.lambda_cyc == 0.1);
    LossComponents c;
    c.adv_d = 0.7;
    c.adv_g = 1.0;
    c.cyc = 10.0;
    c.pil = 0.5;
    c.latent_z = 0.25;
    const LossBundle b = total_losses(c, w);
    CHECK(b.total_g == doctest::Approx(2.5));
    CHECK(b.total_d == 0.7);
    CHECK(b.enc_g == 0.25);
    w.lambda_cyc = 0.0;
    CHECK(total_losses(c, w).total_g == doctest::Approx(1.5));
}

TEST_CASE("loss bundle names and values line up") {
    LossBundle b;
    b.cyc = 3.0;
    const auto names = loss_names();
    const auto values = loss_values(b);
    REQUIRE(names.size() == values.size());
    CHECK(values[std::find(names.begin(), names.end(), "cyc") - names.begin()] == 3.0);
}

TEST_CASE("scheme names parse in either case") {
    CHECK(parse_scheme("COMPLETE") == Scheme::Complete);
    CHECK(parse_scheme("simple") == Scheme::Simple);
    CHECK(parse_scheme("EGBAD_BASELINE") == Scheme::EgbadBaseline);
    CHECK_THROWS_AS(parse_scheme("other"), ConfigError);
}

TEST_CASE("simple scheme replaces the random targets with c_x") {
    std::mt19937_64 rng(1);
    const Tensor x(Shape{3, 4, 4, 1}, 0.0);
    const LossDraw d = draw_loss_inputs(x, 3, 2, 0.0, Scheme::Simple, rng);
    CHECK(d.c_y_g.data == d.c_x.data);
    CHECK(d.x_noisy == d.x);
    const LossDraw c = draw_loss_inputs(x, 3, 2, 0.05, Scheme::Complete, rng);
    CHECK(c.c_y_g.kind == TargetKind::Random);
    CHECK_FALSE(c.x_noisy == c.x);
    CHECK_FALSE(c.z_d == c.z_g);
}

TEST_CASE("each objective matches central finite differences on a tiny model") {
    ModelState s = testing::tiny_model(21);
    std::mt19937_64 rng(4);
    const Tensor x = testing::random_images(3, s.image(), rng);
    const LossDraw draw = draw_loss_inputs(x, s.d_z(), s.d_c(), 0.05, Scheme::Complete, rng);
    for (const auto& c : testing::objective_cases(draw, Scheme::Complete, LossWeights{})) {
        CAPTURE(c.name);
        const testing::GradCheck r = testing::check_objective(s, c);
        CHECK(r.analytic_norm > 0.0);
        CHECK(r.relative_error < 1e-3);
    }
}

TEST_CASE("objectives only collect gradients for the networks they update") {
    ModelState s = testing::tiny_model(22);
    std::mt19937_64 rng(5);
    const Tensor x = testing::random_images(2, s.image(), rng);
    const LossDraw draw = draw_loss_inputs(x, s.d_z(), s.d_c(), 0.05, Scheme::Complete, rng);
    for (const auto& c : testing::objective_cases(draw, Scheme::Complete, LossWeights{})) {
        CAPTURE(c.name);
        Gradients all(s, {NetId::G, NetId::D, NetId::Er, NetId::Eg});
        LossBundle b;
        autograd::backward(c.objective(s, &all, b));
        for (NetId id : kAllNets) {
            if (id == c.net) CHECK(all.squared_norm(id) > 0.0);
            else CHECK(all.squared_norm(id) == 0.0);
        }
    }
}

TEST_CASE("discriminator objective at D = 0.5 equals 4 ln 2 through the networks") {
    ModelState s = testing::tiny_model(23);
    s.zero_parameters();
    std::mt19937_64 rng(6);
    const Tensor x = testing::random_images(2, s.image(), rng);
    const LossDraw draw = draw_loss_inputs(x, s.d_z(), s.d_c(), 0.05, Scheme::Complete, rng);
    LossBundle b;
    CHECK(discriminator_objective(s, nullptr, draw, b).item() == doctest::Approx(4.0 * kLn2).epsilon(1e-12));
    generator_objective(s, nullptr, draw, Scheme::Complete, LossWeights{}, b);
    CHECK(b.adv_g == doctest::Approx(3.0 * kLn2).epsilon(1e-12));
}

}
