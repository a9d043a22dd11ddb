#include "dbigan/losses.hpp"

#include "dbigan/error.hpp"

namespace dbigan {

using autograd::Var;

std::string to_string(Scheme s) {
    switch (s) {
    case Scheme::Complete: return "complete";
    case Scheme::Simple: return "simple";
    case Scheme::EgbadBaseline: return "egbad_baseline";
    }
    return "?";
}

Scheme parse_scheme(const std::string& s) {
    if (s == "complete" || s == "COMPLETE") return Scheme::Complete;
    if (s == "simple" || s == "SIMPLE") return Scheme::Simple;
    if (s == "egbad_baseline" || s == "EGBAD_BASELINE" || s == "egbad") return Scheme::EgbadBaseline;
    throw ConfigError("unknown training scheme '" + s + "'");
}

LossBundle total_losses(const LossComponents& c, const LossWeights& w) {
    LossBundle b;
    b.adv_d = c.adv_d;
    b.adv_g = c.adv_g;
    b.cyc = c.cyc;
    b.pil = c.pil;
    b.latent_z = c.latent_z;
    b.enc_r = c.enc_r;
    b.enc_g = c.latent_z;
    b.total_d = c.adv_d;
    b.total_g = c.adv_g + w.lambda_cyc * c.cyc + c.pil;
    return b;
}

const std::vector<std::string>& loss_names() {
    static const std::vector<std::string> names{"adv_d", "adv_g", "cyc",   "pil",    "latent_z",
                                                "enc_r", "enc_g", "total_d", "total_g"};
    return names;
}

std::vector<double> loss_values(const LossBundle& b) {
    return {b.adv_d, b.adv_g, b.cyc, b.pil, b.latent_z, b.enc_r, b.enc_g, b.total_d, b.total_g};
}

Var adversarial_loss_d(const Var& real_logits, std::span<const Var> fake_logits) {
    if (fake_logits.empty()) throw ConfigError("adversarial_loss_d needs at least one fake batch");
    std::vector<Var> terms;
    const Var real_term = autograd::mean_log_prob(real_logits, kProbEpsilon);
    for (const Var& f : fake_logits) {
        terms.push_back(autograd::mean_log_one_minus_prob(f, kProbEpsilon));
        terms.push_back(real_term);
    }
    return autograd::scale(autograd::sum(terms), -1.0);
}

Var adversarial_loss_g(std::span<const Var> fake_logits, const Var& regenerated_logits) {
    std::vector<Var> terms;
    for (const Var& f : fake_logits) terms.push_back(autograd::mean_log_prob(f, kProbEpsilon));
    if (regenerated_logits.defined()) terms.push_back(autograd::mean_log_prob(regenerated_logits, kProbEpsilon));
    if (terms.empty()) throw ConfigError("adversarial_loss_g needs at least one term");
    return autograd::scale(autograd::sum(terms), -1.0);
}

Var cycle_consistency_loss(const CycleTerms& t) {
    std::vector<Var> terms;
    if (t.via_random.defined()) terms.push_back(autograd::mean_abs_diff(t.via_random, t.x));
    terms.push_back(autograd::mean_abs_diff(t.via_real, t.x));
    terms.push_back(autograd::mean_abs_diff(t.regenerated, t.generated));
    return autograd::sum(terms);
}

Var preserved_information_loss(const Var& x, const Var& reconstruction, TargetKind kind) {
    if (x.value().size() != reconstruction.value().size()) {
        throw ConfigError("preserved_information_loss: shape mismatch");
    }
    if (kind == TargetKind::Random) return Var::constant(Tensor(Shape{1}, 0.0));
    return autograd::mean_abs_diff(reconstruction, x);
}

Var latent_space_loss(const Var& code, const Var& reconstructed_code) {
    return autograd::mean_abs_diff(reconstructed_code, code);
}

Var encoder_r_loss(const Var& real_logits, const Var& x, const Var& reconstruction) {
    return autograd::add(autograd::mean_log_prob(real_logits, kProbEpsilon),
                         autograd::mean_abs_diff(reconstruction, x));
}

LossDraw draw_loss_inputs(const Tensor& x, std::size_t d_z, std::size_t d_c, double noise_std, Scheme scheme,
                          std::mt19937_64& rng) {
    LossDraw d;
    const std::size_t n = x.batch();
    d.x = x;
    d.x_noisy = x;
    std::normal_distribution<double> normal(0.0, 1.0);
    if (noise_std > 0.0)
        for (auto& v : d.x_noisy.values()) v += noise_std * normal(rng);
    d.z_d = Tensor(Shape{n, d_z});
    for (auto& v : d.z_d.values()) v = normal(rng);
    d.z_g = Tensor(Shape{n, d_z});
    for (auto& v : d.z_g.values()) v = normal(rng);
    d.c_x = real_target(n, d_c);
    if (scheme == Scheme::Complete) {
        d.c_y_d = random_target(n, d_c, rng);
        d.c_y_g = random_target(n, d_c, rng);
    } else {
        d.c_y_d = d.c_x;
        d.c_y_g = d.c_x;
    }
    return d;
}

namespace {

Var constant(const Tensor& t) { return Var::constant(t); }

Var target_for_eg(const ModelState& s, const TargetVariable& c) {
    return s.net(NetId::Eg).takes_target() ? constant(c.data) : Var();
}

} // namespace

Var discriminator_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out) {
    const Var cx = constant(d.c_x.data);
    const Var code_real = encoder_r_graph(s, nullptr, constant(d.x), cx);
    const Var real_logits = discriminator_graph(s, grads, constant(d.x_noisy), code_real).logits;
    const Var z = constant(d.z_d);
    std::vector<Var> fakes;
    for (const TargetVariable* c : {&d.c_y_d, &d.c_x}) {
        const Var gen = generator_graph(s, nullptr, z, constant(c->data));
        fakes.push_back(discriminator_graph(s, grads, gen, z).logits);
    }
    Var loss = adversarial_loss_d(real_logits, fakes);
    out.adv_d = loss.item();
    out.total_d = out.adv_d;
    return loss;
}

Var encoder_r_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out) {
    const Var x = constant(d.x);
    const Var cx = constant(d.c_x.data);
    const Var code = encoder_r_graph(s, grads, x, cx);
    const Var logits = discriminator_graph(s, nullptr, x, code).logits;
    const Var recon = generator_graph(s, nullptr, code, cx);
    Var loss = encoder_r_loss(logits, x, recon);
    out.enc_r = loss.item();
    return loss;
}

Var encoder_g_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out) {
    const Var cx = constant(d.c_x.data);
    const Var code = encoder_r_graph(s, nullptr, constant(d.x), cx);
    const Var recon = generator_graph(s, nullptr, code, cx);
    const Var code_rec = encoder_g_graph(s, grads, recon, target_for_eg(s, d.c_x));
    Var loss = latent_space_loss(code, code_rec);
    out.latent_z = loss.item();
    out.enc_g = out.latent_z;
    return loss;
}

Var generator_objective(const ModelState& s, Gradients* grads, const LossDraw& d, Scheme scheme,
                        const LossWeights& w, LossBundle& out) {
    const Var x = constant(d.x);
    const Var cx = constant(d.c_x.data);
    const Var cy = constant(d.c_y_g.data);
    const Var z = constant(d.z_g);

    // Adversarial terms on (G(z, c), z) for c in {c_y, c_x}.
    const Var generated = generator_graph(s, grads, z, cy);
    const Var generated_real = generator_graph(s, grads, z, cx);
    std::vector<Var> fakes{discriminator_graph(s, nullptr, generated, z).logits,
                           discriminator_graph(s, nullptr, generated_real, z).logits};

    // Generated sample pushed back through E_g and regenerated with c_y.
    const Var code_g = encoder_g_graph(s, nullptr, generated, target_for_eg(s, d.c_y_g));
    const Var regenerated = generator_graph(s, grads, code_g, cy);
    const Var regen_logits = discriminator_graph(s, nullptr, regenerated, code_g).logits;
    Var adv = adversarial_loss_g(fakes, regen_logits);

    // Reconstructions of the real batch through the frozen E_r.
    const Var code_real = encoder_r_graph(s, nullptr, x, cx);
    const Var recon = generator_graph(s, grads, code_real, cx);

    CycleTerms cyc_terms;
    cyc_terms.x = x;
    cyc_terms.via_real = generator_graph(s, grads, encoder_r_graph(s, nullptr, recon, cx), cx);
    cyc_terms.generated = generated;
    cyc_terms.regenerated = regenerated;
    if (scheme == Scheme::Complete) {
        // Normal-abnormal transformation: x -> x'_y = G(E_r(x), c_y) -> G(E_r(x'_y), c_x).
        const Var shifted = generator_graph(s, grads, code_real, cy);
        cyc_terms.via_random = generator_graph(s, grads, encoder_r_graph(s, nullptr, shifted, cy), cx);
    }
    Var cyc = cycle_consistency_loss(cyc_terms);
    Var pil = preserved_information_loss(x, recon, d.c_x.kind);

    Var total = autograd::add(autograd::add(adv, autograd::scale(cyc, w.lambda_cyc)), pil);
    const LossBundle parts = total_losses({0.0, adv.item(), cyc.item(), pil.item(), 0.0, 0.0}, w);
    out.adv_g = parts.adv_g;
    out.cyc = parts.cyc;
    out.pil = parts.pil;
    out.total_g = parts.total_g;
    return total;
}

Var egbad_discriminator_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out) {
    const Var code = encoder_r_graph(s, nullptr, constant(d.x), Var());
    const Var real_logits = discriminator_graph(s, grads, constant(d.x_noisy), code).logits;
    const Var z = constant(d.z_d);
    const Var gen = generator_graph(s, nullptr, z, Var());
    const Var fake_logits = discriminator_graph(s, grads, gen, z).logits;
    std::vector<Var> fakes{fake_logits};
    Var loss = adversarial_loss_d(real_logits, fakes);
    out.adv_d = loss.item();
    out.total_d = out.adv_d;
    return loss;
}

Var egbad_generator_encoder_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out) {
    const Var z = constant(d.z_g);
    const Var gen = generator_graph(s, grads, z, Var());
    std::vector<Var> fakes{discriminator_graph(s, nullptr, gen, z).logits};
    Var adv = adversarial_loss_g(fakes, Var());

    const Var x = constant(d.x);
    const Var code = encoder_r_graph(s, grads, x, Var());
    Var enc = autograd::mean_log_prob(discriminator_graph(s, nullptr, x, code).logits, kProbEpsilon);

    out.adv_g = adv.item();
    out.enc_r = enc.item();
    out.total_g = out.adv_g;
    return autograd::add(adv, enc);
}

} // namespace dbigan
