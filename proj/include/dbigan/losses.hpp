#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "dbigan/autograd.hpp"
#include "dbigan/nets.hpp"

namespace dbigan {

// Training schemes: the full four-step mechanism, the simple ablation
// (no random target for G, no normal-abnormal transformation), and the
// single-encoder BiGAN baseline.
enum class Scheme { Complete, Simple, EgbadBaseline };

std::string to_string(Scheme s);
Scheme parse_scheme(const std::string& s);

struct LossWeights {
    double lambda_cyc = 0.1;
};

// Named loss scalars for one training step. Every loss is in minimization
// form; L1 terms are per-element means.
struct LossBundle {
    double adv_d = 0.0;
    double adv_g = 0.0;
    double cyc = 0.0;
    double pil = 0.0;
    double latent_z = 0.0;
    double enc_r = 0.0;
    double enc_g = 0.0;
    double total_d = 0.0;
    double total_g = 0.0;
};

struct LossComponents {
    double adv_d = 0.0;
    double adv_g = 0.0;
    double cyc = 0.0;
    double pil = 0.0;
    double latent_z = 0.0;
    double enc_r = 0.0;
};

// total_d = adv_d, total_g = adv_g + lambda_cyc * cyc + pil, enc_g = latent_z.
LossBundle total_losses(const LossComponents& c, const LossWeights& w);

// Names of the bundle entries in CSV column order, and their values.
const std::vector<std::string>& loss_names();
std::vector<double> loss_values(const LossBundle& b);

// --- individual terms ---------------------------------------------------------
// Discriminator inputs are logits; probabilities are sigmoid(logit) clamped
// to [kProbEpsilon, 1 - kProbEpsilon].

// -sum_c ( E[log(1 - D(G(z, c), z))] + E[log D(x, E_r(x))] ), one term per fake.
autograd::Var adversarial_loss_d(const autograd::Var& real_logits, std::span<const autograd::Var> fake_logits);

// Non-saturating generator form: -sum_c E[log D(G(z, c), z)] - E[log D(regen pair)].
// `regenerated_logits` may be undefined (baseline).
autograd::Var adversarial_loss_g(std::span<const autograd::Var> fake_logits,
                                 const autograd::Var& regenerated_logits);

struct CycleTerms {
    autograd::Var x;
    autograd::Var via_random;  // G(E_r(G(E_r(x), c_y)), c_x); undefined when the term is omitted
    autograd::Var via_real;    // G(E_r(G(E_r(x), c_x)), c_x)
    autograd::Var generated;   // G(z, c_y)
    autograd::Var regenerated; // G(E_g(G(z, c_y)), c_y)
};
autograd::Var cycle_consistency_loss(const CycleTerms& terms);

// Zero for random targets, E|G(E_r(x), c) - x| for the real target.
autograd::Var preserved_information_loss(const autograd::Var& x, const autograd::Var& reconstruction,
                                         TargetKind kind);

autograd::Var latent_space_loss(const autograd::Var& code, const autograd::Var& reconstructed_code);

// E[log D(x, E_r(x))] + E|G(E_r(x), c_x) - x|.
autograd::Var encoder_r_loss(const autograd::Var& real_logits, const autograd::Var& x,
                             const autograd::Var& reconstruction);

// --- objectives wired through the networks -------------------------------------

// One Monte-Carlo draw for a training step.
struct LossDraw {
    Tensor x;       // clean real batch
    Tensor x_noisy; // x + eta * N(0, I), the image half of D's real pair
    Tensor z_d;     // latent draw for the discriminator update
    Tensor z_g;     // fresh latent draw for the generator update
    TargetVariable c_x;
    TargetVariable c_y_d;
    TargetVariable c_y_g;
};

// In the simple scheme the random targets are replaced by c_x.
LossDraw draw_loss_inputs(const Tensor& x, std::size_t d_z, std::size_t d_c, double noise_std, Scheme scheme,
                          std::mt19937_64& rng);

// Each objective returns the scalar to minimize, fills its bundle fields and
// accumulates gradients only for the networks it updates (D; E_r; E_g; G),
// whatever else `grads` tracks.
autograd::Var discriminator_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out);
autograd::Var encoder_r_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out);
autograd::Var encoder_g_objective(const ModelState& s, Gradients* grads, const LossDraw& d, LossBundle& out);
autograd::Var generator_objective(const ModelState& s, Gradients* grads, const LossDraw& d, Scheme scheme,
                                  const LossWeights& w, LossBundle& out);

// Single-encoder BiGAN: D maximizes log D(x, E(x)) + log(1 - D(G(z), z));
// G and E are updated jointly against it.
autograd::Var egbad_discriminator_objective(const ModelState& s, Gradients* grads, const LossDraw& d,
                                            LossBundle& out);
autograd::Var egbad_generator_encoder_objective(const ModelState& s, Gradients* grads, const LossDraw& d,
                                                LossBundle& out);

} // namespace dbigan
