#pragma once

// Loss components: pixel cross-entropy reconstruction likelihoods, the
// feature + L1 regularizer, the adversarial pair, and the alpha/beta-weighted
// global combination with warm-up gating.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dhvae/features.hpp"
#include "dhvae/graph.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

// probability clamp keeping log() finite
inline constexpr double kProbEps = 1e-6;

// alpha + beta = 1 by construction; beta is never stored independently.
class LossWeights {
  public:
    static LossWeights from_alpha(double alpha, std::int64_t warmup_iters);
    static LossWeights from_beta(double beta, std::int64_t warmup_iters);

    double alpha() const { return alpha_; }
    double beta() const { return 1.0 - alpha_; }
    std::int64_t warmup_iters() const { return warmup_; }

  private:
    LossWeights(double alpha, std::int64_t warmup) : alpha_(alpha), warmup_(warmup) {}
    double alpha_;
    std::int64_t warmup_;
};

struct LossReport {
    std::int64_t iteration = 0;
    double elbo_h = 0, recon_image = 0, recon_mask = 0, kl_or_entropy = 0, kinetic = 0;
    double feature = 0, l1 = 0, disc_gen = 0, disc_disc = 0;
    double global = 0;

    static const std::vector<std::string>& component_names();  // alphabetical
    double component(const std::string& name) const;
    bool all_finite() const;
    std::string worst_component() const;  // first non-finite component name, or ""

    static std::string csv_header();
    std::string csv_row() const;
    static LossReport from_csv_row(const std::string& header, const std::string& row);
};

// --- reconstruction likelihood ------------------------------------------------

// Pixelwise binary cross-entropy against targets in [0,1], summed over
// pixels, returned as log-likelihoods (negated cross-entropy). Throws
// DomainError when targets leave [0,1].
std::pair<double, double> recon_log_likelihood(const Tensor& x, const Tensor& m, const Tensor& image_out,
                                               const Tensor& mask_prob);

// batched graph form: target/prob are (N,1,H,W); per-sample (N) sums
Var bce_sum_g(Graph& g, Var target, Var prob);

// Gaussian image likelihood (optional alternative to cross-entropy): per-
// sample sum of log N(x; out, sigma^2)
Var gaussian_ll_sum_g(Graph& g, Var target, Var out, double sigma = 0.1);

// --- feature + pixel regularizer ------------------------------------------------

// feature: sum over tap layers of squared feature distance; l1: mean absolute
// pixel difference (the 1/N term)
std::pair<double, double> feature_recon_loss(const Tensor& x_hat, const Tensor& x, const FeatureExtractor& fx);
std::pair<Var, Var> feature_recon_loss_g(Graph& g, const FeatureExtractor& fx, Var x_hat, Var x);

// --- adversarial pair -------------------------------------------------------------

// disc_term = -mean log D(real) - mean log(1 - D(fake)); gen_term =
// -mean log D(fake) (non-saturating). Inputs are patch logit maps.
std::pair<double, double> adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits);
Var disc_loss_g(Graph& g, Var real_logits, Var fake_logits);
Var gen_loss_g(Graph& g, Var fake_logits);

// --- global combination ------------------------------------------------------------

// iteration < W: alpha*elbo_h + beta*(feature + l1)
// iteration >= W: alpha*elbo_h + beta*(disc_gen + feature + l1)
double global_loss(const LossReport& components, const LossWeights& w, std::int64_t iteration);
Var global_loss_g(Graph& g, Var elbo_h, Var feature, Var l1, Var disc_gen, const LossWeights& w,
                  std::int64_t iteration);

}  // namespace dhvae
