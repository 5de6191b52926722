#pragma once

// The Hamiltonian evidence-bound estimator: reparameterized z0, Gaussian
// momentum, K leapfrog steps over the decoder potential, then the negated
// bound as a minimization target. The leapfrog flow is volume preserving, so
// the final entropy term is the encoder-posterior log-density of z0.

#include <cstdint>

#include "dhvae/graph.hpp"
#include "dhvae/hmc.hpp"
#include "dhvae/losses.hpp"
#include "dhvae/model.hpp"

namespace dhvae {

struct ElboInputs {
    Var x, m;         // (N,1,H,W) each
    Tensor z_noise;   // (N,C,h,w) standard normal
    Tensor rho_noise; // (N,C,h,w) standard normal
};

struct ElboTerms {
    // scalar component Vars (batch means); elbo = recon_image + recon_mask +
    // kl_or_entropy + kinetic
    Var elbo;          // negated bound, minimization target
    Var recon_image;   // mean -log p(x | z_K)
    Var recon_mask;    // mean -log p(m | z_K)
    Var kl_or_entropy; // mean [log q(z0|x,m) - log p(z_K)]
    Var kinetic;       // mean 1/2 rho_K^T M^-1 rho_K
    // reconstruction at z_K, reused by the regularizers
    Var image_out, mask_prob;
    Var z0, zK;
};

struct LeapfrogVars {
    Var eps;      // exp(log_eps), latent-shaped
    Tensor mass;  // constant diagonal M
    std::int64_t K = 0;
};

LeapfrogVars enter_leapfrog(Graph& g, const LeapfrogParams& lf, Var* log_eps_leaf = nullptr);

// Gaussian image likelihood optionally replaces the image cross-entropy term.
struct ElboOptions {
    bool gaussian_image_likelihood = false;
    double gaussian_sigma = 0.1;
};

ElboTerms hvae_elbo_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, const LeapfrogVars& lf,
                      const ElboInputs& in, const ElboOptions& opt = {});

// K-free baseline: the standard single-sample bound at z0 (no momentum, no
// flow). Shares the z_noise draw with hvae_elbo_g for comparison tests.
ElboTerms plain_elbo_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, const ElboInputs& in,
                       const ElboOptions& opt = {});

}  // namespace dhvae
