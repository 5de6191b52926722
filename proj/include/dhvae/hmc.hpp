#pragma once

// Leapfrog evolution of latent phase states over a potential. The integrator
// is built on graph Vars so that training losses can differentiate through
// the whole flow, including the nested d(potential)/dz evaluations. Step
// sizes live in log-space (positivity is unrepresentable to violate).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "dhvae/graph.hpp"
#include "dhvae/model.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

struct PhaseState {
    Tensor z;
    Tensor rho;  // same shape as z

    void validate() const;  // equal shapes, finite values
};

struct LeapfrogParams {
    Tensor log_eps;  // per-dimension log step sizes, latent shape (C,h,w)
    Tensor mass;     // diagonal M entries, same shape, all > 0
    std::int64_t K = 3;
    bool epsilon_learnable = true;

    static LeapfrogParams init(const Shape& latent_shape, double eps0 = 0.05, std::int64_t K = 3,
                               double mass0 = 1.0, bool learnable = true);
    Tensor epsilon() const;  // exp(log_eps)
    void validate() const;
};

// rho ~ N(0, M) with diagonal M; deterministic per seed
Tensor sample_momentum(const Tensor& mass, const Shape& shape, std::uint64_t seed);

// H = U + 1/2 rho^T M^-1 rho (single state)
double hamiltonian(const PhaseState& s, const Tensor& mass, double u_value);

// accept iff u <= min(1, exp(h0 - hK)); hK may be +inf
bool mh_accept(double h0, double hk, double u);

// --- graph-level integrator ------------------------------------------------------

struct PhaseVar {
    Var z, rho;
};

using GradFn = std::function<Var(Var)>;  // z -> dU/dz, same shape

// Half-step momentum, full-step position, half-step momentum, elementwise
// eps. Throws NumericError naming the stage when an intermediate goes
// non-finite.
PhaseVar leapfrog_step_g(Graph& g, PhaseVar s, Var eps, const GradFn& grad_u);

// K composed steps; K=0 returns the input state. Consecutive steps share the
// boundary gradient evaluation. Optionally records intermediate states.
PhaseVar evolve_g(Graph& g, PhaseVar s0, Var eps, std::int64_t K, const GradFn& grad_u,
                  std::vector<PhaseState>* trajectory = nullptr);

// --- decoder-defined potential -----------------------------------------------------

// U(z) = -[log p(x,m|z) + log p(z)] with the reconstruction likelihood from
// the losses module and a standard-normal prior (constants included).
// z: (N,C,h,w); x/m: (N,1,H,W). Returns per-sample values (N).
Var potential_terms_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var z, Var x, Var m);

// per-sample -log N(z; 0, I) including the normalization constant
Var prior_negative_log_density_g(Graph& g, Var z);

// spec-level single-sample operations (z: (C,h,w); x/m: (H,W))
double potential_energy(const Tensor& z, const Tensor& x, const Tensor& m, const ModelParams& params);
Tensor grad_potential(const Tensor& z, const Tensor& x, const Tensor& m, const ModelParams& params);

// --- posterior sampling with optional MH correction ---------------------------------

struct HmcSampleResult {
    PhaseState state;
    bool accepted = true;
    double h0 = 0, hk = 0;
};

// One HMC transition from z0 under the decoder potential. MH acceptance is a
// sampling-time option; training keeps the deterministic flow.
HmcSampleResult hmc_transition(const ModelParams& params, const Tensor& x, const Tensor& m, const Tensor& z0,
                               const LeapfrogParams& lf, std::uint64_t seed, bool metropolis);

struct TrajectoryRow {
    std::int64_t step = 0;
    double hamiltonian = 0, kinetic = 0, potential = 0;
    bool accepted = true;
};

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path);

}  // namespace dhvae
