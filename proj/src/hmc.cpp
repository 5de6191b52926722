#include "dhvae/hmc.hpp"

#include <cmath>
#include <fstream>

#include "dhvae/errors.hpp"
#include "dhvae/losses.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

void PhaseState::validate() const {
    if (!z.same_shape(rho)) throw ShapeError("phase state z/rho shapes differ");
    if (!z.all_finite() || !rho.all_finite()) throw NumericError("phase state holds non-finite values");
}

LeapfrogParams LeapfrogParams::init(const Shape& latent_shape, double eps0, std::int64_t K, double mass0,
                                    bool learnable) {
    if (!(eps0 > 0.0)) throw ConfigError("leapfrog eps0 must be positive");
    if (!(mass0 > 0.0)) throw ConfigError("mass entries must be positive");
    if (K < 0) throw ConfigError("leapfrog step count K must be >= 0");
    LeapfrogParams lf;
    lf.log_eps = Tensor::full(latent_shape, std::log(eps0));
    lf.mass = Tensor::full(latent_shape, mass0);
    lf.K = K;
    lf.epsilon_learnable = learnable;
    return lf;
}

Tensor LeapfrogParams::epsilon() const { return exp(log_eps); }

void LeapfrogParams::validate() const {
    if (!log_eps.same_shape(mass)) throw ConfigError("leapfrog log_eps/mass shapes differ");
    if (K < 0) throw ConfigError("leapfrog step count K must be >= 0");
    for (std::int64_t i = 0; i < mass.numel(); ++i)
        if (!(mass[i] > 0.0)) throw ConfigError("mass entries must be positive");
}

Tensor sample_momentum(const Tensor& mass, const Shape& shape, std::uint64_t seed) {
    for (std::int64_t i = 0; i < mass.numel(); ++i)
        if (!(mass[i] > 0.0)) throw ConfigError("sample_momentum: mass entries must be positive");
    Rng rng(seed);
    Tensor n = rng.normal_tensor(shape);
    return mul(sqrt(broadcast_to(mass, shape)), n);
}

double hamiltonian(const PhaseState& s, const Tensor& mass, double u_value) {
    const Tensor m = broadcast_to(mass, s.rho.shape());
    double kin = 0;
    for (std::int64_t i = 0; i < s.rho.numel(); ++i) kin += s.rho[i] * s.rho[i] / m[i];
    return u_value + 0.5 * kin;
}

bool mh_accept(double h0, double hk, double u) {
    if (!std::isfinite(h0)) throw NumericError("mh_accept: starting Hamiltonian must be finite");
    if (std::isnan(hk)) return false;
    return u <= std::min(1.0, std::exp(h0 - hk));
}

namespace {
void check_stage(Graph& g, Var v, const char* stage) {
    if (!g.value(v).all_finite())
        throw NumericError(std::string("leapfrog: non-finite values after ") + stage);
}
}  // namespace

PhaseVar leapfrog_step_g(Graph& g, PhaseVar s, Var eps, const GradFn& grad_u) {
    Var half = mul(g.constant(0.5), eps);
    Var rho_half = sub(s.rho, mul(half, grad_u(s.z)));
    check_stage(g, rho_half, "the first momentum half-step");
    Var z1 = add(s.z, mul(eps, rho_half));
    check_stage(g, z1, "the position step");
    Var rho1 = sub(rho_half, mul(half, grad_u(z1)));
    check_stage(g, rho1, "the second momentum half-step");
    return {z1, rho1};
}

PhaseVar evolve_g(Graph& g, PhaseVar s0, Var eps, std::int64_t K, const GradFn& grad_u,
                  std::vector<PhaseState>* trajectory) {
    if (K < 0) throw ConfigError("evolve: K must be >= 0");
    if (trajectory) trajectory->push_back({g.value(s0.z), g.value(s0.rho)});
    if (K == 0) return s0;
    // composition of K leapfrog steps with the boundary gradient shared
    Var half = mul(g.constant(0.5), eps);
    Var rho_half = sub(s0.rho, mul(half, grad_u(s0.z)));
    check_stage(g, rho_half, "the first momentum half-step");
    Var z = s0.z;
    Var rho_out;
    for (std::int64_t k = 1; k <= K; ++k) {
        z = add(z, mul(eps, rho_half));
        check_stage(g, z, "the position step");
        Var gk = grad_u(z);
        if (k < K) {
            // integer-time momentum for diagnostics sits half-way through
            // the combined momentum update
            if (trajectory) trajectory->push_back({g.value(z), g.value(sub(rho_half, mul(half, gk)))});
            rho_half = sub(rho_half, mul(eps, gk));
            check_stage(g, rho_half, "the momentum full-step");
        } else {
            rho_out = sub(rho_half, mul(half, gk));
            check_stage(g, rho_out, "the second momentum half-step");
            if (trajectory) trajectory->push_back({g.value(z), g.value(rho_out)});
        }
    }
    return {z, rho_out};
}

// --- decoder potential ------------------------------------------------------------

Var prior_negative_log_density_g(Graph& g, Var z) {
    const Shape s = g.shape(z);
    const std::int64_t N = s[0];
    const double d = static_cast<double>(g.value(z).numel() / N);
    Var sq = reshape(reduce_sum_to(mul(z, z), {N, 1, 1, 1}), {N});
    return add(mul(g.constant(0.5), sq), g.constant(0.5 * d * std::log(2.0 * 3.14159265358979323846)));
}

Var potential_terms_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var z, Var x, Var m) {
    auto [img_out, mask_prob] = decode_g(g, cfg, pv, z);
    if (!g.value(img_out).all_finite() || !g.value(mask_prob).all_finite())
        throw NumericError("potential: decoder produced non-finite outputs");
    Var nll = add(bce_sum_g(g, x, img_out), bce_sum_g(g, m, mask_prob));
    return add(nll, prior_negative_log_density_g(g, z));
}

namespace {
struct SinglePotential {
    Graph g;
    ParamVars pv;
    Var z, u;
};

void build_single_potential(SinglePotential& sp, const Tensor& z, const Tensor& x, const Tensor& m,
                            const ModelParams& params) {
    const ModelConfig& cfg = params.cfg;
    if (z.shape() != Shape{cfg.latent_channels, cfg.latent_h(), cfg.latent_w()})
        throw ShapeError("potential: latent shape " + shape_str(z.shape()) + " does not match model");
    if (x.rank() != 2 || !x.same_shape(m)) throw ShapeError("potential: image/mask must be equal rank-2 arrays");
    sp.pv = enter_params(sp.g, params.params);
    sp.z = sp.g.leaf(z.reshaped({1, z.dim(0), z.dim(1), z.dim(2)}), true);
    Var xv = sp.g.leaf(x.reshaped({1, 1, x.dim(0), x.dim(1)}));
    Var mv = sp.g.leaf(m.reshaped({1, 1, m.dim(0), m.dim(1)}));
    sp.u = reshape(potential_terms_g(sp.g, cfg, sp.pv, sp.z, xv, mv), {1});
}
}  // namespace

double potential_energy(const Tensor& z, const Tensor& x, const Tensor& m, const ModelParams& params) {
    SinglePotential sp;
    build_single_potential(sp, z, x, m, params);
    const double u = sp.g.value(sp.u)[0];
    if (!std::isfinite(u)) throw NumericError("potential_energy: non-finite value");
    return u;
}

Tensor grad_potential(const Tensor& z, const Tensor& x, const Tensor& m, const ModelParams& params) {
    SinglePotential sp;
    build_single_potential(sp, z, x, m, params);
    Var gz = sp.g.gradients(sp.u, {sp.z})[0];
    Tensor out = sp.g.value(gz).reshaped(z.shape());
    if (!out.all_finite()) throw NumericError("grad_potential: non-finite gradient");
    return out;
}

HmcSampleResult hmc_transition(const ModelParams& params, const Tensor& x, const Tensor& m, const Tensor& z0,
                               const LeapfrogParams& lf, std::uint64_t seed, bool metropolis) {
    lf.validate();
    const ModelConfig& cfg = params.cfg;
    Graph g;
    ParamVars pv = enter_params(g, params.params);
    Var xv = g.leaf(x.reshaped({1, 1, x.dim(0), x.dim(1)}));
    Var mv = g.leaf(m.reshaped({1, 1, m.dim(0), m.dim(1)}));
    const Shape zshape = {1, z0.dim(0), z0.dim(1), z0.dim(2)};
    Var zv = g.leaf(z0.reshaped(zshape));
    Tensor rho0 = sample_momentum(lf.mass, zshape, mix_seed(seed, 0x4057));
    Var rhov = g.leaf(rho0);
    Var eps = vexp(g.leaf(broadcast_to(lf.log_eps, zshape)));
    GradFn grad_u = [&](Var zz) {
        Var u = reshape(reduce_sum_to(potential_terms_g(g, cfg, pv, zz, xv, mv), {1}), {1});
        return g.gradients(u, {zz})[0];
    };
    PhaseVar out = evolve_g(g, {zv, rhov}, eps, lf.K, grad_u);

    HmcSampleResult res;
    const Tensor z0t = z0;
    const Tensor zk = g.value(out.z).reshaped(z0.shape());
    const Tensor rhok = g.value(out.rho).reshaped(z0.shape());
    const double u0 = g.value(reduce_sum_to(potential_terms_g(g, cfg, pv, zv, xv, mv), {1}))[0];
    const double uk = g.value(reduce_sum_to(potential_terms_g(g, cfg, pv, out.z, xv, mv), {1}))[0];
    res.h0 = hamiltonian({z0t, rho0.reshaped(z0.shape())}, lf.mass, u0);
    res.hk = hamiltonian({zk, rhok}, lf.mass, uk);
    if (metropolis) {
        Rng rng(mix_seed(seed, 0xACC0));
        res.accepted = mh_accept(res.h0, res.hk, rng.uniform());
    }
    res.state = res.accepted ? PhaseState{zk, rhok} : PhaseState{z0t, rho0.reshaped(z0.shape())};
    return res;
}

void write_trajectory_csv(const std::vector<TrajectoryRow>& rows, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << "step,hamiltonian,kinetic,potential,accepted\n";
    for (const auto& r : rows)
        os << r.step << "," << format_double(r.hamiltonian) << "," << format_double(r.kinetic) << ","
           << format_double(r.potential) << "," << (r.accepted ? 1 : 0) << "\n";
    if (!os) throw IoError("write failed: " + path.string());
}

}  // namespace dhvae
