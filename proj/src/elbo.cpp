#include "dhvae/elbo.hpp"

#include <cmath>

#include "dhvae/errors.hpp"

namespace dhvae {

LeapfrogVars enter_leapfrog(Graph& g, const LeapfrogParams& lf, Var* log_eps_leaf) {
    lf.validate();
    LeapfrogVars lv;
    Var le = g.leaf(lf.log_eps, lf.epsilon_learnable);
    if (log_eps_leaf) *log_eps_leaf = le;
    lv.eps = vexp(le);
    lv.mass = lf.mass;
    lv.K = lf.K;
    return lv;
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// per-sample log q(z0; mu, logvar) for a diagonal Gaussian
Var posterior_log_density(Graph& g, Var z0, const LatentGaussianVar& lg) {
    const Shape s = g.shape(z0);
    const std::int64_t N = s[0];
    Var d = sub(z0, lg.mean);
    Var t = add(add(div(mul(d, d), vexp(lg.logvar)), lg.logvar), g.constant(kLog2Pi));
    return mul(g.constant(-0.5), reshape(reduce_sum_to(t, {N, 1, 1, 1}), {N}));
}

Var batch_mean(Graph& g, Var per_sample) {
    const std::int64_t n = g.value(per_sample).numel();
    return mul(reduce_sum_to(per_sample, {1}), g.constant(1.0 / static_cast<double>(n)));
}

struct ReconTerms {
    Var nll_img, nll_msk;  // per-sample (N)
    Var image_out, mask_prob;
};

ReconTerms recon_at(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var z, const ElboInputs& in,
                    const ElboOptions& opt) {
    ReconTerms rt;
    auto [img_out, mask_prob] = decode_g(g, cfg, pv, z);
    rt.image_out = img_out;
    rt.mask_prob = mask_prob;
    rt.nll_img = opt.gaussian_image_likelihood
                     ? neg(gaussian_ll_sum_g(g, in.x, img_out, opt.gaussian_sigma))
                     : bce_sum_g(g, in.x, img_out);
    rt.nll_msk = bce_sum_g(g, in.m, mask_prob);
    return rt;
}

void check_component(Graph& g, Var v, const char* name) {
    if (!g.value(v).all_finite())
        throw NumericError(std::string("elbo component '") + name + "' is non-finite");
}

}  // namespace

ElboTerms hvae_elbo_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, const LeapfrogVars& lf,
                      const ElboInputs& in, const ElboOptions& opt) {
    const Shape xs = g.shape(in.x);
    const std::int64_t N = xs[0];
    LatentGaussianVar lg = encode_g(g, cfg, pv, concat_ch(in.x, in.m));
    Var noise = g.leaf(in.z_noise);
    Var z0 = add(lg.mean, mul(vexp(mul(g.constant(0.5), lg.logvar)), noise));
    Var log_q0 = posterior_log_density(g, z0, lg);

    Tensor rho0_t = mul(sqrt(broadcast_to(lf.mass, in.rho_noise.shape())), in.rho_noise);
    Var rho0 = g.leaf(rho0_t);

    // same likelihood inside the potential as in the final bound
    GradFn grad_u = [&](Var zz) {
        ReconTerms r = recon_at(g, cfg, pv, zz, in, opt);
        Var u_ps = add(add(r.nll_img, r.nll_msk), prior_negative_log_density_g(g, zz));
        Var u = reduce_sum_to(u_ps, {1});
        return g.gradients(u, {zz})[0];
    };
    PhaseVar sk = evolve_g(g, {z0, rho0}, lf.eps, lf.K, grad_u);

    ReconTerms rt = recon_at(g, cfg, pv, sk.z, in, opt);
    Var prior_nll = prior_negative_log_density_g(g, sk.z);
    Var inv_mass = g.leaf(div(Tensor::full(lf.mass.shape(), 1.0), lf.mass));
    Var kin = mul(g.constant(0.5),
                  reshape(reduce_sum_to(mul(mul(sk.rho, sk.rho), inv_mass), {N, 1, 1, 1}), {N}));

    ElboTerms t;
    t.recon_image = batch_mean(g, rt.nll_img);
    t.recon_mask = batch_mean(g, rt.nll_msk);
    t.kl_or_entropy = batch_mean(g, add(log_q0, prior_nll));
    t.kinetic = batch_mean(g, kin);
    t.elbo = add(add(t.recon_image, t.recon_mask), add(t.kl_or_entropy, t.kinetic));
    t.image_out = rt.image_out;
    t.mask_prob = rt.mask_prob;
    t.z0 = z0;
    t.zK = sk.z;
    check_component(g, t.recon_image, "recon_image");
    check_component(g, t.recon_mask, "recon_mask");
    check_component(g, t.kl_or_entropy, "kl_or_entropy");
    check_component(g, t.kinetic, "kinetic");
    return t;
}

ElboTerms plain_elbo_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, const ElboInputs& in,
                       const ElboOptions& opt) {
    LatentGaussianVar lg = encode_g(g, cfg, pv, concat_ch(in.x, in.m));
    Var noise = g.leaf(in.z_noise);
    Var z0 = add(lg.mean, mul(vexp(mul(g.constant(0.5), lg.logvar)), noise));
    Var log_q0 = posterior_log_density(g, z0, lg);

    ReconTerms rt = recon_at(g, cfg, pv, z0, in, opt);
    Var prior_nll = prior_negative_log_density_g(g, z0);

    ElboTerms t;
    t.recon_image = batch_mean(g, rt.nll_img);
    t.recon_mask = batch_mean(g, rt.nll_msk);
    t.kl_or_entropy = batch_mean(g, add(log_q0, prior_nll));
    t.kinetic = g.constant(0.0);
    t.elbo = add(add(t.recon_image, t.recon_mask), t.kl_or_entropy);
    t.image_out = rt.image_out;
    t.mask_prob = rt.mask_prob;
    t.z0 = z0;
    t.zK = z0;
    return t;
}

}  // namespace dhvae
