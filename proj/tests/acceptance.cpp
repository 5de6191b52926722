// Acceptance suite: every release criterion as one pass/fail line.
// Run all criteria or a single one with --criterion N. Exit status is the
// number of failed criteria.

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "dhvae/elbo.hpp"
#include "dhvae/errors.hpp"
#include "dhvae/experiment.hpp"
#include "dhvae/hmc.hpp"
#include "dhvae/metrics.hpp"
#include "dhvae/train.hpp"
#include "dhvae/unet.hpp"

using namespace dhvae;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool pass = true;
    std::ostringstream detail;
    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << (detail.str().empty() ? "" : "; ") << what;
        }
    }
    void note(const std::string& s) { detail << (detail.str().empty() ? "" : "; ") << s; }
};

fs::path scratch_dir() {
    static fs::path p = [] {
        fs::path d = fs::temp_directory_path() / ("dhvae_acceptance_" + std::to_string(::getpid()));
        fs::create_directories(d);
        return d;
    }();
    return p;
}

GradFn gaussian_grad(Graph& g) {
    return [&g](Var z) {
        Var u = mul(g.constant(0.5), sum_all(mul(z, z)));
        return g.gradients(u, {z})[0];
    };
}

double gaussian_h(const PhaseState& s) {
    double u = 0, k = 0;
    for (std::int64_t i = 0; i < s.z.numel(); ++i) {
        u += 0.5 * s.z[i] * s.z[i];
        k += 0.5 * s.rho[i] * s.rho[i];
    }
    return u + k;
}

// --- criterion 1: leapfrog hand example ----------------------------------------

Check criterion1() {
    Check c;
    Graph g;
    PhaseVar out = leapfrog_step_g(g, {g.leaf(Tensor::scalar(1.0)), g.leaf(Tensor::scalar(0.0))},
                                   g.leaf(Tensor::scalar(0.1)), gaussian_grad(g));
    const double z1 = g.value(out.z)[0];
    const double r1 = g.value(out.rho)[0];
    c.require(std::abs(z1 - 0.995) <= 1e-12, "z' off: " + format_double(z1));
    c.require(std::abs(r1 - (-0.09975)) <= 1e-12, "rho' off: " + format_double(r1));
    c.note("(z',rho') = (" + format_double(z1) + ", " + format_double(r1) + ")");
    return c;
}

// --- criterion 2: time reversibility ---------------------------------------------

Check criterion2() {
    Check c;
    double worst = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::int64_t K = 1 + rng.uniform_int(10);
        Tensor z0 = rng.normal_tensor({8});
        Tensor r0 = rng.normal_tensor({8});
        Graph g;
        Var eps = g.leaf(Tensor::full({8}, 0.05));
        PhaseVar fwd = evolve_g(g, {g.leaf(z0), g.leaf(r0)}, eps, K, gaussian_grad(g));
        PhaseVar back = evolve_g(g, {fwd.z, neg(fwd.rho)}, eps, K, gaussian_grad(g));
        for (std::int64_t i = 0; i < 8; ++i) {
            worst = std::max(worst, std::abs(g.value(back.z)[i] - z0[i]));
            worst = std::max(worst, std::abs(-g.value(back.rho)[i] - r0[i]));
        }
    }
    c.require(worst <= 1e-8, "max reversal error " + format_double(worst));
    c.note("max reversal error " + format_double(worst) + " over 100 cases");
    return c;
}

// --- criterion 3: symplectic volume ------------------------------------------------

Check criterion3() {
    Check c;
    Rng rng(9);
    Tensor z0 = rng.normal_tensor({3});
    Tensor r0 = rng.normal_tensor({3});
    const double e = 0.1, h = 1e-6;
    auto step = [&](const Tensor& z, const Tensor& r) {
        Graph g;
        PhaseVar out =
            leapfrog_step_g(g, {g.leaf(z), g.leaf(r)}, g.leaf(Tensor::full({3}, e)), gaussian_grad(g));
        return std::pair<Tensor, Tensor>{g.value(out.z), g.value(out.rho)};
    };
    double J[6][6];
    for (int col = 0; col < 6; ++col) {
        Tensor zp = z0, rp = r0, zm = z0, rm = r0;
        if (col < 3) {
            zp[col] += h;
            zm[col] -= h;
        } else {
            rp[col - 3] += h;
            rm[col - 3] -= h;
        }
        auto [z1p, r1p] = step(zp, rp);
        auto [z1m, r1m] = step(zm, rm);
        for (int row = 0; row < 6; ++row) {
            const double vp = row < 3 ? z1p[row] : r1p[row - 3];
            const double vm = row < 3 ? z1m[row] : r1m[row - 3];
            J[row][col] = (vp - vm) / (2 * h);
        }
    }
    double det = 1.0;
    for (int i = 0; i < 6; ++i) {
        int piv = i;
        for (int r = i + 1; r < 6; ++r)
            if (std::abs(J[r][i]) > std::abs(J[piv][i])) piv = r;
        if (piv != i) {
            for (int col = 0; col < 6; ++col) std::swap(J[i][col], J[piv][col]);
            det = -det;
        }
        det *= J[i][i];
        for (int r = i + 1; r < 6; ++r) {
            const double f = J[r][i] / J[i][i];
            for (int col = i; col < 6; ++col) J[r][col] -= f * J[i][col];
        }
    }
    c.require(std::abs(det - 1.0) <= 1e-4, "|det-1| = " + format_double(std::abs(det - 1.0)));
    c.note("|det - 1| = " + format_double(std::abs(det - 1.0)));
    return c;
}

// --- criterion 4: energy drift order -------------------------------------------------

Check criterion4() {
    Check c;
    auto max_drift = [&](const Tensor& z0, const Tensor& r0, double e) {
        Graph g;
        std::vector<PhaseState> traj;
        evolve_g(g, {g.leaf(z0), g.leaf(r0)}, g.leaf(Tensor::full(z0.shape(), e)), 20, gaussian_grad(g),
                 &traj);
        const double h0 = gaussian_h(traj.front());
        double m = 0;
        for (const auto& s : traj) m = std::max(m, std::abs(gaussian_h(s) - h0));
        return m;
    };
    double coarse = 0, fine = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        Tensor z0 = rng.normal_tensor({16});
        Tensor r0 = rng.normal_tensor({16});
        coarse = std::max(coarse, max_drift(z0, r0, 0.2));
        fine = std::max(fine, max_drift(z0, r0, 0.1));
    }
    const double ratio = coarse / fine;
    c.require(ratio >= 3.0 && ratio <= 5.0, "drift ratio " + format_double(ratio));
    c.note("ensemble-max drift ratio " + format_double(ratio));
    return c;
}

// --- criterion 5: gradient fidelity ----------------------------------------------------

ModelConfig micro_model_cfg() {
    ModelConfig cfg;
    cfg.base_filters = 4;
    cfg.max_filters = 8;
    cfg.depth = 3;
    cfg.latent_channels = 4;  // latent dim 4 at 1x1
    cfg.slice_h = cfg.slice_w = 8;
    cfg.disc_filters = 4;
    cfg.disc_depth = 2;
    cfg.seed = 17;
    return cfg;
}

struct MicroSetup {
    ModelConfig cfg = micro_model_cfg();
    ModelParams gen;
    ParamSet disc;
    FeatureExtractor fx = make_fixed_random_extractor(5);
    Tensor x, m, z_noise, rho_noise, z_prior, log_eps;
    LossWeights w = LossWeights::from_alpha(0.99, 0);  // past warm-up: adversarial term active

    MicroSetup() {
        gen = init_model(cfg);
        disc = init_discriminator(cfg);
        Rng rng(31);
        x = Tensor({2, 1, 8, 8});
        m = Tensor({2, 1, 8, 8});
        for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
        for (int i = 0; i < 10; ++i) m[rng.uniform_int(m.numel())] = 1.0;
        const Shape zs = {2, 4, 1, 1};
        z_noise = rng.normal_tensor(zs);
        rho_noise = rng.normal_tensor(zs);
        z_prior = rng.normal_tensor(zs);
        log_eps = Tensor::full({4, 1, 1}, std::log(0.08));
    }

    // global loss as a pure function of (gen params, log_eps, disc params)
    double eval(const ParamSet& gp, const Tensor& le, const ParamSet& dp) const {
        Graph g;
        ParamVars pv;
        for (const auto& [name, t] : gp.entries) pv.entries.emplace_back(name, g.leaf(t));
        ParamVars pvd;
        for (const auto& [name, t] : dp.entries) pvd.entries.emplace_back(name, g.leaf(t));
        Var le_leaf = g.leaf(le);
        LeapfrogVars lv;
        lv.eps = vexp(le_leaf);
        lv.mass = Tensor::full({4, 1, 1}, 1.0);
        lv.K = 2;
        ElboInputs in;
        in.x = g.leaf(x);
        in.m = g.leaf(m);
        in.z_noise = z_noise;
        in.rho_noise = rho_noise;
        ElboTerms t = hvae_elbo_g(g, cfg, pv, lv, in);
        auto [fi, fm] = decode_g(g, cfg, pv, g.leaf(z_prior));
        Var fake_logits = discriminate_g(g, cfg, pvd, concat_ch(fi, fm));
        Var gen_term = gen_loss_g(g, fake_logits);
        auto [feature, l1] = feature_recon_loss_g(g, const_cast<FeatureExtractor&>(fx), t.image_out, in.x);
        Var global = global_loss_g(g, t.elbo, feature, l1, gen_term, w, 1);
        return g.value(global)[0];
    }
};

Check criterion5() {
    Check c;
    // part A: grad_potential vs central differences at 1e-4
    {
        ModelConfig cfg = micro_model_cfg();
        ModelParams mp = init_model(cfg);
        Rng rng(23);
        Tensor x({8, 8}), m({8, 8});
        for (std::int64_t i = 0; i < 64; ++i) x[i] = rng.uniform();
        m[12] = m[30] = 1.0;
        Tensor z = rng.normal_tensor({4, 1, 1});
        Tensor ga = grad_potential(z, x, m, mp);
        const double h = 1e-5;
        double worst = 0;
        for (std::int64_t i = 0; i < 4; ++i) {
            Tensor zp = z, zm = z;
            zp[i] += h;
            zm[i] -= h;
            const double fd = (potential_energy(zp, x, m, mp) - potential_energy(zm, x, m, mp)) / (2 * h);
            worst = std::max(worst, std::abs(ga[i] - fd) / (std::abs(ga[i]) + std::abs(fd) + 1e-8));
        }
        c.require(worst <= 1e-4, "grad_potential rel err " + format_double(worst));
        c.note("grad_potential max rel err " + format_double(worst));
    }
    // part B: global-loss parameter gradients vs central differences at 1e-3
    {
        MicroSetup ms;
        Graph g;
        ParamVars pv;
        Var le_leaf;
        for (const auto& [name, t] : ms.gen.params.entries) pv.entries.emplace_back(name, g.leaf(t, true));
        ParamVars pvd;
        for (const auto& [name, t] : ms.disc.entries) pvd.entries.emplace_back(name, g.leaf(t));
        le_leaf = g.leaf(ms.log_eps, true);
        LeapfrogVars lv;
        lv.eps = vexp(le_leaf);
        lv.mass = Tensor::full({4, 1, 1}, 1.0);
        lv.K = 2;
        ElboInputs in;
        in.x = g.leaf(ms.x);
        in.m = g.leaf(ms.m);
        in.z_noise = ms.z_noise;
        in.rho_noise = ms.rho_noise;
        ElboTerms t = hvae_elbo_g(g, ms.cfg, pv, lv, in);
        auto [fi, fm] = decode_g(g, ms.cfg, pv, g.leaf(ms.z_prior));
        Var fake_logits = discriminate_g(g, ms.cfg, pvd, concat_ch(fi, fm));
        Var gen_term = gen_loss_g(g, fake_logits);
        auto [feature, l1] = feature_recon_loss_g(g, ms.fx, t.image_out, in.x);
        Var global = global_loss_g(g, t.elbo, feature, l1, gen_term, ms.w, 1);

        std::vector<Var> wrt = pv.vars();
        wrt.push_back(le_leaf);
        auto grads = g.gradients(global, wrt);

        Rng pick(7);
        const double h = 1e-5;
        // central differences cannot resolve gradients below the rounding
        // floor of the loss value itself
        const double f0 = ms.eval(ms.gen.params, ms.log_eps, ms.disc);
        const double fd_floor = 100.0 * std::abs(f0) * 2.2e-16 / h;
        double worst = 0;
        int checked = 0, skipped = 0;
        // a handful of coordinates from every parameter array, plus all of log_eps
        for (std::size_t pi = 0; pi < ms.gen.params.entries.size(); ++pi) {
            const std::string& name = ms.gen.params.entries[pi].first;
            const Tensor& pt = ms.gen.params.entries[pi].second;
            const int n_probe = pt.numel() < 3 ? static_cast<int>(pt.numel()) : 2;
            for (int k = 0; k < n_probe; ++k) {
                const std::int64_t idx = pick.uniform_int(pt.numel());
                ParamSet gp = ms.gen.params;
                gp.at(name)[idx] += h;
                const double fp = ms.eval(gp, ms.log_eps, ms.disc);
                gp.at(name)[idx] -= 2 * h;
                const double fmv = ms.eval(gp, ms.log_eps, ms.disc);
                const double fd = (fp - fmv) / (2 * h);
                const double an = g.value(grads[pi])[idx];
                if (std::abs(an) < 10 * fd_floor && std::abs(fd) < 10 * fd_floor) {
                    ++skipped;
                    continue;
                }
                worst = std::max(worst, std::abs(an - fd) / (std::abs(an) + std::abs(fd)));
                ++checked;
            }
        }
        for (std::int64_t i = 0; i < ms.log_eps.numel(); ++i) {
            Tensor le = ms.log_eps;
            le[i] += h;
            const double fp = ms.eval(ms.gen.params, le, ms.disc);
            le[i] -= 2 * h;
            const double fmv = ms.eval(ms.gen.params, le, ms.disc);
            const double fd = (fp - fmv) / (2 * h);
            const double an = g.value(grads.back())[i];
            worst = std::max(worst, std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-10));
            ++checked;
        }
        c.require(worst <= 1e-3, "global-loss grad rel err " + format_double(worst));
        c.note("global-loss max rel err " + format_double(worst) + " over " + std::to_string(checked) +
               " coordinates (K=2, " + std::to_string(skipped) + " below the FD noise floor)");
    }
    return c;
}

// --- criterion 6: K=0 reduction ---------------------------------------------------------

Check criterion6() {
    Check c;
    ModelConfig cfg = micro_model_cfg();
    cfg.latent_channels = 2;
    ModelParams mp = init_model(cfg);
    Graph g;
    ParamVars pv = enter_params(g, mp.params);
    Rng rng(99);
    Tensor x({2, 1, 8, 8}), m({2, 1, 8, 8});
    for (std::int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
    for (int i = 0; i < 8; ++i) m[rng.uniform_int(m.numel())] = 1.0;
    ElboInputs in;
    in.x = g.leaf(x);
    in.m = g.leaf(m);
    in.z_noise = rng.normal_tensor({2, 2, 2, 2});
    in.rho_noise = rng.normal_tensor({2, 2, 2, 2});
    LeapfrogParams lf0 = LeapfrogParams::init({2, 2, 2}, 0.05, 0);
    LeapfrogVars lv = enter_leapfrog(g, lf0);
    ElboTerms hv = hvae_elbo_g(g, cfg, pv, lv, in);
    ElboTerms pl = plain_elbo_g(g, cfg, pv, in);
    auto wrt = pv.vars();
    auto gh = g.gradients(hv.elbo, wrt);
    auto gp = g.gradients(pl.elbo, wrt);
    double worst = 0;
    for (std::size_t i = 0; i < wrt.size(); ++i) {
        const Tensor& a = g.value(gh[i]);
        const Tensor& b = g.value(gp[i]);
        for (std::int64_t j = 0; j < a.numel(); ++j)
            worst = std::max(worst, std::abs(a[j] - b[j]) / (std::abs(a[j]) + std::abs(b[j]) + 1e-10));
    }
    c.require(worst <= 1e-6, "K=0 grad rel err " + format_double(worst));
    c.note("max rel gradient gap " + format_double(worst));
    return c;
}

// --- criterion 7: metric oracles ---------------------------------------------------------

Check criterion7() {
    Check c;
    {
        Tensor a = Tensor::full({4, 4}, 0.25);
        Tensor b = add_scalar(a, 0.1);  // MSE 0.01
        c.require(std::abs(psnr(a, b, 1.0) - 20.0) <= 1e-9, "PSNR(MSE=0.01) != 20 dB");
    }
    {
        Rng rng(11);
        double worst = 0;
        for (int rep = 0; rep < 10; ++rep) {
            const double mr = rng.normal(), mf = rng.normal();
            const double sr = 0.2 + rng.uniform(), sf = 0.2 + rng.uniform();
            EmbeddingStats r{Tensor::full({1}, mr), Tensor::full({1, 1}, sr * sr)};
            EmbeddingStats f{Tensor::full({1}, mf), Tensor::full({1, 1}, sf * sf)};
            const double want = (mr - mf) * (mr - mf) + (sr - sf) * (sr - sf);
            worst = std::max(worst, std::abs(fid(r, f) - want));
        }
        c.require(worst <= 1e-8, "univariate FID gap " + format_double(worst));
    }
    {
        Rng rng(3);
        EmbeddingStats s = gaussian_stats(rng.normal_tensor({24, 6}));
        c.require(fid(s, s) <= 1e-6, "FID(s,s) " + format_double(fid(s, s)));
    }
    {
        PixelClassDistribution p{Tensor::full({8, 8}, 1.0), 4};
        PixelClassDistribution q{Tensor({8, 8}), 4};
        const double j = divergence(p, q, DivergenceMode::jsd, 1e-12);
        c.require(std::abs(j - std::log(2.0)) <= 1e-6, "JSD(disjoint) " + format_double(j));
    }
    {
        Tensor p({4, 4}), g2({4, 4});
        p[0] = p[1] = 1.0;
        g2[0] = g2[1] = g2[2] = g2[3] = 1.0;
        c.require(std::abs(dsc(p, g2) - 2.0 / 3.0) <= 1e-12, "DSC hand count");
    }
    c.note("PSNR, FID closed form, FID identity, JSD limit, DSC all on target");
    return c;
}

// shared micro training config for criteria 8 and 11
TrainConfig micro_train() {
    TrainConfig cfg;
    cfg.model.base_filters = 4;
    cfg.model.max_filters = 8;
    cfg.model.depth = 2;
    cfg.model.latent_channels = 2;
    cfg.model.disc_filters = 4;
    cfg.model.disc_depth = 2;
    cfg.model.seed = 9;
    cfg.lf_k = 1;
    cfg.alpha = 0.99;
    cfg.warmup_iters = 4;
    cfg.opt.lr = 1e-3;
    cfg.disc_opt.lr = 1e-3;
    cfg.iterations = 8;
    cfg.batch_size = 2;
    cfg.checkpoint_every = 4;
    cfg.seed = 5;
    cfg.min_fg_pixels = 2;
    return cfg;
}

SliceDataset micro_blobs(std::uint64_t seed) {
    auto corpus = make_blob_corpus(2, 16, 16, 8, seed);
    std::vector<SlicePair> pairs;
    for (auto& [img, mask] : corpus) {
        const Volume3D norm = minmax_normalize(img);
        for (auto& p : extract_tumor_slices(norm, mask, 5)) pairs.push_back(std::move(p));
    }
    return SliceDataset::from_pairs(std::move(pairs), "train");
}

// --- criterion 8: warm-up gating from the logged CSV ---------------------------------------

Check criterion8() {
    Check c;
    const fs::path dir = scratch_dir() / "c8";
    SliceDataset ds = micro_blobs(3);
    TrainConfig cfg = micro_train();  // W=4 inside 8 iterations
    TrainResult res = train_generator(ds, cfg, dir);
    const LossWeights w = cfg.weights();
    std::ifstream is(dir / "loss.csv");
    std::string header, line;
    std::getline(is, header);
    double worst = 0;
    int rows = 0;
    bool pre = false, post = false;
    while (std::getline(is, line)) {
        const LossReport rep = LossReport::from_csv_row(header, line);
        worst = std::max(worst, std::abs(rep.global - global_loss(rep, w, rep.iteration)));
        (rep.iteration < w.warmup_iters() ? pre : post) = true;
        ++rows;
    }
    c.require(rows == 8, "expected 8 csv rows, got " + std::to_string(rows));
    c.require(pre && post, "iterations do not straddle the warm-up boundary");
    c.require(worst <= 1e-9, "recompute gap " + format_double(worst));
    c.note("max |logged - recomputed| = " + format_double(worst) + " across W");
    return c;
}

// --- criterion 9: smoke training ------------------------------------------------------------

Check criterion9() {
    Check c;
    auto corpus = make_blob_corpus(60, 32, 32, 8, 77);
    std::vector<SlicePair> pairs;
    for (auto& [img, mask] : corpus) {
        const Volume3D norm = minmax_normalize(img);
        for (auto& p : extract_tumor_slices(norm, mask, 10)) pairs.push_back(std::move(p));
        if (pairs.size() >= 200) break;
    }
    if (pairs.size() < 200) {
        c.require(false, "blob corpus yielded only " + std::to_string(pairs.size()) + " slices");
        return c;
    }
    pairs.resize(200);
    double real_fg = 0;
    for (const auto& p : pairs) real_fg += static_cast<double>(p.foreground_count()) / 1024.0;
    real_fg /= 200.0;
    SliceDataset ds = SliceDataset::from_pairs(std::move(pairs), "train");

    double fg_accum = 0;
    std::int64_t fg_count = 0;
    for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
        TrainConfig cfg;
        cfg.model.base_filters = 16;
        cfg.model.max_filters = 64;
        cfg.model.depth = 4;
        cfg.model.latent_channels = 8;
        cfg.model.disc_filters = 16;
        cfg.model.disc_depth = 3;
        cfg.model.seed = seed;
        cfg.lf_k = 2;
        cfg.alpha = 0.99;
        cfg.warmup_iters = 1000;  // adversarial term stays out of this smoke run
        cfg.opt.lr = 1e-3;
        cfg.iterations = 300;
        cfg.batch_size = 4;
        cfg.checkpoint_every = 300;
        cfg.seed = seed;
        cfg.min_fg_pixels = 10;
        const fs::path dir = scratch_dir() / ("c9_s" + std::to_string(seed));
        TrainResult res = train_generator(ds, cfg, dir);
        const double first = res.reports.front().elbo_h;
        double tail = 0;
        for (std::size_t i = res.reports.size() - 10; i < res.reports.size(); ++i)
            tail += res.reports[i].elbo_h;
        tail /= 10.0;
        const double improvement = (first - tail) / std::abs(first);
        c.require(improvement >= 0.20,
                  "seed " + std::to_string(seed) + " improvement " + format_double(improvement));
        c.note("seed " + std::to_string(seed) + ": elbo " + format_double(first) + " -> " +
               format_double(tail) + " (" + format_double(100 * improvement) + "%)");
        auto synth = generate_pairs(res.checkpoint, 50, mix_seed(seed, 0xFACE));
        for (const auto& p : synth) {
            fg_accum += static_cast<double>(p.foreground_count()) / 1024.0;
            ++fg_count;
        }
    }
    const double synth_fg = fg_accum / static_cast<double>(fg_count);
    const double ratio = synth_fg / real_fg;
    c.require(ratio >= 0.2 && ratio <= 5.0, "fg ratio " + format_double(ratio));
    c.note("mask fg fraction synth/real = " + format_double(synth_fg) + "/" + format_double(real_fg) +
           " (ratio " + format_double(ratio) + ")");
    return c;
}

// --- criterion 10: augmentation non-inferiority ----------------------------------------------

Check criterion10() {
    Check c;
    auto corpus = make_blob_corpus(10, 16, 16, 8, 55);
    SubjectSet train(corpus.begin(), corpus.begin() + 6);
    SubjectSet test(corpus.begin() + 6, corpus.end());

    ExperimentPlan plan;
    plan.real_counts = {6};
    plan.synth_counts = {0, 250, 500};
    plan.betas = {0.01};
    plan.folds = 1;
    plan.seeds = {0, 1, 2};
    plan.min_fg_pixels = 5;
    plan.gen_template.model.base_filters = 12;
    plan.gen_template.model.max_filters = 48;
    plan.gen_template.model.depth = 3;
    plan.gen_template.model.latent_channels = 4;
    plan.gen_template.model.disc_filters = 8;
    plan.gen_template.model.disc_depth = 2;
    plan.gen_template.lf_k = 1;
    plan.gen_template.warmup_iters = 1000;
    plan.gen_template.opt.lr = 1e-3;
    plan.gen_template.iterations = 250;
    plan.gen_template.batch_size = 4;
    plan.gen_template.checkpoint_every = 250;
    plan.seg_template.depth = 2;
    plan.seg_template.base_filters = 8;
    plan.seg_template.epochs = 6;
    plan.seg_template.batch_size = 8;
    plan.seg_template.lr = 1e-3;

    const fs::path dir = scratch_dir() / "c10";
    ExperimentResults results = run_augmentation_experiment(plan, train, test, dir);
    emit_report(results, dir / "report");

    double base_sum = 0, aug_sum = 0;
    int base_n = 0, aug_n = 0;
    for (const auto& cell : results.cells) {
        if (cell.synth_count == 0) {
            base_sum += cell.dsc_mean;
            ++base_n;
        } else if (cell.synth_count == 500) {
            aug_sum += cell.dsc_mean;
            ++aug_n;
        }
    }
    const double base_mean = base_sum / base_n;
    const double aug_mean = aug_sum / aug_n;
    c.require(aug_mean >= base_mean - 0.02,
              "aug " + format_double(aug_mean) + " vs baseline " + format_double(base_mean));
    c.note("baseline DSC " + format_double(base_mean) + ", +500 synthetic " + format_double(aug_mean) +
           " over 3 seeds; curve written to " + (dir / "report" / "dsc_vs_count.svg").string());
    return c;
}

// --- criterion 11: determinism and resume -----------------------------------------------------

Check criterion11() {
    Check c;
    SliceDataset ds = micro_blobs(5);
    TrainConfig cfg = micro_train();
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    };
    const fs::path d1 = scratch_dir() / "c11_a";
    const fs::path d2 = scratch_dir() / "c11_b";
    TrainResult a = train_generator(ds, cfg, d1);
    TrainResult b = train_generator(ds, cfg, d2);
    c.require(slurp(d1 / "loss.csv") == slurp(d2 / "loss.csv"), "rerun CSVs differ");

    TrainConfig half = cfg;
    half.iterations = 4;
    const fs::path d3 = scratch_dir() / "c11_c";
    TrainResult firstHalf = train_generator(ds, half, d3);
    TrainState st = load_checkpoint(firstHalf.checkpoint);
    st.cfg.iterations = 8;
    TrainResult second = resume_training(std::move(st), ds, scratch_dir() / "c11_d");
    double worst = 0;
    for (std::size_t i = 0; i < second.reports.size(); ++i) {
        const LossReport& full = a.reports[i + 4];
        const LossReport& res = second.reports[i];
        for (const auto& name : LossReport::component_names())
            worst = std::max(worst, std::abs(full.component(name) - res.component(name)));
    }
    c.require(worst <= 1e-10, "resume gap " + format_double(worst));
    c.note("reruns byte-identical; max resume component gap " + format_double(worst));
    return c;
}

// --- criterion 12: leakage guard ----------------------------------------------------------------

Check criterion12() {
    Check c;
    auto corpus = make_blob_corpus(3, 16, 16, 8, 13);
    SubjectSet train(corpus.begin(), corpus.begin() + 2);
    SubjectSet overlapping(corpus.begin() + 1, corpus.end());
    bool threw = false;
    try {
        assert_disjoint_subjects(train, overlapping);
    } catch (const LeakageError&) {
        threw = true;
    }
    c.require(threw, "overlapping subject was not rejected");
    // and the guard sits on the experiment entry path
    ExperimentPlan plan;
    plan.gen_template = micro_train();
    plan.synth_counts = {0};
    bool threw2 = false;
    try {
        (void)run_augmentation_experiment(plan, train, overlapping, scratch_dir() / "c12");
    } catch (const LeakageError&) {
        threw2 = true;
    }
    c.require(threw2, "experiment accepted an overlapping split");
    c.note("overlapping train/test subject rejected at both entry points");
    return c;
}

struct Criterion {
    int id;
    const char* title;
    std::function<Check()> fn;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> cs = {
        {1, "leapfrog hand example (quadratic potential, one step)", criterion1},
        {2, "time reversibility over 100 random cases", criterion2},
        {3, "symplectic volume preservation (numeric Jacobian)", criterion3},
        {4, "energy drift scales as eps^2", criterion4},
        {5, "gradient fidelity vs central finite differences", criterion5},
        {6, "K=0 reduction to the plain evidence bound", criterion6},
        {7, "metric oracles (PSNR, FID, JSD, DSC)", criterion7},
        {8, "warm-up gating recomputable from the loss CSV", criterion8},
        {9, "smoke training on the 200-slice blob corpus (3 seeds)", criterion9},
        {10, "augmentation non-inferiority at +500 synthetic (3 seeds)", criterion10},
        {11, "determinism of reruns and checkpoint resume", criterion11},
        {12, "train/test subject leakage guard", criterion12},
    };
    return cs;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    int failures = 0;
    for (const auto& cr : criteria()) {
        if (only != 0 && cr.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Check res;
        try {
            res = cr.fn();
        } catch (const std::exception& e) {
            res.pass = false;
            res.detail << "exception: " << e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (res.pass ? "[PASS]" : "[FAIL]") << " criterion " << cr.id << " (" << cr.title << ", "
                  << secs << "s)";
        if (!res.detail.str().empty()) std::cout << " -- " << res.detail.str();
        std::cout << "\n" << std::flush;
        failures += res.pass ? 0 : 1;
    }
    fs::remove_all(scratch_dir());
    return failures;
}
