#include "dhvae/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dhvae/errors.hpp"
#include "dhvae/hmc.hpp"

namespace dhvae {

void TrainConfig::validate() const {
    model.validate();
    if (!(lf_eps0 > 0.0) || lf_k < 0 || !(lf_mass > 0.0)) throw ConfigError("bad leapfrog settings");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (warmup_iters < 0) throw ConfigError("warmup_iters must be >= 0");
    if (iterations < 1 || batch_size < 1 || checkpoint_every < 1)
        throw ConfigError("iterations, batch_size and checkpoint_every must be positive");
    if (min_fg_pixels < 1) throw ConfigError("min_fg_pixels must be >= 1");
}

std::string TrainConfig::to_meta() const {
    std::string s = model.to_meta();
    s += kv_line("lf.eps0", format_double(lf_eps0));
    s += kv_line("lf.k", std::to_string(lf_k));
    s += kv_line("lf.learnable", lf_learnable ? "true" : "false");
    s += kv_line("lf.mass", format_double(lf_mass));
    s += kv_line("weights.alpha", format_double(alpha));
    s += kv_line("weights.warmup_iters", std::to_string(warmup_iters));
    s += kv_line("opt.lr", format_double(opt.lr));
    s += kv_line("opt.beta1", format_double(opt.beta1));
    s += kv_line("opt.beta2", format_double(opt.beta2));
    s += kv_line("opt.weight_decay", format_double(opt.weight_decay));
    s += kv_line("disc_opt.lr", format_double(disc_opt.lr));
    s += kv_line("disc_opt.beta1", format_double(disc_opt.beta1));
    s += kv_line("disc_opt.beta2", format_double(disc_opt.beta2));
    s += kv_line("disc_opt.weight_decay", format_double(disc_opt.weight_decay));
    s += kv_line("train.iterations", std::to_string(iterations));
    s += kv_line("train.batch_size", std::to_string(batch_size));
    s += kv_line("train.checkpoint_every", std::to_string(checkpoint_every));
    s += kv_line("train.seed", std::to_string(seed));
    s += kv_line("train.extractor", extractor_kind_name(extractor));
    s += kv_line("train.gaussian_image_likelihood", gaussian_image_likelihood ? "true" : "false");
    s += kv_line("sample.min_fg_pixels", std::to_string(min_fg_pixels));
    return s;
}

TrainConfig TrainConfig::from_meta(const std::string& text) {
    const auto kv = parse_kv_lines(text);
    TrainConfig c;
    c.model = ModelConfig::from_meta(text);
    auto getd = [&](const char* k, double def) { return kv.count(k) ? std::stod(kv.at(k)) : def; };
    auto geti = [&](const char* k, std::int64_t def) { return kv.count(k) ? std::stoll(kv.at(k)) : def; };
    auto getb = [&](const char* k, bool def) { return kv.count(k) ? kv.at(k) == "true" : def; };
    c.lf_eps0 = getd("lf.eps0", c.lf_eps0);
    c.lf_k = geti("lf.k", c.lf_k);
    c.lf_learnable = getb("lf.learnable", c.lf_learnable);
    c.lf_mass = getd("lf.mass", c.lf_mass);
    c.alpha = getd("weights.alpha", c.alpha);
    c.warmup_iters = geti("weights.warmup_iters", c.warmup_iters);
    c.opt.lr = getd("opt.lr", c.opt.lr);
    c.opt.beta1 = getd("opt.beta1", c.opt.beta1);
    c.opt.beta2 = getd("opt.beta2", c.opt.beta2);
    c.opt.weight_decay = getd("opt.weight_decay", c.opt.weight_decay);
    c.disc_opt.lr = getd("disc_opt.lr", c.disc_opt.lr);
    c.disc_opt.beta1 = getd("disc_opt.beta1", c.disc_opt.beta1);
    c.disc_opt.beta2 = getd("disc_opt.beta2", c.disc_opt.beta2);
    c.disc_opt.weight_decay = getd("disc_opt.weight_decay", c.disc_opt.weight_decay);
    c.iterations = geti("train.iterations", c.iterations);
    c.batch_size = geti("train.batch_size", c.batch_size);
    c.checkpoint_every = geti("train.checkpoint_every", c.checkpoint_every);
    c.seed = kv.count("train.seed") ? std::stoull(kv.at("train.seed")) : 0;
    if (kv.count("train.extractor")) c.extractor = extractor_kind_from_name(kv.at("train.extractor"));
    c.gaussian_image_likelihood = getb("train.gaussian_image_likelihood", c.gaussian_image_likelihood);
    c.min_fg_pixels = geti("sample.min_fg_pixels", c.min_fg_pixels);
    return c;
}

TrainConfig TrainConfig::from_config(ConfigMap& cm) {
    TrainConfig c;
    c.model.base_filters = cm.get_int("model.base_filters", c.model.base_filters);
    c.model.depth = cm.get_int("model.depth", c.model.depth);
    c.model.max_filters = cm.get_int("model.max_filters", c.model.max_filters);
    c.model.latent_channels = cm.get_int("model.latent_channels", c.model.latent_channels);
    c.model.disc_filters = cm.get_int("model.disc_filters", c.model.disc_filters);
    c.model.disc_depth = cm.get_int("model.disc_depth", c.model.disc_depth);
    for (auto v : cm.get_int_list("model.attention_at", {})) c.model.attention_at.insert(v);
    c.lf_eps0 = cm.get_double("lf.eps0", c.lf_eps0);
    c.lf_k = cm.get_int("lf.k", c.lf_k);
    c.lf_learnable = cm.get_bool("lf.learnable", c.lf_learnable);
    c.lf_mass = cm.get_double("lf.mass", c.lf_mass);
    if (cm.has("weights.alpha") && cm.has("weights.beta"))
        throw ConfigError("specify weights.alpha or weights.beta, not both");
    if (cm.has("weights.beta"))
        c.alpha = 1.0 - cm.get_double("weights.beta", 1.0 - c.alpha);
    else
        c.alpha = cm.get_double("weights.alpha", c.alpha);
    c.warmup_iters = cm.get_int("weights.warmup_iters", c.warmup_iters);
    c.opt.lr = cm.get_double("opt.lr", c.opt.lr);
    c.opt.beta1 = cm.get_double("opt.beta1", c.opt.beta1);
    c.opt.beta2 = cm.get_double("opt.beta2", c.opt.beta2);
    c.opt.weight_decay = cm.get_double("opt.weight_decay", c.opt.weight_decay);
    c.disc_opt = c.opt;
    c.disc_opt.lr = cm.get_double("disc_opt.lr", c.disc_opt.lr);
    c.disc_opt.beta1 = cm.get_double("disc_opt.beta1", c.disc_opt.beta1);
    c.disc_opt.beta2 = cm.get_double("disc_opt.beta2", c.disc_opt.beta2);
    c.disc_opt.weight_decay = cm.get_double("disc_opt.weight_decay", c.disc_opt.weight_decay);
    c.iterations = cm.get_int("train.iterations", c.iterations);
    c.batch_size = cm.get_int("train.batch_size", c.batch_size);
    c.checkpoint_every = cm.get_int("train.checkpoint_every", c.checkpoint_every);
    c.seed = static_cast<std::uint64_t>(cm.get_int("train.seed", 0));
    c.extractor = extractor_kind_from_name(
        cm.get_string("train.extractor", extractor_kind_name(c.extractor)));
    c.gaussian_image_likelihood = cm.get_bool("train.gaussian_image_likelihood", false);
    c.min_fg_pixels = cm.get_int("sample.min_fg_pixels", c.min_fg_pixels);
    return c;
}

TrainState init_train_state(const TrainConfig& cfg) {
    cfg.validate();
    TrainState st;
    st.cfg = cfg;
    st.gen = init_model(cfg.model);
    st.disc = init_discriminator(cfg.model);
    st.lf = LeapfrogParams::init({cfg.model.latent_channels, cfg.model.latent_h(), cfg.model.latent_w()},
                                 cfg.lf_eps0, cfg.lf_k, cfg.lf_mass, cfg.lf_learnable);
    // log_eps rides with the generator parameter set so one optimizer covers it
    st.gen.params.add("hmc.log_eps", st.lf.log_eps);
    st.opt_gen = AdamW(cfg.opt, st.gen.params);
    st.opt_disc = AdamW(cfg.disc_opt, st.disc);
    st.rng = Rng(mix_seed(cfg.seed, 0x7121A1));
    st.iteration = 0;
    return st;
}

LossReport train_iteration(TrainState& st, const SliceDataset& ds, const FeatureExtractor& fx) {
    const TrainConfig& cfg = st.cfg;
    const ModelConfig& mc = cfg.model;
    const std::int64_t n = static_cast<std::int64_t>(ds.pairs.size());
    if (n == 0) throw ConfigError("train_iteration: empty dataset");
    const std::int64_t bs = cfg.batch_size;
    const std::int64_t hw = mc.slice_h * mc.slice_w;
    const Shape zshape = {bs, mc.latent_channels, mc.latent_h(), mc.latent_w()};

    // rng consumption order is part of the checkpoint contract
    Tensor x({bs, 1, mc.slice_h, mc.slice_w});
    Tensor m({bs, 1, mc.slice_h, mc.slice_w});
    for (std::int64_t i = 0; i < bs; ++i) {
        const SlicePair& p = ds.pairs[static_cast<std::size_t>(st.rng.uniform_int(n))];
        std::copy(p.image.data(), p.image.data() + hw, x.data() + i * hw);
        std::copy(p.mask.data(), p.mask.data() + hw, m.data() + i * hw);
    }
    ElboInputs in;
    in.z_noise = st.rng.normal_tensor(zshape);
    in.rho_noise = st.rng.normal_tensor(zshape);
    const Tensor z_prior = st.rng.normal_tensor(zshape);

    Graph g;
    // split the generator set back into model params and log_eps
    ParamVars pv_gen;
    Var log_eps_leaf;
    for (const auto& [name, t] : st.gen.params.entries) {
        Var leaf = g.leaf(t, true);
        pv_gen.entries.emplace_back(name, leaf);
        if (name == "hmc.log_eps") log_eps_leaf = leaf;
    }
    ParamVars pv_disc = enter_params(g, st.disc);
    in.x = g.leaf(x);
    in.m = g.leaf(m);

    LeapfrogVars lv;
    lv.eps = vexp(log_eps_leaf);
    lv.mass = st.lf.mass;
    lv.K = st.lf.K;

    ElboOptions opt;
    opt.gaussian_image_likelihood = cfg.gaussian_image_likelihood;
    ElboTerms elbo = hvae_elbo_g(g, mc, pv_gen, lv, in, opt);

    auto [fake_img, fake_msk] = decode_g(g, mc, pv_gen, g.leaf(z_prior));
    Var fake_pair = concat_ch(fake_img, fake_msk);
    Var real_pair = concat_ch(in.x, in.m);
    Var real_logits = discriminate_g(g, mc, pv_disc, real_pair);
    Var fake_logits = discriminate_g(g, mc, pv_disc, fake_pair);
    Var disc_term = disc_loss_g(g, real_logits, fake_logits);
    Var gen_term = gen_loss_g(g, fake_logits);

    auto [feature, l1] = feature_recon_loss_g(g, fx, elbo.image_out, in.x);
    const LossWeights w = cfg.weights();
    Var global = global_loss_g(g, elbo.elbo, feature, l1, gen_term, w, st.iteration);

    LossReport rep;
    rep.iteration = st.iteration;
    rep.elbo_h = g.value(elbo.elbo)[0];
    rep.recon_image = g.value(elbo.recon_image)[0];
    rep.recon_mask = g.value(elbo.recon_mask)[0];
    rep.kl_or_entropy = g.value(elbo.kl_or_entropy)[0];
    rep.kinetic = g.value(elbo.kinetic)[0];
    rep.feature = g.value(feature)[0];
    rep.l1 = g.value(l1)[0];
    rep.disc_gen = g.value(gen_term)[0];
    rep.disc_disc = g.value(disc_term)[0];
    rep.global = g.value(global)[0];
    if (!rep.all_finite())
        throw NumericError("training loss went non-finite in component '" + rep.worst_component() +
                           "' at iteration " + std::to_string(st.iteration));

    // generator step
    {
        std::vector<Var> wrt;
        wrt.reserve(pv_gen.entries.size());
        for (const auto& [name, v] : pv_gen.entries) wrt.push_back(v);
        auto gv = g.gradients(global, wrt);
        std::vector<Tensor> grads;
        grads.reserve(gv.size());
        for (Var v : gv) grads.push_back(g.value(v));
        st.opt_gen.step(st.gen.params, grads, {"hmc.log_eps"});
        st.lf.log_eps = st.gen.params.at("hmc.log_eps");
    }
    // discriminator step, gated by the warm-up
    if (st.iteration >= w.warmup_iters()) {
        auto wrt = pv_disc.vars();
        auto gv = g.gradients(disc_term, wrt);
        std::vector<Tensor> grads;
        grads.reserve(gv.size());
        for (Var v : gv) grads.push_back(g.value(v));
        st.opt_disc.step(st.disc, grads);
    }
    ++st.iteration;
    return rep;
}

void save_checkpoint(const TrainState& st, const std::filesystem::path& path) {
    Archive ar;
    ar.meta += kv_line("format", "dhvae-ckpt-1");
    ar.meta += st.cfg.to_meta();
    ar.meta += kv_line("state.iteration", std::to_string(st.iteration));
    ar.meta += kv_line("state.rng", st.rng.state_str());
    for (const auto& [name, t] : st.gen.params.entries) ar.add_tensor("gen." + name, t);
    for (const auto& [name, t] : st.disc.entries) ar.add_tensor("d." + name, t);
    ar.add_tensor("hmc.mass", st.lf.mass);
    st.opt_gen.save(ar, "optg");
    st.opt_disc.save(ar, "optd");
    ar.write(path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
    const Archive ar = Archive::read(path);
    const auto kv = parse_kv_lines(ar.meta);
    if (!kv.count("format") || kv.at("format") != "dhvae-ckpt-1")
        throw FormatError("not a dhvae-ckpt-1 checkpoint: " + path.string(), 8);
    TrainState st;
    st.cfg = TrainConfig::from_meta(ar.meta);
    st.cfg.model.slice_h = std::stoll(kv.at("model.slice_h"));
    st.cfg.model.slice_w = std::stoll(kv.at("model.slice_w"));
    st.gen = init_model(st.cfg.model);
    st.gen.params.add("hmc.log_eps", Tensor({1}));
    st.disc = init_discriminator(st.cfg.model);
    for (auto& [name, t] : st.gen.params.entries) t = ar.entry("gen." + name).to_tensor();
    for (auto& [name, t] : st.disc.entries) t = ar.entry("d." + name).to_tensor();
    st.lf = LeapfrogParams::init({st.cfg.model.latent_channels, st.cfg.model.latent_h(), st.cfg.model.latent_w()},
                                 st.cfg.lf_eps0, st.cfg.lf_k, st.cfg.lf_mass, st.cfg.lf_learnable);
    st.lf.log_eps = st.gen.params.at("hmc.log_eps");
    st.lf.mass = ar.entry("hmc.mass").to_tensor();
    st.opt_gen = AdamW(st.cfg.opt, st.gen.params);
    st.opt_gen.load(ar, "optg", st.gen.params);
    st.opt_disc = AdamW(st.cfg.disc_opt, st.disc);
    st.opt_disc.load(ar, "optd", st.disc);
    st.iteration = std::stoll(kv.at("state.iteration"));
    st.rng = Rng::from_state_str(kv.at("state.rng"));
    return st;
}

namespace {

TrainResult run_training(TrainState& st, const SliceDataset& ds, const std::filesystem::path& out_dir) {
    if (ds.pairs.empty()) throw ConfigError("train_generator: empty dataset");
    ds.validate();
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path csv_path = out_dir / "loss.csv";
    const bool fresh = !std::filesystem::exists(csv_path) || st.iteration == 0;
    std::ofstream csv(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot open " + csv_path.string());
    if (fresh) csv << LossReport::csv_header() << "\n";

    FeatureExtractor fx = resolve_extractor(st.cfg.extractor, st.cfg.seed);
    const std::filesystem::path final_path = out_dir / "checkpoint.dhvae";
    TrainResult result;
    std::filesystem::path last_good;
    while (st.iteration < st.cfg.iterations) {
        LossReport rep;
        try {
            rep = train_iteration(st, ds, fx);
        } catch (const NumericError& e) {
            std::ofstream diag(out_dir / "abort.txt");
            diag << e.what() << "\n";
            if (!last_good.empty()) diag << "last good checkpoint: " << last_good.string() << "\n";
            throw;
        }
        csv << rep.csv_row() << "\n";
        result.reports.push_back(rep);
        if (st.iteration % st.cfg.checkpoint_every == 0 || st.iteration == st.cfg.iterations) {
            const auto ck = out_dir / ("ckpt_" + std::to_string(st.iteration) + ".dhvae");
            save_checkpoint(st, ck);
            last_good = ck;
        }
    }
    csv.flush();
    save_checkpoint(st, final_path);
    result.checkpoint = final_path;
    return result;
}

}  // namespace

TrainResult train_generator(const SliceDataset& ds, const TrainConfig& cfg,
                            const std::filesystem::path& out_dir) {
    TrainConfig c = cfg;
    c.model.slice_h = ds.slice_h;
    c.model.slice_w = ds.slice_w;
    TrainState st = init_train_state(c);
    return run_training(st, ds, out_dir);
}

TrainResult resume_training(TrainState st, const SliceDataset& ds, const std::filesystem::path& out_dir) {
    return run_training(st, ds, out_dir);
}

std::vector<SlicePair> generate_pairs(const ModelParams& gen, std::int64_t n, std::uint64_t seed,
                                      std::int64_t min_fg) {
    if (n < 1) throw ConfigError("generate_pairs: n must be >= 1");
    if (min_fg < 1) throw ConfigError("generate_pairs: min_fg must be >= 1");
    const ModelConfig& mc = gen.cfg;
    Rng rng(mix_seed(seed, 0x5A3));
    std::vector<SlicePair> out;
    out.reserve(static_cast<std::size_t>(n));
    const std::int64_t budget = std::max<std::int64_t>(50 * n, 1000);
    std::int64_t draws = 0;
    while (static_cast<std::int64_t>(out.size()) < n) {
        if (draws >= budget) {
            const double rate = static_cast<double>(out.size()) / static_cast<double>(draws);
            throw GenerationError("sampling retry budget exhausted after " + std::to_string(draws) +
                                  " draws (acceptance rate " + format_double(rate) + ")");
        }
        Tensor z = rng.normal_tensor({mc.latent_channels, mc.latent_h(), mc.latent_w()});
        ++draws;
        auto [img, msk] = decode(gen, z);
        Tensor bin({mc.slice_h, mc.slice_w});
        std::int64_t fg = 0;
        for (std::int64_t i = 0; i < bin.numel(); ++i) {
            bin[i] = msk[i] >= 0.5 ? 1.0 : 0.0;
            fg += bin[i] != 0.0;
        }
        if (fg < min_fg) continue;
        SlicePair p;
        p.image = clamp(img, 0.0, 1.0);
        p.mask = std::move(bin);
        p.subject_id = "synth" + std::to_string(out.size());
        p.slice_index = static_cast<std::int64_t>(out.size());
        p.provenance = Provenance::synthetic;
        p.validate();
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<SlicePair> generate_pairs(const std::filesystem::path& checkpoint, std::int64_t n,
                                      std::uint64_t seed, std::optional<std::int64_t> min_fg) {
    TrainState st = load_checkpoint(checkpoint);
    ModelParams gen = st.gen;
    // drop the step-size rider; decode uses model params only
    for (auto it = gen.params.entries.begin(); it != gen.params.entries.end(); ++it)
        if (it->first == "hmc.log_eps") {
            gen.params.entries.erase(it);
            break;
        }
    return generate_pairs(gen, n, seed, min_fg.value_or(st.cfg.min_fg_pixels));
}

MetricsReport evaluate_image_quality(const std::vector<SlicePair>& real, const std::vector<SlicePair>& synth,
                                     const ModelParams& recon_model, const FeatureExtractor& fx,
                                     std::uint64_t seed, const std::string& config_hash) {
    if (real.empty() || synth.empty())
        throw InsufficientSampleError("evaluate_image_quality: both sets must be nonempty");
    MetricsReport rep;
    rep.n_real = static_cast<std::int64_t>(real.size());
    rep.n_synth = static_cast<std::int64_t>(synth.size());
    rep.seed = seed;
    rep.config_hash = config_hash;
    rep.backbone = fx.describe();

    // PSNR over encoder-mean reconstructions
    double psnr_sum = 0;
    for (const auto& p : real) {
        const LatentGaussian lg = encode(recon_model, p.image, p.mask);
        auto [img, msk] = decode(recon_model, lg.mean);
        psnr_sum += psnr(p.image, img, 1.0);
    }
    rep.add("psnr", psnr_sum / static_cast<double>(real.size()));

    if (real.size() < 2 || synth.size() < 2)
        throw InsufficientSampleError("evaluate_image_quality: need >= 2 samples per set for covariance");
    const std::int64_t d = embedding_dim(fx);
    Tensor er({rep.n_real, d}), es({rep.n_synth, d});
    for (std::int64_t i = 0; i < rep.n_real; ++i) {
        const Tensor e = embed_image(fx, real[static_cast<std::size_t>(i)].image);
        std::copy(e.data(), e.data() + d, er.data() + i * d);
    }
    for (std::int64_t i = 0; i < rep.n_synth; ++i) {
        const Tensor e = embed_image(fx, synth[static_cast<std::size_t>(i)].image);
        std::copy(e.data(), e.data() + d, es.data() + i * d);
    }
    rep.add("fid", fid(gaussian_stats(er), gaussian_stats(es)));

    // LPIPS over index-aligned pairs of the two sets
    const std::int64_t n_pairs = std::min(rep.n_real, rep.n_synth);
    double lp = 0;
    for (std::int64_t i = 0; i < n_pairs; ++i)
        lp += lpips(real[static_cast<std::size_t>(i)].image, synth[static_cast<std::size_t>(i)].image, fx);
    rep.add("lpips", lp / static_cast<double>(n_pairs));
    rep.notes.push_back("lpips over " + std::to_string(n_pairs) + " index-aligned pairs");
    return rep;
}

MetricsReport evaluate_mask_quality(const std::vector<SlicePair>& real, const std::vector<SlicePair>& synth,
                                    std::uint64_t seed, const std::string& config_hash) {
    if (real.empty() || synth.empty())
        throw InsufficientSampleError("evaluate_mask_quality: both sets must be nonempty");
    std::vector<Tensor> rm, sm;
    rm.reserve(real.size());
    sm.reserve(synth.size());
    for (const auto& p : real) rm.push_back(p.mask);
    for (const auto& p : synth) sm.push_back(p.mask);
    const PixelClassDistribution pr = pixel_class_distribution(rm);
    const PixelClassDistribution ps = pixel_class_distribution(sm);
    MetricsReport rep;
    rep.n_real = pr.n_masks;
    rep.n_synth = ps.n_masks;
    rep.seed = seed;
    rep.config_hash = config_hash;
    rep.add("jsd", divergence(pr, ps, DivergenceMode::jsd));
    rep.add("kld_real_synth", divergence(pr, ps, DivergenceMode::kld));
    rep.add("kld_synth_real", divergence(ps, pr, DivergenceMode::kld));
    return rep;
}

}  // namespace dhvae
