#include "dhvae/losses.hpp"

#include <cmath>
#include <sstream>

#include "dhvae/errors.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

LossWeights LossWeights::from_alpha(double alpha, std::int64_t warmup_iters) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must be in [0,1]");
    if (warmup_iters < 0) throw ConfigError("warmup_iters must be >= 0");
    return LossWeights(alpha, warmup_iters);
}

LossWeights LossWeights::from_beta(double beta, std::int64_t warmup_iters) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0,1]");
    return from_alpha(1.0 - beta, warmup_iters);
}

const std::vector<std::string>& LossReport::component_names() {
    static const std::vector<std::string> names = {
        "disc_disc", "disc_gen", "elbo_h", "feature", "global",
        "kinetic",   "kl_or_entropy", "l1", "recon_image", "recon_mask",
    };
    return names;
}

double LossReport::component(const std::string& name) const {
    if (name == "disc_disc") return disc_disc;
    if (name == "disc_gen") return disc_gen;
    if (name == "elbo_h") return elbo_h;
    if (name == "feature") return feature;
    if (name == "global") return global;
    if (name == "kinetic") return kinetic;
    if (name == "kl_or_entropy") return kl_or_entropy;
    if (name == "l1") return l1;
    if (name == "recon_image") return recon_image;
    if (name == "recon_mask") return recon_mask;
    throw ConfigError("unknown loss component: " + name);
}

bool LossReport::all_finite() const { return worst_component().empty(); }

std::string LossReport::worst_component() const {
    for (const auto& n : component_names())
        if (!std::isfinite(component(n))) return n;
    return "";
}

std::string LossReport::csv_header() {
    std::string s = "iteration";
    for (const auto& n : component_names()) s += "," + n;
    return s;
}

std::string LossReport::csv_row() const {
    std::string s = std::to_string(iteration);
    for (const auto& n : component_names()) s += "," + format_double(component(n));
    return s;
}

LossReport LossReport::from_csv_row(const std::string& header, const std::string& row) {
    std::istringstream hs(header), rs(row);
    std::string hcol, rcol;
    LossReport rep;
    while (std::getline(hs, hcol, ',')) {
        if (!std::getline(rs, rcol, ',')) throw FormatError("loss CSV row shorter than header", 0);
        if (hcol == "iteration") {
            rep.iteration = std::stoll(rcol);
            continue;
        }
        const double v = std::stod(rcol);
        if (hcol == "disc_disc") rep.disc_disc = v;
        else if (hcol == "disc_gen") rep.disc_gen = v;
        else if (hcol == "elbo_h") rep.elbo_h = v;
        else if (hcol == "feature") rep.feature = v;
        else if (hcol == "global") rep.global = v;
        else if (hcol == "kinetic") rep.kinetic = v;
        else if (hcol == "kl_or_entropy") rep.kl_or_entropy = v;
        else if (hcol == "l1") rep.l1 = v;
        else if (hcol == "recon_image") rep.recon_image = v;
        else if (hcol == "recon_mask") rep.recon_mask = v;
        else throw FormatError("unknown loss CSV column: " + hcol, 0);
    }
    return rep;
}

// --- reconstruction -----------------------------------------------------------------

namespace {
void check_unit_range(const Tensor& t, const char* what) {
    for (std::int64_t i = 0; i < t.numel(); ++i)
        if (!(t[i] >= 0.0 && t[i] <= 1.0))
            throw DomainError(std::string(what) + " value " + std::to_string(t[i]) + " outside [0,1]");
}

double bce_sum(const Tensor& target, const Tensor& prob) {
    double s = 0;
    for (std::int64_t i = 0; i < target.numel(); ++i) {
        const double p = std::min(1.0 - kProbEps, std::max(kProbEps, prob[i]));
        s += target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
    }
    return -s;
}
}  // namespace

std::pair<double, double> recon_log_likelihood(const Tensor& x, const Tensor& m, const Tensor& image_out,
                                               const Tensor& mask_prob) {
    if (!x.same_shape(image_out) || !m.same_shape(mask_prob) || !x.same_shape(m))
        throw ShapeError("recon_log_likelihood: all inputs must share one shape");
    check_unit_range(x, "image target");
    check_unit_range(m, "mask target");
    return {-bce_sum(x, image_out), -bce_sum(m, mask_prob)};
}

Var bce_sum_g(Graph& g, Var target, Var prob) {
    const Shape s = g.shape(target);
    if (s != g.shape(prob)) throw ShapeError("bce: target/prob shapes differ");
    const std::int64_t N = s[0];
    Var p = clamp(prob, kProbEps, 1.0 - kProbEps);
    Var one = g.constant(1.0);
    Var ll = add(mul(target, vlog(p)), mul(sub(one, target), vlog(sub(one, p))));
    return reshape(reduce_sum_to(neg(ll), {N, 1, 1, 1}), {N});
}

Var gaussian_ll_sum_g(Graph& g, Var target, Var out, double sigma) {
    const Shape s = g.shape(target);
    const std::int64_t N = s[0];
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    const double log_norm = -0.5 * std::log(2.0 * 3.14159265358979323846 * sigma * sigma);
    Var d = sub(target, out);
    Var ll = add(mul(neg(mul(d, d)), g.constant(inv2s2)), g.constant(log_norm));
    return reshape(reduce_sum_to(ll, {N, 1, 1, 1}), {N});
}

// --- feature + L1 --------------------------------------------------------------------

std::pair<Var, Var> feature_recon_loss_g(Graph& g, const FeatureExtractor& fx, Var x_hat, Var x) {
    const Shape s = g.shape(x_hat);
    if (s != g.shape(x)) throw ShapeError("feature_recon_loss: shapes differ");
    const double n_px = static_cast<double>(s[2] * s[3]);
    const double n_batch = static_cast<double>(s[0]);
    auto taps_hat = extract_features_g(g, fx, x_hat);
    auto taps = extract_features_g(g, fx, x);
    Var feature;
    for (std::size_t j = 0; j < taps.size(); ++j) {
        Var d = sub(taps_hat[j], taps[j]);
        Var term = sum_all(mul(d, d));
        feature = j == 0 ? term : add(feature, term);
    }
    feature = mul(feature, g.constant(1.0 / n_batch));  // batch mean of per-sample sums
    Var l1 = mul(sum_all(leaky_relu(sub(x_hat, x), -1.0)), g.constant(1.0 / (n_px * n_batch)));
    return {feature, l1};
}

std::pair<double, double> feature_recon_loss(const Tensor& x_hat, const Tensor& x, const FeatureExtractor& fx) {
    if (x_hat.rank() != 2 || !x_hat.same_shape(x))
        throw ShapeError("feature_recon_loss expects two equal rank-2 images");
    Graph g;
    Var a = g.leaf(x_hat.reshaped({1, 1, x_hat.dim(0), x_hat.dim(1)}));
    Var b = g.leaf(x.reshaped({1, 1, x.dim(0), x.dim(1)}));
    auto [f, l] = feature_recon_loss_g(g, fx, a, b);
    return {g.value(f)[0], g.value(l)[0]};
}

// --- adversarial -----------------------------------------------------------------------

namespace {
Var mean_log_sigmoid(Graph& g, Var logits, bool complement) {
    Var p = clamp(vsigmoid(logits), kProbEps, 1.0 - kProbEps);
    if (complement) p = sub(g.constant(1.0), p);
    return mean_all(vlog(p));
}
}  // namespace

Var disc_loss_g(Graph& g, Var real_logits, Var fake_logits) {
    return neg(add(mean_log_sigmoid(g, real_logits, false), mean_log_sigmoid(g, fake_logits, true)));
}

Var gen_loss_g(Graph& g, Var fake_logits) { return neg(mean_log_sigmoid(g, fake_logits, false)); }

std::pair<double, double> adversarial_losses(const Tensor& real_logits, const Tensor& fake_logits) {
    Graph g;
    Var r = g.leaf(real_logits);
    Var f = g.leaf(fake_logits);
    if (!real_logits.all_finite() || !fake_logits.all_finite())
        throw NumericError("adversarial_losses: non-finite logits");
    return {g.value(disc_loss_g(g, r, f))[0], g.value(gen_loss_g(g, f))[0]};
}

// --- global ------------------------------------------------------------------------------

double global_loss(const LossReport& c, const LossWeights& w, std::int64_t iteration) {
    const double reg = iteration < w.warmup_iters() ? c.feature + c.l1 : c.disc_gen + c.feature + c.l1;
    return w.alpha() * c.elbo_h + w.beta() * reg;
}

Var global_loss_g(Graph& g, Var elbo_h, Var feature, Var l1, Var disc_gen, const LossWeights& w,
                  std::int64_t iteration) {
    Var reg = add(feature, l1);
    if (iteration >= w.warmup_iters()) reg = add(reg, disc_gen);
    return add(mul(g.constant(w.alpha()), elbo_h), mul(g.constant(w.beta()), reg));
}

}  // namespace dhvae
