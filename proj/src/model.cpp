#include "dhvae/model.hpp"

#include <cmath>
#include <sstream>

#include "dhvae/errors.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

// --- ParamSet / ParamVars ---------------------------------------------------

void ParamSet::add(const std::string& name, Tensor t) {
    if (has(name)) throw ConfigError("duplicate parameter name: " + name);
    entries.emplace_back(name, std::move(t));
}

Tensor& ParamSet::at(const std::string& name) {
    for (auto& [n, t] : entries)
        if (n == name) return t;
    throw ConfigError("no parameter named " + name);
}

const Tensor& ParamSet::at(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return t;
    throw ConfigError("no parameter named " + name);
}

bool ParamSet::has(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return true;
    return false;
}

std::int64_t ParamSet::param_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries) n += t.numel();
    return n;
}

bool ParamSet::all_finite() const {
    for (const auto& [name, t] : entries)
        if (!t.all_finite()) return false;
    return true;
}

ParamVars enter_params(Graph& g, const ParamSet& ps) {
    ParamVars pv;
    pv.entries.reserve(ps.entries.size());
    for (const auto& [name, t] : ps.entries) pv.entries.emplace_back(name, g.leaf(t, true));
    return pv;
}

Var ParamVars::at(const std::string& name) const {
    for (const auto& [n, v] : entries)
        if (n == name) return v;
    throw ConfigError("no parameter var named " + name);
}

std::vector<Var> ParamVars::vars() const {
    std::vector<Var> out;
    out.reserve(entries.size());
    for (const auto& [n, v] : entries) out.push_back(v);
    return out;
}

// --- ModelConfig --------------------------------------------------------------

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("model depth must be >= 1");
    if (max_filters < base_filters) throw ConfigError("max_filters must be >= base_filters");
    if (in_channels < 1) throw ConfigError("model channel counts must be positive");
    // standardizing a kernel needs at least two fan-in elements; the 1x1
    // latent convolutions have fan-in = channel count
    if (latent_channels < 2 || base_filters < 2)
        throw ConfigError("latent_channels and base_filters must be >= 2 (weight standardization needs fan-in >= 2)");
    const std::int64_t div = std::int64_t{1} << depth;
    if (slice_h % div != 0 || slice_w % div != 0)
        throw ConfigError("slice shape " + std::to_string(slice_h) + "x" + std::to_string(slice_w) +
                          " not divisible by 2^depth = " + std::to_string(div));
    if (disc_depth < 1) throw ConfigError("disc_depth must be >= 1");
    if ((slice_h >> disc_depth) < 1 || (slice_w >> disc_depth) < 1)
        throw ConfigError("disc_depth too large for slice shape");
    for (auto i : attention_at)
        if (i != -1 && (i < 0 || i >= depth)) throw ConfigError("attention_at index out of range");
}

std::int64_t ModelConfig::filters_at(std::int64_t level) const {
    std::int64_t f = base_filters;
    for (std::int64_t i = 0; i < level; ++i) f = std::min(f * 2, max_filters);
    return f;
}

std::set<std::int64_t> ModelConfig::effective_attention() const {
    if (attention_at.empty()) return {depth - 1};
    if (attention_at.count(-1)) return {};
    return attention_at;
}

std::string ModelConfig::to_meta() const {
    std::string s;
    s += kv_line("model.in_channels", std::to_string(in_channels));
    s += kv_line("model.base_filters", std::to_string(base_filters));
    s += kv_line("model.depth", std::to_string(depth));
    s += kv_line("model.max_filters", std::to_string(max_filters));
    s += kv_line("model.latent_channels", std::to_string(latent_channels));
    s += kv_line("model.slice_h", std::to_string(slice_h));
    s += kv_line("model.slice_w", std::to_string(slice_w));
    s += kv_line("model.disc_filters", std::to_string(disc_filters));
    s += kv_line("model.disc_depth", std::to_string(disc_depth));
    s += kv_line("model.seed", std::to_string(seed));
    std::string att;
    for (auto i : attention_at) att += (att.empty() ? "" : ",") + std::to_string(i);
    s += kv_line("model.attention_at", att);
    return s;
}

ModelConfig ModelConfig::from_meta(const std::string& text) {
    const auto kv = parse_kv_lines(text);
    ModelConfig c;
    auto geti = [&](const char* k, std::int64_t def) {
        return kv.count(k) ? std::stoll(kv.at(k)) : def;
    };
    c.in_channels = geti("model.in_channels", c.in_channels);
    c.base_filters = geti("model.base_filters", c.base_filters);
    c.depth = geti("model.depth", c.depth);
    c.max_filters = geti("model.max_filters", c.max_filters);
    c.latent_channels = geti("model.latent_channels", c.latent_channels);
    c.slice_h = geti("model.slice_h", c.slice_h);
    c.slice_w = geti("model.slice_w", c.slice_w);
    c.disc_filters = geti("model.disc_filters", c.disc_filters);
    c.disc_depth = geti("model.disc_depth", c.disc_depth);
    c.seed = kv.count("model.seed") ? std::stoull(kv.at("model.seed")) : 0;
    if (kv.count("model.attention_at") && !kv.at("model.attention_at").empty()) {
        std::istringstream is(kv.at("model.attention_at"));
        std::string item;
        while (std::getline(is, item, ',')) c.attention_at.insert(std::stoll(item));
    }
    return c;
}

// --- initialization --------------------------------------------------------------

namespace {

Tensor conv_init(Rng& rng, std::int64_t cout, std::int64_t cin, std::int64_t kh, std::int64_t kw) {
    const double std = std::sqrt(2.0 / static_cast<double>(cin * kh * kw));
    return rng.normal_tensor({cout, cin, kh, kw}, 0.0, std);
}

void add_resblock(ParamSet& ps, Rng& rng, const std::string& prefix, std::int64_t c) {
    ps.add(prefix + ".gn1.g", Tensor::full({c}, 1.0));
    ps.add(prefix + ".gn1.b", Tensor({c}));
    ps.add(prefix + ".conv1.w", conv_init(rng, c, c, 3, 3));
    ps.add(prefix + ".conv1.b", Tensor({c}));
    ps.add(prefix + ".gn2.g", Tensor::full({c}, 1.0));
    ps.add(prefix + ".gn2.b", Tensor({c}));
    ps.add(prefix + ".conv2.w", conv_init(rng, c, c, 3, 3));
    ps.add(prefix + ".conv2.b", Tensor({c}));
}

void add_attention(ParamSet& ps, Rng& rng, const std::string& prefix, std::int64_t c) {
    const double std = 1.0 / std::sqrt(static_cast<double>(c));
    for (const char* nm : {"wq", "wk", "wv", "wo"}) ps.add(prefix + "." + nm, rng.normal_tensor({c, c}, 0.0, std));
    for (const char* nm : {"bq", "bk", "bv", "bo"}) ps.add(prefix + "." + nm, Tensor({c}));
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    ModelParams mp;
    mp.cfg = cfg;
    ParamSet& ps = mp.params;
    const auto attn = cfg.effective_attention();

    ps.add("enc.stem.w", conv_init(rng, cfg.filters_at(0), cfg.in_channels, 3, 3));
    ps.add("enc.stem.b", Tensor({cfg.filters_at(0)}));
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
        const std::int64_t c = cfg.filters_at(i);
        add_resblock(ps, rng, "enc.b" + std::to_string(i) + ".res", c);
        if (attn.count(i)) add_attention(ps, rng, "enc.b" + std::to_string(i) + ".attn", c);
        ps.add("enc.b" + std::to_string(i) + ".down_gn.g", Tensor::full({c}, 1.0));
        ps.add("enc.b" + std::to_string(i) + ".down_gn.b", Tensor({c}));
        ps.add("enc.b" + std::to_string(i) + ".down.w", conv_init(rng, cfg.filters_at(i + 1), c, 3, 3));
        ps.add("enc.b" + std::to_string(i) + ".down.b", Tensor({cfg.filters_at(i + 1)}));
    }
    const std::int64_t cmid = cfg.filters_at(cfg.depth);
    add_resblock(ps, rng, "enc.mid.res", cmid);
    add_attention(ps, rng, "enc.mid.attn", cmid);
    ps.add("enc.head_gn.g", Tensor::full({cmid}, 1.0));
    ps.add("enc.head_gn.b", Tensor({cmid}));
    ps.add("enc.head.w", conv_init(rng, 2 * cfg.latent_channels, cmid, 1, 1));
    ps.add("enc.head.b", Tensor({2 * cfg.latent_channels}));

    ps.add("dec.in.w", conv_init(rng, cmid, cfg.latent_channels, 1, 1));
    ps.add("dec.in.b", Tensor({cmid}));
    add_resblock(ps, rng, "dec.mid.res", cmid);
    add_attention(ps, rng, "dec.mid.attn", cmid);
    for (std::int64_t j = 0; j < cfg.depth; ++j) {
        const std::int64_t level = cfg.depth - 1 - j;  // mirror of encoder block `level`
        const std::int64_t cin = cfg.filters_at(level + 1);
        const std::int64_t cout = cfg.filters_at(level);
        ps.add("dec.b" + std::to_string(j) + ".up_gn.g", Tensor::full({cin}, 1.0));
        ps.add("dec.b" + std::to_string(j) + ".up_gn.b", Tensor({cin}));
        ps.add("dec.b" + std::to_string(j) + ".up.w", conv_init(rng, cout, cin, 3, 3));
        ps.add("dec.b" + std::to_string(j) + ".up.b", Tensor({cout}));
        add_resblock(ps, rng, "dec.b" + std::to_string(j) + ".res", cout);
        if (attn.count(level)) add_attention(ps, rng, "dec.b" + std::to_string(j) + ".attn", cout);
    }
    const std::int64_t c0 = cfg.filters_at(0);
    ps.add("dec.out.gn.g", Tensor::full({c0}, 1.0));
    ps.add("dec.out.gn.b", Tensor({c0}));
    ps.add("dec.out.conv.w", conv_init(rng, 2, c0, 3, 3));
    ps.add("dec.out.conv.b", Tensor({2}));
    return mp;
}

ParamSet init_discriminator(const ModelConfig& cfg) {
    cfg.validate();
    Rng rng(mix_seed(cfg.seed, 0xD15C));
    ParamSet ps;
    std::int64_t cin = 2;
    for (std::int64_t i = 0; i < cfg.disc_depth; ++i) {
        const std::int64_t cout = std::min(cfg.disc_filters << i, 8 * cfg.disc_filters);
        ps.add("disc.l" + std::to_string(i) + ".w", conv_init(rng, cout, cin, 3, 3));
        ps.add("disc.l" + std::to_string(i) + ".b", Tensor({cout}));
        if (i > 0) {  // no norm on the first layer, as usual for patch critics
            ps.add("disc.l" + std::to_string(i) + ".gn.g", Tensor::full({cout}, 1.0));
            ps.add("disc.l" + std::to_string(i) + ".gn.b", Tensor({cout}));
        }
        cin = cout;
    }
    ps.add("disc.out.w", conv_init(rng, 1, cin, 3, 3));
    ps.add("disc.out.b", Tensor({1}));
    return ps;
}

// --- building blocks ----------------------------------------------------------------

Var ws_conv(Graph& g, Var x, Var w, Var b, const Conv2dSpec& spec) {
    const Shape& ws = g.shape(w);
    const std::int64_t cout = ws[0];
    const double fan = static_cast<double>(ws[1] * ws[2] * ws[3]);
    Var m = mul(reduce_sum_to(w, {cout, 1, 1, 1}), g.constant(1.0 / fan));
    Var wc = sub(w, m);
    Var v = mul(reduce_sum_to(mul(wc, wc), {cout, 1, 1, 1}), g.constant(1.0 / fan));
    Var what = div(wc, vsqrt(add(v, g.constant(1e-10))));
    Var y = conv2d(x, what, spec);
    return add(y, reshape(b, {1, cout, 1, 1}));
}

std::pair<Tensor, Tensor> standardized_kernel_stats(const Tensor& w) {
    const std::int64_t cout = w.dim(0);
    const double fan = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
    Tensor m = mul_scalar(reduce_sum_to(w, {cout, 1, 1, 1}), 1.0 / fan);
    Tensor wc = sub(w, m);
    Tensor v = mul_scalar(reduce_sum_to(mul(wc, wc), {cout, 1, 1, 1}), 1.0 / fan);
    Tensor what = div(wc, sqrt(add_scalar(v, 1e-10)));
    Tensor mean2 = mul_scalar(reduce_sum_to(what, {cout, 1, 1, 1}), 1.0 / fan).reshaped({cout});
    Tensor wc2 = sub(what, mean2.reshaped({cout, 1, 1, 1}));
    Tensor var2 = mul_scalar(reduce_sum_to(mul(wc2, wc2), {cout, 1, 1, 1}), 1.0 / fan).reshaped({cout});
    return {mean2, var2};
}

Var group_norm(Graph& g, Var x, Var gamma, Var beta, std::int64_t groups) {
    const Shape s = g.shape(x);  // (N,C,H,W)
    const std::int64_t N = s[0], C = s[1], H = s[2], W = s[3];
    std::int64_t G = std::min<std::int64_t>(groups, C);
    // G must divide C, and a group must hold at least two elements or the
    // normalization degenerates to zero (single-channel groups at 1x1)
    while (G > 1 && (C % G != 0 || (C / G) * H * W < 2)) --G;
    const std::int64_t m = (C / G) * H * W;
    Var xr = reshape(x, {N * G, m});
    Var mu = mul(reduce_sum_to(xr, {N * G, 1}), g.constant(1.0 / static_cast<double>(m)));
    Var xc = sub(xr, mu);
    Var var = mul(reduce_sum_to(mul(xc, xc), {N * G, 1}), g.constant(1.0 / static_cast<double>(m)));
    Var xn = div(xc, vsqrt(add(var, g.constant(1e-5))));
    Var y = reshape(xn, s);
    return add(mul(y, reshape(gamma, {1, C, 1, 1})), reshape(beta, {1, C, 1, 1}));
}

namespace {

const Conv2dSpec k3s1{3, 3, 1, 1};
const Conv2dSpec k3s2{3, 3, 2, 1};
const Conv2dSpec k1s1{1, 1, 1, 0};

Var resblock(Graph& g, const ParamVars& pv, const std::string& p, Var x) {
    Var h = swish(group_norm(g, x, pv.at(p + ".gn1.g"), pv.at(p + ".gn1.b"), 8));
    h = ws_conv(g, h, pv.at(p + ".conv1.w"), pv.at(p + ".conv1.b"), k3s1);
    h = swish(group_norm(g, h, pv.at(p + ".gn2.g"), pv.at(p + ".gn2.b"), 8));
    h = ws_conv(g, h, pv.at(p + ".conv2.w"), pv.at(p + ".conv2.b"), k3s1);
    return add(x, h);
}

// single-head scaled dot-product attention over the spatial grid, residual
Var attention(Graph& g, const ParamVars& pv, const std::string& p, Var x) {
    const Shape s = g.shape(x);
    const std::int64_t N = s[0], C = s[1], H = s[2], W = s[3], P = H * W;
    Var wq = pv.at(p + ".wq"), wk = pv.at(p + ".wk"), wv = pv.at(p + ".wv"), wo = pv.at(p + ".wo");
    Var bq = reshape(pv.at(p + ".bq"), {C, 1});
    Var bk = reshape(pv.at(p + ".bk"), {C, 1});
    Var bv = reshape(pv.at(p + ".bv"), {C, 1});
    Var bo = reshape(pv.at(p + ".bo"), {C, 1});
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(C));
    Var xr = reshape(x, {1, N * C, H, W});
    Var out;
    for (std::int64_t n = 0; n < N; ++n) {
        Var xs = reshape(slice_ch(xr, n * C, (n + 1) * C), {C, P});
        Var q = add(matmul(wq, xs), bq);
        Var k = add(matmul(wk, xs), bk);
        Var v = add(matmul(wv, xs), bv);
        Var scores = mul(matmul(q, k, true, false), g.constant(inv_sqrt_c));  // (P,P)
        // detached row max for a stable softmax
        Tensor rm({P, 1});
        const Tensor& sv = g.value(scores);
        for (std::int64_t i = 0; i < P; ++i) {
            double best = sv.at(i, 0);
            for (std::int64_t j = 1; j < P; ++j) best = std::max(best, sv.at(i, j));
            rm.at(i, 0) = best;
        }
        Var e = vexp(sub(scores, g.leaf(std::move(rm))));
        Var attn = div(e, reduce_sum_to(e, {P, 1}));
        Var mixed = matmul(v, attn, false, true);  // (C,P)
        Var y = add(xs, add(matmul(wo, mixed), bo));
        Var y4 = reshape(y, {1, C, H, W});
        out = n == 0 ? y4 : concat_ch(out, y4);
    }
    return reshape(out, {N, C, H, W});
}

}  // namespace

LatentGaussianVar encode_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var x) {
    const Shape& s = g.shape(x);
    if (s.size() != 4 || s[1] != cfg.in_channels || s[2] != cfg.slice_h || s[3] != cfg.slice_w)
        throw ShapeError("encode: input " + shape_str(s) + " does not match configured slice shape");
    const auto attn = cfg.effective_attention();
    Var h = ws_conv(g, x, pv.at("enc.stem.w"), pv.at("enc.stem.b"), k3s1);
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
        const std::string p = "enc.b" + std::to_string(i);
        h = resblock(g, pv, p + ".res", h);
        if (attn.count(i)) h = attention(g, pv, p + ".attn", h);
        h = swish(group_norm(g, h, pv.at(p + ".down_gn.g"), pv.at(p + ".down_gn.b"), 8));
        h = ws_conv(g, h, pv.at(p + ".down.w"), pv.at(p + ".down.b"), k3s2);
    }
    h = resblock(g, pv, "enc.mid.res", h);
    h = attention(g, pv, "enc.mid.attn", h);
    h = group_norm(g, h, pv.at("enc.head_gn.g"), pv.at("enc.head_gn.b"), 8);
    Var head = ws_conv(g, h, pv.at("enc.head.w"), pv.at("enc.head.b"), k1s1);
    LatentGaussianVar lg;
    lg.mean = slice_ch(head, 0, cfg.latent_channels);
    // bounded for numerical stability of exp(logvar/2)
    lg.logvar = clamp(slice_ch(head, cfg.latent_channels, 2 * cfg.latent_channels), -12.0, 8.0);
    return lg;
}

std::pair<Var, Var> decode_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var z) {
    const Shape& s = g.shape(z);
    if (s.size() != 4 || s[1] != cfg.latent_channels || s[2] != cfg.latent_h() || s[3] != cfg.latent_w())
        throw ShapeError("decode: latent " + shape_str(s) + " does not match configured latent shape");
    const auto attn = cfg.effective_attention();
    Var h = ws_conv(g, z, pv.at("dec.in.w"), pv.at("dec.in.b"), k1s1);
    h = resblock(g, pv, "dec.mid.res", h);
    h = attention(g, pv, "dec.mid.attn", h);
    for (std::int64_t j = 0; j < cfg.depth; ++j) {
        const std::string p = "dec.b" + std::to_string(j);
        h = swish(group_norm(g, h, pv.at(p + ".up_gn.g"), pv.at(p + ".up_gn.b"), 8));
        h = upsample_nearest2(h);
        h = ws_conv(g, h, pv.at(p + ".up.w"), pv.at(p + ".up.b"), k3s1);
        h = resblock(g, pv, p + ".res", h);
        if (attn.count(cfg.depth - 1 - j)) h = attention(g, pv, p + ".attn", h);
    }
    h = swish(group_norm(g, h, pv.at("dec.out.gn.g"), pv.at("dec.out.gn.b"), 8));
    Var y = vsigmoid(ws_conv(g, h, pv.at("dec.out.conv.w"), pv.at("dec.out.conv.b"), k3s1));
    return {slice_ch(y, 0, 1), slice_ch(y, 1, 2)};
}

Var discriminate_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var pair) {
    const Shape& s = g.shape(pair);
    if (s.size() != 4 || s[1] != 2 || s[2] != cfg.slice_h || s[3] != cfg.slice_w)
        throw ShapeError("discriminate: input " + shape_str(s) + " does not match configured slice shape");
    Var h = pair;
    for (std::int64_t i = 0; i < cfg.disc_depth; ++i) {
        const std::string p = "disc.l" + std::to_string(i);
        h = ws_conv(g, h, pv.at(p + ".w"), pv.at(p + ".b"), k3s2);
        if (i > 0) h = group_norm(g, h, pv.at(p + ".gn.g"), pv.at(p + ".gn.b"), 8);
        h = leaky_relu(h, 0.2);
    }
    return ws_conv(g, h, pv.at("disc.out.w"), pv.at("disc.out.b"), k3s1);
}

// --- tensor-level wrappers -------------------------------------------------------

LatentGaussian encode(const ModelParams& mp, const Tensor& image, const Tensor& mask) {
    if (image.rank() != 2 || !image.same_shape(mask))
        throw ShapeError("encode: image/mask must be equal-shaped rank-2 arrays");
    const std::int64_t H = image.dim(0), W = image.dim(1);
    Graph g;
    ParamVars pv = enter_params(g, mp.params);
    Var xi = g.leaf(image.reshaped({1, 1, H, W}));
    Var xm = g.leaf(mask.reshaped({1, 1, H, W}));
    LatentGaussianVar lg = encode_g(g, mp.cfg, pv, concat_ch(xi, xm));
    const std::int64_t C = mp.cfg.latent_channels, h = mp.cfg.latent_h(), w = mp.cfg.latent_w();
    return {g.value(lg.mean).reshaped({C, h, w}), g.value(lg.logvar).reshaped({C, h, w})};
}

Tensor reparameterize(const LatentGaussian& lg, const Tensor& noise) {
    if (!noise.same_shape(lg.mean)) throw ShapeError("reparameterize: noise shape must equal mean shape");
    return add(lg.mean, mul(exp(mul_scalar(lg.log_variance, 0.5)), noise));
}

std::pair<Tensor, Tensor> decode(const ModelParams& mp, const Tensor& z) {
    const std::int64_t C = mp.cfg.latent_channels, h = mp.cfg.latent_h(), w = mp.cfg.latent_w();
    if (z.shape() != Shape{C, h, w})
        throw ShapeError("decode: latent shape " + shape_str(z.shape()) + " does not match model");
    Graph g;
    ParamVars pv = enter_params(g, mp.params);
    auto [img, msk] = decode_g(g, mp.cfg, pv, g.leaf(z.reshaped({1, C, h, w})));
    const std::int64_t H = mp.cfg.slice_h, W = mp.cfg.slice_w;
    return {g.value(img).reshaped({H, W}), g.value(msk).reshaped({H, W})};
}

Tensor discriminate(const ModelConfig& cfg, const ParamSet& d_params, const Tensor& image, const Tensor& mask) {
    if (image.rank() != 2 || !image.same_shape(mask))
        throw ShapeError("discriminate: image/mask must be equal-shaped rank-2 arrays");
    Graph g;
    ParamVars pv = enter_params(g, d_params);
    const std::int64_t H = image.dim(0), W = image.dim(1);
    Var xi = g.leaf(image.reshaped({1, 1, H, W}));
    Var xm = g.leaf(mask.reshaped({1, 1, H, W}));
    Var logits = discriminate_g(g, cfg, pv, concat_ch(xi, xm));
    const Shape& s = g.shape(logits);
    return g.value(logits).reshaped({s[2], s[3]});
}

}  // namespace dhvae
