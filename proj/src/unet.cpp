#include "dhvae/unet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dhvae/errors.hpp"
#include "dhvae/losses.hpp"
#include "dhvae/metrics.hpp"
#include "dhvae/optimizer.hpp"
#include "dhvae/rng.hpp"

namespace dhvae {

void SegConfig::validate() const {
    if (depth < 1 || base_filters < 1 || epochs < 1 || batch_size < 1)
        throw ConfigError("segmenter config values must be positive");
    if (!(lr > 0.0)) throw ConfigError("segmenter lr must be positive");
    const std::int64_t div = std::int64_t{1} << depth;
    if (slice_h % div != 0 || slice_w % div != 0)
        throw ConfigError("segmenter slice shape must be divisible by 2^depth");
}

namespace {

const Conv2dSpec k3s1{3, 3, 1, 1};
const Conv2dSpec k1s1{1, 1, 1, 0};

std::int64_t seg_filters(const SegConfig& cfg, std::int64_t level) {
    std::int64_t f = cfg.base_filters;
    for (std::int64_t i = 0; i < level; ++i) f = std::min(f * 2, cfg.max_filters);
    return f;
}

Tensor conv_init(Rng& rng, std::int64_t cout, std::int64_t cin, std::int64_t kh, std::int64_t kw) {
    const double std = std::sqrt(2.0 / static_cast<double>(cin * kh * kw));
    return rng.normal_tensor({cout, cin, kh, kw}, 0.0, std);
}

void add_double_conv(ParamSet& ps, Rng& rng, const std::string& p, std::int64_t cin, std::int64_t c) {
    ps.add(p + ".c1.w", conv_init(rng, c, cin, 3, 3));
    ps.add(p + ".c1.b", Tensor({c}));
    ps.add(p + ".c2.w", conv_init(rng, c, c, 3, 3));
    ps.add(p + ".c2.b", Tensor({c}));
}

Var conv_relu(Graph& /*g*/, const ParamVars& pv, const std::string& w, const std::string& b, Var x,
              const Conv2dSpec& spec) {
    const Shape& ws = x.g->shape(pv.at(w));
    Var y = add(conv2d(x, pv.at(w), spec), reshape(pv.at(b), {1, ws[0], 1, 1}));
    return relu(y);
}

Var double_conv(Graph& g, const ParamVars& pv, const std::string& p, Var x) {
    Var h = conv_relu(g, pv, p + ".c1.w", p + ".c1.b", x, k3s1);
    return conv_relu(g, pv, p + ".c2.w", p + ".c2.b", h, k3s1);
}

}  // namespace

SegParams init_segmenter(const SegConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SegParams sp;
    sp.cfg = cfg;
    ParamSet& ps = sp.params;
    std::int64_t cin = 1;
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
        add_double_conv(ps, rng, "seg.enc" + std::to_string(i), cin, seg_filters(cfg, i));
        cin = seg_filters(cfg, i);
    }
    add_double_conv(ps, rng, "seg.bot", cin, seg_filters(cfg, cfg.depth));
    for (std::int64_t i = cfg.depth - 1; i >= 0; --i) {
        const std::int64_t c = seg_filters(cfg, i);
        const std::int64_t cup = seg_filters(cfg, i + 1);
        ps.add("seg.dec" + std::to_string(i) + ".up.w", conv_init(rng, c, cup, 3, 3));
        ps.add("seg.dec" + std::to_string(i) + ".up.b", Tensor({c}));
        add_double_conv(ps, rng, "seg.dec" + std::to_string(i), 2 * c, c);
    }
    ps.add("seg.out.w", conv_init(rng, 1, seg_filters(cfg, 0), 1, 1));
    ps.add("seg.out.b", Tensor({1}));
    return sp;
}

Var segmenter_forward_g(Graph& g, const SegConfig& cfg, const ParamVars& pv, Var x) {
    const Shape& s = g.shape(x);
    if (s.size() != 4 || s[1] != 1 || s[2] != cfg.slice_h || s[3] != cfg.slice_w)
        throw ShapeError("segmenter: input " + shape_str(s) + " does not match configured slice shape");
    std::vector<Var> skips;
    Var h = x;
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
        h = double_conv(g, pv, "seg.enc" + std::to_string(i), h);
        skips.push_back(h);
        h = maxpool2(h);
    }
    h = double_conv(g, pv, "seg.bot", h);
    for (std::int64_t i = cfg.depth - 1; i >= 0; --i) {
        const std::string p = "seg.dec" + std::to_string(i);
        h = upsample_nearest2(h);
        h = conv_relu(g, pv, p + ".up.w", p + ".up.b", h, k3s1);
        h = concat_ch(skips[static_cast<std::size_t>(i)], h);
        h = double_conv(g, pv, p, h);
    }
    Var logits = add(conv2d(h, pv.at("seg.out.w"), k1s1), reshape(pv.at("seg.out.b"), {1, 1, 1, 1}));
    return vsigmoid(logits);
}

Var segmentation_loss_g(Graph& g, Var prob, Var target) {
    const Shape s = g.shape(prob);
    const std::int64_t N = s[0];
    const double inv_px = 1.0 / static_cast<double>(s[2] * s[3]);
    const double inv_n = 1.0 / static_cast<double>(N);
    Var bce = mul(reduce_sum_to(bce_sum_g(g, target, prob), {1}), g.constant(inv_px * inv_n));
    // soft-DSC with +1 smoothing, per sample
    Var inter = reshape(reduce_sum_to(mul(prob, target), {N, 1, 1, 1}), {N});
    Var psum = reshape(reduce_sum_to(prob, {N, 1, 1, 1}), {N});
    Var tsum = reshape(reduce_sum_to(target, {N, 1, 1, 1}), {N});
    Var one = g.constant(1.0);
    Var dice = div(add(mul(g.constant(2.0), inter), one), add(add(psum, tsum), one));
    Var soft = mul(reduce_sum_to(sub(broadcast_to(one, {N}), dice), {1}), g.constant(inv_n));
    return add(bce, soft);
}

std::pair<SegParams, std::vector<SegEpoch>> train_segmenter(const SliceDataset& ds, const SegConfig& cfg) {
    if (ds.pairs.empty()) throw ConfigError("train_segmenter: empty dataset");
    SegConfig c = cfg;
    c.slice_h = ds.slice_h;
    c.slice_w = ds.slice_w;
    SegParams sp = init_segmenter(c);
    AdamWConfig oc;
    oc.lr = c.lr;
    oc.beta1 = 0.9;
    oc.beta2 = 0.999;
    oc.weight_decay = 1e-6;
    AdamW opt(oc, sp.params);
    const std::int64_t n = static_cast<std::int64_t>(ds.pairs.size());
    const std::int64_t hw = c.slice_h * c.slice_w;
    std::vector<SegEpoch> history;

    for (std::int64_t epoch = 0; epoch < c.epochs; ++epoch) {
        Rng rng(mix_seed(c.seed, 0x5E6, static_cast<std::uint64_t>(epoch)));
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        for (std::int64_t i = n - 1; i > 0; --i)
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(i + 1))]);

        double epoch_loss = 0;
        std::int64_t n_batches = 0;
        for (std::int64_t b0 = 0; b0 < n; b0 += c.batch_size) {
            const std::int64_t bs = std::min(c.batch_size, n - b0);
            Tensor x({bs, 1, c.slice_h, c.slice_w});
            Tensor t({bs, 1, c.slice_h, c.slice_w});
            for (std::int64_t i = 0; i < bs; ++i) {
                const SlicePair& p = ds.pairs[static_cast<std::size_t>(order[static_cast<std::size_t>(b0 + i)])];
                std::copy(p.image.data(), p.image.data() + hw, x.data() + i * hw);
                std::copy(p.mask.data(), p.mask.data() + hw, t.data() + i * hw);
            }
            Graph g;
            ParamVars pv = enter_params(g, sp.params);
            Var prob = segmenter_forward_g(g, c, pv, g.leaf(x));
            Var loss = segmentation_loss_g(g, prob, g.leaf(t));
            auto wrt = pv.vars();
            auto gv = g.gradients(loss, wrt);
            std::vector<Tensor> grads;
            grads.reserve(gv.size());
            for (Var v : gv) grads.push_back(g.value(v));
            opt.step(sp.params, grads);
            epoch_loss += g.value(loss)[0];
            ++n_batches;
        }

        // train DSC on a fixed-size prefix of the (unshuffled) dataset
        const std::int64_t n_eval = std::min<std::int64_t>(n, 64);
        double dsc_sum = 0;
        for (std::int64_t i = 0; i < n_eval; ++i) {
            const SlicePair& p = ds.pairs[static_cast<std::size_t>(i)];
            dsc_sum += dsc(predict_slice(sp, p.image), p.mask);
        }
        history.push_back({epoch, epoch_loss / static_cast<double>(n_batches),
                           dsc_sum / static_cast<double>(n_eval)});
    }
    return {std::move(sp), std::move(history)};
}

Tensor predict_slice(const SegParams& p, const Tensor& image) {
    if (image.rank() != 2 || image.dim(0) != p.cfg.slice_h || image.dim(1) != p.cfg.slice_w)
        throw ShapeError("predict_slice: image " + shape_str(image.shape()) + " does not match training shape");
    Graph g;
    ParamVars pv = enter_params(g, p.params);
    Var prob = segmenter_forward_g(g, p.cfg, pv, g.leaf(image.reshaped({1, 1, image.dim(0), image.dim(1)})));
    const Tensor& pr = g.value(prob);
    Tensor out({image.dim(0), image.dim(1)});
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = pr[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

SliceSelector full_range_selector(const Volume3D& vol) { return {0, vol.depth()}; }

SliceSelector oracle_extent_selector(const MaskVolume3D& gt) {
    const std::int64_t D = gt.values.dim(0), plane = gt.values.dim(1) * gt.values.dim(2);
    std::int64_t lo = D, hi = -1;
    for (std::int64_t z = 0; z < D; ++z) {
        bool any = false;
        for (std::int64_t i = 0; i < plane && !any; ++i) any = gt.values[z * plane + i] != 0.0;
        if (any) {
            lo = std::min(lo, z);
            hi = std::max(hi, z);
        }
    }
    if (hi < 0) return {0, 0};  // no tumor anywhere
    return {lo, hi + 1};
}

SelectorFn make_selector(SelectorPolicy policy) {
    if (policy == SelectorPolicy::full_range)
        return [](const Volume3D& v, const MaskVolume3D*) { return full_range_selector(v); };
    return [](const Volume3D&, const MaskVolume3D* gt) {
        if (!gt) throw ConfigError("oracle_extent selector needs a ground-truth mask");
        return oracle_extent_selector(*gt);
    };
}

MaskVolume3D segment_volume(const SegParams& p, const Volume3D& vol, const SliceSelector& sel) {
    const std::int64_t D = vol.depth(), H = vol.height(), W = vol.width();
    if (sel.z0 < 0 || sel.z1 > D || sel.z0 > sel.z1)
        throw RangeError("slice selector [" + std::to_string(sel.z0) + "," + std::to_string(sel.z1) +
                         ") outside volume depth " + std::to_string(D));
    if (H != p.cfg.slice_h || W != p.cfg.slice_w)
        throw ShapeError("segment_volume: volume slices do not match segmenter shape");
    MaskVolume3D out;
    out.values = Tensor({D, H, W});
    const std::int64_t plane = H * W;
    for (std::int64_t z = sel.z0; z < sel.z1; ++z) {
        Tensor img({H, W});
        std::copy(vol.values.data() + z * plane, vol.values.data() + (z + 1) * plane, img.data());
        Tensor pred = predict_slice(p, clamp(img, 0.0, 1.0));
        std::copy(pred.data(), pred.data() + plane, out.values.data() + z * plane);
    }
    return out;
}

std::pair<double, double> evaluate_dsc(const SegParams& p,
                                       const std::vector<std::pair<Volume3D, MaskVolume3D>>& test,
                                       const SelectorFn& selector) {
    if (test.empty()) throw ConfigError("evaluate_dsc: empty test set");
    std::vector<double> scores;
    scores.reserve(test.size());
    for (const auto& [vol, gt] : test) {
        const MaskVolume3D pred = segment_volume(p, vol, selector(vol, &gt));
        scores.push_back(dsc(pred.values, gt.values));
    }
    double mean = 0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0;
    for (double s : scores) var += (s - mean) * (s - mean);
    var /= static_cast<double>(scores.size());
    return {mean, std::sqrt(var)};
}

}  // namespace dhvae
