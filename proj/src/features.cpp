#include "dhvae/features.hpp"

#include <cmath>
#include <cstdlib>

#include "dhvae/errors.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

std::string extractor_kind_name(ExtractorKind k) {
    return k == ExtractorKind::fixed_random_test ? "fixed-random-test" : "pretrained-16-layer-conv";
}

ExtractorKind extractor_kind_from_name(const std::string& s) {
    if (s == "fixed-random-test") return ExtractorKind::fixed_random_test;
    if (s == "pretrained-16-layer-conv") return ExtractorKind::pretrained_16_layer_conv;
    throw ConfigError("unknown feature extractor kind: " + s);
}

std::string FeatureExtractor::describe() const {
    std::string s = extractor_kind_name(kind);
    if (kind == ExtractorKind::fixed_random_test) s += "(seed=" + std::to_string(seed) + ")";
    return s;
}

FeatureExtractor make_fixed_random_extractor(std::uint64_t seed) {
    FeatureExtractor fx;
    fx.kind = ExtractorKind::fixed_random_test;
    fx.seed = seed;
    fx.in_channels = 3;
    fx.layers = {
        {12, 1, false}, {12, 1, false},  // tap 1
        {24, 2, false}, {24, 1, false},  // tap 3
        {48, 2, false}, {48, 1, false},  // tap 5
        {96, 2, false}, {96, 1, false},  // tap 7
    };
    fx.tap_indices = {1, 3, 5, 7};
    Rng rng(mix_seed(seed, 0xFEA7));
    std::int64_t cin = fx.in_channels;
    for (std::size_t i = 0; i < fx.layers.size(); ++i) {
        const auto& ly = fx.layers[i];
        const double std = std::sqrt(2.0 / static_cast<double>(cin * 9));
        fx.weights.add("conv" + std::to_string(i) + ".w", rng.normal_tensor({ly.cout, cin, 3, 3}, 0.0, std));
        fx.weights.add("conv" + std::to_string(i) + ".b", Tensor({ly.cout}));
        cin = ly.cout;
    }
    return fx;
}

FeatureExtractor load_pretrained_extractor(const std::filesystem::path& asset_dir) {
    const auto path = asset_dir / "vgg16_features.dhvae";
    if (!std::filesystem::exists(path))
        throw ConfigError("pretrained extractor asset not found: " + path.string());
    const Archive ar = Archive::read(path);
    FeatureExtractor fx;
    fx.kind = ExtractorKind::pretrained_16_layer_conv;
    fx.in_channels = 3;
    // 13-conv backbone; taps after the 2nd, 4th, 7th and 10th activations
    // (the classic relu1_2 / relu2_2 / relu3_3 / relu4_3 positions)
    const std::int64_t chans[13] = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
    const bool pool_after[13] = {false, true, false, true, false, false, true, false, false, true,
                                 false, false, true};
    std::int64_t cin = 3;
    for (int i = 0; i < 13; ++i) {
        fx.layers.push_back({chans[i], 1, pool_after[i]});
        const std::string wname = "conv" + std::to_string(i) + ".w";
        const std::string bname = "conv" + std::to_string(i) + ".b";
        if (!ar.has(wname) || !ar.has(bname))
            throw ConfigError("pretrained extractor asset is missing entry " + wname);
        Tensor w = ar.entry(wname).to_tensor();
        if (w.shape() != Shape{chans[i], cin, 3, 3})
            throw ConfigError("pretrained extractor entry " + wname + " has shape " + shape_str(w.shape()));
        fx.weights.add(wname, std::move(w));
        fx.weights.add(bname, ar.entry(bname).to_tensor());
        cin = chans[i];
    }
    fx.tap_indices = {1, 3, 6, 9};
    return fx;
}

FeatureExtractor resolve_extractor(ExtractorKind requested, std::uint64_t seed, std::string* note) {
    if (requested == ExtractorKind::pretrained_16_layer_conv) {
        if (const char* dir = std::getenv("DHVAE_ASSET_DIR")) {
            try {
                return load_pretrained_extractor(dir);
            } catch (const ConfigError& e) {
                if (note) *note = std::string("pretrained extractor unavailable (") + e.what() +
                                  "); using fixed-random-test";
            }
        } else if (note) {
            *note = "DHVAE_ASSET_DIR unset; using fixed-random-test extractor";
        }
    }
    return make_fixed_random_extractor(seed);
}

std::vector<Var> extract_features_g(Graph& g, const FeatureExtractor& fx, Var image) {
    const Shape& s = g.shape(image);
    if (s.size() != 4 || s[1] != 1) throw ShapeError("extract_features expects (N,1,H,W), got " + shape_str(s));
    // replicate the single channel to the extractor's input arity
    Var x = image;
    for (std::int64_t c = 1; c < fx.in_channels; ++c) x = concat_ch(x, image);
    std::vector<Var> taps;
    std::int64_t next_tap = 0;
    for (std::size_t i = 0; i < fx.layers.size(); ++i) {
        const auto& ly = fx.layers[i];
        const Conv2dSpec spec{3, 3, ly.stride, 1};
        Var w = g.leaf(fx.weights.at("conv" + std::to_string(i) + ".w"));
        Var b = g.leaf(fx.weights.at("conv" + std::to_string(i) + ".b"));
        x = relu(add(conv2d(x, w, spec), reshape(b, {1, ly.cout, 1, 1})));
        if (next_tap < static_cast<std::int64_t>(fx.tap_indices.size()) &&
            fx.tap_indices[static_cast<std::size_t>(next_tap)] == static_cast<int>(i)) {
            taps.push_back(x);
            ++next_tap;
        }
        if (ly.pool_after) x = maxpool2(x);
    }
    if (taps.size() != fx.tap_indices.size()) throw ConfigError("tap indices exceed extractor depth");
    return taps;
}

std::vector<Tensor> extract_features(const FeatureExtractor& fx, const Tensor& image) {
    if (image.rank() != 2) throw ShapeError("extract_features expects a rank-2 image");
    Graph g;
    Var x = g.leaf(image.reshaped({1, 1, image.dim(0), image.dim(1)}));
    auto taps = extract_features_g(g, fx, x);
    std::vector<Tensor> out;
    out.reserve(taps.size());
    for (Var t : taps) {
        const Shape& s = g.shape(t);
        out.push_back(g.value(t).reshaped({s[1], s[2], s[3]}));
    }
    return out;
}

Tensor embed_image(const FeatureExtractor& fx, const Tensor& image) {
    const auto taps = extract_features(fx, image);
    std::int64_t dim = 0;
    for (const auto& t : taps) dim += t.dim(0);
    Tensor e({dim});
    std::int64_t k = 0;
    for (const auto& t : taps) {
        const std::int64_t C = t.dim(0), P = t.dim(1) * t.dim(2);
        for (std::int64_t c = 0; c < C; ++c) {
            double s = 0;
            for (std::int64_t p = 0; p < P; ++p) s += t[c * P + p];
            e[k++] = s / static_cast<double>(P);
        }
    }
    return e;
}

std::int64_t embedding_dim(const FeatureExtractor& fx) {
    std::int64_t dim = 0;
    std::int64_t next_tap = 0;
    for (std::size_t i = 0; i < fx.layers.size(); ++i) {
        if (next_tap < static_cast<std::int64_t>(fx.tap_indices.size()) &&
            fx.tap_indices[static_cast<std::size_t>(next_tap)] == static_cast<int>(i)) {
            dim += fx.layers[i].cout;
            ++next_tap;
        }
    }
    return dim;
}

}  // namespace dhvae
