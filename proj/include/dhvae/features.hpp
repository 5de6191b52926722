#pragma once

// Frozen feature extractors for perceptual losses and embedding metrics.
// Two kinds: a seeded random convolution stack used by the test/acceptance
// suite, and a 16-layer pretrained convolutional backbone loaded from
// DHVAE_ASSET_DIR. Both expose four tap layers; weights are never optimized.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dhvae/graph.hpp"
#include "dhvae/model.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

enum class ExtractorKind { fixed_random_test, pretrained_16_layer_conv };

std::string extractor_kind_name(ExtractorKind k);
ExtractorKind extractor_kind_from_name(const std::string& s);

struct FeatureExtractor {
    ExtractorKind kind = ExtractorKind::fixed_random_test;
    std::vector<int> tap_indices;   // strictly increasing layer indices
    std::int64_t in_channels = 3;   // grayscale inputs are replicated
    ParamSet weights;               // frozen

    struct Layer {
        std::int64_t cout = 0;
        std::int64_t stride = 1;
        bool pool_after = false;  // 2x2 maxpool following the activation
    };
    std::vector<Layer> layers;

    std::uint64_t seed = 0;
    std::string describe() const;
};

FeatureExtractor make_fixed_random_extractor(std::uint64_t seed);

// Loads "<asset_dir>/vgg16_features.dhvae" (archive of conv weights). Throws
// ConfigError when the file is missing or malformed.
FeatureExtractor load_pretrained_extractor(const std::filesystem::path& asset_dir);

// Picks the extractor for a run: the pretrained kind requires DHVAE_ASSET_DIR
// with the asset present, otherwise falls back to the fixed-random kind.
FeatureExtractor resolve_extractor(ExtractorKind requested, std::uint64_t seed, std::string* note = nullptr);

// image: (N, 1, H, W) in [0,1]; one feature map per tap index
std::vector<Var> extract_features_g(Graph& g, const FeatureExtractor& fx, Var image);

// single image (H, W); returns tap feature maps (C, h, w)
std::vector<Tensor> extract_features(const FeatureExtractor& fx, const Tensor& image);

// concatenated spatial means of every tap map; the embedding used for
// distribution metrics
Tensor embed_image(const FeatureExtractor& fx, const Tensor& image);
std::int64_t embedding_dim(const FeatureExtractor& fx);

}  // namespace dhvae
