#pragma once

// Convolutional encoder / decoder / patch discriminator. Blocks are
// weight-standardized 3x3 convolutions with group normalization, swish and a
// residual connection; downsampling is one stride-2 convolution per encoder
// block, upsampling nearest-neighbour x2 plus a convolution. Single-head
// scaled dot-product attention sits in the latent bottleneck and at the
// configured block indices.

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dhvae/graph.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

// Ordered collection of named parameter arrays.
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    std::int64_t param_count() const;
    bool all_finite() const;
};

// Same names bound to graph leaves for one forward/backward pass.
struct ParamVars {
    std::vector<std::pair<std::string, Var>> entries;

    Var at(const std::string& name) const;
    std::vector<Var> vars() const;
};

ParamVars enter_params(Graph& g, const ParamSet& ps);

struct ModelConfig {
    std::int64_t in_channels = 2;  // image + mask
    std::int64_t base_filters = 32;
    std::int64_t depth = 4;
    std::int64_t max_filters = 128;
    std::int64_t latent_channels = 16;
    std::int64_t slice_h = 64, slice_w = 64;
    std::set<std::int64_t> attention_at;  // encoder block indices; default {depth-1}
    std::int64_t disc_filters = 32;
    std::int64_t disc_depth = 3;
    std::uint64_t seed = 0;

    void validate() const;                    // throws ConfigError
    std::int64_t filters_at(std::int64_t level) const;  // level 0..depth
    std::int64_t latent_h() const { return slice_h >> depth; }
    std::int64_t latent_w() const { return slice_w >> depth; }
    std::set<std::int64_t> effective_attention() const;

    std::string to_meta() const;
    static ModelConfig from_meta(const std::string& text);
};

struct ModelParams {
    ModelConfig cfg;
    ParamSet params;
};

struct LatentGaussian {
    Tensor mean;          // (C, h, w)
    Tensor log_variance;  // same shape
};

// --- construction ------------------------------------------------------------

ModelParams init_model(const ModelConfig& cfg);
ParamSet init_discriminator(const ModelConfig& cfg);

// --- graph-level forward passes ------------------------------------------------

struct LatentGaussianVar {
    Var mean, logvar;  // each (N, C, h, w)
};

// x: (N, in_channels, H, W)
LatentGaussianVar encode_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var x);
// z: (N, latent_channels, h, w) -> image_out, mask_prob each (N, 1, H, W) in (0,1)
std::pair<Var, Var> decode_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var z);
// pair: (N, 2, H, W) -> patch logits (N, 1, H/2^k, W/2^k)
Var discriminate_g(Graph& g, const ModelConfig& cfg, const ParamVars& pv, Var pair);

// standardized kernel + bias; exposed for reuse by the segmenter
Var ws_conv(Graph& g, Var x, Var w, Var b, const Conv2dSpec& spec);
Var group_norm(Graph& g, Var x, Var gamma, Var beta, std::int64_t groups);

// --- tensor-level wrappers (single pair / single latent) -------------------------

LatentGaussian encode(const ModelParams& mp, const Tensor& image, const Tensor& mask);
Tensor reparameterize(const LatentGaussian& lg, const Tensor& noise);
std::pair<Tensor, Tensor> decode(const ModelParams& mp, const Tensor& z);  // (H,W) outputs
Tensor discriminate(const ModelConfig& cfg, const ParamSet& d_params, const Tensor& image, const Tensor& mask);

// per-output-channel (mean, variance) of the standardized kernel actually
// applied; used by the weight-standardization invariant test
std::pair<Tensor, Tensor> standardized_kernel_stats(const Tensor& w);

}  // namespace dhvae
