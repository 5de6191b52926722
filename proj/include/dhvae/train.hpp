#pragma once

// Generator training orchestration: alternating generator/discriminator
// updates on the warm-up-gated global loss, per-iteration loss reports,
// checkpointing with bit-exact resume, and prior sampling with the
// tumor-bearing rejection rule.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dhvae/config.hpp"
#include "dhvae/elbo.hpp"
#include "dhvae/features.hpp"
#include "dhvae/losses.hpp"
#include "dhvae/metrics.hpp"
#include "dhvae/model.hpp"
#include "dhvae/optimizer.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/slices.hpp"

namespace dhvae {

struct TrainConfig {
    ModelConfig model;
    // leapfrog
    double lf_eps0 = 0.05;
    std::int64_t lf_k = 3;
    bool lf_learnable = true;
    double lf_mass = 1.0;
    // loss weights
    double alpha = 0.99;  // beta = 1 - alpha
    std::int64_t warmup_iters = 1000;
    // optimizers
    AdamWConfig opt;       // generator; defaults lr 5e-5, betas 0.5/0.999, wd 1e-6
    AdamWConfig disc_opt;  // discriminator, same defaults
    // loop
    std::int64_t iterations = 2000;
    std::int64_t batch_size = 8;
    std::int64_t checkpoint_every = 500;
    std::uint64_t seed = 0;
    ExtractorKind extractor = ExtractorKind::fixed_random_test;
    bool gaussian_image_likelihood = false;
    std::int64_t min_fg_pixels = 10;  // sampling rejection threshold

    LossWeights weights() const { return LossWeights::from_alpha(alpha, warmup_iters); }
    void validate() const;

    std::string to_meta() const;
    static TrainConfig from_meta(const std::string& text);
    // dotted keys (model.*, lf.*, weights.*, opt.*, disc_opt.*, train.*, sample.*)
    static TrainConfig from_config(ConfigMap& cm);
};

struct TrainState {
    TrainConfig cfg;
    ModelParams gen;
    ParamSet disc;
    LeapfrogParams lf;
    AdamW opt_gen, opt_disc;
    Rng rng{0};
    std::int64_t iteration = 0;
};

TrainState init_train_state(const TrainConfig& cfg);

// One alternating update; consumes the state's rng in a fixed order.
LossReport train_iteration(TrainState& st, const SliceDataset& ds, const FeatureExtractor& fx);

void save_checkpoint(const TrainState& st, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
    std::filesystem::path checkpoint;
    std::vector<LossReport> reports;
};

// Runs cfg.iterations updates (or continues a resumed state), appending one
// CSV row per iteration to <out_dir>/loss.csv and checkpointing at the
// configured cadence. On a non-finite loss the last good checkpoint is kept
// and a NumericError naming the component is thrown.
TrainResult train_generator(const SliceDataset& ds, const TrainConfig& cfg,
                            const std::filesystem::path& out_dir);
TrainResult resume_training(TrainState st, const SliceDataset& ds, const std::filesystem::path& out_dir);

// Prior sampling: decode z ~ N(0,I); masks binarized at 0.5; pairs with
// fewer than min_fg foreground pixels are rejected and resampled. Throws
// GenerationError (with the acceptance rate) when the retry budget runs out.
std::vector<SlicePair> generate_pairs(const ModelParams& gen, std::int64_t n, std::uint64_t seed,
                                      std::int64_t min_fg);
std::vector<SlicePair> generate_pairs(const std::filesystem::path& checkpoint, std::int64_t n,
                                      std::uint64_t seed, std::optional<std::int64_t> min_fg = {});

// PSNR over encoder-mean reconstructions of the real set; FID and LPIPS over
// real-vs-synthetic sets through the given backbone.
MetricsReport evaluate_image_quality(const std::vector<SlicePair>& real, const std::vector<SlicePair>& synth,
                                     const ModelParams& recon_model, const FeatureExtractor& fx,
                                     std::uint64_t seed, const std::string& config_hash);

// Pixel-class distributions of both mask sets; JSD plus KLD in both
// directions.
MetricsReport evaluate_mask_quality(const std::vector<SlicePair>& real, const std::vector<SlicePair>& synth,
                                    std::uint64_t seed, const std::string& config_hash);

}  // namespace dhvae
