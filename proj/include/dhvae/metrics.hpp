#pragma once

// Evaluation metrics: signal fidelity (PSNR), embedding-distribution
// distance (FID over a pluggable backbone), perceptual distance (LPIPS-style
// unit-normalized deep features), mask-distribution divergences (per-pixel
// Bernoulli KLD/JSD) and segmentation overlap (DSC).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dhvae/features.hpp"
#include "dhvae/tensor.hpp"

namespace dhvae {

// +inf when MSE is zero
double psnr(const Tensor& a, const Tensor& b, double max_val);

struct EmbeddingStats {
    Tensor mean;        // (d)
    Tensor covariance;  // (d, d), symmetrized at construction

    void validate() const;  // symmetry within 1e-10
};

// sample mean and unbiased covariance of an (N, d) embedding matrix; N >= 2
EmbeddingStats gaussian_stats(const Tensor& embeddings);

// ||mu_r - mu_f||^2 + Tr(Sr + Sf - 2 (Sr Sf)^{1/2}); the square root comes
// from the eigendecomposition of the symmetrized product with negative
// eigenvalues clamped to zero; the result is clamped to >= 0
double fid(const EmbeddingStats& r, const EmbeddingStats& f);

// per Eq.-style definition: per-layer unit-normalized features (positionwise
// channel L2 norm), squared differences summed over channels and layers,
// averaged over spatial positions
double lpips(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);

struct PixelClassDistribution {
    Tensor prob;  // (H, W) in [0,1]
    std::int64_t n_masks = 0;
};

PixelClassDistribution pixel_class_distribution(const std::vector<Tensor>& masks);

enum class DivergenceMode { kld, jsd };

// mean per-pixel Bernoulli divergence between smoothed probabilities
// p' = (p + eps) / (1 + 2 eps); natural log; JSD uses m = (p' + q')/2
double divergence(const PixelClassDistribution& p, const PixelClassDistribution& q, DivergenceMode mode,
                  double eps = 1e-6);

// 2|A∩B| / (|A|+|B|); both empty -> 1.0
double dsc(const Tensor& pred, const Tensor& gt);

// --- report ------------------------------------------------------------------

struct MetricsReport {
    std::vector<std::pair<std::string, double>> values;
    std::int64_t n_real = 0, n_synth = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::string backbone;  // extractor identity
    std::vector<std::string> notes;

    void add(const std::string& metric, double value);
    double get(const std::string& metric) const;
    void write_csv(const std::filesystem::path& path) const;  // metric,value,n_real,n_synth,seed,config_hash
};

// symmetric eigendecomposition (cyclic Jacobi); returns eigenvalues,
// fills eigenvectors column-wise when requested
std::vector<double> symmetric_eigenvalues(const Tensor& m);

}  // namespace dhvae
