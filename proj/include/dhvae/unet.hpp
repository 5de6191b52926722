#pragma once

// Downstream slice-wise segmenter: a standard U-Net (double convolutions,
// max-pool downsampling, nearest-neighbour upsampling with skip concats)
// trained on cross-entropy plus soft-DSC, and the 2D-to-3D volume evaluation
// that stacks per-slice predictions.

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "dhvae/graph.hpp"
#include "dhvae/model.hpp"
#include "dhvae/slices.hpp"
#include "dhvae/tensor.hpp"
#include "dhvae/volume.hpp"

namespace dhvae {

struct SegConfig {
    std::int64_t depth = 4;
    std::int64_t base_filters = 16;
    std::int64_t max_filters = 128;
    std::int64_t epochs = 20;
    std::int64_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    std::int64_t slice_h = 32, slice_w = 32;

    void validate() const;
};

struct SegParams {
    SegConfig cfg;
    ParamSet params;
};

struct SegEpoch {
    std::int64_t epoch = 0;
    double loss = 0;
    double train_dsc = 0;
};

SegParams init_segmenter(const SegConfig& cfg);

// x: (N,1,H,W) -> foreground probability (N,1,H,W)
Var segmenter_forward_g(Graph& g, const SegConfig& cfg, const ParamVars& pv, Var x);

// cross-entropy (pixel mean) + soft-DSC loss, both batch-meaned
Var segmentation_loss_g(Graph& g, Var prob, Var target);

std::pair<SegParams, std::vector<SegEpoch>> train_segmenter(const SliceDataset& ds, const SegConfig& cfg);

// logistic output thresholded at 0.5 (>= rule)
Tensor predict_slice(const SegParams& p, const Tensor& image);

// half-open slice range [z0, z1)
struct SliceSelector {
    std::int64_t z0 = 0, z1 = 0;
};

SliceSelector full_range_selector(const Volume3D& vol);
// ground-truth tumor extent (the operator-interaction stand-in)
SliceSelector oracle_extent_selector(const MaskVolume3D& gt);

// hook for a tumor-presence classifier; any callable producing a selector
using SelectorFn = std::function<SliceSelector(const Volume3D&, const MaskVolume3D* gt)>;

enum class SelectorPolicy { oracle_extent, full_range };
SelectorFn make_selector(SelectorPolicy policy);

// slices inside the selector predicted slice-by-slice; outside all-zero
MaskVolume3D segment_volume(const SegParams& p, const Volume3D& vol, const SliceSelector& sel);

// per-subject volume DSC aggregated to (mean, std); population std, 0 for a
// single subject
std::pair<double, double> evaluate_dsc(const SegParams& p,
                                       const std::vector<std::pair<Volume3D, MaskVolume3D>>& test,
                                       const SelectorFn& selector);

}  // namespace dhvae
