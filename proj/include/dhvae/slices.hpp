#pragma once

// 2-D training corpus: tumor-bearing slice extraction, the deterministic
// synthetic blob corpus, and the on-disk slice dataset container.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dhvae/tensor.hpp"
#include "dhvae/volume.hpp"

namespace dhvae {

enum class Provenance { real, synthetic };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct SlicePair {
    Tensor image;  // (H, W), values in [0,1]
    Tensor mask;   // (H, W), values in {0,1}
    std::string subject_id;
    std::int64_t slice_index = 0;
    Provenance provenance = Provenance::real;

    void validate() const;
    std::int64_t foreground_count() const;
};

struct SliceDataset {
    std::vector<SlicePair> pairs;
    std::int64_t slice_h = 0, slice_w = 0;
    std::string split_tag = "train";

    static SliceDataset from_pairs(std::vector<SlicePair> pairs, const std::string& split_tag);
    std::size_t size() const { return pairs.size(); }
    void validate() const;

    void save(const std::filesystem::path& path) const;
    static SliceDataset load(const std::filesystem::path& path);
};

bool dataset_equal(const SliceDataset& a, const SliceDataset& b);

// Axial (last-dimension) slices whose mask has >= min_fg_pixels foreground
// pixels, ordered by slice index. Other slice axes via `axis` (0=x, 1=y,
// 2=z/axial).
std::vector<SlicePair> extract_tumor_slices(const Volume3D& img, const MaskVolume3D& mask,
                                            std::int64_t min_fg_pixels, int axis = 2);

// Deterministic synthetic corpus: smoothed background noise plus 1-3 bright
// ellipsoids per subject; the mask is the exact ellipsoid support.
std::vector<std::pair<Volume3D, MaskVolume3D>> make_blob_corpus(std::int64_t n_subjects,
                                                                std::int64_t h, std::int64_t w,
                                                                std::int64_t d, std::uint64_t seed);

}  // namespace dhvae
