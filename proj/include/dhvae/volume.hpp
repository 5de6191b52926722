#pragma once

// 3-D volume ingestion. Supports NIfTI-1 (.nii / .nii.gz, little-endian) and
// a test-only raw container (.rawvol): one text header line
// "H W D spacing_x spacing_y spacing_z" followed by H*W*D little-endian
// float32 values, depth-major (D slices of H rows by W columns).
//
// Volume tensors are stored as (D, H, W); the axial slice at index z is the
// contiguous (H, W) plane values[z].

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "dhvae/tensor.hpp"

namespace dhvae {

enum class Modality { mri_flair, pet, synthetic };

std::string modality_name(Modality m);
Modality modality_from_name(const std::string& s);

struct Volume3D {
    Tensor values;                    // (D, H, W), finite
    std::array<double, 3> spacing{1, 1, 1};  // mm/voxel, (x, y, z)
    Modality modality = Modality::synthetic;
    std::string subject_id;

    std::int64_t depth() const { return values.dim(0); }
    std::int64_t height() const { return values.dim(1); }
    std::int64_t width() const { return values.dim(2); }
    void validate() const;  // dims >= 1, spacing > 0, values finite
};

struct MaskVolume3D {
    Tensor values;  // (D, H, W), entries exactly 0 or 1

    void validate() const;
    std::int64_t foreground_count() const;
};

// Loads a volume; when "<stem>_mask<ext>" exists alongside, loads and pairs
// the mask (nonzero voxels count as foreground).
std::pair<Volume3D, std::optional<MaskVolume3D>> load_volume(const std::filesystem::path& path);

void save_volume(const Volume3D& v, const std::filesystem::path& path);       // .rawvol or .nii
void save_mask(const MaskVolume3D& m, const std::array<double, 3>& spacing,
               const std::filesystem::path& path);

// Affine map of values onto [0,1]; constant volumes map to all zeros.
Volume3D minmax_normalize(const Volume3D& v);

}  // namespace dhvae
