#include "dhvae/slices.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dhvae/errors.hpp"
#include "dhvae/rng.hpp"
#include "dhvae/serialize.hpp"

namespace dhvae {

std::string provenance_name(Provenance p) { return p == Provenance::real ? "real" : "synthetic"; }

Provenance provenance_from_name(const std::string& s) {
    if (s == "real") return Provenance::real;
    if (s == "synthetic") return Provenance::synthetic;
    throw ConfigError("unknown provenance tag: " + s);
}

void SlicePair::validate() const {
    if (image.rank() != 2 || mask.rank() != 2)
        throw ShapeError("slice pair must hold rank-2 arrays");
    if (!image.same_shape(mask))
        throw ShapeError("slice image " + shape_str(image.shape()) + " and mask " + shape_str(mask.shape()) +
                         " differ");
    for (std::int64_t i = 0; i < image.numel(); ++i) {
        if (!(image[i] >= 0.0 && image[i] <= 1.0))
            throw DomainError("slice image value " + std::to_string(image[i]) + " outside [0,1]");
        if (mask[i] != 0.0 && mask[i] != 1.0)
            throw DomainError("slice mask value " + std::to_string(mask[i]) + " not binary");
    }
}

std::int64_t SlicePair::foreground_count() const {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < mask.numel(); ++i) n += mask[i] != 0.0;
    return n;
}

SliceDataset SliceDataset::from_pairs(std::vector<SlicePair> pairs, const std::string& split_tag) {
    SliceDataset ds;
    ds.pairs = std::move(pairs);
    ds.split_tag = split_tag;
    if (!ds.pairs.empty()) {
        ds.slice_h = ds.pairs.front().image.dim(0);
        ds.slice_w = ds.pairs.front().image.dim(1);
    }
    ds.validate();
    return ds;
}

void SliceDataset::validate() const {
    for (const auto& p : pairs) {
        p.validate();
        if (p.image.dim(0) != slice_h || p.image.dim(1) != slice_w)
            throw ShapeError("dataset slices must share one shape; saw " + shape_str(p.image.shape()) +
                             " against (" + std::to_string(slice_h) + "," + std::to_string(slice_w) + ")");
    }
}

void SliceDataset::save(const std::filesystem::path& path) const {
    const std::int64_t n = static_cast<std::int64_t>(pairs.size());
    const std::int64_t h = slice_h > 0 ? slice_h : 1;
    const std::int64_t w = slice_w > 0 ? slice_w : 1;
    Archive ar;
    ar.meta += kv_line("format", "dhvae-slices-1");
    ar.meta += kv_line("count", std::to_string(n));
    ar.meta += kv_line("slice_h", std::to_string(slice_h));
    ar.meta += kv_line("slice_w", std::to_string(slice_w));
    ar.meta += kv_line("split", split_tag);
    if (n > 0) {
        Tensor images({n, h, w});
        std::vector<unsigned char> masks(static_cast<std::size_t>(n * h * w));
        std::string manifest;
        for (std::int64_t i = 0; i < n; ++i) {
            const SlicePair& p = pairs[static_cast<std::size_t>(i)];
            std::copy(p.image.data(), p.image.data() + h * w, images.data() + i * h * w);
            for (std::int64_t j = 0; j < h * w; ++j)
                masks[static_cast<std::size_t>(i * h * w + j)] = p.mask[j] != 0.0 ? 1 : 0;
            manifest += p.subject_id + "," + std::to_string(p.slice_index) + "," + provenance_name(p.provenance) + "\n";
        }
        ar.add_tensor("images", images);
        ar.entries.push_back(ArchiveEntry::from_bytes("masks", {n, h, w}, ArrayDType::u8, std::move(masks)));
        std::vector<unsigned char> mf(manifest.begin(), manifest.end());
        if (mf.empty()) mf.push_back(0);
        const std::int64_t mf_len = static_cast<std::int64_t>(mf.size());
        ar.entries.push_back(ArchiveEntry::from_bytes("manifest", {mf_len}, ArrayDType::u8, std::move(mf)));
    }
    ar.write(path);
}

SliceDataset SliceDataset::load(const std::filesystem::path& path) {
    const Archive ar = Archive::read(path);
    const auto kv = parse_kv_lines(ar.meta);
    if (!kv.count("format") || kv.at("format") != "dhvae-slices-1")
        throw FormatError("not a slice dataset archive: " + path.string(), 8);
    SliceDataset ds;
    ds.split_tag = kv.count("split") ? kv.at("split") : "train";
    ds.slice_h = kv.count("slice_h") ? std::stoll(kv.at("slice_h")) : 0;
    ds.slice_w = kv.count("slice_w") ? std::stoll(kv.at("slice_w")) : 0;
    const std::int64_t n = kv.count("count") ? std::stoll(kv.at("count")) : 0;
    if (n == 0) return ds;

    const Tensor images = ar.entry("images").to_tensor();
    const Tensor masks = ar.entry("masks").to_tensor();
    const auto& mf = ar.entry("manifest").raw;
    std::istringstream ms(std::string(mf.begin(), mf.end()));
    const std::int64_t h = ds.slice_h, w = ds.slice_w;
    if (images.shape() != Shape{n, h, w} || masks.shape() != Shape{n, h, w})
        throw FormatError("slice dataset blocks inconsistent with manifest count", 8);
    std::string line;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!std::getline(ms, line)) throw FormatError("slice manifest shorter than count", 8);
        std::istringstream ls(line);
        SlicePair p;
        std::string sid, sidx, prov;
        if (!std::getline(ls, sid, ',') || !std::getline(ls, sidx, ',') || !std::getline(ls, prov))
            throw FormatError("bad manifest row: " + line, 8);
        p.subject_id = sid;
        p.slice_index = std::stoll(sidx);
        p.provenance = provenance_from_name(prov);
        p.image = Tensor({h, w});
        p.mask = Tensor({h, w});
        std::copy(images.data() + i * h * w, images.data() + (i + 1) * h * w, p.image.data());
        std::copy(masks.data() + i * h * w, masks.data() + (i + 1) * h * w, p.mask.data());
        ds.pairs.push_back(std::move(p));
    }
    ds.validate();
    return ds;
}

bool dataset_equal(const SliceDataset& a, const SliceDataset& b) {
    if (a.pairs.size() != b.pairs.size() || a.slice_h != b.slice_h || a.slice_w != b.slice_w ||
        a.split_tag != b.split_tag)
        return false;
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        const auto& pa = a.pairs[i];
        const auto& pb = b.pairs[i];
        if (pa.subject_id != pb.subject_id || pa.slice_index != pb.slice_index ||
            pa.provenance != pb.provenance)
            return false;
        for (std::int64_t j = 0; j < pa.image.numel(); ++j)
            if (pa.image[j] != pb.image[j] || pa.mask[j] != pb.mask[j]) return false;
    }
    return true;
}

std::vector<SlicePair> extract_tumor_slices(const Volume3D& img, const MaskVolume3D& mask,
                                            std::int64_t min_fg_pixels, int axis) {
    if (img.values.shape() != mask.values.shape())
        throw PairingError("image " + shape_str(img.values.shape()) + " and mask " +
                           shape_str(mask.values.shape()) + " are not paired");
    if (min_fg_pixels < 1) throw ConfigError("min_fg_pixels must be >= 1");
    if (axis < 0 || axis > 2) throw ConfigError("slice axis must be 0, 1 or 2");
    const std::int64_t D = img.depth(), H = img.height(), W = img.width();
    // volume tensor is (D,H,W) = (z,y,x); axial = axis 2 in (x,y,z) naming = z planes
    std::vector<SlicePair> out;
    auto emit = [&](Tensor image, Tensor m, std::int64_t index) {
        std::int64_t fg = 0;
        for (std::int64_t i = 0; i < m.numel(); ++i) fg += m[i] != 0.0;
        if (fg < min_fg_pixels) return;
        SlicePair p;
        p.image = clamp(image, 0.0, 1.0);
        p.mask = std::move(m);
        p.subject_id = img.subject_id;
        p.slice_index = index;
        p.provenance = Provenance::real;
        p.validate();
        out.push_back(std::move(p));
    };
    if (axis == 2) {
        for (std::int64_t z = 0; z < D; ++z) {
            Tensor im({H, W}), mk({H, W});
            std::copy(img.values.data() + z * H * W, img.values.data() + (z + 1) * H * W, im.data());
            std::copy(mask.values.data() + z * H * W, mask.values.data() + (z + 1) * H * W, mk.data());
            emit(std::move(im), std::move(mk), z);
        }
    } else if (axis == 1) {
        for (std::int64_t y = 0; y < H; ++y) {
            Tensor im({D, W}), mk({D, W});
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t x = 0; x < W; ++x) {
                    im.at(z, x) = img.values.at(z, y, x);
                    mk.at(z, x) = mask.values.at(z, y, x);
                }
            emit(std::move(im), std::move(mk), y);
        }
    } else {
        for (std::int64_t x = 0; x < W; ++x) {
            Tensor im({D, H}), mk({D, H});
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y) {
                    im.at(z, y) = img.values.at(z, y, x);
                    mk.at(z, y) = mask.values.at(z, y, x);
                }
            emit(std::move(im), std::move(mk), x);
        }
    }
    return out;
}

namespace {

// separable 3x3x3 box smoothing, replicate borders
Tensor box_smooth(const Tensor& v) {
    const std::int64_t D = v.dim(0), H = v.dim(1), W = v.dim(2);
    Tensor a = v, b(v.shape());
    auto pass = [&](const Tensor& src, Tensor& dst, int ax) {
        const std::int64_t dims[3] = {D, H, W};
        for (std::int64_t z = 0; z < D; ++z)
            for (std::int64_t y = 0; y < H; ++y)
                for (std::int64_t x = 0; x < W; ++x) {
                    std::int64_t idx[3] = {z, y, x};
                    double s = 0;
                    for (int t = -1; t <= 1; ++t) {
                        std::int64_t j = std::clamp(idx[ax] + t, std::int64_t{0}, dims[ax] - 1);
                        std::int64_t c[3] = {z, y, x};
                        c[ax] = j;
                        s += src.at(c[0], c[1], c[2]);
                    }
                    dst.at(z, y, x) = s / 3.0;
                }
    };
    pass(a, b, 0);
    pass(b, a, 1);
    pass(a, b, 2);
    return b;
}

}  // namespace

std::vector<std::pair<Volume3D, MaskVolume3D>> make_blob_corpus(std::int64_t n_subjects, std::int64_t h,
                                                                std::int64_t w, std::int64_t d,
                                                                std::uint64_t seed) {
    if (n_subjects < 1) throw ConfigError("make_blob_corpus: n_subjects must be >= 1");
    if (h < 8 || w < 8 || d < 8) throw ConfigError("make_blob_corpus: each dimension must be >= 8");
    std::vector<std::pair<Volume3D, MaskVolume3D>> out;
    out.reserve(static_cast<std::size_t>(n_subjects));
    for (std::int64_t s = 0; s < n_subjects; ++s) {
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(s), 0xB10B));
        const std::int64_t D = d, H = h, W = w;
        Tensor noise = rng.uniform_tensor({D, H, W});
        Tensor bg = box_smooth(box_smooth(noise));
        // rescale smoothed noise onto [0.10, 0.45]
        const double lo = bg.min(), hi = bg.max();
        const double span = hi > lo ? hi - lo : 1.0;
        Tensor img({D, H, W});
        for (std::int64_t i = 0; i < img.numel(); ++i) img[i] = 0.10 + 0.35 * (bg[i] - lo) / span;

        Tensor mask({D, H, W});
        const int n_blobs = 1 + static_cast<int>(rng.uniform_int(3));
        for (int bidx = 0; bidx < n_blobs; ++bidx) {
            const double rmin_xy = 0.09 * static_cast<double>(std::min(H, W));
            const double rmax_xy = 0.18 * static_cast<double>(std::min(H, W));
            const double rx = rng.uniform(rmin_xy, rmax_xy);
            const double ry = rng.uniform(rmin_xy, rmax_xy);
            const double rz = rng.uniform(0.17 * static_cast<double>(D), 0.30 * static_cast<double>(D));
            const double cx = rng.uniform(rx + 1.0, static_cast<double>(W) - rx - 1.0);
            const double cy = rng.uniform(ry + 1.0, static_cast<double>(H) - ry - 1.0);
            const double cz = rng.uniform(rz + 1.0, static_cast<double>(D) - rz - 1.0);
            for (std::int64_t z = 0; z < D; ++z)
                for (std::int64_t y = 0; y < H; ++y)
                    for (std::int64_t x = 0; x < W; ++x) {
                        const double dx = (static_cast<double>(x) - cx) / rx;
                        const double dy = (static_cast<double>(y) - cy) / ry;
                        const double dz = (static_cast<double>(z) - cz) / rz;
                        const double r2 = dx * dx + dy * dy + dz * dz;
                        if (r2 <= 1.0) {
                            mask.at(z, y, x) = 1.0;
                            // bright dome over the background; pre-noise level
                            // always exceeds the background mean (<= 0.45)
                            img.at(z, y, x) = 0.75 + 0.2 * (1.0 - r2);
                        }
                    }
        }
        // light voxel noise, then clamp into [0,1]
        for (std::int64_t i = 0; i < img.numel(); ++i)
            img[i] = std::clamp(img[i] + 0.03 * (rng.uniform() - 0.5), 0.0, 1.0);

        Volume3D vol;
        vol.values = std::move(img);
        vol.modality = Modality::synthetic;
        vol.subject_id = "blob" + std::to_string(s);
        vol.spacing = {1.0, 1.0, 1.0};
        MaskVolume3D mv;
        mv.values = std::move(mask);
        vol.validate();
        mv.validate();
        out.emplace_back(std::move(vol), std::move(mv));
    }
    return out;
}

}  // namespace dhvae
