#include "dhvae/volume.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "dhvae/errors.hpp"

namespace dhvae {

std::string modality_name(Modality m) {
    switch (m) {
        case Modality::mri_flair: return "MRI-FLAIR";
        case Modality::pet: return "PET";
        case Modality::synthetic: return "SYNTHETIC";
    }
    return "SYNTHETIC";
}

Modality modality_from_name(const std::string& s) {
    if (s == "MRI-FLAIR") return Modality::mri_flair;
    if (s == "PET") return Modality::pet;
    if (s == "SYNTHETIC") return Modality::synthetic;
    throw ConfigError("unknown modality tag: " + s);
}

void Volume3D::validate() const {
    if (values.rank() != 3) throw IngestionError("volume must be rank-3, got " + shape_str(values.shape()));
    for (double s : spacing)
        if (!(s > 0.0)) throw IngestionError("volume spacing must be positive");
    std::int64_t bad = 0;
    for (std::int64_t i = 0; i < values.numel(); ++i)
        if (!std::isfinite(values[i])) ++bad;
    if (bad > 0)
        throw IngestionError("volume '" + subject_id + "' has " + std::to_string(bad) + " non-finite voxels");
}

void MaskVolume3D::validate() const {
    if (values.rank() != 3) throw IngestionError("mask must be rank-3, got " + shape_str(values.shape()));
    for (std::int64_t i = 0; i < values.numel(); ++i)
        if (values[i] != 0.0 && values[i] != 1.0)
            throw IngestionError("mask voxel " + std::to_string(i) + " is not 0/1");
}

std::int64_t MaskVolume3D::foreground_count() const {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < values.numel(); ++i) n += values[i] != 0.0;
    return n;
}

namespace {

// --- NIfTI-1 ---------------------------------------------------------------

#pragma pack(push, 1)
struct NiftiHeader {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(NiftiHeader) == 348, "nifti-1 header must be 348 bytes");

std::vector<unsigned char> read_file_maybe_gz(const std::filesystem::path& path, bool gz) {
    std::vector<unsigned char> bytes;
    if (gz) {
        gzFile f = gzopen(path.string().c_str(), "rb");
        if (!f) throw IngestionError("cannot open " + path.string());
        unsigned char buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof(buf))) > 0) bytes.insert(bytes.end(), buf, buf + n);
        const bool bad = n < 0;
        gzclose(f);
        if (bad) throw IngestionError("gzip decode failed for " + path.string());
    } else {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IngestionError("cannot open " + path.string());
        bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
    }
    return bytes;
}

Volume3D load_nifti(const std::filesystem::path& path, bool gz) {
    const auto bytes = read_file_maybe_gz(path, gz);
    if (bytes.size() < sizeof(NiftiHeader))
        throw IngestionError(path.string() + ": file shorter than a NIfTI-1 header");
    NiftiHeader hdr;
    std::memcpy(&hdr, bytes.data(), sizeof(hdr));
    if (hdr.sizeof_hdr != 348)
        throw IngestionError(path.string() + ": not little-endian NIfTI-1 (sizeof_hdr=" +
                             std::to_string(hdr.sizeof_hdr) + ")");
    if (std::memcmp(hdr.magic, "n+1", 3) != 0 && std::memcmp(hdr.magic, "ni1", 3) != 0)
        throw IngestionError(path.string() + ": bad NIfTI magic");
    if (hdr.dim[0] < 3) throw IngestionError(path.string() + ": expected a 3-D volume, dim[0]=" + std::to_string(hdr.dim[0]));
    for (int d = 4; d <= hdr.dim[0]; ++d)
        if (hdr.dim[d] > 1)
            throw IngestionError(path.string() + ": volume has more than 3 non-trivial dimensions");
    const std::int64_t nx = hdr.dim[1], ny = hdr.dim[2], nz = hdr.dim[3];
    if (nx < 1 || ny < 1 || nz < 1) throw IngestionError(path.string() + ": non-positive dimension in header");
    const std::int64_t n = nx * ny * nz;
    const std::size_t off = static_cast<std::size_t>(hdr.vox_offset);
    const int dt = hdr.datatype;
    const std::size_t elem = dt == 2 ? 1 : dt == 4 ? 2 : dt == 8 ? 4 : dt == 16 ? 4 : dt == 64 ? 8
                            : dt == 256 ? 1 : dt == 512 ? 2 : 0;
    if (elem == 0) throw IngestionError(path.string() + ": unsupported NIfTI datatype " + std::to_string(dt));
    if (bytes.size() < off + elem * static_cast<std::size_t>(n))
        throw IngestionError(path.string() + ": data block truncated");
    // NIfTI stores x fastest; reading sequentially into (nz, ny, nx) keeps
    // values.at(z, y, x) addressing.
    Tensor vals({nz, ny, nx});
    const unsigned char* p = bytes.data() + off;
    for (std::int64_t i = 0; i < n; ++i) {
        double v = 0;
        switch (dt) {
            case 2: v = p[i]; break;
            case 4: { std::int16_t t; std::memcpy(&t, p + 2 * i, 2); v = t; break; }
            case 8: { std::int32_t t; std::memcpy(&t, p + 4 * i, 4); v = t; break; }
            case 16: { float t; std::memcpy(&t, p + 4 * i, 4); v = t; break; }
            case 64: { double t; std::memcpy(&t, p + 8 * i, 8); v = t; break; }
            case 256: { std::int8_t t; std::memcpy(&t, p + i, 1); v = t; break; }
            case 512: { std::uint16_t t; std::memcpy(&t, p + 2 * i, 2); v = t; break; }
        }
        vals[i] = v;
    }
    if (hdr.scl_slope != 0.0f && !(hdr.scl_slope == 1.0f && hdr.scl_inter == 0.0f)) {
        for (std::int64_t i = 0; i < n; ++i)
            vals[i] = vals[i] * static_cast<double>(hdr.scl_slope) + static_cast<double>(hdr.scl_inter);
    }
    Volume3D vol;
    vol.values = std::move(vals);
    vol.spacing = {hdr.pixdim[1] > 0 ? hdr.pixdim[1] : 1.0, hdr.pixdim[2] > 0 ? hdr.pixdim[2] : 1.0,
                   hdr.pixdim[3] > 0 ? hdr.pixdim[3] : 1.0};
    return vol;
}

void save_nifti(const Tensor& vals, const std::array<double, 3>& spacing, const std::filesystem::path& path) {
    NiftiHeader hdr{};
    hdr.sizeof_hdr = 348;
    hdr.dim[0] = 3;
    hdr.dim[1] = static_cast<std::int16_t>(vals.dim(2));
    hdr.dim[2] = static_cast<std::int16_t>(vals.dim(1));
    hdr.dim[3] = static_cast<std::int16_t>(vals.dim(0));
    for (int d = 4; d < 8; ++d) hdr.dim[d] = 1;
    hdr.datatype = 16;  // float32
    hdr.bitpix = 32;
    hdr.pixdim[0] = 1.0f;
    hdr.pixdim[1] = static_cast<float>(spacing[0]);
    hdr.pixdim[2] = static_cast<float>(spacing[1]);
    hdr.pixdim[3] = static_cast<float>(spacing[2]);
    hdr.vox_offset = 352.0f;
    hdr.scl_slope = 1.0f;
    std::memcpy(hdr.magic, "n+1", 4);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    const char ext[4] = {0, 0, 0, 0};
    os.write(ext, 4);
    std::vector<float> buf(static_cast<std::size_t>(vals.numel()));
    for (std::int64_t i = 0; i < vals.numel(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(vals[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw IoError("write failed: " + path.string());
}

// --- .rawvol test container ---------------------------------------------------

Volume3D load_rawvol(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IngestionError("cannot open " + path.string());
    std::string header;
    if (!std::getline(is, header)) throw IngestionError(path.string() + ": missing rawvol header line");
    std::istringstream hs(header);
    std::int64_t H = 0, W = 0, D = 0;
    double sx = 0, sy = 0, sz = 0;
    if (!(hs >> H >> W >> D >> sx >> sy >> sz))
        throw IngestionError(path.string() + ": bad rawvol header '" + header + "'");
    if (H < 1 || W < 1 || D < 1) throw IngestionError(path.string() + ": non-positive rawvol dimension");
    const std::int64_t n = H * W * D;
    std::vector<float> buf(static_cast<std::size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!is) throw IngestionError(path.string() + ": rawvol data truncated");
    Tensor vals({D, H, W});
    for (std::int64_t i = 0; i < n; ++i) vals[i] = static_cast<double>(buf[static_cast<std::size_t>(i)]);
    Volume3D vol;
    vol.values = std::move(vals);
    vol.spacing = {sx, sy, sz};
    return vol;
}

void save_rawvol(const Tensor& vals, const std::array<double, 3>& spacing, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os << vals.dim(1) << " " << vals.dim(2) << " " << vals.dim(0) << " " << spacing[0] << " " << spacing[1]
       << " " << spacing[2] << "\n";
    std::vector<float> buf(static_cast<std::size_t>(vals.numel()));
    for (std::int64_t i = 0; i < vals.numel(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(vals[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    if (!os) throw IoError("write failed: " + path.string());
}

struct ParsedPath {
    std::string stem;  // path without volume extension
    std::string ext;   // ".nii", ".nii.gz" or ".rawvol"
};

ParsedPath parse_volume_path(const std::filesystem::path& path) {
    const std::string s = path.string();
    for (const char* ext : {".nii.gz", ".nii", ".rawvol"}) {
        const std::string e(ext);
        if (s.size() > e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0)
            return {s.substr(0, s.size() - e.size()), e};
    }
    throw IngestionError("unsupported volume container (expect .nii, .nii.gz or .rawvol): " + s);
}

Volume3D load_any(const std::filesystem::path& path, const ParsedPath& pp) {
    if (pp.ext == ".rawvol") return load_rawvol(path);
    return load_nifti(path, pp.ext == ".nii.gz");
}

}  // namespace

std::pair<Volume3D, std::optional<MaskVolume3D>> load_volume(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw IngestionError("no such file: " + path.string());
    const ParsedPath pp = parse_volume_path(path);
    Volume3D vol = load_any(path, pp);
    vol.subject_id = std::filesystem::path(pp.stem).filename().string();
    vol.validate();

    std::optional<MaskVolume3D> mask;
    const std::filesystem::path mask_path = pp.stem + "_mask" + pp.ext;
    if (std::filesystem::exists(mask_path)) {
        Volume3D mv = load_any(mask_path, parse_volume_path(mask_path));
        if (mv.values.shape() != vol.values.shape())
            throw PairingError("mask shape " + shape_str(mv.values.shape()) + " does not match image shape " +
                               shape_str(vol.values.shape()) + " for " + path.string());
        MaskVolume3D m;
        m.values = Tensor(mv.values.shape());
        for (std::int64_t i = 0; i < mv.values.numel(); ++i) m.values[i] = mv.values[i] != 0.0 ? 1.0 : 0.0;
        m.validate();
        mask = std::move(m);
    }
    return {std::move(vol), std::move(mask)};
}

void save_volume(const Volume3D& v, const std::filesystem::path& path) {
    const ParsedPath pp = parse_volume_path(path);
    if (pp.ext == ".rawvol")
        save_rawvol(v.values, v.spacing, path);
    else if (pp.ext == ".nii")
        save_nifti(v.values, v.spacing, path);
    else
        throw IoError("writing .nii.gz is not supported; use .nii or .rawvol");
}

void save_mask(const MaskVolume3D& m, const std::array<double, 3>& spacing, const std::filesystem::path& path) {
    Volume3D v;
    v.values = m.values;
    v.spacing = spacing;
    save_volume(v, path);
}

Volume3D minmax_normalize(const Volume3D& v) {
    const double lo = v.values.min();
    const double hi = v.values.max();
    Volume3D out = v;
    if (hi <= lo) {
        out.values = Tensor(v.values.shape());  // constant volume -> all zeros
        return out;
    }
    const double inv = 1.0 / (hi - lo);
    for (std::int64_t i = 0; i < out.values.numel(); ++i) out.values[i] = (out.values[i] - lo) * inv;
    return out;
}

}  // namespace dhvae
