#include "dhvae/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dhvae/errors.hpp"

namespace dhvae {

static const char kMagic[8] = {'D', 'H', 'V', 'A', 'E', 'A', 'R', '1'};

ArchiveEntry ArchiveEntry::from_tensor(const std::string& name, const Tensor& t) {
    ArchiveEntry e;
    e.name = name;
    e.dtype = ArrayDType::f64;
    e.dims = t.shape();
    e.raw.resize(static_cast<std::size_t>(t.numel()) * sizeof(double));
    std::memcpy(e.raw.data(), t.data(), e.raw.size());
    return e;
}

ArchiveEntry ArchiveEntry::from_bytes(const std::string& name, Shape dims, ArrayDType dtype,
                                      std::vector<unsigned char> bytes) {
    ArchiveEntry e;
    e.name = name;
    e.dtype = dtype;
    e.dims = std::move(dims);
    e.raw = std::move(bytes);
    return e;
}

Tensor ArchiveEntry::to_tensor() const {
    const std::int64_t n = shape_numel(dims);
    Tensor t(dims);
    switch (dtype) {
        case ArrayDType::f64:
            if (raw.size() != static_cast<std::size_t>(n) * 8) throw FormatError("entry '" + name + "': size mismatch", 0);
            std::memcpy(t.data(), raw.data(), raw.size());
            break;
        case ArrayDType::f32: {
            if (raw.size() != static_cast<std::size_t>(n) * 4) throw FormatError("entry '" + name + "': size mismatch", 0);
            const float* p = reinterpret_cast<const float*>(raw.data());
            for (std::int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(p[i]);
            break;
        }
        case ArrayDType::u8:
            if (raw.size() != static_cast<std::size_t>(n)) throw FormatError("entry '" + name + "': size mismatch", 0);
            for (std::int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(raw[static_cast<std::size_t>(i)]);
            break;
    }
    return t;
}

void Archive::add_tensor(const std::string& name, const Tensor& t) {
    entries.push_back(ArchiveEntry::from_tensor(name, t));
}

bool Archive::has(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return true;
    return false;
}

const ArchiveEntry& Archive::entry(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw FormatError("archive has no entry '" + name + "'", 0);
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, std::uint64_t& off, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError(std::string("truncated archive while reading ") + what, off);
    off += sizeof(T);
    return v;
}

}  // namespace

void Archive::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    os.write(kMagic, 8);
    put<std::uint64_t>(os, meta.size());
    os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<std::uint64_t>(os, entries.size());
    for (const auto& e : entries) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put<std::uint8_t>(os, static_cast<std::uint8_t>(e.dtype));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims) put<std::uint64_t>(os, static_cast<std::uint64_t>(d));
        put<std::uint64_t>(os, e.raw.size());
        os.write(reinterpret_cast<const char*>(e.raw.data()), static_cast<std::streamsize>(e.raw.size()));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

Archive Archive::read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    std::uint64_t off = 0;
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("bad archive magic", 0);
    off = 8;
    Archive ar;
    const auto meta_len = get<std::uint64_t>(is, off, "meta length");
    ar.meta.resize(meta_len);
    is.read(ar.meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw FormatError("truncated archive while reading metadata", off);
    off += meta_len;
    const auto n_entries = get<std::uint64_t>(is, off, "entry count");
    for (std::uint64_t i = 0; i < n_entries; ++i) {
        ArchiveEntry e;
        const auto name_len = get<std::uint32_t>(is, off, "entry name length");
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        if (!is) throw FormatError("truncated archive while reading entry name", off);
        off += name_len;
        const auto dt = get<std::uint8_t>(is, off, "entry dtype");
        if (dt > 2) throw FormatError("unknown dtype tag " + std::to_string(dt), off - 1);
        e.dtype = static_cast<ArrayDType>(dt);
        const auto rank = get<std::uint32_t>(is, off, "entry rank");
        if (rank > 8) throw FormatError("implausible entry rank " + std::to_string(rank), off - 4);
        for (std::uint32_t d = 0; d < rank; ++d)
            e.dims.push_back(static_cast<std::int64_t>(get<std::uint64_t>(is, off, "entry dim")));
        const auto nbytes = get<std::uint64_t>(is, off, "entry byte length");
        // size sanity before allocating
        const std::int64_t n = shape_numel(e.dims);
        const std::uint64_t expect = static_cast<std::uint64_t>(n) *
                                     (e.dtype == ArrayDType::f64 ? 8 : e.dtype == ArrayDType::f32 ? 4 : 1);
        if (nbytes != expect)
            throw FormatError("entry '" + e.name + "' byte length " + std::to_string(nbytes) +
                                  " does not match dims",
                              off - 8);
        e.raw.resize(nbytes);
        is.read(reinterpret_cast<char*>(e.raw.data()), static_cast<std::streamsize>(nbytes));
        if (!is) throw FormatError("truncated archive while reading entry data", off);
        off += nbytes;
        ar.entries.push_back(std::move(e));
    }
    return ar;
}

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string kv_line(const std::string& key, const std::string& value) { return key + " = " + value + "\n"; }

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace dhvae
