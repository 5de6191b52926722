#pragma once

// Single-file archive of named arrays plus a free-text metadata header.
// Used for model checkpoints ("dhvae-ckpt-1") and slice datasets
// ("dhvae-slices-1"). Little-endian, bit-exact round-trip for f64 payloads.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dhvae/tensor.hpp"

namespace dhvae {

enum class ArrayDType : std::uint8_t { f64 = 0, f32 = 1, u8 = 2 };

struct ArchiveEntry {
    std::string name;
    ArrayDType dtype = ArrayDType::f64;
    Shape dims;
    std::vector<unsigned char> raw;

    static ArchiveEntry from_tensor(const std::string& name, const Tensor& t);
    static ArchiveEntry from_bytes(const std::string& name, Shape dims, ArrayDType dtype,
                                   std::vector<unsigned char> bytes);
    Tensor to_tensor() const;  // f64/f32/u8 all widen to double
};

struct Archive {
    std::string meta;  // plain text, "key = value" lines by convention
    std::vector<ArchiveEntry> entries;

    void add_tensor(const std::string& name, const Tensor& t);
    const ArchiveEntry& entry(const std::string& name) const;
    bool has(const std::string& name) const;

    void write(const std::filesystem::path& path) const;
    static Archive read(const std::filesystem::path& path);
};

// key=value helpers for metadata blocks
std::map<std::string, std::string> parse_kv_lines(const std::string& text);
std::string kv_line(const std::string& key, const std::string& value);
std::string format_double(double v);  // %.17g, round-trips exactly

}  // namespace dhvae
