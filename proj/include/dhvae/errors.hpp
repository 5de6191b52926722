#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dhvae {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct RangeError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct IngestionError : Error { using Error::Error; };
struct PairingError : Error { using Error::Error; };
struct GenerationError : Error { using Error::Error; };
struct LeakageError : Error { using Error::Error; };
struct InsufficientSampleError : Error { using Error::Error; };

// Non-finite value encountered; message names the offending stage/component.
struct NumericError : Error { using Error::Error; };

// Corrupt container; carries the byte offset where parsing failed.
struct FormatError : Error {
    FormatError(const std::string& msg, std::uint64_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::uint64_t byte_offset;
};

}  // namespace dhvae
