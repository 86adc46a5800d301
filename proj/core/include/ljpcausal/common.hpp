#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ljp {

// Malformed input (files, LLM responses). Carries enough context to locate
// the offending line or payload.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structurally valid input that violates a contract (duplicate ids,
// mismatched digests, bad parameter ranges).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unrecoverable failure of a pipeline stage.
class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// FNV-1a, used for stable content digests and feature hashing. Never used
// where cryptographic strength matters.
constexpr std::uint64_t kFnvBasis = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvBasis) {
    for (unsigned char c : bytes) {
        h ^= static_cast<std::uint64_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

std::string fnv1a_hex(std::string_view bytes);

// Derives an independent substream seed from a base seed. splitmix64-style
// mixing so that nearby (base, stream) pairs land far apart.
std::uint32_t derive_seed(std::uint32_t base, std::uint32_t stream);

// ASCII-only case fold; multi-byte UTF-8 sequences pass through untouched.
std::string to_lower(std::string_view s);

bool is_ascii_alnum(unsigned char c);

// Warning sink. Library code reports non-fatal conditions here; defaults to
// stderr. Tests may install a collector.
void log_warning(const std::string& msg);
void set_warning_handler(std::function<void(const std::string&)> handler);

}  // namespace ljp
