#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace popt {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Error category, mapped 1:1 onto CLI exit codes.
enum class ErrorKind {
    validation,    // bad input, schema violation, contract violation (exit 1)
    backend,       // chat backend exhausted retries or replied garbage (exit 2)
    parse,         // structured-output parsing failed (exit 2)
    verification,  // oracle/self-check failure (exit 3)
};

class PipelineError : public std::runtime_error {
public:
    PipelineError(ErrorKind kind, const std::string& msg)
        : std::runtime_error(msg), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::validation: return 1;
            case ErrorKind::backend: return 2;
            case ErrorKind::parse: return 2;
            case ErrorKind::verification: return 3;
        }
        return 1;
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
    throw PipelineError(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
    if (!cond) fail(kind, msg);
}

// ---------------------------------------------------------------------------
// Stable hashing / seed derivation
//
// All randomness in the pipeline flows from one root seed, fanned out by
// stable derivation over (stage label, item key). Uses FNV-1a + splitmix64;
// never std::hash, which is not stable across processes or standard
// libraries.
// ---------------------------------------------------------------------------

constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    return splitmix64(root ^ fnv1a64(label));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::uint64_t index) {
    return splitmix64(derive_seed(root, label) ^ splitmix64(index));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                                 std::string_view key) {
    return splitmix64(derive_seed(root, label) ^ fnv1a64(key));
}

std::string to_hex(std::uint64_t v);

// ---------------------------------------------------------------------------
// Text utilities
// ---------------------------------------------------------------------------

bool is_ascii_alnum(unsigned char c);

/// Word character for tokenization: ASCII alphanumeric or any byte >= 0x80
/// (multi-byte UTF-8 sequences stay glued to their word).
bool is_word_byte(unsigned char c);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

/// BLEU-style tokenizer: lowercase; maximal word-byte runs become tokens;
/// each ASCII punctuation byte becomes its own token; whitespace separates.
std::vector<std::string> tokenize(std::string_view text);

/// Word tokens only (no punctuation tokens), lowercased.
std::vector<std::string> word_tokens(std::string_view text);

/// Whitespace-delimited chunk count; used by length rules.
std::size_t whitespace_token_count(std::string_view text);

/// ASCII-alphanumeric bytes over all non-whitespace bytes. Empty text -> 0.
double alnum_ratio(std::string_view text);

bool contains_token(std::string_view text, std::string_view lowercase_token);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Writes content to `<path>.tmp` and renames onto `path`. The final path
/// only ever holds complete content.
void atomic_write_file(const std::filesystem::path& path, std::string_view content);

// ---------------------------------------------------------------------------
// Bounded concurrent map
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on up to max_concurrency threads and returns
/// results indexed by i, so output order never depends on scheduling. fn must
/// handle its own per-item failures; a thrown exception aborts the whole map.
template <typename Fn>
auto parallel_map_indexed(std::size_t n, unsigned max_concurrency, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{0}))>;

}  // namespace popt

#include "popt/common_impl.hpp"
