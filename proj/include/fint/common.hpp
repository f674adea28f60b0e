// Shared scalar type, error types and seeded RNG used across the library.
#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fint {

// Compute precision. 64-bit by default; define FINT_REAL32 globally to build
// the whole library in 32-bit mode for speed experiments. Gradient checks and
// the acceptance suite assume the 64-bit default.
#ifdef FINT_REAL32
using real = float;
#else
using real = double;
#endif

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

// Deterministic RNG. mt19937_64 supplies the bits; the mappings to floats and
// bounded ints are hand-rolled so results never depend on the standard
// library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    real uniform() {
        return static_cast<real>((gen_() >> 11) * 0x1.0p-53);
    }

    real uniform(real lo, real hi) { return lo + (hi - lo) * uniform(); }

    // uniform in [0, n)
    uint64_t below(uint64_t n) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(gen_()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// FNV-1a, used for input checksums and schema hashes.
inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Without this overload a string literal would match the (void*, size_t)
// form, silently treating the running hash as a byte count.
inline uint64_t fnv1a64(const char* s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s, std::char_traits<char>::length(s), h);
}

} // namespace fint
