#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace holo {

// Base class for all toolkit errors. Subclasses carry no extra state;
// the type itself is the error code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define HOLO_ERROR_TYPE(NAME)                                                  \
    class NAME : public Error {                                                \
    public:                                                                    \
        using Error::Error;                                                    \
    }

HOLO_ERROR_TYPE(CodeTooLarge);
HOLO_ERROR_TYPE(RoiTooLarge);
HOLO_ERROR_TYPE(ImageTooSmall);
HOLO_ERROR_TYPE(OutOfRange);
HOLO_ERROR_TYPE(InvalidResize);
HOLO_ERROR_TYPE(ShapeMismatch);
HOLO_ERROR_TYPE(StaleCache);
HOLO_ERROR_TYPE(LabelOutOfRange);
HOLO_ERROR_TYPE(InvalidConfig);
HOLO_ERROR_TYPE(InsufficientData);
HOLO_ERROR_TYPE(DivergenceDetected);
HOLO_ERROR_TYPE(EmptySweep);
HOLO_ERROR_TYPE(NoSuchLayer);
HOLO_ERROR_TYPE(NotConvolutional);
HOLO_ERROR_TYPE(NotViT);
HOLO_ERROR_TYPE(MissingRawImages);
HOLO_ERROR_TYPE(ConfigError);
HOLO_ERROR_TYPE(IoError);

#undef HOLO_ERROR_TYPE

// Deterministic, platform-independent RNG. splitmix64 core with explicit
// Box-Muller for normals, so the same seed yields the same stream on any
// compiler/libc.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::int64_t uniform_int(std::int64_t n) {
        return static_cast<std::int64_t>(next_u64() % static_cast<std::uint64_t>(n));
    }

    double normal();

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Hierarchical seed derivation: every random stream in the toolkit is keyed
// by (base seed, label, indices) through SHA-256, so one top-level seed
// reproduces an entire run.
std::uint64_t seed_stream(std::uint64_t base, std::string_view label,
                          std::uint64_t a = 0, std::uint64_t b = 0);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file_hex(const std::string& path);

// Shared worker pool used by the heavy inner loops. Work is split into
// contiguous chunks and every output element is written by exactly one
// worker, so results are identical for any thread count.
void set_thread_count(int n);
int thread_count();
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk);

} // namespace holo
