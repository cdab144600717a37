#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace quadtrack {

// Error taxonomy. CLI maps these to exit codes: UsageError -> 1,
// DataError -> 2, check failures -> 3.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

struct GeometryError : Error {
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

struct DataError : Error {
    explicit DataError(const std::string& msg) : Error(msg) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(msg) {}
};

// Worker cap for all parallel kernels. Resolves QUADTRACK_THREADS once on
// first use; values < 1 fall back to the OpenMP default.
int worker_threads();

// Test hook: override the cap in-process (0 restores env/default resolution).
void set_worker_threads(int n);

// Deterministic RNG. mt19937 core with hand-rolled float mapping so streams
// do not depend on libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint32_t next_u32() {
        // splitmix64, truncated
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return static_cast<uint32_t>((z ^ (z >> 31)) >> 16);
    }

    // uniform in [0, 1)
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    // uniform in [lo, hi)
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) { return n ? next_u32() % n : 0; }

    Rng fork(uint64_t stream) { return Rng(state_ ^ (stream * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull)); }

private:
    uint64_t state_;
};

}  // namespace quadtrack
