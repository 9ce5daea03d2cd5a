#pragma once

// Shared plumbing: deterministic RNG, error type, small string/file helpers.
//
// All randomness in the project flows through Rng so that corpora, training
// runs and evaluations are pure functions of their seeds.  The raw engine is
// std::mt19937_64 (its output sequence is pinned by the standard); the draw
// helpers on top are hand-rolled so no libstdc++ distribution internals leak
// into frozen test values.

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rim {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(what); }

inline void check(bool ok, const std::string& what) {
    if (!ok) fail(what);
}

// ----------------------------------------------------------------- rng ----

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derive an independent stream seed from (seed, index) pairs; used to make
/// sample i of a corpus (or step s of a run) independent of everything else.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    uint64_t s = seed;
    uint64_t a = splitmix64(s);
    s ^= 0x9E3779B97F4A7C15ull * (index + 1);
    uint64_t b = splitmix64(s);
    return a ^ (b + 0x632BE59BD9B4E019ull);
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [lo, hi] inclusive, via rejection sampling (unbiased,
    /// and independent of any library distribution implementation).
    int64_t uniform_int(int64_t lo, int64_t hi) {
        check(lo <= hi, "uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(next_u64());  // full range
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return lo + static_cast<int64_t>(x % span);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller (deterministic pair caching).
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Pick an index according to non-negative weights (sum need not be 1).
    size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) { check(w >= 0.0, "categorical: negative weight"); total += w; }
        check(total > 0.0, "categorical: all weights zero");
        double x = uniform() * total;
        double acc = 0.0;
        for (size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (x < acc) return i;
        }
        return weights.size() - 1;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ------------------------------------------------------------- strings ----

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::vector<std::string> split_lines(const std::string& text);
bool starts_with(const std::string& s, const std::string& prefix);

/// FNV-1a over bytes; used for config hashes recorded in artifacts.
inline uint64_t fnv1a(const std::string& bytes, uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t v);

}  // namespace rim
