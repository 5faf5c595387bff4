#include "hvg/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace hvg {

namespace {

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer. Full-avalanche 64-bit mix.
inline uint64_t mix64(uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

}  // namespace

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

Rng::Rng(uint64_t seed, uint64_t stream) { key_ = mix64(mix64(seed + kGolden) ^ mix64(stream + 0x632BE59BD9B4E019ull)); }

uint64_t Rng::next_u64() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

int64_t Rng::uniform_int(int64_t n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // Rejection-free is fine here: 64-bit modulo bias is negligible for the
    // small n used in this project, but keep it unbiased anyway.
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int64_t>(x % un);
}

double Rng::normal() {
    // Box-Muller, cosine branch only: stateless apart from the counter.
    double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

Tensor Rng::normal_tensor(std::vector<int64_t> shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mean, stddev);
    return t;
}

Tensor Rng::uniform_tensor(std::vector<int64_t> shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    return t;
}

Rng Rng::split(uint64_t substream) const {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(substream + 0xD6E8FEB86659FD93ull));
    child.counter_ = 0;
    return child;
}

Rng Rng::split(std::string_view label) const { return split(fnv1a64(label)); }

}  // namespace hvg
