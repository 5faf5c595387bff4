#pragma once

#include <cstdint>
#include <string_view>

#include "hvg/tensor.hpp"

namespace hvg {

/// Splittable counter-based generator. Output i is a pure function of
/// (key, i), so streams never alias and every component can derive its own
/// independent child stream from a label. No global state anywhere.
class Rng {
  public:
    explicit Rng(uint64_t seed, uint64_t stream = 0);

    uint64_t next_u64();
    /// Uniform in [0,1) on the dyadic grid k * 2^-53.
    double uniform();
    /// Uniform with endpoints, still dyadic: lo + u*(hi-lo).
    double uniform(double lo, double hi);
    /// Integer in [0, n), n > 0.
    int64_t uniform_int(int64_t n);
    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal();
    double normal(double mean, double stddev);

    Tensor normal_tensor(std::vector<int64_t> shape, double mean = 0.0, double stddev = 1.0);
    Tensor uniform_tensor(std::vector<int64_t> shape, double lo = 0.0, double hi = 1.0);

    /// Child generator with an independent stream. Deterministic in
    /// (parent key, substream id).
    Rng split(uint64_t substream) const;
    Rng split(std::string_view label) const;

    uint64_t key() const { return key_; }

  private:
    uint64_t key_ = 0;
    uint64_t counter_ = 0;
};

/// FNV-1a over a string, used to derive stream ids from labels.
uint64_t fnv1a64(std::string_view s);

}  // namespace hvg
