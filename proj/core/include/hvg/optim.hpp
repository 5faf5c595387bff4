#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hvg/kvtext.hpp"
#include "hvg/tensor.hpp"

namespace hvg {

// Named parameter set with stable insertion order.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
    const std::vector<std::string>& names() const { return names_; }
    size_t size() const { return names_.size(); }
    int64_t total_elements() const;

    // Names starting with `prefix`, in insertion order.
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

    // FNV-1a over shapes and raw values of all parameters in order.
    uint64_t checksum() const;
    uint64_t checksum_with_prefix(const std::string& prefix) const;

    // Checkpoint directory: manifest.txt + config.txt + one blob per parameter.
    void save_checkpoint(const std::string& dir, const KvText& config) const;
    // Replaces the store contents. Returns the stored config block.
    KvText load_checkpoint(const std::string& dir);

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, size_t> index_;
    std::vector<Tensor> values_;
};

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with bias correction and decoupled weight decay.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    // Applies one update to every named parameter; grads[i] pairs with names[i].
    // Non-finite gradient aborts before touching any parameter.
    void step(ParamStore& params, const std::vector<std::string>& names, const std::vector<Tensor>& grads);

    int64_t step_count() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t step_ = 0;
    std::unordered_map<std::string, Tensor> m_;
    std::unordered_map<std::string, Tensor> v_;
};

}  // namespace hvg
