#include "hvg/optim.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "hvg/blob.hpp"

namespace fs = std::filesystem;

namespace hvg {

namespace {

void check_param_name(const std::string& name) {
    if (name.empty()) throw std::invalid_argument("parameter name is empty");
    for (char c : name) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
        if (!ok) throw std::invalid_argument("parameter name '" + name + "' has invalid character '" + c + "'");
    }
}

}  // namespace

Tensor& ParamStore::add(const std::string& name, Tensor init) {
    check_param_name(name);
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
    index_[name] = names_.size();
    names_.push_back(name);
    values_.push_back(std::move(init));
    return values_.back();
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return values_[it->second];
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return values_[it->second];
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) > 0; }

int64_t ParamStore::total_elements() const {
    int64_t n = 0;
    for (const Tensor& t : values_) n += t.numel();
    return n;
}

std::vector<std::string> ParamStore::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const std::string& n : names_) {
        if (n.rfind(prefix, 0) == 0) out.push_back(n);
    }
    return out;
}

uint64_t ParamStore::checksum() const { return checksum_with_prefix(""); }

uint64_t ParamStore::checksum_with_prefix(const std::string& prefix) const {
    uint64_t h = 14695981039346656037ull;
    auto mix_bytes = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    for (size_t i = 0; i < names_.size(); ++i) {
        if (names_[i].rfind(prefix, 0) != 0) continue;
        mix_bytes(names_[i].data(), names_[i].size());
        const Tensor& t = values_[i];
        int64_t nd = t.ndim();
        mix_bytes(&nd, sizeof(nd));
        for (int64_t d = 0; d < nd; ++d) {
            int64_t v = t.dim(d);
            mix_bytes(&v, sizeof(v));
        }
        mix_bytes(t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
    }
    return h;
}

void ParamStore::save_checkpoint(const std::string& dir, const KvText& config) const {
    fs::create_directories(dir);
    std::string config_text = config.to_string();
    config.save(fs::path(dir) / "config.txt");

    KvText manifest;
    manifest.set("format", "hvg3d-checkpoint");
    manifest.set_i64("version", 1);
    manifest.set("config_hash", bytes_checksum(config_text.data(), config_text.size()));
    manifest.set_i64("param_count", static_cast<int64_t>(names_.size()));
    for (size_t i = 0; i < names_.size(); ++i) {
        fs::path blob_path = fs::path(dir) / (names_[i] + ".blob");
        write_blob_f64(blob_path, values_[i]);
        char key[64];
        std::snprintf(key, sizeof(key), "param.%zu.name", i);
        manifest.set(key, names_[i]);
        std::snprintf(key, sizeof(key), "param.%zu.checksum", i);
        manifest.set(key, file_checksum(blob_path));
    }
    manifest.save(fs::path(dir) / "manifest.txt");
}

KvText ParamStore::load_checkpoint(const std::string& dir) {
    KvText manifest = KvText::load(fs::path(dir) / "manifest.txt");
    if (manifest.get("format") != "hvg3d-checkpoint") {
        throw std::runtime_error("not a checkpoint directory: " + dir);
    }
    int64_t count = manifest.get_i64("param_count");
    names_.clear();
    index_.clear();
    values_.clear();
    for (int64_t i = 0; i < count; ++i) {
        char key[64];
        std::snprintf(key, sizeof(key), "param.%lld.name", static_cast<long long>(i));
        std::string name = manifest.get(key);
        fs::path blob_path = fs::path(dir) / (name + ".blob");
        std::snprintf(key, sizeof(key), "param.%lld.checksum", static_cast<long long>(i));
        std::string want = manifest.get(key);
        std::string got = file_checksum(blob_path);
        if (want != got) {
            throw std::runtime_error("checkpoint blob '" + name + "' checksum mismatch (manifest " + want +
                                     ", file " + got + ")");
        }
        add(name, read_blob(blob_path));
    }
    return KvText::load(fs::path(dir) / "config.txt");
}

void AdamW::step(ParamStore& params, const std::vector<std::string>& names, const std::vector<Tensor>& grads) {
    if (names.size() != grads.size()) {
        throw std::invalid_argument("adamw_step: " + std::to_string(names.size()) + " names vs " +
                                    std::to_string(grads.size()) + " grads");
    }
    // Validate everything before mutating anything, so an abort leaves params untouched.
    for (size_t i = 0; i < names.size(); ++i) {
        const Tensor& p = params.get(names[i]);
        if (!p.same_shape(grads[i])) {
            throw std::invalid_argument("adamw_step: gradient shape " + shape_str(grads[i].shape()) +
                                        " does not match parameter '" + names[i] + "' shape " +
                                        shape_str(p.shape()));
        }
        if (!grads[i].all_finite()) {
            throw std::runtime_error("adamw_step: non-finite gradient for parameter '" + names[i] + "' at step " +
                                     std::to_string(step_ + 1));
        }
    }
    ++step_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t i = 0; i < names.size(); ++i) {
        Tensor& p = params.get(names[i]);
        auto mit = m_.find(names[i]);
        if (mit == m_.end()) {
            m_.emplace(names[i], Tensor(p.shape()));
            v_.emplace(names[i], Tensor(p.shape()));
        }
        Tensor& m = m_.at(names[i]);
        Tensor& v = v_.at(names[i]);
        const Tensor& g = grads[i];
        for (int64_t j = 0; j < p.numel(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            p[j] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[j]);
        }
    }
}

}  // namespace hvg
