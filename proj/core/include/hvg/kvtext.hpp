#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace hvg {

/// Ordered key=value text block. One format for configs, run manifests,
/// codec sidecars, dataset manifests and checkpoint indexes: plain lines of
/// "key = value", '#' starts a comment, order is preserved on round-trip.
class KvText {
  public:
    void set(const std::string& key, const std::string& value);
    void set_i64(const std::string& key, int64_t value);
    void set_f64(const std::string& key, double value);  // %.17g, exact round-trip

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;            // throws if absent
    std::string get_or(const std::string& key, const std::string& fallback) const;
    int64_t get_i64(const std::string& key) const;
    int64_t get_i64_or(const std::string& key, int64_t fallback) const;
    double get_f64(const std::string& key) const;
    double get_f64_or(const std::string& key, double fallback) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

    std::string to_string() const;
    static KvText parse(const std::string& text);

    void save(const std::filesystem::path& path) const;
    static KvText load(const std::filesystem::path& path);

  private:
    std::vector<std::pair<std::string, std::string>> entries_;
    int find(const std::string& key) const;
};

}  // namespace hvg
