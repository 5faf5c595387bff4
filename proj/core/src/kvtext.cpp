#include "hvg/kvtext.hpp"

#include <charconv>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hvg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

int KvText::find(const std::string& key) const {
    for (size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first == key) return static_cast<int>(i);
    }
    return -1;
}

void KvText::set(const std::string& key, const std::string& value) {
    int i = find(key);
    if (i >= 0) {
        entries_[static_cast<size_t>(i)].second = value;
    } else {
        entries_.emplace_back(key, value);
    }
}

void KvText::set_i64(const std::string& key, int64_t value) { set(key, std::to_string(value)); }

void KvText::set_f64(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, buf);
}

bool KvText::has(const std::string& key) const { return find(key) >= 0; }

const std::string& KvText::get(const std::string& key) const {
    int i = find(key);
    if (i < 0) throw std::runtime_error("missing key: " + key);
    return entries_[static_cast<size_t>(i)].second;
}

std::string KvText::get_or(const std::string& key, const std::string& fallback) const {
    int i = find(key);
    return i < 0 ? fallback : entries_[static_cast<size_t>(i)].second;
}

int64_t KvText::get_i64(const std::string& key) const {
    const std::string& v = get(key);
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::runtime_error("key '" + key + "' is not an integer: '" + v + "'");
    }
    return out;
}

int64_t KvText::get_i64_or(const std::string& key, int64_t fallback) const {
    return has(key) ? get_i64(key) : fallback;
}

double KvText::get_f64(const std::string& key) const {
    const std::string& v = get(key);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw std::runtime_error("key '" + key + "' is not a number: '" + v + "'");
    }
    return out;
}

double KvText::get_f64_or(const std::string& key, double fallback) const {
    return has(key) ? get_f64(key) : fallback;
}

std::string KvText::to_string() const {
    std::ostringstream os;
    for (const auto& [k, v] : entries_) os << k << " = " << v << "\n";
    return os.str();
}

KvText KvText::parse(const std::string& text) {
    KvText kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("kvtext: line " + std::to_string(lineno) + " has no '=': " + line);
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("kvtext: empty key on line " + std::to_string(lineno));
        kv.entries_.emplace_back(key, value);
    }
    return kv;
}

void KvText::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("kvtext: cannot open for write: " + path.string());
    os << to_string();
    if (!os) throw std::runtime_error("kvtext: write failed: " + path.string());
}

KvText KvText::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("kvtext: cannot open: " + path.string());
    std::ostringstream os;
    os << is.rdbuf();
    return parse(os.str());
}

}  // namespace hvg
