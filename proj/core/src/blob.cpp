#include "hvg/blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hvg {

namespace {

constexpr char kMagic[6] = {'H', 'V', 'G', '3', 'D', '1'};

static_assert(std::endian::native == std::endian::little,
              "blob IO assumes a little-endian host");

void write_header(std::ofstream& os, BlobDtype dtype, const std::vector<int64_t>& shape) {
    os.write(kMagic, 6);
    uint8_t dt = static_cast<uint8_t>(dtype);
    uint8_t nd = static_cast<uint8_t>(shape.size());
    if (shape.size() > 255) throw std::invalid_argument("blob: ndim > 255");
    os.write(reinterpret_cast<const char*>(&dt), 1);
    os.write(reinterpret_cast<const char*>(&nd), 1);
    for (int64_t d : shape) {
        uint64_t ud = static_cast<uint64_t>(d);
        os.write(reinterpret_cast<const char*>(&ud), 8);
    }
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("blob: cannot open for write: " + path.string());
    return os;
}

}  // namespace

void write_blob_f64(const std::filesystem::path& path, const Tensor& t) {
    auto os = open_out(path);
    write_header(os, BlobDtype::f64, t.shape());
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * 8));
    if (!os) throw std::runtime_error("blob: write failed: " + path.string());
}

void write_blob_f32(const std::filesystem::path& path, const Tensor& t) {
    auto os = open_out(path);
    write_header(os, BlobDtype::f32, t.shape());
    std::vector<float> tmp(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) tmp[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    os.write(reinterpret_cast<const char*>(tmp.data()), static_cast<std::streamsize>(tmp.size() * 4));
    if (!os) throw std::runtime_error("blob: write failed: " + path.string());
}

void write_blob_u8(const std::filesystem::path& path, const std::vector<int64_t>& shape,
                   const std::vector<uint8_t>& data) {
    if (static_cast<int64_t>(data.size()) != shape_numel(shape)) {
        throw std::invalid_argument("blob: u8 data length does not match shape " + shape_str(shape));
    }
    auto os = open_out(path);
    write_header(os, BlobDtype::u8, shape);
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!os) throw std::runtime_error("blob: write failed: " + path.string());
}

Tensor read_blob(const std::filesystem::path& path) { return read_blob(path, nullptr); }

Tensor read_blob(const std::filesystem::path& path, BlobDtype* dtype_out) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("blob: cannot open: " + path.string());
    char magic[6];
    is.read(magic, 6);
    if (!is || std::memcmp(magic, kMagic, 6) != 0) {
        throw std::runtime_error("blob: bad magic in " + path.string());
    }
    uint8_t dt = 0, nd = 0;
    is.read(reinterpret_cast<char*>(&dt), 1);
    is.read(reinterpret_cast<char*>(&nd), 1);
    if (!is || dt > 2) throw std::runtime_error("blob: bad dtype in " + path.string());
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) {
        uint64_t ud = 0;
        is.read(reinterpret_cast<char*>(&ud), 8);
        d = static_cast<int64_t>(ud);
    }
    if (!is) throw std::runtime_error("blob: truncated header in " + path.string());
    int64_t n = shape_numel(shape);
    Tensor t(shape);
    switch (static_cast<BlobDtype>(dt)) {
        case BlobDtype::f64:
            is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * 8));
            break;
        case BlobDtype::f32: {
            std::vector<float> tmp(static_cast<size_t>(n));
            is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n * 4));
            for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(tmp[static_cast<size_t>(i)]);
            break;
        }
        case BlobDtype::u8: {
            std::vector<uint8_t> tmp(static_cast<size_t>(n));
            is.read(reinterpret_cast<char*>(tmp.data()), static_cast<std::streamsize>(n));
            for (int64_t i = 0; i < n; ++i) t[i] = static_cast<double>(tmp[static_cast<size_t>(i)]);
            break;
        }
    }
    if (!is) throw std::runtime_error("blob: truncated payload in " + path.string());
    if (dtype_out) *dtype_out = static_cast<BlobDtype>(dt);
    return t;
}

std::string bytes_checksum(const void* data, size_t size) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ull;
    for (size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string file_checksum(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checksum: cannot open: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return bytes_checksum(bytes.data(), bytes.size());
}

}  // namespace hvg
