#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "hvg/blob.hpp"
#include "hvg/rng.hpp"

using namespace hvg;
namespace fs = std::filesystem;

namespace {
fs::path tmp_dir() {
    fs::path d = fs::temp_directory_path() / "hvg_blob_test";
    fs::create_directories(d);
    return d;
}
}  // namespace

TEST_CASE("f64 blob round-trip is exact") {
    Rng r(1);
    Tensor t = r.normal_tensor({3, 4, 5});
    fs::path p = tmp_dir() / "a.blob";
    write_blob_f64(p, t);
    BlobDtype dt;
    Tensor back = read_blob(p, &dt);
    CHECK(dt == BlobDtype::f64);
    REQUIRE(back.same_shape(t));
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("header layout is exactly as documented") {
    Tensor t({2}, {0.0, 1.0});
    fs::path p = tmp_dir() / "h.blob";
    write_blob_f64(p, t);
    std::ifstream in(p, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(bytes.size() == 6 + 1 + 1 + 8 + 16);
    CHECK(std::string(bytes.data(), 6) == "HVG3D1");
    CHECK(bytes[6] == 0);  // dtype f64
    CHECK(bytes[7] == 1);  // ndim
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);  // dim 0 low byte
    for (int i = 9; i < 16; ++i) CHECK(bytes[static_cast<size_t>(i)] == 0);
}

TEST_CASE("u8 blob widens to f64 on read") {
    fs::path p = tmp_dir() / "m.blob";
    write_blob_u8(p, {2, 2}, {0, 1, 1, 0});
    BlobDtype dt;
    Tensor back = read_blob(p, &dt);
    CHECK(dt == BlobDtype::u8);
    CHECK(back.at({0, 0}) == 0.0);
    CHECK(back.at({0, 1}) == 1.0);
    CHECK(back.at({1, 0}) == 1.0);
    CHECK(back.at({1, 1}) == 0.0);
}

TEST_CASE("f32 blob round-trips f32-representable values") {
    Tensor t({3}, {0.5, -2.0, 1024.0});
    fs::path p = tmp_dir() / "f.blob";
    write_blob_f32(p, t);
    Tensor back = read_blob(p);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("corrupt files are rejected with a reason") {
    fs::path p = tmp_dir() / "bad.blob";
    {
        std::ofstream out(p, std::ios::binary);
        out << "NOTMAGIC";
    }
    CHECK_THROWS_WITH_AS(read_blob(p), doctest::Contains("magic"), std::runtime_error);

    fs::path q = tmp_dir() / "trunc.blob";
    {
        Tensor t({4}, {1, 2, 3, 4});
        write_blob_f64(q, t);
        fs::resize_file(q, fs::file_size(q) - 5);
    }
    CHECK_THROWS(read_blob(q));
}

TEST_CASE("checksums are stable and order-sensitive") {
    std::string a = "abc", b = "acb";
    CHECK(bytes_checksum(a.data(), a.size()) != bytes_checksum(b.data(), b.size()));
    fs::path p = tmp_dir() / "c.blob";
    Tensor t({2}, {3.0, 4.0});
    write_blob_f64(p, t);
    CHECK(file_checksum(p) == file_checksum(p));
}
