#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hvg/rng.hpp"
#include "hvg/video.hpp"

using namespace hvg;
namespace fs = std::filesystem;

TEST_CASE("video tensor validates shape") {
    CHECK_NOTHROW(VideoTensor(Tensor({2, 4, 4, 3})));
    CHECK_THROWS(VideoTensor(Tensor({2, 4, 4, 2})));
    CHECK_THROWS(VideoTensor(Tensor({4, 4, 3})));
}

TEST_CASE("pixel accessor addresses the right element") {
    Tensor t({1, 2, 2, 3});
    t.at({0, 1, 0, 2}) = 0.75;
    VideoTensor v(std::move(t));
    CHECK(v.px(0, 1, 0, 2) == 0.75);
    CHECK(v.t() == 1);
    CHECK(v.h() == 2);
    CHECK(v.w() == 2);
}

TEST_CASE("mask fuse is per-pixel OR") {
    MaskSequence a(Tensor({2, 2, 2}));
    MaskSequence b(Tensor({2, 2, 2}));
    a.at(0, 0, 0) = 1;
    b.at(0, 0, 1) = 1;
    b.at(1, 1, 1) = 1;
    MaskSequence f = MaskSequence::fuse(a, b);
    CHECK(f.at(0, 0, 0) == 1);
    CHECK(f.at(0, 0, 1) == 1);
    CHECK(f.at(0, 1, 0) == 0);
    CHECK(f.at(1, 1, 1) == 1);
    MaskSequence c(Tensor({1, 2, 2}));
    CHECK_THROWS(MaskSequence::fuse(a, c));
}

TEST_CASE("ppm round-trip quantizes to 8 bits") {
    Rng r(4);
    Tensor t({1, 5, 7, 3});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.uniform();
    VideoTensor v(std::move(t));
    fs::path p = fs::temp_directory_path() / "hvg_video_test.ppm";
    write_ppm(p, v, 0);
    VideoTensor back = read_ppm(p);
    REQUIRE(back.h() == 5);
    REQUIRE(back.w() == 7);
    for (int64_t y = 0; y < 5; ++y) {
        for (int64_t x = 0; x < 7; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                double q = std::lround(v.px(0, y, x, c) * 255.0) / 255.0;
                CHECK(back.px(0, y, x, c) == doctest::Approx(q).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("frame dump writes one file per frame") {
    VideoTensor v(Tensor({3, 2, 2, 3}));
    fs::path d = fs::temp_directory_path() / "hvg_frames_test";
    fs::create_directories(d);
    write_ppm_frames(d, "out", v);
    CHECK(fs::exists(d / "out_0000.ppm"));
    CHECK(fs::exists(d / "out_0001.ppm"));
    CHECK(fs::exists(d / "out_0002.ppm"));
}
