#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "hvg/codec.hpp"
#include "hvg/rng.hpp"

using namespace hvg;
namespace fs = std::filesystem;

namespace {
VideoTensor random_video(uint64_t seed, int64_t T, int64_t H, int64_t W) {
    Rng r(seed);
    Tensor t({T, H, W, 3});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = r.uniform();
    return VideoTensor(std::move(t));
}
}  // namespace

TEST_CASE("single patch video flattens to one token of 48 channels") {
    LatentGrid g = encode_video(random_video(1, 1, 4, 4), 4, 1);
    CHECK(g.tokens.dim(0) == 1);
    CHECK(g.tokens.dim(1) == 1);
    CHECK(g.tokens.dim(2) == 1);
    CHECK(g.tokens.dim(3) == 48);
}

TEST_CASE("mid-gray maps to the zero latent and back") {
    VideoTensor v(Tensor::full({2, 8, 8, 3}, 0.5));
    LatentGrid g = encode_video(v, 4, 1);
    for (int64_t i = 0; i < g.tokens.numel(); ++i) CHECK(g.tokens[i] == 0.0);

    LatentGrid zero;
    zero.p = 4;
    zero.g = 1;
    zero.T = 2;
    zero.H = 8;
    zero.W = 8;
    zero.tokens = Tensor({2, 2, 2, 48});
    VideoTensor back = decode_latent(zero);
    for (int64_t i = 0; i < back.frames.numel(); ++i) CHECK(back.frames[i] == 0.5);
}

TEST_CASE("round-trip is bit-exact on random videos") {
    VideoTensor v = random_video(7, 9, 32, 32);
    LatentGrid g = encode_video(v, 4, 1);
    VideoTensor back = decode_latent(g);
    REQUIRE(back.frames.same_shape(v.frames));
    for (int64_t i = 0; i < v.frames.numel(); ++i) CHECK(back.frames[i] == v.frames[i]);
}

TEST_CASE("round-trip is bit-exact with temporal grouping and padding") {
    // T=9, g=2 forces a padded group; true frame count must come back.
    VideoTensor v = random_video(8, 9, 8, 8);
    LatentGrid g = encode_video(v, 2, 2);
    CHECK(g.tframes() == 5);
    CHECK(g.c() == 24);
    VideoTensor back = decode_latent(g);
    REQUIRE(back.t() == 9);
    for (int64_t i = 0; i < v.frames.numel(); ++i) CHECK(back.frames[i] == v.frames[i]);
}

TEST_CASE("perturbing one token channel moves exactly one pixel channel by half") {
    VideoTensor v(Tensor::full({1, 4, 4, 3}, 0.5));
    LatentGrid g = encode_video(v, 4, 1);
    g.tokens[25] += 0.25;  // channel 25 = (py=2, px=0, ch=1) under the packing order
    VideoTensor back = decode_latent(g);
    int changed = 0;
    for (int64_t y = 0; y < 4; ++y) {
        for (int64_t x = 0; x < 4; ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                double d = back.px(0, y, x, c) - 0.5;
                if (d != 0.0) {
                    ++changed;
                    CHECK(y == 2);
                    CHECK(x == 0);
                    CHECK(c == 1);
                    CHECK(d == 0.125);
                }
            }
        }
    }
    CHECK(changed == 1);
}

TEST_CASE("encode is affine-linear in the video") {
    VideoTensor a = random_video(21, 2, 8, 8);
    VideoTensor b = random_video(22, 2, 8, 8);
    double alpha = 0.3;
    Tensor mixed({2, 8, 8, 3});
    for (int64_t i = 0; i < mixed.numel(); ++i) {
        mixed[i] = alpha * a.frames[i] + (1.0 - alpha) * b.frames[i];
    }
    LatentGrid gm = encode_video(VideoTensor(std::move(mixed)), 4, 1);
    LatentGrid ga = encode_video(a, 4, 1);
    LatentGrid gb = encode_video(b, 4, 1);
    for (int64_t i = 0; i < gm.tokens.numel(); ++i) {
        double want = alpha * ga.tokens[i] + (1.0 - alpha) * gb.tokens[i];
        CHECK(gm.tokens[i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("indivisible dimensions are rejected by name") {
    CHECK_THROWS_WITH(encode_video(VideoTensor(Tensor({1, 6, 8, 3})), 4, 1), doctest::Contains("H=6"));
    CHECK_THROWS_WITH(encode_video(VideoTensor(Tensor({1, 8, 6, 3})), 4, 1), doctest::Contains("W=6"));
}

TEST_CASE("out-of-range pixels are rejected") {
    Tensor t({1, 4, 4, 3});
    t[5] = 1.5;
    CHECK_THROWS(encode_video(VideoTensor(std::move(t)), 4, 1));
}

TEST_CASE("mask pooling examples") {
    MaskSequence zero(Tensor({2, 4, 4}));
    LatentMask lz = downsample_mask(zero, 2, 1);
    for (int64_t i = 0; i < lz.values.numel(); ++i) CHECK(lz.values[i] == 0.0);

    MaskSequence one(Tensor({1, 4, 4}));
    one.at(0, 3, 1) = 1.0;
    LatentMask lo = downsample_mask(one, 2, 1);
    CHECK(lo.values.at({0, 1, 0}) == 1.0);
    double total = 0;
    for (int64_t i = 0; i < lo.values.numel(); ++i) total += lo.values[i];
    CHECK(total == 1.0);

    MaskSequence checker(Tensor({1, 4, 4}));
    for (int64_t y = 0; y < 4; ++y) {
        for (int64_t x = 0; x < 4; ++x) checker.at(0, y, x) = (y + x) % 2 == 0 ? 1.0 : 0.0;
    }
    LatentMask lc = downsample_mask(checker, 2, 1);
    for (int64_t i = 0; i < lc.values.numel(); ++i) CHECK(lc.values[i] == 1.0);
}

TEST_CASE("mask pooling is monotone under added foreground") {
    Rng r(5);
    MaskSequence base(Tensor({2, 8, 8}));
    for (int64_t i = 0; i < base.values.numel(); ++i) base.values[i] = r.uniform() < 0.2 ? 1.0 : 0.0;
    MaskSequence more = base;
    for (int64_t i = 0; i < more.values.numel(); ++i) {
        if (r.uniform() < 0.3) more.values[i] = 1.0;
    }
    LatentMask lb = downsample_mask(base, 4, 2);
    LatentMask lm = downsample_mask(more, 4, 2);
    for (int64_t i = 0; i < lb.values.numel(); ++i) CHECK(lm.values[i] >= lb.values[i]);
}

TEST_CASE("latent grid save/load round-trip") {
    VideoTensor v = random_video(33, 3, 8, 8);
    LatentGrid g = encode_video(v, 4, 1);
    fs::path stem = fs::temp_directory_path() / "hvg_codec_test";
    save_latent_grid(stem, g);
    LatentGrid back = load_latent_grid(stem);
    CHECK(back.p == 4);
    CHECK(back.T == 3);
    for (int64_t i = 0; i < g.tokens.numel(); ++i) CHECK(back.tokens[i] == g.tokens[i]);
}
