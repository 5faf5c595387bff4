#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hvg/tensor.hpp"

namespace hvg {

/// T x H x W x 3 frame sequence, values in [0,1].
struct VideoTensor {
    Tensor frames;

    VideoTensor() = default;
    explicit VideoTensor(Tensor f);

    int64_t t() const { return frames.dim(0); }
    int64_t h() const { return frames.dim(1); }
    int64_t w() const { return frames.dim(2); }

    double& px(int64_t t, int64_t y, int64_t x, int64_t c) {
        return frames[((t * h() + y) * w() + x) * 3 + c];
    }
    double px(int64_t t, int64_t y, int64_t x, int64_t c) const {
        return frames[((t * h() + y) * w() + x) * 3 + c];
    }
};

/// Per-frame binary masks, T x H x W with values in {0,1}.
struct MaskSequence {
    Tensor values;

    MaskSequence() = default;
    explicit MaskSequence(Tensor v);

    int64_t t() const { return values.dim(0); }
    int64_t h() const { return values.dim(1); }
    int64_t w() const { return values.dim(2); }

    double& at(int64_t t, int64_t y, int64_t x) { return values[(t * h() + y) * w() + x]; }
    double at(int64_t t, int64_t y, int64_t x) const { return values[(t * h() + y) * w() + x]; }

    /// Per-pixel logical OR of two mask sequences of equal dims.
    static MaskSequence fuse(const MaskSequence& a, const MaskSequence& b);
};

/// Binary PPM (P6) dump of one frame, 8-bit per channel. Visual-inspection
/// format only; the authoritative data path is the f64 tensor blob.
void write_ppm(const std::filesystem::path& path, const VideoTensor& video, int64_t frame);
void write_ppm_frames(const std::filesystem::path& dir, const std::string& stem, const VideoTensor& video);

/// Reads a P6 file back as a 1-frame video (values k/255).
VideoTensor read_ppm(const std::filesystem::path& path);

}  // namespace hvg
