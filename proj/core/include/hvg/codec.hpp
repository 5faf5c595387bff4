#pragma once

#include <cstdint>
#include <filesystem>

#include "hvg/tensor.hpp"
#include "hvg/video.hpp"

namespace hvg {

/// Spatio-temporal latent produced by exact space-to-depth packing. Each
/// p x p x g pixel block becomes one token with c = 3*p^2*g channels, values
/// affinely mapped from [0,1] to [-1,1] (subtract 0.5, multiply 2).
struct LatentGrid {
    Tensor tokens;  // T' x h x w x c
    int64_t p = 0;
    int64_t g = 0;
    int64_t T = 0;  // true source frame count (pre-padding)
    int64_t H = 0;
    int64_t W = 0;

    int64_t tframes() const { return tokens.dim(0); }
    int64_t h() const { return tokens.dim(1); }
    int64_t w() const { return tokens.dim(2); }
    int64_t c() const { return tokens.dim(3); }
};

/// T' x h x w binary mask at latent resolution.
struct LatentMask {
    Tensor values;
};

/// Lossless encode; frames padded by repeating the last one when g does not
/// divide T. Video values must lie in [0,1].
LatentGrid encode_video(const VideoTensor& video, int64_t p, int64_t g);

/// Exact inverse of encode_video, clamped to [0,1]; emits the true T frames.
VideoTensor decode_latent(const LatentGrid& grid);

/// Any-coverage pooling: a latent cell is 1 iff any covered pixel in any
/// grouped frame is 1.
LatentMask downsample_mask(const MaskSequence& masks, int64_t p, int64_t g);

/// Persists as <stem>.blob plus <stem>.txt sidecar carrying p, g, T, H, W.
void save_latent_grid(const std::filesystem::path& stem, const LatentGrid& grid);
LatentGrid load_latent_grid(const std::filesystem::path& stem);

}  // namespace hvg
