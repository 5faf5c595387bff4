#include "hvg/codec.hpp"

#include <stdexcept>
#include <string>

#include "hvg/blob.hpp"
#include "hvg/kvtext.hpp"

namespace hvg {

namespace {

void check_divisible(int64_t H, int64_t W, int64_t p, int64_t g) {
    if (p <= 0 || g <= 0) throw std::invalid_argument("codec: p and g must be positive");
    if (H % p != 0) {
        throw std::invalid_argument("codec: H=" + std::to_string(H) + " not divisible by p=" + std::to_string(p));
    }
    if (W % p != 0) {
        throw std::invalid_argument("codec: W=" + std::to_string(W) + " not divisible by p=" + std::to_string(p));
    }
}

// token channel for (frame-in-group gi, patch row py, patch col px, color ch)
inline int64_t chan(int64_t gi, int64_t py, int64_t px, int64_t ch, int64_t p) {
    return ((gi * p + py) * p + px) * 3 + ch;
}

void check_grid(const LatentGrid& grid) {
    check_divisible(grid.H, grid.W, grid.p, grid.g);
    int64_t Tp = (grid.T + grid.g - 1) / grid.g;
    if (grid.tokens.ndim() != 4 || grid.tokens.dim(0) != Tp || grid.tokens.dim(1) != grid.H / grid.p ||
        grid.tokens.dim(2) != grid.W / grid.p || grid.tokens.dim(3) != 3 * grid.p * grid.p * grid.g) {
        throw std::invalid_argument("latent grid: token shape " + shape_str(grid.tokens.shape()) +
                                    " inconsistent with p=" + std::to_string(grid.p) +
                                    " g=" + std::to_string(grid.g) + " T=" + std::to_string(grid.T) +
                                    " H=" + std::to_string(grid.H) + " W=" + std::to_string(grid.W));
    }
}

}  // namespace

LatentGrid encode_video(const VideoTensor& video, int64_t p, int64_t g) {
    int64_t T = video.t(), H = video.h(), W = video.w();
    check_divisible(H, W, p, g);
    for (int64_t i = 0; i < video.frames.numel(); ++i) {
        double v = video.frames[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("encode_video: pixel value " + std::to_string(v) + " outside [0,1]");
        }
    }
    int64_t Tp = (T + g - 1) / g;
    int64_t h = H / p, w = W / p, c = 3 * p * p * g;
    LatentGrid grid;
    grid.p = p;
    grid.g = g;
    grid.T = T;
    grid.H = H;
    grid.W = W;
    grid.tokens = Tensor({Tp, h, w, c});
    for (int64_t tp = 0; tp < Tp; ++tp) {
        for (int64_t gi = 0; gi < g; ++gi) {
            int64_t t = std::min(tp * g + gi, T - 1);  // repeat last frame as padding
            for (int64_t by = 0; by < h; ++by) {
                for (int64_t bx = 0; bx < w; ++bx) {
                    for (int64_t py = 0; py < p; ++py) {
                        for (int64_t px = 0; px < p; ++px) {
                            for (int64_t ch = 0; ch < 3; ++ch) {
                                double v = video.px(t, by * p + py, bx * p + px, ch);
                                grid.tokens.at({tp, by, bx, chan(gi, py, px, ch, p)}) = (v - 0.5) * 2.0;
                            }
                        }
                    }
                }
            }
        }
    }
    return grid;
}

VideoTensor decode_latent(const LatentGrid& grid) {
    check_grid(grid);
    int64_t p = grid.p, g = grid.g, T = grid.T, H = grid.H, W = grid.W;
    VideoTensor out(Tensor({T, H, W, 3}));
    int64_t h = H / p, w = W / p;
    for (int64_t t = 0; t < T; ++t) {
        int64_t tp = t / g, gi = t % g;
        for (int64_t by = 0; by < h; ++by) {
            for (int64_t bx = 0; bx < w; ++bx) {
                for (int64_t py = 0; py < p; ++py) {
                    for (int64_t px = 0; px < p; ++px) {
                        for (int64_t ch = 0; ch < 3; ++ch) {
                            double z = grid.tokens.at({tp, by, bx, chan(gi, py, px, ch, p)});
                            double v = z / 2.0 + 0.5;
                            out.px(t, by * p + py, bx * p + px, ch) = std::min(1.0, std::max(0.0, v));
                        }
                    }
                }
            }
        }
    }
    return out;
}

LatentMask downsample_mask(const MaskSequence& masks, int64_t p, int64_t g) {
    int64_t T = masks.t(), H = masks.h(), W = masks.w();
    check_divisible(H, W, p, g);
    int64_t Tp = (T + g - 1) / g;
    int64_t h = H / p, w = W / p;
    LatentMask out;
    out.values = Tensor({Tp, h, w});
    for (int64_t tp = 0; tp < Tp; ++tp) {
        for (int64_t by = 0; by < h; ++by) {
            for (int64_t bx = 0; bx < w; ++bx) {
                double cell = 0.0;
                for (int64_t gi = 0; gi < g && cell == 0.0; ++gi) {
                    int64_t t = std::min(tp * g + gi, T - 1);
                    for (int64_t py = 0; py < p && cell == 0.0; ++py) {
                        for (int64_t px = 0; px < p; ++px) {
                            if (masks.at(t, by * p + py, bx * p + px) != 0.0) {
                                cell = 1.0;
                                break;
                            }
                        }
                    }
                }
                out.values.at({tp, by, bx}) = cell;
            }
        }
    }
    return out;
}

void save_latent_grid(const std::filesystem::path& stem, const LatentGrid& grid) {
    write_blob_f64(stem.string() + ".blob", grid.tokens);
    KvText meta;
    meta.set("format", "hvg3d-latent");
    meta.set_i64("p", grid.p);
    meta.set_i64("g", grid.g);
    meta.set_i64("T", grid.T);
    meta.set_i64("H", grid.H);
    meta.set_i64("W", grid.W);
    meta.save(stem.string() + ".txt");
}

LatentGrid load_latent_grid(const std::filesystem::path& stem) {
    KvText meta = KvText::load(stem.string() + ".txt");
    if (meta.get("format") != "hvg3d-latent") {
        throw std::runtime_error("not a latent sidecar: " + stem.string() + ".txt");
    }
    LatentGrid grid;
    grid.p = meta.get_i64("p");
    grid.g = meta.get_i64("g");
    grid.T = meta.get_i64("T");
    grid.H = meta.get_i64("H");
    grid.W = meta.get_i64("W");
    grid.tokens = read_blob(stem.string() + ".blob");
    check_grid(grid);
    return grid;
}

}  // namespace hvg
