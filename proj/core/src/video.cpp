#include "hvg/video.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace hvg {

VideoTensor::VideoTensor(Tensor f) : frames(std::move(f)) {
    if (frames.ndim() != 4 || frames.dim(3) != 3) {
        throw std::invalid_argument("VideoTensor expects TxHxWx3, got " + shape_str(frames.shape()));
    }
}

MaskSequence::MaskSequence(Tensor v) : values(std::move(v)) {
    if (values.ndim() != 3) {
        throw std::invalid_argument("MaskSequence expects TxHxW, got " + shape_str(values.shape()));
    }
}

MaskSequence MaskSequence::fuse(const MaskSequence& a, const MaskSequence& b) {
    if (!a.values.same_shape(b.values)) {
        throw std::invalid_argument("fuse: mask dims differ, " + shape_str(a.values.shape()) + " vs " +
                                    shape_str(b.values.shape()));
    }
    MaskSequence out;
    out.values = Tensor(a.values.shape());
    for (int64_t i = 0; i < a.values.numel(); ++i) {
        out.values[i] = (a.values[i] != 0.0 || b.values[i] != 0.0) ? 1.0 : 0.0;
    }
    return out;
}

void write_ppm(const std::filesystem::path& path, const VideoTensor& video, int64_t frame) {
    if (frame < 0 || frame >= video.t()) throw std::out_of_range("write_ppm: frame index");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("ppm: cannot open for write: " + path.string());
    os << "P6\n" << video.w() << " " << video.h() << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(video.w()) * 3);
    for (int64_t y = 0; y < video.h(); ++y) {
        for (int64_t x = 0; x < video.w(); ++x) {
            for (int64_t c = 0; c < 3; ++c) {
                double v = video.px(frame, y, x, c);
                int q = static_cast<int>(std::lround(v * 255.0));
                q = std::min(255, std::max(0, q));
                row[static_cast<size_t>(x * 3 + c)] = static_cast<unsigned char>(q);
            }
        }
        os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!os) throw std::runtime_error("ppm: write failed: " + path.string());
}

void write_ppm_frames(const std::filesystem::path& dir, const std::string& stem, const VideoTensor& video) {
    for (int64_t t = 0; t < video.t(); ++t) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%04lld.ppm", stem.c_str(), static_cast<long long>(t));
        write_ppm(dir / name, video, t);
    }
}

VideoTensor read_ppm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("ppm: cannot open: " + path.string());
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
        throw std::runtime_error("ppm: unsupported header in " + path.string());
    }
    is.get();  // single whitespace after maxval
    std::vector<unsigned char> data(static_cast<size_t>(w) * static_cast<size_t>(h) * 3);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!is) throw std::runtime_error("ppm: truncated payload in " + path.string());
    Tensor frames({1, h, w, 3});
    for (size_t i = 0; i < data.size(); ++i) frames[static_cast<int64_t>(i)] = data[i] / 255.0;
    return VideoTensor(std::move(frames));
}

}  // namespace hvg
