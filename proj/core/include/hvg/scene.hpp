#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hvg/geom.hpp"
#include "hvg/rng.hpp"
#include "hvg/tensor.hpp"
#include "hvg/video.hpp"

namespace hvg {

/// Pinhole camera at the origin looking down +z, x right, y down, so image
/// coordinates align with camera axes. World frame == camera frame.
struct Camera {
    double f = 32.0;
    double cx = 16.0;
    double cy = 16.0;
    int64_t H = 32;
    int64_t W = 32;

    // pixel-space projection of a camera-frame point (z > 0)
    void project(const Vec3& p, double& u, double& v) const {
        u = f * p.x / p.z + cx;
        v = f * p.y / p.z + cy;
    }
    // unit ray through the center of pixel (ix, iy)
    Vec3 pixel_ray(int64_t ix, int64_t iy) const {
        Vec3 d{(static_cast<double>(ix) + 0.5 - cx) / f, (static_cast<double>(iy) + 0.5 - cy) / f, 1.0};
        return d.normalized();
    }
    bool same_intrinsics(const Camera& o) const {
        return f == o.f && cx == o.cx && cy == o.cy && H == o.H && W == o.W;
    }
};

enum class ShapeKind { Sphere, Cuboid };
enum class BodyRole { Object, Hand, Distractor };
enum class MotionKind { PickPlace, Slide, LiftLower };

std::string motion_name(MotionKind k);
MotionKind motion_from_name(const std::string& name);

/// Rigid axis-aligned body. `half` holds cuboid half-extents; for spheres
/// half.x is the radius. Optional body-frame 3D checker texture.
struct Body {
    ShapeKind shape = ShapeKind::Sphere;
    Vec3 half{0.35, 0.35, 0.35};
    Vec3 color{0.8, 0.3, 0.2};
    Vec3 color2{0.8, 0.3, 0.2};
    bool checker = false;
    double checker_scale = 0.15;

    double bounding_radius() const {
        return shape == ShapeKind::Sphere ? half.x : half.norm();
    }
    double surface_area() const;
};

struct PosedBody {
    Body body;
    Vec3 pos;
    BodyRole role = BodyRole::Object;
};

/// All bodies of one frame, in stable order: object, palm, four fingers,
/// then distractors.
struct FrameState {
    std::vector<PosedBody> bodies;
};

struct SceneSpec {
    uint64_t seed = 0;
    MotionKind motion = MotionKind::Slide;
    Body object;
    Vec3 object_start{0.0, 0.35, 3.2};
    double slide_dx = 1.0;        // horizontal travel (slide, pick_place)
    double lift_amplitude = 0.6;  // vertical travel (lift_lower, pick_place)
    double palm_radius = 0.16;
    double finger_radius = 0.07;
    Vec3 grasp_offset{0.0, -0.6, 0.0};    // object center -> palm center
    Vec3 rest_offset{-0.55, -0.45, 0.0};  // approach start relative to grasp
    std::vector<Body> distractors;
    std::vector<Vec3> distractor_pos;
    Camera camera;
    Vec3 light_dir{-0.3, -0.8, -0.5};  // direction toward the light
    Vec3 bg_color{672.0 / 4096.0, 736.0 / 4096.0, 896.0 / 4096.0};
    int64_t T = 9;
    int64_t points_per_frame = 256;
    int64_t track_count = 32;
};

/// Random valid spec; resamples internally until the frustum check passes.
SceneSpec make_scene_spec(uint64_t seed, MotionKind motion, int n_distractors, int64_t T = 9);

struct PointCloudSequence {
    Tensor points;  // T x N x 3, camera coordinates
};

struct TrackSet {
    Tensor points;      // K x T x 3 camera-frame positions
    Tensor projections; // K x T x 2 pixel coordinates
    Tensor visibility;  // K x T in {0,1}
};

struct SceneSample {
    SceneSpec spec;
    VideoTensor frames;
    MaskSequence hand_masks;
    MaskSequence object_masks;
    MaskSequence fused_masks;
    PointCloudSequence pointclouds;
    TrackSet tracks;
};

struct RenderResult {
    Tensor frame;        // H x W x 3
    Tensor depth;        // H x W ray distance, 1e30 for background
    MaskSequence hand_mask;   // 1 x H x W
    MaskSequence object_mask; // 1 x H x W
};

/// Object position at frame t under the spec's motion script.
Vec3 object_position(const SceneSpec& spec, int64_t t);
/// Posed bodies for frame t (object + hand cluster + distractors).
FrameState scene_state_at(const SceneSpec& spec, int64_t t);

RenderResult render_frame(const FrameState& state, const Camera& camera, const Vec3& light_dir,
                          const Vec3& bg_color);

/// Uniform-by-area samples over hand+object surfaces, camera coordinates.
/// With raster_consistent set, only points whose containing pixel is owned
/// by the hand or object in the z-buffer are kept (sensor-style sampling).
Tensor sample_surface_points(const FrameState& state, const Camera& camera, int64_t N, Rng& rng,
                             bool raster_consistent = true);

/// Renders frames/masks and samples point clouds and tracks. Throws if the
/// object leaves the view frustum in any frame.
SceneSample generate_scene(const SceneSpec& spec);

/// Hybrid conditioning pair: start image from `image_source`, 3D conditions
/// (point clouds, tracks, masks) from `condition_source`.
struct HybridSample {
    Tensor image0;  // H x W x 3
    PointCloudSequence pointclouds;
    TrackSet tracks;
    MaskSequence fused_masks;
    Camera camera;
    int64_t T = 0;
    bool has_gt = false;
    VideoTensor gt;
};

HybridSample make_cross_condition(const SceneSample& condition_source, const SceneSample& image_source);

/// Directory layout: manifest.txt, frames.blob, frame_%04d.ppm, mask blobs
/// (u8), pointclouds.blob, track blobs.
void save_scene_sample(const std::filesystem::path& dir, const SceneSample& sample);
SceneSample load_scene_sample(const std::filesystem::path& dir);

class KvText;
void spec_to_kv(KvText& kv, const SceneSpec& spec);
SceneSpec spec_from_kv(const KvText& kv);

}  // namespace hvg
