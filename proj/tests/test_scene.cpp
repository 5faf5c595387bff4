#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "doctest.h"
#include "hvg/kvtext.hpp"
#include "hvg/scene.hpp"

using namespace hvg;
namespace fs = std::filesystem;

TEST_CASE("slide keeps the projected object centroid strictly monotone") {
    SceneSpec spec = make_scene_spec(11, MotionKind::Slide, 0);
    double prev = -1e30;
    for (int64_t t = 0; t < spec.T; ++t) {
        double u, v;
        spec.camera.project(object_position(spec, t), u, v);
        CHECK(u > prev);
        prev = u;
    }
}

TEST_CASE("pick_place returns the object to its start height") {
    SceneSpec spec = make_scene_spec(12, MotionKind::PickPlace, 0);
    Vec3 first = object_position(spec, 0);
    Vec3 last = object_position(spec, spec.T - 1);
    CHECK(std::abs(last.y - first.y) < 1e-9);
    CHECK(std::abs(last.z - first.z) < 1e-9);
    CHECK(last.x > first.x);  // it moved somewhere else
    // and it actually lifted in between
    double min_y = 1e30;
    for (int64_t t = 0; t < spec.T; ++t) min_y = std::min(min_y, object_position(spec, t).y);
    CHECK(min_y < first.y - 0.3);
}

TEST_CASE("lift_lower moves vertically only") {
    SceneSpec spec = make_scene_spec(13, MotionKind::LiftLower, 0);
    Vec3 first = object_position(spec, 0);
    for (int64_t t = 0; t < spec.T; ++t) {
        Vec3 p = object_position(spec, t);
        CHECK(p.x == first.x);
        CHECK(p.z == first.z);
    }
    CHECK(std::abs(object_position(spec, spec.T - 1).y - first.y) < 1e-9);
}

TEST_CASE("identical specs produce bit-identical samples") {
    SceneSpec spec = make_scene_spec(14, MotionKind::PickPlace, 2);
    SceneSample a = generate_scene(spec);
    SceneSample b = generate_scene(spec);
    for (int64_t i = 0; i < a.frames.frames.numel(); ++i) CHECK(a.frames.frames[i] == b.frames.frames[i]);
    for (int64_t i = 0; i < a.fused_masks.values.numel(); ++i) {
        CHECK(a.fused_masks.values[i] == b.fused_masks.values[i]);
    }
    for (int64_t i = 0; i < a.pointclouds.points.numel(); ++i) {
        CHECK(a.pointclouds.points[i] == b.pointclouds.points[i]);
    }
    for (int64_t i = 0; i < a.tracks.points.numel(); ++i) CHECK(a.tracks.points[i] == b.tracks.points[i]);
}

TEST_CASE("empty scene renders a uniform background with empty masks") {
    FrameState state;
    Camera cam;
    RenderResult rr = render_frame(state, cam, {-0.3, -0.8, -0.5}, {0.2, 0.3, 0.4});
    double r0 = rr.frame.at({0, 0, 0});
    for (int64_t y = 0; y < cam.H; ++y) {
        for (int64_t x = 0; x < cam.W; ++x) {
            CHECK(rr.frame.at({y, x, 0}) == r0);
            CHECK(rr.hand_mask.at(0, y, x) == 0.0);
            CHECK(rr.object_mask.at(0, y, x) == 0.0);
            CHECK(rr.depth.at({y, x}) == 1e30);
        }
    }
}

TEST_CASE("centered sphere mask is a disc of the predicted radius") {
    FrameState state;
    Body s;
    s.shape = ShapeKind::Sphere;
    s.half = {0.4, 0.4, 0.4};
    state.bodies.push_back({s, {0.0, 0.0, 3.0}, BodyRole::Object});
    Camera cam;
    RenderResult rr = render_frame(state, cam, {-0.3, -0.8, -0.5}, {0.2, 0.3, 0.4});
    double count = 0;
    for (int64_t y = 0; y < cam.H; ++y) {
        for (int64_t x = 0; x < cam.W; ++x) {
            if (rr.object_mask.at(0, y, x) != 0.0) {
                ++count;
                // disc-ness: every mask pixel center lies within the projected radius + 1
                double dx = static_cast<double>(x) + 0.5 - cam.cx;
                double dy = static_cast<double>(y) + 0.5 - cam.cy;
                CHECK(std::sqrt(dx * dx + dy * dy) <= cam.f * 0.4 / 3.0 + 1.0);
            }
        }
    }
    double r_est = std::sqrt(count / M_PI);
    CHECK(std::abs(r_est - cam.f * 0.4 / 3.0) < 1.0);
}

TEST_CASE("nearer body owns contested pixels") {
    FrameState state;
    Body s;
    s.shape = ShapeKind::Sphere;
    s.half = {0.3, 0.3, 0.3};
    state.bodies.push_back({s, {0.0, 0.0, 3.0}, BodyRole::Object});
    state.bodies.push_back({s, {0.15, 0.0, 2.4}, BodyRole::Hand});
    Camera cam;
    RenderResult rr = render_frame(state, cam, {-0.3, -0.8, -0.5}, {0.2, 0.3, 0.4});
    CHECK(rr.hand_mask.at(0, 16, 16) == 1.0);
    CHECK(rr.object_mask.at(0, 16, 16) == 0.0);
    double obj_px = 0;
    for (int64_t i = 0; i < rr.object_mask.values.numel(); ++i) obj_px += rr.object_mask.values[i];
    CHECK(obj_px > 0);  // fringe of the farther sphere still visible
}

TEST_CASE("sphere samples lie on the surface") {
    FrameState state;
    Body s;
    s.shape = ShapeKind::Sphere;
    s.half = {1.0, 1.0, 1.0};
    Vec3 c{0.3, -0.2, 5.0};
    state.bodies.push_back({s, c, BodyRole::Object});
    Camera cam;
    Rng rng(3);
    Tensor pts = sample_surface_points(state, cam, 500, rng, false);
    for (int64_t i = 0; i < 500; ++i) {
        Vec3 p{pts.at({i, 0}), pts.at({i, 1}), pts.at({i, 2})};
        CHECK(std::abs((p - c).norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("cuboid face counts follow face areas") {
    FrameState state;
    Body b;
    b.shape = ShapeKind::Cuboid;
    b.half = {0.3, 0.2, 0.4};
    Vec3 c{0.0, 0.0, 3.0};
    state.bodies.push_back({b, c, BodyRole::Object});
    Camera cam;
    Rng rng(17);
    const int64_t N = 1024;
    Tensor pts = sample_surface_points(state, cam, N, rng, false);
    int64_t face_counts[6] = {0, 0, 0, 0, 0, 0};  // +x,-x,+y,-y,+z,-z
    for (int64_t i = 0; i < N; ++i) {
        Vec3 q = Vec3{pts.at({i, 0}), pts.at({i, 1}), pts.at({i, 2})} - c;
        double qv[3] = {q.x, q.y, q.z};
        double hv[3] = {b.half.x, b.half.y, b.half.z};
        int axis = 0;
        double best = 1e30;
        for (int a = 0; a < 3; ++a) {
            double d = std::abs(std::abs(qv[a]) - hv[a]);
            if (d < best) {
                best = d;
                axis = a;
            }
        }
        CHECK(best < 1e-9);
        ++face_counts[2 * axis + (qv[axis] > 0 ? 0 : 1)];
    }
    double areas[6] = {4 * 0.2 * 0.4, 4 * 0.2 * 0.4, 4 * 0.3 * 0.4, 4 * 0.3 * 0.4, 4 * 0.3 * 0.2, 4 * 0.3 * 0.2};
    double total = 0;
    for (double a : areas) total += a;
    for (int f = 0; f < 6; ++f) {
        double p = areas[f] / total;
        double mean = N * p;
        double sigma = std::sqrt(N * p * (1 - p));
        CHECK(std::abs(face_counts[f] - mean) <= 3.0 * sigma);
    }
}

TEST_CASE("same seed gives identical point samples") {
    SceneSpec spec = make_scene_spec(15, MotionKind::Slide, 0);
    FrameState state = scene_state_at(spec, 4);
    Rng r1(99), r2(99);
    Tensor a = sample_surface_points(state, spec.camera, 64, r1, true);
    Tensor b = sample_surface_points(state, spec.camera, 64, r2, true);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("projected cloud points land inside the fused mask") {
    for (int nd : {0, 3}) {
        SceneSpec spec = make_scene_spec(16 + static_cast<uint64_t>(nd), MotionKind::PickPlace, nd);
        SceneSample s = generate_scene(spec);
        int64_t total = 0, inside = 0;
        for (int64_t t = 0; t < spec.T; ++t) {
            for (int64_t i = 0; i < spec.points_per_frame; ++i) {
                Vec3 p{s.pointclouds.points.at({t, i, 0}), s.pointclouds.points.at({t, i, 1}),
                       s.pointclouds.points.at({t, i, 2})};
                double u, v;
                spec.camera.project(p, u, v);
                int64_t ix = static_cast<int64_t>(std::floor(u));
                int64_t iy = static_cast<int64_t>(std::floor(v));
                ++total;
                if (ix >= 0 && ix < spec.camera.W && iy >= 0 && iy < spec.camera.H &&
                    s.fused_masks.at(t, iy, ix) != 0.0) {
                    ++inside;
                }
            }
        }
        double frac = static_cast<double>(inside) / static_cast<double>(total);
        if (nd == 0) {
            CHECK(frac == 1.0);
        } else {
            CHECK(frac >= 0.99);
        }
    }
}

TEST_CASE("tracks keep fixed body-frame coordinates") {
    SceneSpec spec = make_scene_spec(18, MotionKind::PickPlace, 1);
    SceneSample s = generate_scene(spec);
    for (int64_t k = 0; k < spec.track_count; ++k) {
        // associate with the nearest body at frame 0, then check the offset is frozen
        FrameState st0 = scene_state_at(spec, 0);
        Vec3 p0{s.tracks.points.at({k, 0, 0}), s.tracks.points.at({k, 0, 1}), s.tracks.points.at({k, 0, 2})};
        size_t host = 0;
        double best = 1e30;
        for (size_t i = 0; i < st0.bodies.size(); ++i) {
            if (st0.bodies[i].role == BodyRole::Distractor) continue;
            double d = (p0 - st0.bodies[i].pos).norm();
            double surf = std::abs(d - st0.bodies[i].body.bounding_radius());
            if (surf < best) {
                best = surf;
                host = i;
            }
        }
        Vec3 off0 = p0 - st0.bodies[host].pos;
        for (int64_t t = 1; t < spec.T; ++t) {
            FrameState st = scene_state_at(spec, t);
            Vec3 pt{s.tracks.points.at({k, t, 0}), s.tracks.points.at({k, t, 1}), s.tracks.points.at({k, t, 2})};
            Vec3 off = pt - st.bodies[host].pos;
            CHECK(std::abs(off.x - off0.x) < 1e-9);
            CHECK(std::abs(off.y - off0.y) < 1e-9);
            CHECK(std::abs(off.z - off0.z) < 1e-9);
        }
    }
}

TEST_CASE("track projections are consistent with the 3D points") {
    SceneSpec spec = make_scene_spec(19, MotionKind::Slide, 0);
    SceneSample s = generate_scene(spec);
    for (int64_t k = 0; k < spec.track_count; ++k) {
        for (int64_t t = 0; t < spec.T; ++t) {
            Vec3 p{s.tracks.points.at({k, t, 0}), s.tracks.points.at({k, t, 1}), s.tracks.points.at({k, t, 2})};
            double u, v;
            spec.camera.project(p, u, v);
            if (s.tracks.projections.at({k, t, 0}) >= 0.0) {
                CHECK(s.tracks.projections.at({k, t, 0}) == doctest::Approx(u).epsilon(1e-12));
                CHECK(s.tracks.projections.at({k, t, 1}) == doctest::Approx(v).epsilon(1e-12));
            }
        }
    }
    // visibility is neither all-on nor all-off for a moving grasped object
    double vis = 0;
    for (int64_t i = 0; i < s.tracks.visibility.numel(); ++i) vis += s.tracks.visibility[i];
    CHECK(vis > 0);
    CHECK(vis < static_cast<double>(s.tracks.visibility.numel()));
}

TEST_CASE("hand touches the object during manipulation") {
    for (MotionKind kind : {MotionKind::Slide, MotionKind::LiftLower, MotionKind::PickPlace}) {
        SceneSpec spec = make_scene_spec(20, kind, 0);
        int64_t start = kind == MotionKind::PickPlace ? (spec.T + 3) / 4 : 0;
        for (int64_t t = start; t < spec.T; ++t) {
            FrameState st = scene_state_at(spec, t);
            const PosedBody& obj = st.bodies[0];
            const PosedBody& palm = st.bodies[1];
            double center_dist = (palm.pos - obj.pos).norm();
            double obj_extent = obj.body.shape == ShapeKind::Sphere ? obj.body.half.x : obj.body.half.y;
            CHECK(center_dist < obj_extent + palm.body.half.x);  // surfaces overlap -> contact
        }
    }
}

TEST_CASE("objects outside the frustum are rejected at construction") {
    SceneSpec spec = make_scene_spec(21, MotionKind::Slide, 0);
    spec.object_start.x = -5.0;
    CHECK_THROWS_WITH_AS(generate_scene(spec), doctest::Contains("frustum"), std::invalid_argument);
}

TEST_CASE("scene sample save/load round-trip") {
    SceneSpec spec = make_scene_spec(22, MotionKind::LiftLower, 1);
    SceneSample s = generate_scene(spec);
    fs::path dir = fs::temp_directory_path() / "hvg_scene_test";
    fs::remove_all(dir);
    save_scene_sample(dir, s);
    CHECK(fs::exists(dir / "frame_0000.ppm"));
    SceneSample back = load_scene_sample(dir);
    CHECK(back.spec.seed == spec.seed);
    CHECK(back.spec.motion == spec.motion);
    CHECK(back.spec.distractors.size() == spec.distractors.size());
    for (int64_t i = 0; i < s.frames.frames.numel(); ++i) CHECK(back.frames.frames[i] == s.frames.frames[i]);
    for (int64_t i = 0; i < s.pointclouds.points.numel(); ++i) {
        CHECK(back.pointclouds.points[i] == s.pointclouds.points[i]);
    }
    for (int64_t i = 0; i < s.tracks.visibility.numel(); ++i) {
        CHECK(back.tracks.visibility[i] == s.tracks.visibility[i]);
    }
}

TEST_CASE("cross-condition with itself keeps ground truth") {
    SceneSpec spec = make_scene_spec(23, MotionKind::Slide, 0);
    SceneSample s = generate_scene(spec);
    HybridSample h = make_cross_condition(s, s);
    CHECK(h.has_gt);
    for (int64_t i = 0; i < s.frames.frames.numel(); ++i) CHECK(h.gt.frames[i] == s.frames.frames[i]);
    for (int64_t y = 0; y < spec.camera.H; ++y) {
        for (int64_t x = 0; x < spec.camera.W; ++x) {
            CHECK(h.image0.at({y, x, 0}) == s.frames.px(0, y, x, 0));
        }
    }
}

TEST_CASE("cross-condition carries motion from the condition source") {
    SceneSpec right = make_scene_spec(24, MotionKind::Slide, 0);
    SceneSpec left = make_scene_spec(25, MotionKind::Slide, 0);
    left.slide_dx = -left.slide_dx;
    left.object_start.x = -left.object_start.x;
    SceneSample a = generate_scene(right);
    SceneSample b = generate_scene(left);
    HybridSample h = make_cross_condition(a, b);
    CHECK_FALSE(h.has_gt);
    // conditions must encode rightward drift: centroid x of the point cloud increases
    auto centroid_x = [&](int64_t t) {
        double sum = 0;
        for (int64_t i = 0; i < right.points_per_frame; ++i) sum += h.pointclouds.points.at({t, i, 0});
        return sum / static_cast<double>(right.points_per_frame);
    };
    CHECK(centroid_x(right.T - 1) > centroid_x(0) + 0.5);
}

TEST_CASE("cross-condition rejects mismatched intrinsics") {
    SceneSpec sa = make_scene_spec(26, MotionKind::Slide, 0);
    SceneSpec sb = make_scene_spec(27, MotionKind::Slide, 0);
    sb.camera.f = 40.0;
    SceneSample a = generate_scene(sa);
    SceneSample b = generate_scene(sb);
    CHECK_THROWS_WITH(make_cross_condition(a, b), doctest::Contains("intrinsics"));
}

TEST_CASE("motion names round-trip") {
    for (MotionKind k : {MotionKind::PickPlace, MotionKind::Slide, MotionKind::LiftLower}) {
        CHECK(motion_from_name(motion_name(k)) == k);
    }
    CHECK_THROWS(motion_from_name("wiggle"));
}
