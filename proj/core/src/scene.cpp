#include "hvg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "hvg/blob.hpp"
#include "hvg/kvtext.hpp"

namespace fs = std::filesystem;

namespace hvg {

namespace {

constexpr double kAmbient = 0.35;
constexpr double kDiffuse = 0.65;
constexpr double kRayEps = 1e-9;
constexpr double kBackgroundDepth = 1e30;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// 12-bit color grid keeps every rendered value exactly representable through
// the latent affine map.
double quantize12(double v) { return std::floor(clamp01(v) * 4096.0 + 0.5) / 4096.0; }

double smoothstep(double s) {
    s = std::min(1.0, std::max(0.0, s));
    return s * s * (3.0 - 2.0 * s);
}

struct Hit {
    double t = kBackgroundDepth;
    Vec3 normal;
    int body = -1;
};

// Ray from origin with unit direction d against a sphere at c with radius r.
bool ray_sphere(const Vec3& d, const Vec3& c, double r, double& t_out, Vec3& n_out) {
    double b = d.dot(c);
    double disc = b * b - c.norm2() + r * r;
    if (disc < 0.0) return false;
    double s = std::sqrt(disc);
    double t = b - s;
    if (t <= kRayEps) t = b + s;
    if (t <= kRayEps) return false;
    t_out = t;
    n_out = (d * t - c) * (1.0 / r);
    return true;
}

bool ray_aabb(const Vec3& d, const Vec3& c, const Vec3& half, double& t_out, Vec3& n_out) {
    double tmin = -kBackgroundDepth, tmax = kBackgroundDepth;
    int enter_axis = -1;
    double dc[3] = {d.x, d.y, d.z};
    double cc[3] = {c.x, c.y, c.z};
    double hh[3] = {half.x, half.y, half.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dc[i]) < 1e-15) {
            if (std::abs(-cc[i]) > hh[i]) return false;
            continue;
        }
        double inv = 1.0 / dc[i];
        double t1 = (cc[i] - hh[i]) * inv;
        double t2 = (cc[i] + hh[i]) * inv;
        if (t1 > t2) std::swap(t1, t2);
        if (t1 > tmin) {
            tmin = t1;
            enter_axis = i;
        }
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return false;
    }
    if (tmin <= kRayEps || enter_axis < 0) return false;
    t_out = tmin;
    Vec3 n{0, 0, 0};
    double sign = dc[enter_axis] > 0.0 ? -1.0 : 1.0;
    if (enter_axis == 0) n.x = sign;
    if (enter_axis == 1) n.y = sign;
    if (enter_axis == 2) n.z = sign;
    n_out = n;
    return true;
}

Hit nearest_hit(const FrameState& state, const Vec3& dir) {
    Hit best;
    for (size_t i = 0; i < state.bodies.size(); ++i) {
        const PosedBody& pb = state.bodies[i];
        double t;
        Vec3 n;
        bool ok = pb.body.shape == ShapeKind::Sphere ? ray_sphere(dir, pb.pos, pb.body.half.x, t, n)
                                                     : ray_aabb(dir, pb.pos, pb.body.half, t, n);
        if (ok && t < best.t) {
            best.t = t;
            best.normal = n;
            best.body = static_cast<int>(i);
        }
    }
    return best;
}

Vec3 body_albedo(const Body& b, const Vec3& hit_point, const Vec3& body_pos) {
    if (!b.checker) return b.color;
    Vec3 q = hit_point - body_pos;
    double s = b.checker_scale;
    int64_t parity = static_cast<int64_t>(std::floor(q.x / s)) + static_cast<int64_t>(std::floor(q.y / s)) +
                     static_cast<int64_t>(std::floor(q.z / s));
    bool odd = ((parity % 2) + 2) % 2 == 1;
    return odd ? b.color2 : b.color;
}

void frustum_check(const Camera& cam, const Vec3& pos, double bound_r, int64_t frame, const char* what) {
    if (pos.z <= 0.5) {
        throw std::invalid_argument(std::string(what) + " too close to camera (z=" + std::to_string(pos.z) +
                                    ") at frame " + std::to_string(frame));
    }
    double u, v;
    cam.project(pos, u, v);
    double r_px = cam.f * bound_r / pos.z;
    if (u - r_px < 0.5 || u + r_px > static_cast<double>(cam.W) - 0.5 || v - r_px < 0.5 ||
        v + r_px > static_cast<double>(cam.H) - 0.5) {
        throw std::invalid_argument(std::string(what) + " leaves the view frustum at frame " +
                                    std::to_string(frame) + " (projected center " + std::to_string(u) + "," +
                                    std::to_string(v) + ", radius " + std::to_string(r_px) + " px)");
    }
}

double object_y_extent(const Body& b) { return b.shape == ShapeKind::Sphere ? b.half.x : b.half.y; }

}  // namespace

std::string motion_name(MotionKind k) {
    switch (k) {
        case MotionKind::PickPlace: return "pick_place";
        case MotionKind::Slide: return "slide";
        case MotionKind::LiftLower: return "lift_lower";
    }
    return "?";
}

MotionKind motion_from_name(const std::string& name) {
    if (name == "pick_place") return MotionKind::PickPlace;
    if (name == "slide") return MotionKind::Slide;
    if (name == "lift_lower") return MotionKind::LiftLower;
    throw std::invalid_argument("unknown motion kind '" + name + "'");
}

double Body::surface_area() const {
    if (shape == ShapeKind::Sphere) return 4.0 * M_PI * half.x * half.x;
    return 8.0 * (half.y * half.z + half.x * half.z + half.x * half.y);
}

Vec3 object_position(const SceneSpec& spec, int64_t t) {
    double tau = spec.T > 1 ? static_cast<double>(t) / static_cast<double>(spec.T - 1) : 0.0;
    Vec3 p = spec.object_start;
    switch (spec.motion) {
        case MotionKind::Slide:
            p.x += tau * spec.slide_dx;
            break;
        case MotionKind::LiftLower:
            p.y -= spec.lift_amplitude * std::sin(M_PI * tau);
            break;
        case MotionKind::PickPlace: {
            double x_prof = tau < 0.45 ? 0.0 : (tau < 0.75 ? smoothstep((tau - 0.45) / 0.3) : 1.0);
            double y_prof;
            if (tau < 0.25) {
                y_prof = 0.0;
            } else if (tau < 0.45) {
                y_prof = smoothstep((tau - 0.25) / 0.2);
            } else if (tau < 0.75) {
                y_prof = 1.0;
            } else {
                y_prof = 1.0 - smoothstep((tau - 0.75) / 0.25);
            }
            p.x += x_prof * spec.slide_dx;
            p.y -= y_prof * spec.lift_amplitude;
            break;
        }
    }
    return p;
}

FrameState scene_state_at(const SceneSpec& spec, int64_t t) {
    double tau = spec.T > 1 ? static_cast<double>(t) / static_cast<double>(spec.T - 1) : 0.0;
    Vec3 obj_pos = object_position(spec, t);

    // Hand root rides the grasp point; pick_place adds an approach phase with
    // the grasp opening scripted shut on contact.
    double approach = 1.0;  // 1 = fully approached/closed
    if (spec.motion == MotionKind::PickPlace && tau < 0.25) approach = smoothstep(tau / 0.25);
    Vec3 root = obj_pos + spec.grasp_offset + spec.rest_offset * (1.0 - approach);
    double open = 1.0 + 0.4 * (1.0 - approach);

    FrameState state;
    Body obj = spec.object;
    state.bodies.push_back({obj, obj_pos, BodyRole::Object});

    Body palm;
    palm.shape = ShapeKind::Sphere;
    palm.half = {spec.palm_radius, spec.palm_radius, spec.palm_radius};
    palm.color = {0.86, 0.62, 0.47};
    palm.color2 = {0.62, 0.42, 0.30};
    palm.checker = true;
    palm.checker_scale = 0.09;
    state.bodies.push_back({palm, root, BodyRole::Hand});

    Body finger = palm;
    finger.half = {spec.finger_radius, spec.finger_radius, spec.finger_radius};
    finger.checker_scale = 0.05;
    double ring = 0.85 * spec.palm_radius * open;
    double dip = 0.6 * spec.palm_radius * (2.0 - open);
    const double c45 = std::sqrt(0.5);
    Vec3 offsets[4] = {{ring * c45, dip, ring * c45},
                       {-ring * c45, dip, ring * c45},
                       {ring * c45, dip, -ring * c45},
                       {-ring * c45, dip, -ring * c45}};
    for (const Vec3& off : offsets) state.bodies.push_back({finger, root + off, BodyRole::Hand});

    for (size_t i = 0; i < spec.distractors.size(); ++i) {
        state.bodies.push_back({spec.distractors[i], spec.distractor_pos[i], BodyRole::Distractor});
    }
    return state;
}

RenderResult render_frame(const FrameState& state, const Camera& camera, const Vec3& light_dir,
                          const Vec3& bg_color) {
    RenderResult out;
    out.frame = Tensor({camera.H, camera.W, 3});
    out.depth = Tensor({camera.H, camera.W});
    out.hand_mask = MaskSequence(Tensor({1, camera.H, camera.W}));
    out.object_mask = MaskSequence(Tensor({1, camera.H, camera.W}));
    Vec3 l = light_dir.normalized();
    for (int64_t y = 0; y < camera.H; ++y) {
        for (int64_t x = 0; x < camera.W; ++x) {
            Vec3 dir = camera.pixel_ray(x, y);
            Hit hit = nearest_hit(state, dir);
            Vec3 rgb = bg_color;
            double depth = kBackgroundDepth;
            if (hit.body >= 0) {
                const PosedBody& pb = state.bodies[static_cast<size_t>(hit.body)];
                Vec3 p = dir * hit.t;
                Vec3 albedo = body_albedo(pb.body, p, pb.pos);
                double lambert = kAmbient + kDiffuse * std::max(0.0, hit.normal.dot(l));
                rgb = albedo * lambert;
                depth = hit.t;
                if (pb.role == BodyRole::Hand) out.hand_mask.at(0, y, x) = 1.0;
                if (pb.role == BodyRole::Object) out.object_mask.at(0, y, x) = 1.0;
            }
            out.frame.at({y, x, 0}) = quantize12(rgb.x);
            out.frame.at({y, x, 1}) = quantize12(rgb.y);
            out.frame.at({y, x, 2}) = quantize12(rgb.z);
            out.depth.at({y, x}) = depth;
        }
    }
    return out;
}

Tensor sample_surface_points(const FrameState& state, const Camera& camera, int64_t N, Rng& rng,
                             bool raster_consistent) {
    if (N < 1) throw std::invalid_argument("sample_surface_points: N must be >= 1");
    std::vector<size_t> surf_bodies;
    std::vector<double> cum_area;
    double total = 0.0;
    for (size_t i = 0; i < state.bodies.size(); ++i) {
        if (state.bodies[i].role == BodyRole::Distractor) continue;
        surf_bodies.push_back(i);
        total += state.bodies[i].body.surface_area();
        cum_area.push_back(total);
    }
    if (surf_bodies.empty()) throw std::invalid_argument("sample_surface_points: no hand/object surfaces");

    Tensor out({N, 3});
    int64_t accepted = 0;
    int64_t attempts = 0;
    const int64_t max_attempts = 200 * N + 1000;
    while (accepted < N) {
        if (++attempts > max_attempts) {
            throw std::runtime_error("sample_surface_points: rejection sampling failed (surfaces not visible?)");
        }
        double pick = rng.uniform() * total;
        size_t bi = surf_bodies.back();
        for (size_t j = 0; j < cum_area.size(); ++j) {
            if (pick < cum_area[j]) {
                bi = surf_bodies[j];
                break;
            }
        }
        const PosedBody& pb = state.bodies[bi];
        Vec3 p;
        if (pb.body.shape == ShapeKind::Sphere) {
            // isotropic direction from three normals
            Vec3 d{rng.normal(), rng.normal(), rng.normal()};
            double n = d.norm();
            if (n < 1e-12) continue;
            p = pb.pos + d * (pb.body.half.x / n);
        } else {
            const Vec3& h = pb.body.half;
            double ax = h.y * h.z, ay = h.x * h.z, az = h.x * h.y;  // quarter face areas
            double fa = rng.uniform() * (ax + ay + az);
            double su = rng.uniform() * 2.0 - 1.0;
            double sv = rng.uniform() * 2.0 - 1.0;
            double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
            if (fa < ax) {
                p = pb.pos + Vec3{side * h.x, su * h.y, sv * h.z};
            } else if (fa < ax + ay) {
                p = pb.pos + Vec3{su * h.x, side * h.y, sv * h.z};
            } else {
                p = pb.pos + Vec3{su * h.x, sv * h.y, side * h.z};
            }
        }
        if (raster_consistent) {
            if (p.z <= 0.0) continue;
            double u, v;
            camera.project(p, u, v);
            int64_t ix = static_cast<int64_t>(std::floor(u));
            int64_t iy = static_cast<int64_t>(std::floor(v));
            if (ix < 0 || ix >= camera.W || iy < 0 || iy >= camera.H) continue;
            Hit hit = nearest_hit(state, camera.pixel_ray(ix, iy));
            if (hit.body < 0) continue;
            BodyRole role = state.bodies[static_cast<size_t>(hit.body)].role;
            if (role == BodyRole::Distractor) continue;
        }
        out.at({accepted, 0}) = p.x;
        out.at({accepted, 1}) = p.y;
        out.at({accepted, 2}) = p.z;
        ++accepted;
    }
    return out;
}

SceneSpec make_scene_spec(uint64_t seed, MotionKind motion, int n_distractors, int64_t T) {
    if (n_distractors < 0 || n_distractors > 3) {
        throw std::invalid_argument("make_scene_spec: distractor count must be in [0,3]");
    }
    Rng rng(seed, fnv1a64("scene_spec"));
    for (int attempt = 0; attempt < 200; ++attempt) {
        SceneSpec spec;
        spec.seed = seed;
        spec.motion = motion;
        spec.T = T;

        Body obj;
        obj.shape = rng.uniform() < 0.5 ? ShapeKind::Sphere : ShapeKind::Cuboid;
        if (obj.shape == ShapeKind::Sphere) {
            double r = rng.uniform(0.28, 0.42);
            obj.half = {r, r, r};
        } else {
            obj.half = {rng.uniform(0.24, 0.40), rng.uniform(0.22, 0.35), rng.uniform(0.24, 0.40)};
        }
        double chans[3] = {rng.uniform(0.55, 0.95), rng.uniform(0.15, 0.50), rng.uniform(0.05, 0.35)};
        int hi = static_cast<int>(rng.uniform_int(3));
        obj.color = {chans[hi % 3], chans[(hi + 1) % 3], chans[(hi + 2) % 3]};
        obj.color2 = obj.color * 0.55;
        obj.checker = true;
        obj.checker_scale = rng.uniform(0.12, 0.20);
        spec.object = obj;

        spec.palm_radius = rng.uniform(0.14, 0.18);
        spec.finger_radius = 0.45 * spec.palm_radius;
        spec.grasp_offset = {0.0, -(object_y_extent(obj) + 0.8 * spec.palm_radius), 0.0};

        double z = rng.uniform(2.9, 3.5);
        double y = rng.uniform(0.25, 0.50);
        switch (motion) {
            case MotionKind::Slide:
                spec.object_start = {rng.uniform(-0.75, -0.45), y, z};
                spec.slide_dx = rng.uniform(0.9, 1.3);
                break;
            case MotionKind::PickPlace:
                spec.object_start = {rng.uniform(-0.75, -0.45), y, z};
                spec.slide_dx = rng.uniform(0.9, 1.2);
                spec.lift_amplitude = rng.uniform(0.45, 0.65);
                break;
            case MotionKind::LiftLower:
                spec.object_start = {rng.uniform(-0.30, 0.30), rng.uniform(0.35, 0.55), z};
                spec.lift_amplitude = rng.uniform(0.50, 0.75);
                break;
        }

        bool ok = true;
        double su0 = 1e30, su1 = -1e30, sv0 = 1e30, sv1 = -1e30;  // swept projected bbox
        for (int64_t t = 0; t < T && ok; ++t) {
            FrameState st = scene_state_at(spec, t);
            try {
                frustum_check(spec.camera, st.bodies[0].pos, st.bodies[0].body.bounding_radius(), t, "object");
            } catch (const std::exception&) {
                ok = false;
                break;
            }
            for (const PosedBody& pb : st.bodies) {
                if (pb.role == BodyRole::Distractor || pb.pos.z <= 0.5) continue;
                double u, v;
                spec.camera.project(pb.pos, u, v);
                double r_px = spec.camera.f * pb.body.bounding_radius() / pb.pos.z;
                su0 = std::min(su0, u - r_px);
                su1 = std::max(su1, u + r_px);
                sv0 = std::min(sv0, v - r_px);
                sv1 = std::max(sv1, v + r_px);
            }
        }
        if (!ok) continue;

        for (int d = 0; d < n_distractors; ++d) {
            for (int c = 0; c < 60; ++c) {
                Body db;
                db.shape = rng.uniform() < 0.5 ? ShapeKind::Sphere : ShapeKind::Cuboid;
                double r = rng.uniform(0.15, 0.30);
                db.half = {r, r * rng.uniform(0.7, 1.0), r * rng.uniform(0.7, 1.0)};
                if (db.shape == ShapeKind::Sphere) db.half = {r, r, r};
                db.color = {rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7), rng.uniform(0.2, 0.7)};
                db.color2 = db.color;
                Vec3 pos{rng.uniform(-1.1, 1.1), rng.uniform(-0.1, 0.75), rng.uniform(2.6, 4.3)};
                double u, v;
                spec.camera.project(pos, u, v);
                double r_px = spec.camera.f * db.bounding_radius() / pos.z;
                bool inside = u - r_px >= 0.5 && u + r_px <= spec.camera.W - 0.5 && v - r_px >= 0.5 &&
                              v + r_px <= spec.camera.H - 0.5;
                bool clear = u + r_px + 2.0 < su0 || u - r_px - 2.0 > su1 || v + r_px + 2.0 < sv0 ||
                             v - r_px - 2.0 > sv1;
                if (inside && clear) {
                    spec.distractors.push_back(db);
                    spec.distractor_pos.push_back(pos);
                    break;
                }
            }
        }
        return spec;
    }
    throw std::runtime_error("make_scene_spec: no valid spec found for seed " + std::to_string(seed));
}

SceneSample generate_scene(const SceneSpec& spec) {
    if (spec.T < 2) throw std::invalid_argument("generate_scene: T must be >= 2");
    for (int64_t t = 0; t < spec.T; ++t) {
        FrameState st = scene_state_at(spec, t);
        frustum_check(spec.camera, st.bodies[0].pos, st.bodies[0].body.bounding_radius(), t, "object");
    }

    SceneSample sample;
    sample.spec = spec;
    const Camera& cam = spec.camera;
    sample.frames = VideoTensor(Tensor({spec.T, cam.H, cam.W, 3}));
    sample.hand_masks = MaskSequence(Tensor({spec.T, cam.H, cam.W}));
    sample.object_masks = MaskSequence(Tensor({spec.T, cam.H, cam.W}));
    sample.fused_masks = MaskSequence(Tensor({spec.T, cam.H, cam.W}));
    sample.pointclouds.points = Tensor({spec.T, spec.points_per_frame, 3});

    Rng root(spec.seed, fnv1a64("scenegen"));
    Rng pc_root = root.split("points");

    std::vector<FrameState> states;
    states.reserve(static_cast<size_t>(spec.T));
    for (int64_t t = 0; t < spec.T; ++t) {
        FrameState st = scene_state_at(spec, t);
        RenderResult rr = render_frame(st, cam, spec.light_dir, spec.bg_color);
        for (int64_t y = 0; y < cam.H; ++y) {
            for (int64_t x = 0; x < cam.W; ++x) {
                for (int64_t c = 0; c < 3; ++c) sample.frames.px(t, y, x, c) = rr.frame.at({y, x, c});
                double hm = rr.hand_mask.at(0, y, x), om = rr.object_mask.at(0, y, x);
                sample.hand_masks.at(t, y, x) = hm;
                sample.object_masks.at(t, y, x) = om;
                sample.fused_masks.at(t, y, x) = hm != 0.0 || om != 0.0 ? 1.0 : 0.0;
            }
        }
        Rng pc_rng = pc_root.split(static_cast<uint64_t>(t));
        Tensor pts = sample_surface_points(st, cam, spec.points_per_frame, pc_rng, true);
        for (int64_t i = 0; i < spec.points_per_frame; ++i) {
            for (int64_t c = 0; c < 3; ++c) sample.pointclouds.points.at({t, i, c}) = pts.at({i, c});
        }
        states.push_back(std::move(st));
    }

    // Persistent tracks: body-frame anchors sampled on frame 0 surfaces.
    int64_t K = spec.track_count;
    sample.tracks.points = Tensor({K, spec.T, 3});
    sample.tracks.projections = Tensor({K, spec.T, 2});
    sample.tracks.visibility = Tensor({K, spec.T});
    Rng tr_rng = root.split("tracks");
    Tensor anchors = sample_surface_points(states[0], cam, K, tr_rng, true);
    std::vector<size_t> anchor_body(static_cast<size_t>(K));
    std::vector<Vec3> anchor_off(static_cast<size_t>(K));
    for (int64_t k = 0; k < K; ++k) {
        Vec3 p{anchors.at({k, 0}), anchors.at({k, 1}), anchors.at({k, 2})};
        // host = nearest hand/object surface
        size_t best = 0;
        double best_d = 1e30;
        for (size_t i = 0; i < states[0].bodies.size(); ++i) {
            const PosedBody& pb = states[0].bodies[i];
            if (pb.role == BodyRole::Distractor) continue;
            Vec3 q = p - pb.pos;
            double d;
            if (pb.body.shape == ShapeKind::Sphere) {
                d = std::abs(q.norm() - pb.body.half.x);
            } else {
                double dx = std::max(0.0, std::abs(q.x) - pb.body.half.x);
                double dy = std::max(0.0, std::abs(q.y) - pb.body.half.y);
                double dz = std::max(0.0, std::abs(q.z) - pb.body.half.z);
                double outside = Vec3{dx, dy, dz}.norm();
                double inside = std::max({std::abs(q.x) - pb.body.half.x, std::abs(q.y) - pb.body.half.y,
                                          std::abs(q.z) - pb.body.half.z});
                d = outside > 0.0 ? outside : std::abs(inside);
            }
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        anchor_body[static_cast<size_t>(k)] = best;
        anchor_off[static_cast<size_t>(k)] = p - states[0].bodies[best].pos;
    }
    for (int64_t k = 0; k < K; ++k) {
        for (int64_t t = 0; t < spec.T; ++t) {
            Vec3 p = states[static_cast<size_t>(t)].bodies[anchor_body[static_cast<size_t>(k)]].pos +
                     anchor_off[static_cast<size_t>(k)];
            sample.tracks.points.at({k, t, 0}) = p.x;
            sample.tracks.points.at({k, t, 1}) = p.y;
            sample.tracks.points.at({k, t, 2}) = p.z;
            double u = -1.0, v = -1.0, vis = 0.0;
            if (p.z > 0.0) {
                cam.project(p, u, v);
                if (u >= 0.0 && u < static_cast<double>(cam.W) && v >= 0.0 && v < static_cast<double>(cam.H)) {
                    Hit hit = nearest_hit(states[static_cast<size_t>(t)], p.normalized());
                    if (hit.body >= 0 && std::abs(hit.t - p.norm()) <= 1e-6) vis = 1.0;
                }
            }
            sample.tracks.projections.at({k, t, 0}) = u;
            sample.tracks.projections.at({k, t, 1}) = v;
            sample.tracks.visibility.at({k, t}) = vis;
        }
    }
    return sample;
}

HybridSample make_cross_condition(const SceneSample& condition_source, const SceneSample& image_source) {
    if (!condition_source.spec.camera.same_intrinsics(image_source.spec.camera)) {
        throw std::invalid_argument("make_cross_condition: camera intrinsics differ");
    }
    if (condition_source.spec.T != image_source.spec.T) {
        throw std::invalid_argument("make_cross_condition: frame counts differ");
    }
    HybridSample out;
    out.camera = condition_source.spec.camera;
    out.T = condition_source.spec.T;
    const Camera& cam = out.camera;
    out.image0 = Tensor({cam.H, cam.W, 3});
    for (int64_t y = 0; y < cam.H; ++y) {
        for (int64_t x = 0; x < cam.W; ++x) {
            for (int64_t c = 0; c < 3; ++c) out.image0.at({y, x, c}) = image_source.frames.px(0, y, x, c);
        }
    }
    out.pointclouds = condition_source.pointclouds;
    out.tracks = condition_source.tracks;
    out.fused_masks = condition_source.fused_masks;
    out.has_gt = condition_source.frames.frames.same_shape(image_source.frames.frames);
    if (out.has_gt) {
        for (int64_t i = 0; i < condition_source.frames.frames.numel(); ++i) {
            if (condition_source.frames.frames[i] != image_source.frames.frames[i]) {
                out.has_gt = false;
                break;
            }
        }
    }
    if (out.has_gt) out.gt = condition_source.frames;
    return out;
}

namespace {

void body_to_kv(KvText& kv, const std::string& prefix, const Body& b) {
    kv.set(prefix + "shape", b.shape == ShapeKind::Sphere ? "sphere" : "cuboid");
    kv.set_f64(prefix + "half.x", b.half.x);
    kv.set_f64(prefix + "half.y", b.half.y);
    kv.set_f64(prefix + "half.z", b.half.z);
    kv.set_f64(prefix + "color.r", b.color.x);
    kv.set_f64(prefix + "color.g", b.color.y);
    kv.set_f64(prefix + "color.b", b.color.z);
    kv.set_f64(prefix + "color2.r", b.color2.x);
    kv.set_f64(prefix + "color2.g", b.color2.y);
    kv.set_f64(prefix + "color2.b", b.color2.z);
    kv.set_i64(prefix + "checker", b.checker ? 1 : 0);
    kv.set_f64(prefix + "checker_scale", b.checker_scale);
}

Body body_from_kv(const KvText& kv, const std::string& prefix) {
    Body b;
    b.shape = kv.get(prefix + "shape") == "sphere" ? ShapeKind::Sphere : ShapeKind::Cuboid;
    b.half = {kv.get_f64(prefix + "half.x"), kv.get_f64(prefix + "half.y"), kv.get_f64(prefix + "half.z")};
    b.color = {kv.get_f64(prefix + "color.r"), kv.get_f64(prefix + "color.g"), kv.get_f64(prefix + "color.b")};
    b.color2 = {kv.get_f64(prefix + "color2.r"), kv.get_f64(prefix + "color2.g"), kv.get_f64(prefix + "color2.b")};
    b.checker = kv.get_i64(prefix + "checker") != 0;
    b.checker_scale = kv.get_f64(prefix + "checker_scale");
    return b;
}

void vec_to_kv(KvText& kv, const std::string& prefix, const Vec3& v) {
    kv.set_f64(prefix + "x", v.x);
    kv.set_f64(prefix + "y", v.y);
    kv.set_f64(prefix + "z", v.z);
}

Vec3 vec_from_kv(const KvText& kv, const std::string& prefix) {
    return {kv.get_f64(prefix + "x"), kv.get_f64(prefix + "y"), kv.get_f64(prefix + "z")};
}

}  // namespace

void spec_to_kv(KvText& kv, const SceneSpec& spec);
SceneSpec spec_from_kv(const KvText& kv);

void spec_to_kv(KvText& kv, const SceneSpec& spec) {
    kv.set_i64("spec.seed", static_cast<int64_t>(spec.seed));
    kv.set("spec.motion", motion_name(spec.motion));
    body_to_kv(kv, "spec.object.", spec.object);
    vec_to_kv(kv, "spec.object_start.", spec.object_start);
    kv.set_f64("spec.slide_dx", spec.slide_dx);
    kv.set_f64("spec.lift_amplitude", spec.lift_amplitude);
    kv.set_f64("spec.palm_radius", spec.palm_radius);
    kv.set_f64("spec.finger_radius", spec.finger_radius);
    vec_to_kv(kv, "spec.grasp_offset.", spec.grasp_offset);
    vec_to_kv(kv, "spec.rest_offset.", spec.rest_offset);
    kv.set_i64("spec.n_distractors", static_cast<int64_t>(spec.distractors.size()));
    for (size_t i = 0; i < spec.distractors.size(); ++i) {
        std::string p = "spec.distractor." + std::to_string(i) + ".";
        body_to_kv(kv, p, spec.distractors[i]);
        vec_to_kv(kv, p + "pos.", spec.distractor_pos[i]);
    }
    kv.set_f64("spec.camera.f", spec.camera.f);
    kv.set_f64("spec.camera.cx", spec.camera.cx);
    kv.set_f64("spec.camera.cy", spec.camera.cy);
    kv.set_i64("spec.camera.H", spec.camera.H);
    kv.set_i64("spec.camera.W", spec.camera.W);
    vec_to_kv(kv, "spec.light_dir.", spec.light_dir);
    vec_to_kv(kv, "spec.bg_color.", spec.bg_color);
    kv.set_i64("spec.T", spec.T);
    kv.set_i64("spec.points_per_frame", spec.points_per_frame);
    kv.set_i64("spec.track_count", spec.track_count);
}

SceneSpec spec_from_kv(const KvText& kv) {
    SceneSpec spec;
    spec.seed = static_cast<uint64_t>(kv.get_i64("spec.seed"));
    spec.motion = motion_from_name(kv.get("spec.motion"));
    spec.object = body_from_kv(kv, "spec.object.");
    spec.object_start = vec_from_kv(kv, "spec.object_start.");
    spec.slide_dx = kv.get_f64("spec.slide_dx");
    spec.lift_amplitude = kv.get_f64("spec.lift_amplitude");
    spec.palm_radius = kv.get_f64("spec.palm_radius");
    spec.finger_radius = kv.get_f64("spec.finger_radius");
    spec.grasp_offset = vec_from_kv(kv, "spec.grasp_offset.");
    spec.rest_offset = vec_from_kv(kv, "spec.rest_offset.");
    int64_t nd = kv.get_i64("spec.n_distractors");
    for (int64_t i = 0; i < nd; ++i) {
        std::string p = "spec.distractor." + std::to_string(i) + ".";
        spec.distractors.push_back(body_from_kv(kv, p));
        spec.distractor_pos.push_back(vec_from_kv(kv, p + "pos."));
    }
    spec.camera.f = kv.get_f64("spec.camera.f");
    spec.camera.cx = kv.get_f64("spec.camera.cx");
    spec.camera.cy = kv.get_f64("spec.camera.cy");
    spec.camera.H = kv.get_i64("spec.camera.H");
    spec.camera.W = kv.get_i64("spec.camera.W");
    spec.light_dir = vec_from_kv(kv, "spec.light_dir.");
    spec.bg_color = vec_from_kv(kv, "spec.bg_color.");
    spec.T = kv.get_i64("spec.T");
    spec.points_per_frame = kv.get_i64("spec.points_per_frame");
    spec.track_count = kv.get_i64("spec.track_count");
    return spec;
}

namespace {

std::vector<uint8_t> mask_to_u8(const MaskSequence& m) {
    std::vector<uint8_t> out(static_cast<size_t>(m.values.numel()));
    for (int64_t i = 0; i < m.values.numel(); ++i) out[static_cast<size_t>(i)] = m.values[i] != 0.0 ? 1 : 0;
    return out;
}

}  // namespace

void save_scene_sample(const fs::path& dir, const SceneSample& sample) {
    fs::create_directories(dir);
    write_blob_f64(dir / "frames.blob", sample.frames.frames);
    write_ppm_frames(dir, "frame", sample.frames);
    write_blob_u8(dir / "hand_masks.blob", sample.hand_masks.values.shape(), mask_to_u8(sample.hand_masks));
    write_blob_u8(dir / "object_masks.blob", sample.object_masks.values.shape(), mask_to_u8(sample.object_masks));
    write_blob_u8(dir / "fused_masks.blob", sample.fused_masks.values.shape(), mask_to_u8(sample.fused_masks));
    write_blob_f64(dir / "pointclouds.blob", sample.pointclouds.points);
    write_blob_f64(dir / "track_points.blob", sample.tracks.points);
    write_blob_f64(dir / "track_projections.blob", sample.tracks.projections);
    std::vector<uint8_t> vis(static_cast<size_t>(sample.tracks.visibility.numel()));
    for (int64_t i = 0; i < sample.tracks.visibility.numel(); ++i) {
        vis[static_cast<size_t>(i)] = sample.tracks.visibility[i] != 0.0 ? 1 : 0;
    }
    write_blob_u8(dir / "track_visibility.blob", sample.tracks.visibility.shape(), vis);

    KvText man;
    man.set("format", "hvg3d-scene");
    spec_to_kv(man, sample.spec);
    const char* blobs[] = {"frames.blob",      "hand_masks.blob",   "object_masks.blob",
                           "fused_masks.blob", "pointclouds.blob",  "track_points.blob",
                           "track_projections.blob", "track_visibility.blob"};
    for (const char* b : blobs) man.set(std::string("checksum.") + b, file_checksum(dir / b));
    man.save(dir / "manifest.txt");
}

SceneSample load_scene_sample(const fs::path& dir) {
    KvText man = KvText::load(dir / "manifest.txt");
    if (man.get("format") != "hvg3d-scene") {
        throw std::runtime_error("not a scene sample directory: " + dir.string());
    }
    const char* blobs[] = {"frames.blob",      "hand_masks.blob",   "object_masks.blob",
                           "fused_masks.blob", "pointclouds.blob",  "track_points.blob",
                           "track_projections.blob", "track_visibility.blob"};
    for (const char* b : blobs) {
        std::string want = man.get(std::string("checksum.") + b);
        std::string got = file_checksum(dir / b);
        if (want != got) {
            throw std::runtime_error("scene blob " + std::string(b) + " checksum mismatch in " + dir.string());
        }
    }
    SceneSample s;
    s.spec = spec_from_kv(man);
    s.frames = VideoTensor(read_blob(dir / "frames.blob"));
    s.hand_masks = MaskSequence(read_blob(dir / "hand_masks.blob"));
    s.object_masks = MaskSequence(read_blob(dir / "object_masks.blob"));
    s.fused_masks = MaskSequence(read_blob(dir / "fused_masks.blob"));
    s.pointclouds.points = read_blob(dir / "pointclouds.blob");
    s.tracks.points = read_blob(dir / "track_points.blob");
    s.tracks.projections = read_blob(dir / "track_projections.blob");
    s.tracks.visibility = read_blob(dir / "track_visibility.blob");
    return s;
}

}  // namespace hvg
