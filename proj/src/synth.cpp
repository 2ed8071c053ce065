#include "gaitml/synth.hpp"

#include "gaitml/binary_io.hpp"
#include "gaitml/errors.hpp"
#include "gaitml/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace gaitml {

namespace {

constexpr double deg = std::numbers::pi / 180.0;

struct vec2 {
    double x = 0.0;
    double y = 0.0;
};

vec2 operator+(vec2 a, vec2 b) { return {a.x + b.x, a.y + b.y}; }
vec2 operator-(vec2 a, vec2 b) { return {a.x - b.x, a.y - b.y}; }
vec2 operator*(double s, vec2 a) { return {s * a.x, s * a.y}; }

// Rotation in image coordinates (y down).
vec2 rotate(vec2 v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Subject-level nuisance quantities that never depend on severity.
struct body_layout {
    double trunk_px;
    vec2 centre_px;
    double sway;      // lateral pelvis sway, trunk lengths
    double bob;       // vertical bob, trunk lengths
    double pelvis_osc; // symmetric pelvic obliquity oscillation, degrees
    double lean_osc;  // symmetric trunk lateral sway, degrees
    double break_phase;
};

body_layout layout_for(std::uint64_t seed) {
    rng r(seed ^ 0x9e3779b97f4a7c15ULL);
    body_layout b{};
    b.trunk_px = r.uniform(150.0, 240.0);
    b.centre_px = {r.uniform(820.0, 1100.0), r.uniform(480.0, 600.0)};
    b.sway = r.uniform(0.03, 0.06);
    b.bob = r.uniform(0.015, 0.03);
    b.pelvis_osc = r.uniform(1.5, 3.0);
    b.lean_osc = r.uniform(1.0, 2.0);
    b.break_phase = r.uniform(0.0, 2.0 * std::numbers::pi);
    return b;
}

// Body-frame skeleton at one instant. Left joints sit at +x (subject faces the camera).
std::array<vec2, num_joints> pose_at(const gait_params& p, const body_layout& b, double phase) {
    const double cb = p.coordination_break;
    const double phase_l = phase;
    const double phase_r = phase + std::numbers::pi + cb * 0.9 * std::sin(0.41 * phase + b.break_phase);

    const vec2 mid_hip{b.sway * std::sin(phase_l), -b.bob * std::cos(2.0 * phase_l)};
    const double pelvis_angle = (b.pelvis_osc * std::sin(phase_l) + p.pelvis_tilt_offset) * deg;
    const double lean = (b.lean_osc * std::sin(phase_l) + p.trunk_lean_amp * (0.5 + 0.5 * std::sin(phase_l))) * deg;
    const double shoulder_angle = (-0.6 * b.pelvis_osc * std::sin(phase_l) + p.shoulder_tilt_offset) * deg;

    const vec2 mid_sh = mid_hip + rotate({0.0, -1.0}, lean);
    const vec2 hip_half = rotate({0.22, 0.0}, pelvis_angle);
    const vec2 sh_half = rotate({0.40, 0.0}, shoulder_angle);

    std::array<vec2, num_joints> j{};
    auto at = [&](joint id) -> vec2& { return j[static_cast<std::size_t>(id)]; };
    at(joint::hip_l) = mid_hip + hip_half;
    at(joint::hip_r) = mid_hip - hip_half;
    at(joint::shoulder_l) = mid_sh + sh_half;
    at(joint::shoulder_r) = mid_sh - sh_half;

    // side = +1 (left, image +x) or -1 (right)
    auto leg = [&](joint hip, joint knee, joint ankle, double ph, double side) {
        const double thigh = 2.5 * p.step_amplitude * std::sin(ph);
        const double shank = thigh - 0.8 * p.step_amplitude * (1.0 + std::sin(ph - 0.6));
        const double lift = p.step_amplitude * 0.8 * std::pow(0.5 + 0.5 * std::sin(ph), 2.0);
        at(knee) = at(hip) + vec2{side * 0.02, 0.48 * std::cos(thigh)};
        at(ankle) = at(knee) + vec2{side * 0.01, 0.48 * std::cos(shank) - lift};
    };
    leg(joint::hip_l, joint::knee_l, joint::ankle_l, phase_l, 1.0);
    leg(joint::hip_r, joint::knee_r, joint::ankle_r, phase_r, -1.0);

    // arms swing against the ipsilateral leg
    auto arm = [&](joint shoulder, joint elbow, joint wrist, double ph, double swing, double side) {
        const double upper = swing * std::sin(ph + std::numbers::pi);
        const double fore = 1.3 * upper + 0.25;
        at(elbow) = at(shoulder) + vec2{side * (0.06 + 0.08 * std::sin(upper)), 0.45 * std::cos(upper)};
        at(wrist) = at(elbow) + vec2{side * (0.02 + 0.05 * std::sin(fore)), 0.40 * std::cos(fore)};
    };
    arm(joint::shoulder_l, joint::elbow_l, joint::wrist_l, phase_l, p.arm_swing_l, 1.0);
    arm(joint::shoulder_r, joint::elbow_r, joint::wrist_r, phase_r, p.arm_swing_r, -1.0);

    const double head = 0.5 * lean;
    const vec2 nose = mid_sh + rotate({0.0, -0.35}, head);
    at(joint::nose) = nose;
    at(joint::eye_l) = nose + rotate({0.05, -0.04}, head);
    at(joint::eye_r) = nose + rotate({-0.05, -0.04}, head);
    at(joint::ear_l) = nose + rotate({0.10, -0.02}, head);
    at(joint::ear_r) = nose + rotate({-0.10, -0.02}, head);
    return j;
}

double dist_to_segment(vec2 p, vec2 a, vec2 b) {
    const vec2 ab = b - a, ap = p - a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;
    double t = len2 > 0.0 ? (ap.x * ab.x + ap.y * ab.y) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const vec2 q = a + t * ab;
    return std::hypot(p.x - q.x, p.y - q.y);
}

} // namespace

synthetic_subject generate_subject(double cobb_proxy, std::uint64_t seed, std::string subject_id) {
    if (!(cobb_proxy >= 0.0) || !std::isfinite(cobb_proxy)) {
        throw validation_error("generate_subject: cobb_proxy must be a finite value >= 0");
    }
    rng r(seed);
    synthetic_subject s;
    s.subject_id = std::move(subject_id);
    s.cobb_proxy = cobb_proxy;
    s.truth = label_for_cobb(cobb_proxy);
    auto& p = s.params;
    p.seed = seed;
    p.cadence = r.uniform(0.85, 1.05);
    p.step_amplitude = r.uniform(0.12, 0.18);
    const double swing = r.uniform(0.35, 0.5);
    p.arm_swing_l = swing;
    p.arm_swing_r =
        swing * std::max(severity::arm_swing_ratio_floor, 1.0 - severity::arm_swing_ratio_per_deg * cobb_proxy);
    p.shoulder_tilt_offset = severity::shoulder_tilt_per_deg * cobb_proxy;
    p.pelvis_tilt_offset = severity::pelvis_tilt_per_deg * cobb_proxy;
    p.trunk_lean_amp = severity::trunk_lean_per_deg * cobb_proxy;
    p.coordination_break = std::min(1.0, severity::coordination_break_per_deg * cobb_proxy);
    p.noise_std = 1.5;
    return s;
}

pose_sequence synthesize_sequence(const synthetic_subject& subject, std::size_t n_frames, double fps,
                                  std::uint64_t clip_seed) {
    const auto& p = subject.params;
    if (n_frames < clip_frames) throw validation_error("synthesize_sequence: need at least 96 frames");
    if (!(fps > 0.0)) throw validation_error("synthesize_sequence: fps must be positive");
    if (!(p.cadence > 0.0)) throw validation_error("gait params: cadence must be positive");
    if (!(p.coordination_break >= 0.0 && p.coordination_break <= 1.0)) {
        throw validation_error("gait params: coordination_break must lie in [0,1]");
    }
    if (!(p.noise_std >= 0.0)) throw validation_error("gait params: noise_std must be >= 0");

    const body_layout b = layout_for(p.seed);
    rng r(p.seed * 0x100000001b3ULL + clip_seed * 0xc2b2ae3d27d4eb4fULL + 1);
    const double phase0 = clip_seed == 0 ? 0.0 : r.uniform(0.0, 2.0 * std::numbers::pi);
    const double omega = 2.0 * std::numbers::pi * p.cadence / fps;

    pose_sequence seq;
    seq.subject_id = subject.subject_id;
    seq.fps = fps;
    seq.frames.resize(n_frames);
    for (std::size_t t = 0; t < n_frames; ++t) {
        const auto body = pose_at(p, b, phase0 + omega * static_cast<double>(t));
        auto& f = seq.frames[t];
        f.frame_index = t;
        for (std::size_t k = 0; k < num_joints; ++k) {
            double x = b.centre_px.x + b.trunk_px * body[k].x;
            double y = b.centre_px.y + b.trunk_px * body[k].y;
            if (p.noise_std > 0.0) {
                x += r.normal(0.0, p.noise_std);
                y += r.normal(0.0, p.noise_std);
            }
            f.keypoints[k] = {x, y, 1.0};
        }
    }
    return seq;
}

silhouette rasterize_silhouette(const pose_frame& frame, std::size_t size) {
    if (size < 4) throw validation_error("rasterize_silhouette: size too small");
    auto pt = [&](joint j) { return vec2{frame[j].x, frame[j].y}; };
    const vec2 mid_hip = 0.5 * (pt(joint::hip_l) + pt(joint::hip_r));
    const vec2 mid_sh = 0.5 * (pt(joint::shoulder_l) + pt(joint::shoulder_r));
    const double trunk = std::hypot(mid_sh.x - mid_hip.x, mid_sh.y - mid_hip.y);
    if (!(trunk >= 1e-6)) throw degenerate_geometry_error("rasterize_silhouette: zero trunk length");
    vec2 com{};
    for (const auto& k : frame.keypoints) com = com + vec2{k.x, k.y};
    com = (1.0 / static_cast<double>(num_joints)) * com;

    const double px = static_cast<double>(size);
    const double unit = px / 3.5; // pixels per trunk length
    auto to_img = [&](vec2 p) { return vec2{(p.x - com.x) / trunk * unit + px / 2.0, (p.y - com.y) / trunk * unit + px / 2.0}; };

    struct segment {
        vec2 a, b;
        double radius;
    };
    const double r = px / 32.0 * 1.2;
    std::vector<segment> segs = {
        {to_img(pt(joint::shoulder_l)), to_img(pt(joint::shoulder_r)), r},
        {to_img(pt(joint::hip_l)), to_img(pt(joint::hip_r)), r},
        {to_img(mid_sh), to_img(mid_hip), 1.5 * r},
        {to_img(pt(joint::nose)), to_img(mid_sh), r},
        {to_img(pt(joint::nose)), to_img(pt(joint::nose)), 2.0 * r},
        {to_img(pt(joint::shoulder_l)), to_img(pt(joint::elbow_l)), r},
        {to_img(pt(joint::elbow_l)), to_img(pt(joint::wrist_l)), r},
        {to_img(pt(joint::shoulder_r)), to_img(pt(joint::elbow_r)), r},
        {to_img(pt(joint::elbow_r)), to_img(pt(joint::wrist_r)), r},
        {to_img(pt(joint::hip_l)), to_img(pt(joint::knee_l)), r},
        {to_img(pt(joint::knee_l)), to_img(pt(joint::ankle_l)), r},
        {to_img(pt(joint::hip_r)), to_img(pt(joint::knee_r)), r},
        {to_img(pt(joint::knee_r)), to_img(pt(joint::ankle_r)), r},
    };
    silhouette img(size * size, 0.0);
    for (std::size_t row = 0; row < size; ++row) {
        for (std::size_t col = 0; col < size; ++col) {
            const vec2 c{static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5};
            double v = 0.0;
            for (const auto& s : segs) {
                // coverage ramps linearly across one pixel at the capsule boundary
                v = std::max(v, std::clamp(s.radius + 0.5 - dist_to_segment(c, s.a, s.b), 0.0, 1.0));
            }
            img[row * size + col] = v;
        }
    }
    return img;
}

std::vector<double> rasterize_clip(const std::vector<pose_frame>& frames, std::size_t size) {
    std::vector<double> out;
    out.reserve(frames.size() * size * size);
    for (const auto& f : frames) {
        auto img = rasterize_silhouette(f, size);
        out.insert(out.end(), img.begin(), img.end());
    }
    return out;
}

void save_silhouettes(const std::filesystem::path& path, std::span<const double> frames, std::size_t n_frames,
                      std::size_t size) {
    if (frames.size() != n_frames * size * size) throw dimension_error("save_silhouettes: frame buffer size mismatch");
    binary::writer w;
    w.magic("GMVF");
    w.u32(static_cast<std::uint32_t>(n_frames));
    w.u32(static_cast<std::uint32_t>(size));
    w.u32(static_cast<std::uint32_t>(size));
    for (double v : frames) w.f64(v);
    w.write_file(path.string());
}

std::vector<double> load_silhouettes(const std::filesystem::path& path, std::size_t* n_frames, std::size_t* size) {
    binary::reader r(path.string());
    r.expect_magic("GMVF");
    const auto n = r.u32(), h = r.u32(), w = r.u32();
    if (h != w) throw validation_error(path.string() + ": non-square silhouettes");
    std::vector<double> out(static_cast<std::size_t>(n) * h * w);
    for (auto& v : out) v = r.f64();
    if (!r.at_end()) throw validation_error(path.string() + ": trailing bytes");
    if (n_frames) *n_frames = n;
    if (size) *size = h;
    return out;
}

std::filesystem::path build_synthetic_dataset(const std::filesystem::path& out_dir, const dataset_options& opts) {
    if (opts.n_subjects < 2) throw validation_error("simulate: need at least 2 subjects");
    if (!(opts.positive_fraction > 0.0 && opts.positive_fraction < 1.0)) {
        throw validation_error("simulate: positive fraction must lie in (0,1)");
    }
    if (opts.clips_per_subject < 1) throw validation_error("simulate: need at least one clip per subject");
    if (!(opts.noise_std >= 0.0)) throw validation_error("simulate: noise must be >= 0");

    std::error_code ec;
    std::filesystem::create_directories(out_dir / "poses", ec);
    if (ec) throw io_error("cannot create " + (out_dir / "poses").string() + ": " + ec.message());
    if (opts.write_silhouettes) {
        std::filesystem::create_directories(out_dir / "silhouettes", ec);
        if (ec) throw io_error("cannot create silhouette directory: " + ec.message());
    }

    rng r(opts.seed);
    const auto n_pos = static_cast<std::size_t>(
        std::clamp<long>(std::lround(opts.positive_fraction * static_cast<double>(opts.n_subjects)), 1,
                         static_cast<long>(opts.n_subjects) - 1));
    std::vector<label> labels(opts.n_subjects, label::negative);
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), label::positive);
    r.shuffle(labels);

    manifest m;
    m.base_dir = out_dir;
    for (std::size_t s = 0; s < opts.n_subjects; ++s) {
        char id[32];
        std::snprintf(id, sizeof id, "S%04zu", s + 1);
        const double cobb = labels[s] == label::positive ? r.uniform(12.0, 30.0) : r.uniform(0.0, 8.0);
        const std::uint64_t subject_seed = r.next();
        auto subject = generate_subject(cobb, subject_seed, id);
        subject.params.noise_std = opts.noise_std;
        for (std::size_t c = 0; c < opts.clips_per_subject; ++c) {
            const auto seq = synthesize_sequence(subject, clip_frames, opts.fps, c + 1);
            const std::string stem = std::string(id) + "_c" + std::to_string(c);
            save_pose_jsonl(out_dir / "poses" / (stem + ".jsonl"), seq);
            if (opts.write_silhouettes) {
                const auto sil = rasterize_clip(seq.frames);
                save_silhouettes(out_dir / "silhouettes" / (stem + ".gmvf"), sil, seq.frames.size());
            }
            m.entries.push_back({"poses/" + stem + ".jsonl", id, subject.truth, cobb});
        }
    }
    const auto path = out_dir / "manifest.json";
    save_manifest(path, m);
    return path;
}

} // namespace gaitml
