#include <doctest.h>

#include "../support.hpp"

#include "gaitml/errors.hpp"
#include "gaitml/synth.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

using namespace gaitml;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("zero severity gives symmetric parameters") {
    const auto s = generate_subject(0.0, 5);
    CHECK(s.params.arm_swing_l == s.params.arm_swing_r);
    CHECK(s.params.shoulder_tilt_offset == 0.0);
    CHECK(s.params.pelvis_tilt_offset == 0.0);
    CHECK(s.params.trunk_lean_amp == 0.0);
    CHECK(s.params.coordination_break == 0.0);
}

TEST_CASE("labels follow the Cobb proxy at the ten degree boundary") {
    CHECK(generate_subject(9.9, 1).truth == label::negative);
    CHECK(generate_subject(10.0, 1).truth == label::positive);
    CHECK_THROWS_AS(generate_subject(-0.1, 1), validation_error);
}

TEST_CASE("subject generation is deterministic") {
    const auto a = generate_subject(14.0, 77), b = generate_subject(14.0, 77);
    CHECK(a.params.cadence == b.params.cadence);
    CHECK(a.params.arm_swing_r == b.params.arm_swing_r);
    CHECK(a.params.step_amplitude == b.params.step_amplitude);
}

TEST_CASE("asymmetry grows monotonically with severity") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        double prev_swing = -1.0, prev_tilt = -1.0, prev_break = -1.0;
        for (double cobb = 0.0; cobb <= 60.0; cobb += 0.5) {
            const auto p = generate_subject(cobb, seed).params;
            const double swing = std::abs(p.arm_swing_l - p.arm_swing_r);
            CHECK(swing >= prev_swing);
            CHECK(std::abs(p.shoulder_tilt_offset) >= prev_tilt);
            CHECK(p.coordination_break >= prev_break);
            CHECK((p.coordination_break >= 0.0 && p.coordination_break <= 1.0));
            prev_swing = swing;
            prev_tilt = std::abs(p.shoulder_tilt_offset);
            prev_break = p.coordination_break;
        }
    }
}

TEST_CASE("ankle height oscillates with a 30-frame period at one cycle per second") {
    auto s = generate_subject(0.0, 9);
    s.params.cadence = 1.0;
    s.params.noise_std = 0.0;
    const auto seq = synthesize_sequence(s, 192, 30.0, 0);
    std::vector<double> y;
    for (const auto& f : seq.frames) y.push_back(f.keypoints[15].y);
    double m = 0.0;
    for (double v : y) m += v / static_cast<double>(y.size());
    std::size_t best_lag = 0;
    double best = -1e300;
    for (std::size_t lag = 10; lag <= 60; ++lag) {
        double acc = 0.0;
        for (std::size_t i = 0; i + lag < y.size(); ++i) acc += (y[i] - m) * (y[i + lag] - m);
        acc /= static_cast<double>(y.size()); // biased estimator
        if (acc > best) {
            best = acc;
            best_lag = lag;
        }
    }
    CHECK(best_lag == 30);
}

TEST_CASE("sequences are deterministic, fully confident and long enough") {
    auto s = generate_subject(20.0, 4);
    s.params.noise_std = 0.0;
    const auto a = synthesize_sequence(s, 96, 30.0, 3), b = synthesize_sequence(s, 96, 30.0, 3);
    REQUIRE(a.frames.size() == 96);
    for (std::size_t t = 0; t < 96; ++t) {
        for (std::size_t j = 0; j < num_joints; ++j) {
            CHECK(a.frames[t].keypoints[j].x == b.frames[t].keypoints[j].x);
            CHECK(a.frames[t].keypoints[j].confidence == 1.0);
        }
    }
    CHECK_THROWS_AS(synthesize_sequence(s, 95), validation_error);
    const auto noisy = synthesize_sequence(generate_subject(20.0, 4), 96, 30.0, 3);
    CHECK(noisy.frames[10].keypoints[3].x != a.frames[10].keypoints[3].x);
}

TEST_CASE("silhouettes are bounded, centred and invariant to translation and scale") {
    const auto seq = testsupport::walk(15.0, 2);
    const auto& frame = seq.frames[7];
    const auto img = rasterize_silhouette(frame);
    REQUIRE(img.size() == 32 * 32);
    double total = 0.0, cx = 0.0, cy = 0.0;
    for (std::size_t r = 0; r < 32; ++r) {
        for (std::size_t c = 0; c < 32; ++c) {
            const double v = img[r * 32 + c];
            CHECK((v >= 0.0 && v <= 1.0));
            total += v;
            cx += v * (static_cast<double>(c) + 0.5);
            cy += v * (static_cast<double>(r) + 0.5);
        }
    }
    REQUIRE(total > 0.0);
    CHECK(std::abs(cx / total - 16.0) < 6.0);
    CHECK(std::abs(cy / total - 16.0) < 6.0);

    pose_frame moved = frame;
    for (auto& k : moved.keypoints) {
        k.x = 2.0 * k.x + 113.0;
        k.y = 2.0 * k.y - 41.0;
    }
    const auto img2 = rasterize_silhouette(moved);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(img[i] - img2[i]) < 1e-9);

    pose_frame zero = frame;
    for (auto& k : zero.keypoints) k = {0.0, 0.0, 1.0};
    CHECK_THROWS_AS(rasterize_silhouette(zero), degenerate_geometry_error);
}

TEST_CASE("GMVF silhouette files round-trip") {
    testsupport::temp_dir dir("gmvf");
    const auto seq = testsupport::walk(15.0, 2);
    const auto frames = rasterize_clip(seq.frames);
    save_silhouettes(dir.path / "a.gmvf", frames, 96);
    std::size_t n = 0, size = 0;
    CHECK(load_silhouettes(dir.path / "a.gmvf", &n, &size) == frames);
    CHECK(n == 96);
    CHECK(size == 32);
}

TEST_CASE("synthetic datasets have exact label counts and are byte-reproducible") {
    testsupport::temp_dir dir("dataset");
    dataset_options o;
    o.n_subjects = 10;
    o.clips_per_subject = 3;
    o.seed = 11;
    const auto p1 = build_synthetic_dataset(dir.path / "a", o);
    const auto p2 = build_synthetic_dataset(dir.path / "b", o);
    CHECK(slurp(p1) == slurp(p2));
    const auto m = load_manifest(p1);
    CHECK(m.entries.size() == 30);
    std::map<std::string, label> subjects;
    for (const auto& e : m.entries) {
        subjects[e.subject_id] = e.truth;
        REQUIRE(e.cobb_angle.has_value());
        if (e.truth == label::positive) CHECK((*e.cobb_angle >= 12.0 && *e.cobb_angle <= 30.0));
        else CHECK((*e.cobb_angle >= 0.0 && *e.cobb_angle <= 8.0));
        CHECK(slurp(dir.path / "a" / e.pose_path) == slurp(dir.path / "b" / e.pose_path));
    }
    std::size_t pos = 0;
    for (const auto& [_, l] : subjects) pos += l == label::positive;
    CHECK(subjects.size() == 10);
    CHECK(pos == 5);
    CHECK(load_clips(m).size() == 30);
}
