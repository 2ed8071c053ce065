#pragma once

#include "gaitml/pose.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gaitml {

// Per-subject gait parameters. Asymmetry fields grow linearly with the
// subject's Cobb proxy; everything else is drawn from the seed.
struct gait_params {
    double cadence = 1.0;         // gait cycles per second
    double step_amplitude = 0.15; // trunk lengths
    double arm_swing_l = 0.4;     // radians
    double arm_swing_r = 0.4;     // radians
    double shoulder_tilt_offset = 0.0; // degrees
    double pelvis_tilt_offset = 0.0;   // degrees
    double trunk_lean_amp = 0.0;       // degrees
    double coordination_break = 0.0;   // [0,1], phase noise on the right side
    double noise_std = 1.5;            // pixels
    std::uint64_t seed = 0;
};

// Severity -> asymmetry coefficients (per degree of Cobb proxy).
namespace severity {
inline constexpr double arm_swing_ratio_per_deg = 0.02; // right arm swing = left * (1 - k * cobb)
inline constexpr double arm_swing_ratio_floor = 0.3;
inline constexpr double shoulder_tilt_per_deg = 0.4;
inline constexpr double pelvis_tilt_per_deg = 0.2;
inline constexpr double trunk_lean_per_deg = 0.15;
inline constexpr double coordination_break_per_deg = 0.025;
} // namespace severity

struct synthetic_subject {
    std::string subject_id;
    double cobb_proxy = 0.0;
    gait_params params;
    label truth = label::negative;
};

synthetic_subject generate_subject(double cobb_proxy, std::uint64_t seed, std::string subject_id = {});

// Phase-locked sinusoidal walk seen from the front. `clip_seed` varies the
// starting phase and the pixel noise between clips of one subject.
pose_sequence synthesize_sequence(const synthetic_subject& subject, std::size_t n_frames = clip_frames,
                                  double fps = default_fps, std::uint64_t clip_seed = 0);

inline constexpr std::size_t silhouette_size = 32;

// size x size intensities in [0,1], row-major (row = image y).
using silhouette = std::vector<double>;

silhouette rasterize_silhouette(const pose_frame& frame, std::size_t size = silhouette_size);
// n_frames * size * size, frame-major.
std::vector<double> rasterize_clip(const std::vector<pose_frame>& frames, std::size_t size = silhouette_size);

// "GMVF" container: {magic, n_frames u32, h u32, w u32}, then f64 intensities.
void save_silhouettes(const std::filesystem::path& path, std::span<const double> frames, std::size_t n_frames,
                      std::size_t size = silhouette_size);
std::vector<double> load_silhouettes(const std::filesystem::path& path, std::size_t* n_frames = nullptr,
                                     std::size_t* size = nullptr);

struct dataset_options {
    std::size_t n_subjects = 100;
    std::size_t clips_per_subject = 3;
    double positive_fraction = 0.5;
    std::uint64_t seed = 0;
    double noise_std = 1.5;
    double fps = default_fps;
    bool write_silhouettes = false;
};

// Writes poses/<subject>_c<k>.jsonl (one 96-frame clip each) and
// manifest.json under out_dir; returns the manifest path.
std::filesystem::path build_synthetic_dataset(const std::filesystem::path& out_dir, const dataset_options& opts);

} // namespace gaitml
