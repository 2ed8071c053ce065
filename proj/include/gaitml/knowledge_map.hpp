#pragma once

#include "gaitml/pose.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gaitml {

enum class feature_domain { motion, self_skeleton, cross_correlation };

inline constexpr std::size_t motion_features = 140;
inline constexpr std::size_t skeleton_features = 32;
inline constexpr std::size_t xcorr_features = 66;
inline constexpr std::size_t num_features = motion_features + skeleton_features + xcorr_features;
inline constexpr std::uint32_t feature_schema_version = 1;

inline constexpr std::size_t xcorr_window = 31;
inline constexpr std::size_t xcorr_max_lag = 10;

std::string_view domain_name(feature_domain d);

struct feature_descriptor {
    std::string name;
    feature_domain domain;
    std::size_t column;
    std::string units;
};

struct column_block {
    std::size_t begin;
    std::size_t end;
    std::size_t size() const { return end - begin; }
};

// The 238-column roster. Column blocks are contiguous: motion, then
// self-skeleton, then cross-correlation.
const std::vector<feature_descriptor>& feature_schema();
column_block domain_columns(feature_domain d);
std::size_t feature_column(std::string_view name); // throws on unknown name
std::string feature_schema_json();

struct point2 {
    double x = 0.0;
    double y = 0.0;
};

double pair_distance(point2 a, point2 b);

// Unsigned angle between two vectors, degrees in [0, 180].
// Throws degenerate_geometry_error for a zero-length vector.
double segment_angle(point2 u, point2 v);

// Max over lag in [-max_lag, max_lag] of the Pearson correlation of the pairs
// (s1[i], s2[i + lag]) with i and i + lag both inside the window of `window`
// frames centred at t (shifted to stay inside the series). Returns 0 when
// either windowed series has variance below 1e-12.
double windowed_xcorr(std::span<const double> s1, std::span<const double> s2, std::size_t t,
                      std::size_t window = xcorr_window, std::size_t max_lag = xcorr_max_lag);

struct knowledge_map {
    std::size_t frames = 0;
    std::vector<double> values; // frames x num_features, row-major
    double fps = default_fps;

    double operator()(std::size_t t, std::size_t f) const { return values[t * num_features + f]; }
    double& operator()(std::size_t t, std::size_t f) { return values[t * num_features + f]; }
};

knowledge_map extract(std::span<const pose_frame> frames, double fps = default_fps);
inline knowledge_map extract(const clip& c) { return extract(c.frames, c.fps); }

struct norm_stats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<bool> degenerate; // stddev < 1e-8, recorded as 1.0
};

norm_stats fit_norm_stats(std::span<const knowledge_map> maps);
knowledge_map apply_norm(const knowledge_map& map, const norm_stats& stats);

// "GMKM" file: {magic, version u32, T u32, F u32}, then T*F little-endian f64.
void save_knowledge_map(const std::filesystem::path& path, const knowledge_map& map);
knowledge_map load_knowledge_map(const std::filesystem::path& path);

} // namespace gaitml
