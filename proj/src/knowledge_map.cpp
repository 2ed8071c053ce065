#include "gaitml/knowledge_map.hpp"

#include "gaitml/binary_io.hpp"
#include "gaitml/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>

namespace gaitml {

namespace {

// Tracked points for the motion block: 13 COCO joints plus the derived mid-hip.
enum class tracked : std::size_t {
    nose,
    shoulder_l,
    shoulder_r,
    elbow_l,
    elbow_r,
    wrist_l,
    wrist_r,
    hip_l,
    hip_r,
    knee_l,
    knee_r,
    ankle_l,
    ankle_r,
    mid_hip,
};
constexpr std::size_t num_tracked = 14;

constexpr std::array<std::string_view, num_tracked> tracked_names = {
    "nose", "shoulder_l", "shoulder_r", "elbow_l", "elbow_r", "wrist_l", "wrist_r",
    "hip_l", "hip_r",      "knee_l",     "knee_r",  "ankle_l", "ankle_r", "mid_hip",
};

constexpr std::array<joint, 13> tracked_joints = {
    joint::nose,  joint::shoulder_l, joint::shoulder_r, joint::elbow_l, joint::elbow_r,
    joint::wrist_l, joint::wrist_r,  joint::hip_l,      joint::hip_r,   joint::knee_l,
    joint::knee_r,  joint::ankle_l,  joint::ankle_r,
};

struct motion_descriptor {
    std::string_view suffix;
    std::string_view units;
};

constexpr std::array<motion_descriptor, 10> motion_descriptors = {{
    {"x", "trunk"},
    {"y", "trunk"},
    {"vx", "trunk/s"},
    {"vy", "trunk/s"},
    {"speed", "trunk/s"},
    {"ax", "trunk/s^2"},
    {"ay", "trunk/s^2"},
    {"acc", "trunk/s^2"},
    {"jerk", "trunk/s^3"},
    {"vosc", "trunk"},
}};

constexpr std::array<std::string_view, 16> angle_names = {
    "elbow_flexion_l",   "elbow_flexion_r",  "knee_flexion_l",        "knee_flexion_r",
    "hip_trunk_thigh_l", "hip_trunk_thigh_r", "shoulder_trunk_arm_l", "shoulder_trunk_arm_r",
    "shoulder_line_tilt", "pelvis_line_tilt", "trunk_lateral_lean",   "head_lean",
    "shoulder_pelvis_relative", "thigh_vertical_l", "thigh_vertical_r", "inter_ankle",
};

using tp = tracked;
constexpr std::array<std::pair<tp, tp>, 16> distance_pairs = {{
    {tp::wrist_l, tp::hip_l},
    {tp::wrist_r, tp::hip_r},
    {tp::wrist_l, tp::wrist_r},
    {tp::ankle_l, tp::ankle_r},
    {tp::knee_l, tp::knee_r},
    {tp::elbow_l, tp::hip_l},
    {tp::elbow_r, tp::hip_r},
    {tp::shoulder_l, tp::hip_r},
    {tp::shoulder_r, tp::hip_l},
    {tp::nose, tp::mid_hip},
    {tp::wrist_l, tp::shoulder_l},
    {tp::wrist_r, tp::shoulder_r},
    {tp::ankle_l, tp::hip_l},
    {tp::ankle_r, tp::hip_r},
    {tp::knee_l, tp::hip_l},
    {tp::knee_r, tp::hip_r},
}};

constexpr std::size_t num_signals = 12;
constexpr std::array<std::string_view, num_signals> signal_names = {
    "wrist_l_y", "wrist_r_y", "elbow_l_y",     "elbow_r_y",    "knee_l_y",    "knee_r_y",
    "ankle_l_y", "ankle_r_y", "shoulder_tilt", "pelvis_tilt", "trunk_lean", "mid_hip_y",
};

std::vector<feature_descriptor> build_schema() {
    std::vector<feature_descriptor> s;
    s.reserve(num_features);
    auto push = [&](std::string name, feature_domain d, std::string_view units) {
        s.push_back({std::move(name), d, s.size(), std::string(units)});
    };
    for (auto p : tracked_names) {
        for (const auto& md : motion_descriptors) push(std::string(p) + "." + std::string(md.suffix), feature_domain::motion, md.units);
    }
    for (auto a : angle_names) push("angle." + std::string(a), feature_domain::self_skeleton, "deg");
    for (const auto& [a, b] : distance_pairs) {
        push("dist." + std::string(tracked_names[static_cast<std::size_t>(a)]) + "-" +
                 std::string(tracked_names[static_cast<std::size_t>(b)]),
             feature_domain::self_skeleton, "trunk");
    }
    for (std::size_t i = 0; i < num_signals; ++i) {
        for (std::size_t j = i + 1; j < num_signals; ++j) {
            push("xcorr." + std::string(signal_names[i]) + "~" + std::string(signal_names[j]),
                 feature_domain::cross_correlation, "r");
        }
    }
    return s;
}

// Central differences in the interior, one-sided at the edges, per second.
std::vector<double> derivative(const std::vector<double>& s, double fps) {
    const std::size_t n = s.size();
    std::vector<double> d(n, 0.0);
    if (n < 2) return d;
    d[0] = (s[1] - s[0]) * fps;
    d[n - 1] = (s[n - 1] - s[n - 2]) * fps;
    for (std::size_t t = 1; t + 1 < n; ++t) d[t] = (s[t + 1] - s[t - 1]) * 0.5 * fps;
    return d;
}

point2 operator-(point2 a, point2 b) { return {a.x - b.x, a.y - b.y}; }
point2 midpoint(point2 a, point2 b) { return {0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}; }

// Undirected line angle against the horizontal, in [0, 90].
double line_tilt(point2 d) {
    const double a = segment_angle(d, {1.0, 0.0});
    return std::min(a, 180.0 - a);
}

} // namespace

std::string_view domain_name(feature_domain d) {
    switch (d) {
    case feature_domain::motion: return "motion";
    case feature_domain::self_skeleton: return "self_skeleton";
    case feature_domain::cross_correlation: return "cross_correlation";
    }
    return "?";
}

const std::vector<feature_descriptor>& feature_schema() {
    static const std::vector<feature_descriptor> schema = build_schema();
    return schema;
}

column_block domain_columns(feature_domain d) {
    switch (d) {
    case feature_domain::motion: return {0, motion_features};
    case feature_domain::self_skeleton: return {motion_features, motion_features + skeleton_features};
    case feature_domain::cross_correlation: return {motion_features + skeleton_features, num_features};
    }
    return {0, 0};
}

std::size_t feature_column(std::string_view name) {
    for (const auto& f : feature_schema()) {
        if (f.name == name) return f.column;
    }
    throw validation_error("unknown feature '" + std::string(name) + "'");
}

std::string feature_schema_json() {
    nlohmann::json doc;
    doc["version"] = feature_schema_version;
    doc["num_features"] = num_features;
    doc["domains"] = nlohmann::json::array();
    for (auto d : {feature_domain::motion, feature_domain::self_skeleton, feature_domain::cross_correlation}) {
        const auto b = domain_columns(d);
        doc["domains"].push_back({{"name", domain_name(d)}, {"begin", b.begin}, {"end", b.end}, {"count", b.size()}});
    }
    auto& feats = doc["features"] = nlohmann::json::array();
    for (const auto& f : feature_schema()) {
        feats.push_back({{"column", f.column}, {"name", f.name}, {"domain", domain_name(f.domain)}, {"units", f.units}});
    }
    return doc.dump(2) + "\n";
}

double pair_distance(point2 a, point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

double segment_angle(point2 u, point2 v) {
    if (std::hypot(u.x, u.y) == 0.0 || std::hypot(v.x, v.y) == 0.0) {
        throw degenerate_geometry_error("segment_angle: zero-length vector");
    }
    const double cross = u.x * v.y - u.y * v.x;
    const double dot = u.x * v.x + u.y * v.y;
    return std::atan2(std::abs(cross), dot) * 180.0 / std::numbers::pi;
}

double windowed_xcorr(std::span<const double> s1, std::span<const double> s2, std::size_t t, std::size_t window,
                      std::size_t max_lag) {
    const std::size_t n = s1.size();
    if (s2.size() != n) throw dimension_error("windowed_xcorr: series lengths differ");
    if (window % 2 == 0) throw validation_error("windowed_xcorr: window must be odd");
    if (2 * max_lag >= window) throw validation_error("windowed_xcorr: max lag must be below half the window");
    if (window > n) throw validation_error("windowed_xcorr: window longer than the series");
    if (t >= n) throw validation_error("windowed_xcorr: frame outside the series");
    const std::size_t half = window / 2;
    const std::size_t start = std::min(t > half ? t - half : 0, n - window);
    const std::size_t stop = start + window;

    constexpr double var_floor = 1e-12;
    auto variance = [&](std::span<const double> s) {
        double m = 0.0;
        for (std::size_t i = start; i < stop; ++i) m += s[i];
        m /= static_cast<double>(window);
        double v = 0.0;
        for (std::size_t i = start; i < stop; ++i) v += (s[i] - m) * (s[i] - m);
        return v / static_cast<double>(window);
    };
    if (variance(s1) < var_floor || variance(s2) < var_floor) return 0.0;

    double best = -INFINITY;
    const auto lag_bound = static_cast<long>(max_lag);
    for (long lag = -lag_bound; lag <= lag_bound; ++lag) {
        // pairs (s1[i], s2[i + lag]) with both indices in [start, stop)
        const long lo = std::max(static_cast<long>(start), static_cast<long>(start) - lag);
        const long hi = std::min(static_cast<long>(stop), static_cast<long>(stop) - lag);
        const double count = static_cast<double>(hi - lo);
        double ma = 0.0, mb = 0.0;
        for (long i = lo; i < hi; ++i) {
            ma += s1[static_cast<std::size_t>(i)];
            mb += s2[static_cast<std::size_t>(i + lag)];
        }
        ma /= count;
        mb /= count;
        double sab = 0.0, saa = 0.0, sbb = 0.0;
        for (long i = lo; i < hi; ++i) {
            const double a = s1[static_cast<std::size_t>(i)] - ma;
            const double b = s2[static_cast<std::size_t>(i + lag)] - mb;
            sab += a * b;
            saa += a * a;
            sbb += b * b;
        }
        double r = 0.0;
        if (saa / count >= var_floor && sbb / count >= var_floor) r = sab / std::sqrt(saa * sbb);
        best = std::max(best, r);
    }
    return std::clamp(best, -1.0, 1.0);
}

knowledge_map extract(std::span<const pose_frame> frames, double fps) {
    const std::size_t T = frames.size();
    if (T < xcorr_window) {
        throw validation_error("extract needs at least " + std::to_string(xcorr_window) + " frames, got " +
                               std::to_string(T));
    }
    if (!(fps > 0.0)) throw validation_error("extract: fps must be positive");

    // raw pixel positions of the tracked points
    std::vector<std::array<point2, num_tracked>> raw(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < tracked_joints.size(); ++k) {
            const auto& kp = frames[t][tracked_joints[k]];
            raw[t][k] = {kp.x, kp.y};
        }
        raw[t][static_cast<std::size_t>(tp::mid_hip)] =
            midpoint(raw[t][static_cast<std::size_t>(tp::hip_l)], raw[t][static_cast<std::size_t>(tp::hip_r)]);
    }

    // body frame: origin at mean mid-hip, unit = mean trunk length
    point2 origin{};
    double trunk = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        const auto& p = raw[t];
        const point2 mid_hip = p[static_cast<std::size_t>(tp::mid_hip)];
        const point2 mid_sh = midpoint(p[static_cast<std::size_t>(tp::shoulder_l)], p[static_cast<std::size_t>(tp::shoulder_r)]);
        origin.x += mid_hip.x;
        origin.y += mid_hip.y;
        trunk += pair_distance(mid_sh, mid_hip);
    }
    origin.x /= static_cast<double>(T);
    origin.y /= static_cast<double>(T);
    trunk /= static_cast<double>(T);
    if (trunk < 1e-6) throw degenerate_geometry_error("extract: trunk length below 1e-6 (degenerate pose)");

    std::vector<std::array<point2, num_tracked>> body(T);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < num_tracked; ++k) {
            body[t][k] = {(raw[t][k].x - origin.x) / trunk, (raw[t][k].y - origin.y) / trunk};
        }
    }

    knowledge_map km;
    km.frames = T;
    km.fps = fps;
    km.values.assign(T * num_features, 0.0);

    // motion block
    for (std::size_t k = 0; k < num_tracked; ++k) {
        std::vector<double> x(T), y(T);
        for (std::size_t t = 0; t < T; ++t) {
            x[t] = body[t][k].x;
            y[t] = body[t][k].y;
        }
        const auto vx = derivative(x, fps), vy = derivative(y, fps);
        const auto ax = derivative(vx, fps), ay = derivative(vy, fps);
        const auto jx = derivative(ax, fps), jy = derivative(ay, fps);
        // mean taken relative to the first frame so a static point yields exact zeros
        double ydev = 0.0;
        for (double v : y) ydev += v - y[0];
        ydev /= static_cast<double>(T);
        const std::size_t c = k * motion_descriptors.size();
        for (std::size_t t = 0; t < T; ++t) {
            km(t, c + 0) = x[t];
            km(t, c + 1) = y[t];
            km(t, c + 2) = vx[t];
            km(t, c + 3) = vy[t];
            km(t, c + 4) = std::hypot(vx[t], vy[t]);
            km(t, c + 5) = ax[t];
            km(t, c + 6) = ay[t];
            km(t, c + 7) = std::hypot(ax[t], ay[t]);
            km(t, c + 8) = std::hypot(jx[t], jy[t]);
            km(t, c + 9) = (y[t] - y[0]) - ydev;
        }
    }

    // self-skeleton block: angles with previous-frame substitution on degenerate geometry
    const std::size_t angle_col = domain_columns(feature_domain::self_skeleton).begin;
    std::vector<std::array<double, 16>> angles(T);
    {
        std::array<std::vector<std::optional<double>>, 16> raw_angles;
        for (auto& v : raw_angles) v.resize(T);
        const point2 up{0.0, -1.0}, down{0.0, 1.0};
        for (std::size_t t = 0; t < T; ++t) {
            const auto& p = body[t];
            auto P = [&](tp id) { return p[static_cast<std::size_t>(id)]; };
            const point2 mid_sh = midpoint(P(tp::shoulder_l), P(tp::shoulder_r));
            const point2 mid_hip = P(tp::mid_hip);
            const std::array<std::function<double()>, 16> fns = {
                [&] { return segment_angle(P(tp::shoulder_l) - P(tp::elbow_l), P(tp::wrist_l) - P(tp::elbow_l)); },
                [&] { return segment_angle(P(tp::shoulder_r) - P(tp::elbow_r), P(tp::wrist_r) - P(tp::elbow_r)); },
                [&] { return segment_angle(P(tp::hip_l) - P(tp::knee_l), P(tp::ankle_l) - P(tp::knee_l)); },
                [&] { return segment_angle(P(tp::hip_r) - P(tp::knee_r), P(tp::ankle_r) - P(tp::knee_r)); },
                [&] { return segment_angle(mid_sh - mid_hip, P(tp::knee_l) - P(tp::hip_l)); },
                [&] { return segment_angle(mid_sh - mid_hip, P(tp::knee_r) - P(tp::hip_r)); },
                [&] { return segment_angle(mid_hip - mid_sh, P(tp::elbow_l) - P(tp::shoulder_l)); },
                [&] { return segment_angle(mid_hip - mid_sh, P(tp::elbow_r) - P(tp::shoulder_r)); },
                [&] { return line_tilt(P(tp::shoulder_r) - P(tp::shoulder_l)); },
                [&] { return line_tilt(P(tp::hip_r) - P(tp::hip_l)); },
                [&] { return segment_angle(mid_sh - mid_hip, up); },
                [&] { return segment_angle(P(tp::nose) - mid_sh, up); },
                [&] { return segment_angle(P(tp::shoulder_r) - P(tp::shoulder_l), P(tp::hip_r) - P(tp::hip_l)); },
                [&] { return segment_angle(P(tp::knee_l) - P(tp::hip_l), down); },
                [&] { return segment_angle(P(tp::knee_r) - P(tp::hip_r), down); },
                [&] { return segment_angle(P(tp::ankle_l) - mid_hip, P(tp::ankle_r) - mid_hip); },
            };
            for (std::size_t a = 0; a < fns.size(); ++a) {
                try {
                    raw_angles[a][t] = fns[a]();
                } catch (const degenerate_geometry_error&) {
                    raw_angles[a][t].reset();
                }
            }
        }
        for (std::size_t a = 0; a < raw_angles.size(); ++a) {
            const auto& series = raw_angles[a];
            auto first = std::find_if(series.begin(), series.end(), [](const auto& v) { return v.has_value(); });
            double prev = first == series.end() ? 0.0 : **first; // leading gap takes the first valid value
            for (std::size_t t = 0; t < T; ++t) {
                if (series[t]) prev = *series[t];
                angles[t][a] = prev;
                km(t, angle_col + a) = prev;
            }
        }
    }
    const std::size_t dist_col = angle_col + angle_names.size();
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t d = 0; d < distance_pairs.size(); ++d) {
            const auto [a, b] = distance_pairs[d];
            km(t, dist_col + d) =
                pair_distance(body[t][static_cast<std::size_t>(a)], body[t][static_cast<std::size_t>(b)]);
        }
    }

    // cross-correlation block
    std::array<std::vector<double>, num_signals> signals;
    for (auto& s : signals) s.resize(T);
    constexpr std::array<tp, 8> limb_points = {tp::wrist_l, tp::wrist_r, tp::elbow_l, tp::elbow_r,
                                               tp::knee_l,  tp::knee_r,  tp::ankle_l, tp::ankle_r};
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < limb_points.size(); ++i) signals[i][t] = body[t][static_cast<std::size_t>(limb_points[i])].y;
        signals[8][t] = angles[t][8];
        signals[9][t] = angles[t][9];
        signals[10][t] = angles[t][10];
        signals[11][t] = body[t][static_cast<std::size_t>(tp::mid_hip)].y;
    }
    std::size_t col = domain_columns(feature_domain::cross_correlation).begin;
    for (std::size_t i = 0; i < num_signals; ++i) {
        for (std::size_t j = i + 1; j < num_signals; ++j, ++col) {
            for (std::size_t t = 0; t < T; ++t) km(t, col) = windowed_xcorr(signals[i], signals[j], t);
        }
    }
    return km;
}

norm_stats fit_norm_stats(std::span<const knowledge_map> maps) {
    if (maps.empty()) throw validation_error("fit_norm_stats: empty training set");
    norm_stats s;
    s.mean.assign(num_features, 0.0);
    s.stddev.assign(num_features, 0.0);
    s.degenerate.assign(num_features, false);
    std::size_t rows = 0;
    for (const auto& m : maps) {
        for (std::size_t t = 0; t < m.frames; ++t) {
            for (std::size_t f = 0; f < num_features; ++f) s.mean[f] += m(t, f);
        }
        rows += m.frames;
    }
    for (auto& v : s.mean) v /= static_cast<double>(rows);
    for (const auto& m : maps) {
        for (std::size_t t = 0; t < m.frames; ++t) {
            for (std::size_t f = 0; f < num_features; ++f) {
                const double d = m(t, f) - s.mean[f];
                s.stddev[f] += d * d;
            }
        }
    }
    for (std::size_t f = 0; f < num_features; ++f) {
        s.stddev[f] = std::sqrt(s.stddev[f] / static_cast<double>(rows));
        if (s.stddev[f] < 1e-8) {
            s.stddev[f] = 1.0;
            s.degenerate[f] = true;
        }
    }
    return s;
}

knowledge_map apply_norm(const knowledge_map& map, const norm_stats& stats) {
    if (stats.mean.size() != num_features || stats.stddev.size() != num_features ||
        stats.degenerate.size() != num_features) {
        throw validation_error("apply_norm: statistics do not cover " + std::to_string(num_features) + " columns");
    }
    knowledge_map out = map;
    for (std::size_t t = 0; t < map.frames; ++t) {
        for (std::size_t f = 0; f < num_features; ++f) {
            if (!stats.degenerate[f]) out(t, f) = (map(t, f) - stats.mean[f]) / stats.stddev[f];
        }
    }
    return out;
}

void save_knowledge_map(const std::filesystem::path& path, const knowledge_map& map) {
    binary::writer w;
    w.magic("GMKM");
    w.u32(feature_schema_version);
    w.u32(static_cast<std::uint32_t>(map.frames));
    w.u32(static_cast<std::uint32_t>(num_features));
    for (double v : map.values) w.f64(v);
    w.write_file(path.string());
}

knowledge_map load_knowledge_map(const std::filesystem::path& path) {
    binary::reader r(path.string());
    r.expect_magic("GMKM");
    const auto version = r.u32();
    if (version != feature_schema_version) {
        throw validation_error(path.string() + ": unsupported schema version " + std::to_string(version));
    }
    knowledge_map km;
    km.frames = r.u32();
    const auto f = r.u32();
    if (f != num_features) throw validation_error(path.string() + ": expected 238 features, got " + std::to_string(f));
    km.values.resize(km.frames * num_features);
    for (auto& v : km.values) v = r.f64();
    if (!r.at_end()) throw validation_error(path.string() + ": trailing bytes");
    return km;
}

} // namespace gaitml
