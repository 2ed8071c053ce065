#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gaitml {

// COCO-17 keypoint order.
enum class joint : std::size_t {
    nose,
    eye_l,
    eye_r,
    ear_l,
    ear_r,
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
};

inline constexpr std::size_t num_joints = 17;
inline constexpr std::size_t clip_frames = 96;
inline constexpr double default_fps = 30.0;
inline constexpr double default_conf_threshold = 0.3;
inline constexpr double cobb_positive_threshold = 10.0;

std::string_view joint_name(joint j);
// Index of the mirror-image joint (left <-> right, nose maps to itself).
joint mirror_joint(joint j);

struct keypoint {
    double x = 0.0; // pixels
    double y = 0.0; // pixels, screen-down positive
    double confidence = 0.0;
};

struct pose_frame {
    std::size_t frame_index = 0;
    std::array<keypoint, num_joints> keypoints{};

    const keypoint& operator[](joint j) const { return keypoints[static_cast<std::size_t>(j)]; }
    keypoint& operator[](joint j) { return keypoints[static_cast<std::size_t>(j)]; }
};

struct pose_sequence {
    std::string subject_id;
    std::vector<pose_frame> frames;
    double fps = default_fps;
};

enum class label { negative = 0, positive = 1 };

std::string_view label_name(label l);
label parse_label(std::string_view s);
inline label label_for_cobb(double cobb) { return cobb >= cobb_positive_threshold ? label::positive : label::negative; }

struct clip {
    std::string clip_id;
    std::string subject_id;
    std::vector<pose_frame> frames; // exactly clip_frames
    label truth = label::negative;
    std::optional<double> cobb_angle;
    double fps = default_fps;
};

// Parses JSON-lines pose records {"frame": int, "keypoints": [[x, y, conf] x 17]}.
// Frames come back sorted by index; duplicate indices are rejected.
pose_sequence parse_pose_jsonl(std::istream& in, const std::string& source, std::string subject_id = {},
                               double fps = default_fps);
pose_sequence load_pose_jsonl(const std::filesystem::path& path, std::string subject_id = {},
                              double fps = default_fps);
void save_pose_jsonl(const std::filesystem::path& path, const pose_sequence& seq);

// Replaces keypoints whose confidence is below the threshold by linear
// interpolation between the nearest valid frames of the same joint; edge
// gaps take the nearest valid value. Filled keypoints get confidence ==
// threshold, so the operation is idempotent.
pose_sequence interpolate_missing(const pose_sequence& seq, double conf_threshold = default_conf_threshold);

// Non-overlapping 96-frame clips starting at frame 0; the remainder is dropped.
std::vector<clip> segment_clips(const pose_sequence& seq, label truth, std::optional<double> cobb_angle = {},
                                const std::string& clip_prefix = {});

// -- dataset manifest --------------------------------------------------------

struct manifest_entry {
    std::string pose_path; // relative paths resolve against the manifest's directory
    std::string subject_id;
    label truth = label::negative;
    std::optional<double> cobb_angle;
};

struct manifest {
    std::vector<manifest_entry> entries;
    std::filesystem::path base_dir;
};

manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const manifest& m);
std::string manifest_to_json(const manifest& m);

// Load, interpolate and segment every entry. Clip ids are "<pose stem>#<k>".
std::vector<clip> load_clips(const manifest& m, double conf_threshold = default_conf_threshold);

} // namespace gaitml
