#include "gaitml/pose.hpp"

#include "gaitml/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gaitml {

using json = nlohmann::json;

namespace {

constexpr std::array<std::string_view, num_joints> joint_names = {
    "nose",       "eye_l",      "eye_r",   "ear_l",   "ear_r", "shoulder_l", "shoulder_r", "elbow_l", "elbow_r",
    "wrist_l",    "wrist_r",    "hip_l",   "hip_r",   "knee_l", "knee_r",    "ankle_l",    "ankle_r",
};

} // namespace

std::string_view joint_name(joint j) { return joint_names[static_cast<std::size_t>(j)]; }

joint mirror_joint(joint j) {
    const auto i = static_cast<std::size_t>(j);
    if (i == 0) return j;
    // left/right pairs are adjacent, left first
    return static_cast<joint>(i % 2 == 1 ? i + 1 : i - 1);
}

std::string_view label_name(label l) { return l == label::positive ? "positive" : "negative"; }

label parse_label(std::string_view s) {
    if (s == "positive") return label::positive;
    if (s == "negative") return label::negative;
    throw validation_error("unknown label '" + std::string(s) + "' (expected positive|negative)");
}

pose_sequence parse_pose_jsonl(std::istream& in, const std::string& source, std::string subject_id, double fps) {
    if (!(fps > 0.0)) throw validation_error("fps must be positive");
    pose_sequence seq;
    seq.subject_id = std::move(subject_id);
    seq.fps = fps;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        auto fail = [&](const std::string& why) -> parse_error {
            return parse_error(source + ":" + std::to_string(lineno) + ": " + why, lineno);
        };
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw fail(std::string("malformed JSON (") + e.what() + ")");
        }
        if (!rec.is_object() || !rec.contains("frame") || !rec.contains("keypoints")) {
            throw fail("expected object with \"frame\" and \"keypoints\"");
        }
        const auto& fr = rec["frame"];
        if (!fr.is_number_integer() || fr.get<long long>() < 0) throw fail("\"frame\" must be a non-negative integer");
        const auto& kps = rec["keypoints"];
        if (!kps.is_array() || kps.size() != num_joints) {
            throw fail("expected " + std::to_string(num_joints) + " keypoints, got " +
                       (kps.is_array() ? std::to_string(kps.size()) : std::string("non-array")));
        }
        pose_frame frame;
        frame.frame_index = fr.get<std::size_t>();
        for (std::size_t j = 0; j < num_joints; ++j) {
            const auto& kp = kps[j];
            if (!kp.is_array() || kp.size() != 3 || !kp[0].is_number() || !kp[1].is_number() || !kp[2].is_number()) {
                throw fail("keypoint " + std::to_string(j) + " must be [x, y, confidence]");
            }
            keypoint k{kp[0].get<double>(), kp[1].get<double>(), kp[2].get<double>()};
            if (!std::isfinite(k.x) || !std::isfinite(k.y)) throw fail("non-finite coordinate");
            if (!(k.confidence >= 0.0 && k.confidence <= 1.0)) {
                throw fail("confidence of keypoint " + std::to_string(j) + " outside [0,1]");
            }
            frame.keypoints[j] = k;
        }
        seq.frames.push_back(frame);
    }
    std::stable_sort(seq.frames.begin(), seq.frames.end(),
                     [](const pose_frame& a, const pose_frame& b) { return a.frame_index < b.frame_index; });
    for (std::size_t i = 1; i < seq.frames.size(); ++i) {
        if (seq.frames[i].frame_index == seq.frames[i - 1].frame_index) {
            throw validation_error(source + ": duplicate frame index " + std::to_string(seq.frames[i].frame_index));
        }
    }
    return seq;
}

pose_sequence load_pose_jsonl(const std::filesystem::path& path, std::string subject_id, double fps) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open pose file " + path.string());
    return parse_pose_jsonl(in, path.string(), std::move(subject_id), fps);
}

void save_pose_jsonl(const std::filesystem::path& path, const pose_sequence& seq) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    for (const auto& f : seq.frames) {
        json kps = json::array();
        for (const auto& k : f.keypoints) kps.push_back({k.x, k.y, k.confidence});
        out << json{{"frame", f.frame_index}, {"keypoints", std::move(kps)}}.dump() << '\n';
    }
    if (!out) throw io_error("write failed for " + path.string());
}

pose_sequence interpolate_missing(const pose_sequence& seq, double conf_threshold) {
    if (!(conf_threshold >= 0.0 && conf_threshold <= 1.0)) {
        throw validation_error("confidence threshold must lie in [0,1]");
    }
    pose_sequence out = seq;
    const std::size_t n = seq.frames.size();
    for (std::size_t j = 0; j < num_joints; ++j) {
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < n; ++i) {
            if (seq.frames[i].keypoints[j].confidence >= conf_threshold) valid.push_back(i);
        }
        if (n == 0 || valid.size() == n) continue;
        if (valid.empty()) {
            throw validation_error("joint '" + std::string(joint_name(static_cast<joint>(j))) +
                                   "' has no observation with confidence >= threshold");
        }
        std::size_t next = 0; // first valid index >= i
        for (std::size_t i = 0; i < n; ++i) {
            while (next < valid.size() && valid[next] < i) ++next;
            if (next < valid.size() && valid[next] == i) continue;
            auto& kp = out.frames[i].keypoints[j];
            if (next == 0) {
                kp = seq.frames[valid.front()].keypoints[j];
            } else if (next == valid.size()) {
                kp = seq.frames[valid.back()].keypoints[j];
            } else {
                const auto& a = seq.frames[valid[next - 1]];
                const auto& b = seq.frames[valid[next]];
                const double span = static_cast<double>(b.frame_index) - static_cast<double>(a.frame_index);
                const double w = (static_cast<double>(seq.frames[i].frame_index) - static_cast<double>(a.frame_index)) / span;
                kp.x = a.keypoints[j].x + w * (b.keypoints[j].x - a.keypoints[j].x);
                kp.y = a.keypoints[j].y + w * (b.keypoints[j].y - a.keypoints[j].y);
            }
            kp.confidence = conf_threshold;
        }
    }
    return out;
}

std::vector<clip> segment_clips(const pose_sequence& seq, label truth, std::optional<double> cobb_angle,
                                const std::string& clip_prefix) {
    if (cobb_angle && label_for_cobb(*cobb_angle) != truth) {
        throw validation_error("subject " + seq.subject_id + ": label " + std::string(label_name(truth)) +
                               " contradicts Cobb angle " + std::to_string(*cobb_angle));
    }
    std::vector<clip> clips;
    const std::size_t count = seq.frames.size() / clip_frames;
    clips.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        clip cl;
        cl.clip_id = (clip_prefix.empty() ? seq.subject_id : clip_prefix) + "#" + std::to_string(c);
        cl.subject_id = seq.subject_id;
        cl.frames.assign(seq.frames.begin() + static_cast<std::ptrdiff_t>(c * clip_frames),
                         seq.frames.begin() + static_cast<std::ptrdiff_t>((c + 1) * clip_frames));
        cl.truth = truth;
        cl.cobb_angle = cobb_angle;
        cl.fps = seq.fps;
        clips.push_back(std::move(cl));
    }
    return clips;
}

// -- manifest ---------------------------------------------------------------

manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(path.string() + ": malformed manifest JSON (" + e.what() + ")", 0);
    }
    if (!doc.is_array()) throw validation_error(path.string() + ": manifest must be a JSON array");
    manifest m;
    m.base_dir = path.parent_path();
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& e = doc[i];
        const std::string where = path.string() + " entry " + std::to_string(i);
        if (!e.is_object() || !e.contains("pose_path") || !e.contains("subject_id") || !e.contains("label")) {
            throw validation_error(where + ": requires pose_path, subject_id and label");
        }
        for (const auto& [key, _] : e.items()) {
            if (key != "pose_path" && key != "subject_id" && key != "label" && key != "cobb_angle") {
                throw validation_error(where + ": unknown key '" + key + "'");
            }
        }
        manifest_entry me;
        me.pose_path = e["pose_path"].get<std::string>();
        me.subject_id = e["subject_id"].get<std::string>();
        if (me.subject_id.empty()) throw validation_error(where + ": empty subject_id");
        me.truth = parse_label(e["label"].get<std::string>());
        if (e.contains("cobb_angle") && !e["cobb_angle"].is_null()) {
            me.cobb_angle = e["cobb_angle"].get<double>();
            if (label_for_cobb(*me.cobb_angle) != me.truth) {
                throw validation_error(where + ": label contradicts cobb_angle (positive iff >= 10 degrees)");
            }
        }
        m.entries.push_back(std::move(me));
    }
    return m;
}

std::string manifest_to_json(const manifest& m) {
    json doc = json::array();
    for (const auto& e : m.entries) {
        json j = {{"pose_path", e.pose_path}, {"subject_id", e.subject_id}, {"label", label_name(e.truth)}};
        if (e.cobb_angle) j["cobb_angle"] = *e.cobb_angle;
        doc.push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

void save_manifest(const std::filesystem::path& path, const manifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << manifest_to_json(m);
    if (!out) throw io_error("write failed for " + path.string());
}

std::vector<clip> load_clips(const manifest& m, double conf_threshold) {
    std::vector<clip> clips;
    for (const auto& e : m.entries) {
        std::filesystem::path p(e.pose_path);
        if (p.is_relative()) p = m.base_dir / p;
        auto seq = interpolate_missing(load_pose_jsonl(p, e.subject_id), conf_threshold);
        auto parts = segment_clips(seq, e.truth, e.cobb_angle, p.stem().string());
        for (auto& c : parts) clips.push_back(std::move(c));
    }
    return clips;
}

} // namespace gaitml
