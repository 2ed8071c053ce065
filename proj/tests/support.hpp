#pragma once

#include "gaitml/rng.hpp"
#include "gaitml/synth.hpp"
#include "gaitml/tensor.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace testsupport {

using gaitml::tensor;

inline tensor random_tensor(gaitml::rng& r, gaitml::shape_t shape, double scale = 1.0, bool requires_grad = true) {
    std::vector<double> v(gaitml::shape_numel(shape));
    for (auto& x : v) x = scale * r.normal();
    return tensor::from(std::move(shape), std::move(v), requires_grad);
}

// Reduces any tensor to a scalar with fixed pseudo-random weights, so every
// output entry reaches the gradient with a distinct coefficient.
inline tensor probe(const tensor& y, std::uint64_t seed = 99) {
    gaitml::rng r(seed);
    return gaitml::sum(gaitml::mul(y, random_tensor(r, y.shape(), 1.0, false)));
}

struct gradcheck_result {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

// Central differences (step h) against reverse-mode gradients of the scalar
// f(inputs). Relative error uses max(|analytic|, |numeric|, floor) as the
// denominator. At most `max_per_input` entries of each input are probed,
// spread evenly over the tensor.
inline gradcheck_result gradcheck(const std::function<tensor()>& f, std::vector<tensor> inputs, double h = 1e-6,
                                  std::size_t max_per_input = 0, double floor = 1e-4) {
    for (auto& t : inputs) t.zero_grad();
    f().backward();
    std::vector<std::vector<double>> analytic;
    for (const auto& t : inputs) {
        auto g = t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0);
        analytic.push_back(std::move(g));
    }
    gradcheck_result res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto data = inputs[k].mutable_data();
        const std::size_t n = data.size();
        const std::size_t count = max_per_input == 0 ? n : std::min(n, max_per_input);
        for (std::size_t s = 0; s < count; ++s) {
            const std::size_t i = (s * n) / count;
            const double orig = data[i];
            data[i] = orig + h;
            const double fp = f().item();
            data[i] = orig - h;
            const double fm = f().item();
            data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[k][i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            res.max_rel_error = std::max(res.max_rel_error, rel);
            ++res.checked;
        }
    }
    return res;
}

inline gaitml::pose_sequence walk(double cobb, std::uint64_t seed, double noise_std = 1.5, std::size_t frames = 96,
                                  std::uint64_t clip_seed = 1) {
    auto subject = gaitml::generate_subject(cobb, seed, "T" + std::to_string(seed));
    subject.params.noise_std = noise_std;
    return gaitml::synthesize_sequence(subject, frames, gaitml::default_fps, clip_seed);
}

inline gaitml::clip as_clip(const gaitml::pose_sequence& seq, double cobb, const std::string& id) {
    gaitml::clip c;
    c.clip_id = id;
    c.subject_id = seq.subject_id;
    c.frames.assign(seq.frames.begin(), seq.frames.begin() + gaitml::clip_frames);
    c.cobb_angle = cobb;
    c.truth = gaitml::label_for_cobb(cobb);
    c.fps = seq.fps;
    return c;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
struct temp_dir {
    std::filesystem::path path;
    explicit temp_dir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() / ("gaitml_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~temp_dir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    temp_dir(const temp_dir&) = delete;
    temp_dir& operator=(const temp_dir&) = delete;
};

} // namespace testsupport
