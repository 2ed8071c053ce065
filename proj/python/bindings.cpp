#include "gaitml/cli.hpp"
#include "gaitml/errors.hpp"
#include "gaitml/explain.hpp"
#include "gaitml/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <set>
#include <sstream>

namespace py = pybind11;
using namespace gaitml;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
    if (o.is_none()) return nlohmann::json::object();
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::array_t<double> as_array(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
    py::array_t<double> out({rows, cols});
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

std::vector<labelled_input> inputs_for(const model_bundle& b, const std::vector<clip>& clips) {
    return prepare_inputs(clips, extract_maps(clips), b.stats, b.model.config());
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Gait knowledge-map screening pipeline";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const io_error& e) {
            PyErr_SetString(PyExc_OSError, e.what());
        } catch (const numeric_error& e) {
            PyErr_SetString(PyExc_FloatingPointError, e.what());
        } catch (const validation_error& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    m.attr("NUM_FEATURES") = num_features;
    m.attr("CLIP_FRAMES") = clip_frames;

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run one gaitml command; returns (exit_code, stdout, stderr).");

    m.def("f1", &f1, py::arg("precision"), py::arg("recall"));
    m.def("macro_f1", &macro_f1, py::arg("f1_positive"), py::arg("f1_negative"));
    m.def(
        "metrics_from_counts",
        [](std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
            return to_python(metrics_report::from_counts(tp, fp, tn, fn).to_json());
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

    m.def("feature_names", [] {
        std::vector<std::string> names;
        for (const auto& f : feature_schema()) names.push_back(f.name);
        return names;
    });
    m.def("domain_columns", [](const std::string& domain) {
        for (auto d : {feature_domain::motion, feature_domain::self_skeleton, feature_domain::cross_correlation}) {
            if (domain_name(d) == domain) {
                const auto b = domain_columns(d);
                return py::make_tuple(b.begin, b.end);
            }
        }
        throw validation_error("unknown domain '" + domain + "'");
    });
    m.def(
        "windowed_xcorr",
        [](const std::vector<double>& s1, const std::vector<double>& s2, std::size_t t, std::size_t window,
           std::size_t max_lag) { return windowed_xcorr(s1, s2, t, window, max_lag); },
        py::arg("s1"), py::arg("s2"), py::arg("t"), py::arg("window") = xcorr_window,
        py::arg("max_lag") = xcorr_max_lag);

    m.def(
        "simulate",
        [](const std::string& out_dir, std::size_t subjects, std::size_t clips, double positive_fraction, double noise,
           std::uint64_t seed, bool silhouettes) {
            dataset_options o;
            o.n_subjects = subjects;
            o.clips_per_subject = clips;
            o.positive_fraction = positive_fraction;
            o.noise_std = noise;
            o.seed = seed;
            o.write_silhouettes = silhouettes;
            return build_synthetic_dataset(out_dir, o).string();
        },
        py::arg("out_dir"), py::arg("subjects") = 100, py::arg("clips") = 3, py::arg("positive_fraction") = 0.5,
        py::arg("noise") = 1.5, py::arg("seed") = 0, py::arg("silhouettes") = false,
        "Write a synthetic dataset and return the manifest path.");

    m.def(
        "extract",
        [](const std::string& manifest_path, double conf_threshold) {
            py::list out;
            for (const auto& c : load_clips(load_manifest(manifest_path), conf_threshold)) {
                const auto km = extract(c.frames, c.fps);
                py::dict d;
                d["clip_id"] = c.clip_id;
                d["subject_id"] = c.subject_id;
                d["label"] = std::string(label_name(c.truth));
                d["map"] = as_array(km.values, km.frames, num_features);
                out.append(d);
            }
            return out;
        },
        py::arg("manifest"), py::arg("conf_threshold") = default_conf_threshold,
        "Knowledge maps (frames x 238 arrays) for every clip of a manifest.");

    m.def(
        "split",
        [](const std::string& manifest_path, double test_fraction, std::uint64_t seed) {
            const auto s = split_subject_disjoint(load_manifest(manifest_path), test_fraction, seed);
            py::dict d;
            d["train"] = manifest_subjects(s.train);
            d["test"] = manifest_subjects(s.test);
            d["warnings"] = s.warnings;
            return d;
        },
        py::arg("manifest"), py::arg("test_fraction") = 0.3, py::arg("seed") = 0);

    m.def(
        "train",
        [](const std::string& train_manifest, const std::string& out_dir, const py::object& model_config_dict,
           const py::object& train_config_dict) {
            const auto mcfg = model_config::from_json(from_python(model_config_dict));
            const auto tcfg = train_config::from_json(from_python(train_config_dict));
            const auto clips = load_clips(load_manifest(train_manifest));
            std::vector<epoch_record> history;
            const auto bundle = train_bundle(mcfg, clips, tcfg, &history);
            save_bundle(out_dir, bundle);
            py::list out;
            for (const auto& r : history) {
                py::dict d;
                d["epoch"] = r.epoch;
                d["loss"] = r.loss;
                d["train_accuracy"] = r.train_accuracy;
                out.append(d);
            }
            return out;
        },
        py::arg("train_manifest"), py::arg("out_dir"), py::arg("model_config") = py::none(),
        py::arg("train_config") = py::none(), "Train a model bundle into out_dir; returns the loss history.");

    m.def(
        "evaluate",
        [](const std::string& model_dir, const std::string& test_manifest, bool allow_leakage) {
            const auto bundle = load_bundle(model_dir);
            const auto m = load_manifest(test_manifest);
            const auto overlap = subject_overlap(bundle.train_subjects, manifest_subjects(m));
            if (!overlap.empty() && !allow_leakage) {
                throw validation_error("subject overlap between train and test: " + overlap.front());
            }
            auto report = evaluate(bundle.model, inputs_for(bundle, load_clips(m)));
            report.leakage_override = !overlap.empty();
            return to_python(report.to_json());
        },
        py::arg("model_dir"), py::arg("test_manifest"), py::arg("allow_leakage") = false);

    m.def(
        "explain",
        [](const std::string& model_dir, const std::string& manifest_path, const std::string& clip_id,
           std::size_t top_k) {
            const auto bundle = load_bundle(model_dir);
            std::vector<clip> wanted;
            for (auto& c : load_clips(load_manifest(manifest_path))) {
                if (c.clip_id == clip_id) wanted.push_back(std::move(c));
            }
            if (wanted.empty()) throw validation_error("clip '" + clip_id + "' is not in " + manifest_path);
            const auto rep = explain_clip(bundle.model, inputs_for(bundle, wanted).front(), top_k);
            py::dict d = to_python(rep.to_json());
            d["heat"] = as_array(rep.heat.values, rep.heat.frames, num_features);
            return d;
        },
        py::arg("model_dir"), py::arg("manifest"), py::arg("clip_id"), py::arg("top_k") = 3,
        "Explain report for one clip; 'heat' is a frames x 238 array.");
}
