#include "gaitml/cli.hpp"

#include "gaitml/errors.hpp"
#include "gaitml/explain.hpp"
#include "gaitml/synth.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace gaitml {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw io_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(path.string() + ": malformed JSON (" + e.what() + ")", 0);
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string file_safe(std::string s) {
    for (auto& c : s) {
        if (c == '#' || c == '/' || c == '\\' || c == ':') c = '_';
    }
    return s;
}

// Rewrites relative pose paths so the manifest can live in `new_base`.
manifest rebase(manifest m, const fs::path& new_base) {
    for (auto& e : m.entries) {
        fs::path p(e.pose_path);
        if (p.is_relative()) p = m.base_dir / p;
        e.pose_path = fs::relative(fs::absolute(p), fs::absolute(new_base)).generic_string();
    }
    m.base_dir = new_base;
    return m;
}

std::vector<modality> parse_modalities(const std::string& list) {
    std::vector<modality> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_modality(item));
    }
    return out;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

// Fails unless overridden; returns true when an override was applied.
bool leakage_guard(const std::vector<std::string>& train_subjects, const std::vector<std::string>& test_subjects,
                   bool allow, std::ostream& err) {
    const auto overlap = subject_overlap(train_subjects, test_subjects);
    if (overlap.empty()) return false;
    const std::string msg = "subject overlap between train and test: " + join(overlap, ", ") +
                            " (no participant may appear in both splits)";
    if (!allow) throw validation_error(msg);
    err << "warning: " << msg << "; continuing because --allow-leakage was given\n";
    return true;
}

struct model_flags {
    std::string config_path, train_config_path, variant, rope, modalities, text_embeddings, direction;
    std::optional<std::size_t> layers, d_model, heads, latents, epochs, batch_size;
    std::optional<double> lr, weight_decay;
    std::optional<std::uint64_t> seed;
    bool no_class_weights = false;
};

void add_model_flags(CLI::App* cmd, model_flags& f) {
    cmd->add_option("--config", f.config_path, "Model config JSON");
    cmd->add_option("--train-config", f.train_config_path, "Training config JSON");
    cmd->add_option("--variant", f.variant, "Pooling variant")->check(CLI::IsMember({"cat", "cat-att", "cat-latent"}));
    cmd->add_option("--rope", f.rope, "Rotary clock")->check(CLI::IsMember({"aligned", "non-aligned"}));
    cmd->add_option("--modalities", f.modalities, "Comma list of km,video,text");
    cmd->add_option("--latent-direction", f.direction, "Latent pooling direction")
        ->check(CLI::IsMember({"latents-query", "tokens-query"}));
    cmd->add_option("--text-embeddings", f.text_embeddings, "JSON file mapping prompt -> 384-d vector");
    cmd->add_option("--layers", f.layers, "Encoder layers per modality");
    cmd->add_option("--d-model", f.d_model, "Token width");
    cmd->add_option("--heads", f.heads, "Attention heads");
    cmd->add_option("--latents", f.latents, "Number of pooling latents");
    cmd->add_option("--epochs", f.epochs, "Training epochs");
    cmd->add_option("--batch-size", f.batch_size, "Clips per optimiser step");
    cmd->add_option("--lr", f.lr, "Adam learning rate");
    cmd->add_option("--weight-decay", f.weight_decay, "L2 penalty on weight matrices");
    cmd->add_option("--seed", f.seed, "Seed for initialisation and data order");
    cmd->add_flag("--no-class-weights", f.no_class_weights, "Disable inverse-frequency class weighting");
}

model_config resolve_model(const model_flags& f) {
    json j = f.config_path.empty() ? json::object() : read_json(f.config_path);
    if (!j.is_object()) throw validation_error("model config must be a JSON object");
    auto& fus = j["fusion"];
    if (fus.is_null()) fus = json::object();
    auto& enc = j["encoder"];
    if (enc.is_null()) enc = json::object();
    if (!f.variant.empty()) fus["variant"] = f.variant;
    if (!f.rope.empty()) {
        fus["rope_mode"] = f.rope;
        enc.erase("rope_mode");
    }
    if (!f.modalities.empty()) {
        json mods = json::array();
        for (auto m : parse_modalities(f.modalities)) mods.push_back(modality_name(m));
        fus["modalities"] = mods;
    }
    if (!f.direction.empty()) fus["latent_direction"] = f.direction;
    if (f.latents) fus["n_latents"] = *f.latents;
    if (f.layers) enc["n_layers"] = *f.layers;
    if (f.d_model) enc["d_model"] = *f.d_model;
    if (f.heads) enc["n_heads"] = *f.heads;
    if (!f.text_embeddings.empty()) j["text_embeddings"] = f.text_embeddings;
    if (f.seed) j["init_seed"] = *f.seed;
    return model_config::from_json(j);
}

train_config resolve_train(const model_flags& f) {
    train_config c = f.train_config_path.empty() ? train_config{} : train_config::from_json(read_json(f.train_config_path));
    if (f.epochs) c.epochs = *f.epochs;
    if (f.batch_size) c.batch_size = *f.batch_size;
    if (f.lr) c.learning_rate = *f.lr;
    if (f.weight_decay) c.weight_decay = *f.weight_decay;
    if (f.seed) c.seed = *f.seed;
    if (f.no_class_weights) c.weighting = class_weighting::none;
    c.validate();
    return c;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gait-based scoliosis screening toolkit"};
    app.require_subcommand(1);

    // simulate
    dataset_options sim;
    std::string sim_out;
    auto* c_sim = app.add_subcommand("simulate", "Generate a labelled synthetic gait dataset");
    c_sim->add_option("--out", sim_out, "Output directory")->required();
    c_sim->add_option("--subjects", sim.n_subjects, "Number of subjects")->capture_default_str();
    c_sim->add_option("--clips", sim.clips_per_subject, "Clips per subject")->capture_default_str();
    c_sim->add_option("--positive-fraction", sim.positive_fraction, "Share of positive subjects")->capture_default_str();
    c_sim->add_option("--noise", sim.noise_std, "Keypoint noise in pixels")->capture_default_str();
    c_sim->add_option("--seed", sim.seed, "Generator seed")->capture_default_str();
    c_sim->add_flag("--silhouettes", sim.write_silhouettes, "Also write GMVF silhouette files");

    // extract
    std::string ex_manifest, ex_out;
    double conf_threshold = default_conf_threshold;
    auto* c_ex = app.add_subcommand("extract", "Compute knowledge maps for every clip of a manifest");
    c_ex->add_option("--manifest", ex_manifest, "Dataset manifest")->required();
    c_ex->add_option("--out", ex_out, "Output directory")->required();
    c_ex->add_option("--conf-threshold", conf_threshold, "Keypoint confidence threshold")->capture_default_str();

    // split
    std::string sp_manifest, sp_out;
    double test_fraction = 0.3;
    std::uint64_t split_seed = 0;
    auto* c_sp = app.add_subcommand("split", "Subject-disjoint train/test split");
    c_sp->add_option("--manifest", sp_manifest, "Dataset manifest")->required();
    c_sp->add_option("--out", sp_out, "Output directory for train.json and test.json")->required();
    c_sp->add_option("--test-fraction", test_fraction, "Fraction of subjects held out")->capture_default_str();
    c_sp->add_option("--seed", split_seed, "Split seed")->capture_default_str();

    // train
    model_flags mf;
    std::string tr_manifest, tr_test, tr_out;
    bool tr_allow = false;
    auto* c_tr = app.add_subcommand("train", "Train a screening model");
    c_tr->add_option("--train", tr_manifest, "Training manifest")->required();
    c_tr->add_option("--test", tr_test, "Held-out manifest, checked for subject overlap");
    c_tr->add_option("--out", tr_out, "Model bundle directory")->required();
    c_tr->add_flag("--allow-leakage", tr_allow, "Permit subject overlap with --test");
    add_model_flags(c_tr, mf);

    // eval
    std::string ev_model, ev_test, ev_out;
    bool ev_allow = false;
    auto* c_ev = app.add_subcommand("eval", "Evaluate a trained model on a test manifest");
    c_ev->add_option("--model", ev_model, "Model bundle directory")->required();
    c_ev->add_option("--test", ev_test, "Test manifest")->required();
    c_ev->add_option("--out", ev_out, "Metrics report JSON path")->required();
    c_ev->add_flag("--allow-leakage", ev_allow, "Evaluate despite subject overlap (watermarks the report)");

    // explain
    std::string xp_model, xp_manifest, xp_out;
    std::vector<std::string> xp_clips;
    std::size_t top_k = 3;
    auto* c_xp = app.add_subcommand("explain", "Write heat-map reports for clips");
    c_xp->add_option("--model", xp_model, "Model bundle directory")->required();
    c_xp->add_option("--manifest", xp_manifest, "Manifest containing the clips")->required();
    c_xp->add_option("--clip", xp_clips, "Clip id to explain (repeatable; default all)");
    c_xp->add_option("--out", xp_out, "Report directory")->required();
    c_xp->add_option("--top-k", top_k, "Features ranked per domain")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*c_sim) {
            const auto path = build_synthetic_dataset(sim_out, sim);
            write_json(fs::path(sim_out) / "simulate_config.json",
                       {{"command", "simulate"},
                        {"subjects", sim.n_subjects},
                        {"clips_per_subject", sim.clips_per_subject},
                        {"positive_fraction", sim.positive_fraction},
                        {"noise_std", sim.noise_std},
                        {"fps", sim.fps},
                        {"seed", sim.seed},
                        {"silhouettes", sim.write_silhouettes}});
            out << path.string() << '\n';
        } else if (*c_ex) {
            ensure_dir(ex_out);
            const auto m = load_manifest(ex_manifest);
            const auto clips = load_clips(m, conf_threshold);
            json index = json::array();
            for (const auto& c : clips) {
                const auto name = file_safe(c.clip_id) + ".gmkm";
                try {
                    save_knowledge_map(fs::path(ex_out) / name, extract(c));
                } catch (const degenerate_geometry_error& e) {
                    throw degenerate_geometry_error("clip " + c.clip_id + ": " + e.what());
                }
                index.push_back({{"clip_id", c.clip_id}, {"subject_id", c.subject_id}, {"file", name},
                                 {"label", label_name(c.truth)}});
            }
            std::ofstream schema(fs::path(ex_out) / "schema.json", std::ios::trunc | std::ios::binary);
            if (!schema) throw io_error("cannot write schema sidecar");
            schema << feature_schema_json();
            write_json(fs::path(ex_out) / "maps.json", index);
            write_json(fs::path(ex_out) / "extract_config.json",
                       {{"command", "extract"}, {"manifest", ex_manifest}, {"conf_threshold", conf_threshold}});
            out << clips.size() << " knowledge maps written to " << ex_out << '\n';
        } else if (*c_sp) {
            ensure_dir(sp_out);
            const auto split = split_subject_disjoint(load_manifest(sp_manifest), test_fraction, split_seed);
            save_manifest(fs::path(sp_out) / "train.json", rebase(split.train, sp_out));
            save_manifest(fs::path(sp_out) / "test.json", rebase(split.test, sp_out));
            for (const auto& w : split.warnings) err << "warning: " << w << '\n';
            write_json(fs::path(sp_out) / "split_config.json",
                       {{"command", "split"},
                        {"manifest", sp_manifest},
                        {"test_fraction", test_fraction},
                        {"seed", split_seed},
                        {"train_subjects", manifest_subjects(split.train).size()},
                        {"test_subjects", manifest_subjects(split.test).size()},
                        {"warnings", split.warnings}});
            out << "train: " << split.train.entries.size() << " clips, test: " << split.test.entries.size()
                << " clips\n";
        } else if (*c_tr) {
            const auto mcfg = resolve_model(mf);
            const auto tcfg = resolve_train(mf);
            const auto train_m = load_manifest(tr_manifest);
            bool leaked = false;
            if (!tr_test.empty()) {
                leaked = leakage_guard(manifest_subjects(train_m), manifest_subjects(load_manifest(tr_test)), tr_allow, err);
            }
            const auto clips = load_clips(train_m);
            std::vector<epoch_record> history;
            const auto bundle = train_bundle(mcfg, clips, tcfg, &history, [&](const epoch_record& r) {
                out << "epoch " << r.epoch << " loss " << r.loss << " train_acc " << r.train_accuracy << '\n';
            });
            save_bundle(tr_out, bundle);
            {
                std::ofstream csv(fs::path(tr_out) / "loss.csv", std::ios::trunc | std::ios::binary);
                if (!csv) throw io_error("cannot write loss history");
                csv << loss_history_csv(history);
            }
            json resolved{{"command", "train"},
                          {"train_manifest", tr_manifest},
                          {"model", mcfg.to_json()},
                          {"train", tcfg.to_json()},
                          {"parameters", bundle.model.params().parameter_count()}};
            if (!tr_test.empty()) resolved["test_manifest"] = tr_test;
            if (leaked) resolved["leakage_override"] = true;
            write_json(fs::path(tr_out) / "train_config.json", resolved);
            out << "model written to " << tr_out << '\n';
        } else if (*c_ev) {
            const auto bundle = load_bundle(ev_model);
            const auto test_m = load_manifest(ev_test);
            const bool leaked = leakage_guard(bundle.train_subjects, manifest_subjects(test_m), ev_allow, err);
            const auto clips = load_clips(test_m);
            const auto inputs = prepare_inputs(clips, extract_maps(clips), bundle.stats, bundle.model.config());
            auto report = evaluate(bundle.model, inputs);
            report.leakage_override = leaked;
            const fs::path out_path(ev_out);
            if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
            write_json(out_path, report.to_json());
            write_json(out_path.parent_path() / (out_path.stem().string() + "_config.json"),
                       {{"command", "eval"}, {"model", ev_model}, {"test_manifest", ev_test}, {"allow_leakage", ev_allow}});
            out << "accuracy " << report.accuracy << " macro_f1 " << report.macro_f1 << '\n';
        } else if (*c_xp) {
            if (top_k < 1) throw validation_error("--top-k must be at least 1");
            const auto bundle = load_bundle(xp_model);
            auto clips = load_clips(load_manifest(xp_manifest));
            if (!xp_clips.empty()) {
                const std::set<std::string> wanted(xp_clips.begin(), xp_clips.end());
                std::set<std::string> found;
                std::vector<clip> keep;
                for (auto& c : clips) {
                    if (wanted.count(c.clip_id)) {
                        found.insert(c.clip_id);
                        keep.push_back(std::move(c));
                    }
                }
                for (const auto& w : wanted) {
                    if (!found.count(w)) throw validation_error("clip '" + w + "' is not in " + xp_manifest);
                }
                clips = std::move(keep);
            }
            const auto inputs = prepare_inputs(clips, extract_maps(clips), bundle.stats, bundle.model.config());
            for (const auto& in : inputs) {
                const auto rep = explain_clip(bundle.model, in, top_k);
                const auto paths = render_report(rep, xp_out, file_safe(in.clip_id));
                out << in.clip_id << " -> " << paths.json.string() << '\n';
            }
            write_json(fs::path(xp_out) / "explain_config.json",
                       {{"command", "explain"},
                        {"model", xp_model},
                        {"manifest", xp_manifest},
                        {"clips", xp_clips},
                        {"top_k", top_k}});
        }
    } catch (const error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    } catch (const json::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}

} // namespace gaitml
