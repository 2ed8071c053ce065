#pragma once

#include "gaitml/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace gaitml {

enum class class_weighting { none, inverse_frequency };

struct train_config {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
    double weight_decay = 0.01; // L2 penalty on weight matrices, added to the gradient
    class_weighting weighting = class_weighting::inverse_frequency;

    void validate() const;
    nlohmann::json to_json() const;
    static train_config from_json(const nlohmann::json& j); // unknown keys rejected
};

// -- splitting ---------------------------------------------------------------

struct split_result {
    manifest train;
    manifest test;
    std::vector<std::string> warnings;
};

// Partitions subjects (never clips). Stratified by label, deterministic in seed.
split_result split_subject_disjoint(const manifest& m, double test_fraction, std::uint64_t seed);

std::vector<std::string> manifest_subjects(const manifest& m); // sorted, unique
std::vector<std::string> subject_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b);

// -- data preparation ----------------------------------------------------------

struct labelled_input {
    std::string clip_id;
    std::string subject_id;
    label truth = label::negative;
    clip_input input;
};

std::vector<knowledge_map> extract_maps(const std::vector<clip>& clips);
std::vector<labelled_input> prepare_inputs(const std::vector<clip>& clips, const std::vector<knowledge_map>& raw_maps,
                                           const norm_stats& stats, const model_config& cfg);

// -- training ------------------------------------------------------------------

struct epoch_record {
    std::size_t epoch = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;
};

std::vector<epoch_record> train(screening_model& model, const std::vector<labelled_input>& data, const train_config& cfg,
                                const std::function<void(const epoch_record&)>& on_epoch = {});
std::string loss_history_csv(const std::vector<epoch_record>& history);

struct model_bundle {
    screening_model model;
    norm_stats stats;
    std::vector<std::string> train_subjects;
};

// Fits normalisation on `clips` only, then trains a fresh model.
model_bundle train_bundle(const model_config& mcfg, const std::vector<clip>& clips, const train_config& tcfg,
                          std::vector<epoch_record>* history = nullptr,
                          const std::function<void(const epoch_record&)>& on_epoch = {});

// Directory layout: model.gmlb (parameters) + bundle.json (config, norm stats, train subjects).
void save_bundle(const std::filesystem::path& dir, const model_bundle& bundle);
model_bundle load_bundle(const std::filesystem::path& dir);

// -- metrics ---------------------------------------------------------------------

double f1(double precision, double recall);
double macro_f1(double f1_positive, double f1_negative);

struct class_metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct metrics_report {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double accuracy = 0.0;
    class_metrics positive, negative;
    double macro_f1 = 0.0;
    bool leakage_override = false;

    std::size_t total() const { return tp + fp + tn + fn; }
    static metrics_report from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn);
    nlohmann::json to_json() const;
};

std::vector<prediction> predict_all(const screening_model& model, const std::vector<labelled_input>& data);
metrics_report evaluate(const screening_model& model, const std::vector<labelled_input>& data);

} // namespace gaitml
