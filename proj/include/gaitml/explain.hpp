#pragma once

#include "gaitml/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace gaitml {

struct heat_map {
    std::size_t frames = 0;
    std::vector<double> values; // frames x num_features, non-negative, sums to 1

    double operator()(std::size_t t, std::size_t f) const { return values[t * num_features + f]; }
};

// Distributes pooling attention over the knowledge map.
// `attention` holds one row-stochastic [Q, N] matrix per head over the fused
// tokens described by `kinds`; an empty list means uniform (mean) pooling.
// The k-th knowledge-map token covers frames [k*P, (k+1)*P) of `map`.
// `patch_weight` is the [P * 238, d] knowledge-map patch projection.
heat_map remap_attention(const std::vector<tensor>& attention, const std::vector<modality>& kinds,
                         const knowledge_map& map, const tensor& patch_weight, std::size_t patch_frames);

// Renormalised relevance of each knowledge-map token (sums to 1).
std::vector<double> token_relevance(const std::vector<tensor>& attention, const std::vector<modality>& kinds);

struct ranked_feature {
    std::string name;
    std::size_t column = 0;
    std::size_t window_start = 0; // peak 8-frame window, [start, end)
    std::size_t window_end = 0;
    double score = 0.0;           // column-summed heat
};

struct domain_ranking {
    feature_domain domain;
    std::vector<ranked_feature> features; // descending score, ties to the lower column
};

std::vector<domain_ranking> top_features(const heat_map& heat, std::size_t k);
// Ranking over all 238 columns regardless of domain.
std::vector<ranked_feature> top_features_global(const heat_map& heat, std::size_t k);

struct explain_report {
    std::string clip_id;
    prediction pred;
    heat_map heat;
    std::vector<double> relevance;                  // per knowledge-map token
    std::vector<std::vector<double>> latent_relevance; // per query row, over knowledge-map tokens
    std::vector<domain_ranking> top;

    nlohmann::json to_json() const;
    static explain_report from_json(const nlohmann::json& j);
};

// Throws validation_error ("explain unsupported") when the model has no
// knowledge-map tokens or pools with tokens as queries.
explain_report explain_clip(const screening_model& model, const labelled_input& clip, std::size_t k = 3);

std::string heat_csv(const heat_map& heat);
std::string heat_svg(const explain_report& report);

struct report_paths {
    std::filesystem::path json, csv, svg;
};
report_paths render_report(const explain_report& report, const std::filesystem::path& dir, const std::string& stem);

} // namespace gaitml
