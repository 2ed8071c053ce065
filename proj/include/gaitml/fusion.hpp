#pragma once

#include "gaitml/encoders.hpp"

#include <vector>

namespace gaitml {

enum class fusion_variant { cat, cat_att, cat_latent };

std::string_view variant_name(fusion_variant v);
fusion_variant parse_variant(std::string_view s);

// Which side of the latent cross-attention issues the queries.
enum class latent_direction { latents_query, tokens_query };

struct fusion_config {
    fusion_variant variant = fusion_variant::cat_latent;
    rope_mode rope = rope_mode::aligned;
    std::vector<modality> modalities = {modality::knowledge_map, modality::video, modality::text};
    std::size_t n_latents = 16;
    latent_direction direction = latent_direction::latents_query;

    bool has(modality m) const;
    void validate() const;
};

// Concatenate in fixed modality order (knowledge map, video, text). Aligned
// mode keeps each token's clock position; non-aligned replaces positions with
// ordinals 0..N-1.
token_sequence fuse(std::vector<token_sequence> seqs, rope_mode mode);

tensor pool_mean(const token_sequence& seq);

struct latent_pool_result {
    tensor embedding;               // [1, d]
    std::vector<tensor> attention;  // per head: [K, N] (latents_query) or [N, K] (tokens_query)
};

// Learnable latent dictionary queried by cross-attention, followed by a
// residual GELU MLP on each latent output and a mean over latents.
struct latent_pooling {
    tensor latents; // [K, d]
    nn::linear_layer wq, wk, wv, wo;
    nn::linear_layer fc1, fc2;
    latent_direction direction = latent_direction::latents_query;

    static latent_pooling make(nn::param_store& ps, const std::string& name, const encoder_config& cfg,
                               std::size_t n_latents, latent_direction direction);
    latent_pool_result operator()(const token_sequence& seq, const encoder_config& cfg) const;
};

// One self-attention layer (pre-norm, residual) then mean pooling.
struct attention_pooling {
    nn::norm_layer ln;
    nn::linear_layer wq, wk, wv, wo;

    static attention_pooling make(nn::param_store& ps, const std::string& name, const encoder_config& cfg);
    tensor operator()(const token_sequence& seq, const encoder_config& cfg, std::vector<tensor>* attention = nullptr) const;
};

struct classifier_head {
    nn::linear_layer out; // [d, 2]; column 0 = negative, 1 = positive

    static classifier_head make(nn::param_store& ps, const std::string& name, std::size_t d_model);
    tensor operator()(const tensor& embedding) const { return out(embedding); }
};

struct prediction {
    label predicted = label::negative;
    double probability_positive = 0.5;
    double probability_negative = 0.5;
};

// Softmax over the two logits; exact ties go to negative.
prediction predict(std::span<const double> logits);

} // namespace gaitml
