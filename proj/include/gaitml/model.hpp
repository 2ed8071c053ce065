#pragma once

#include "gaitml/fusion.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace gaitml {

struct model_config {
    encoder_config encoder;
    fusion_config fusion;
    std::vector<std::string> prompts = default_prompts();
    std::string text_embeddings; // JSON provider file; empty selects the hashed fallback
    std::uint64_t text_seed = 0;
    std::uint64_t init_seed = 0;

    // Standard sizes: 8 layers for one modality, 4 when fusing several.
    static model_config defaults_for(std::vector<modality> modalities);
    void validate() const;
    nlohmann::json to_json() const;
    // Rejects unknown keys; missing keys keep their defaults.
    static model_config from_json(const nlohmann::json& j);
};

struct clip_input {
    knowledge_map map;         // standardised, 96 x 238
    std::vector<double> video; // 96 x 32 x 32 silhouettes; empty when unused
};

struct forward_result {
    tensor logits;    // [1, 2]
    tensor embedding; // [1, d]
    token_sequence fused;
    std::vector<tensor> pool_attention; // per head; empty for mean pooling
};

class screening_model {
public:
    explicit screening_model(model_config cfg);

    forward_result forward(const clip_input& input) const;

    const model_config& config() const { return cfg_; }
    nn::param_store& params() { return params_; }
    const nn::param_store& params() const { return params_; }
    // Knowledge-map patch projection, or nullptr when the modality is off.
    const patch_embedding* map_embedding() const { return km_embed_ ? &*km_embed_ : nullptr; }

private:
    model_config cfg_;
    nn::param_store params_;
    std::optional<patch_embedding> km_embed_, video_embed_;
    std::optional<transformer_encoder> km_encoder_, video_encoder_;
    std::optional<nn::linear_layer> text_proj_;
    std::optional<latent_pooling> latent_pool_;
    std::optional<attention_pooling> att_pool_;
    classifier_head head_;
    std::vector<double> text_vectors_;
};

} // namespace gaitml
