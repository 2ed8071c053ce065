#include "gaitml/model.hpp"

#include "gaitml/errors.hpp"
#include "gaitml/synth.hpp"

#include <cmath>
#include <set>

namespace gaitml {

using json = nlohmann::json;

model_config model_config::defaults_for(std::vector<modality> modalities) {
    model_config c;
    c.encoder.n_layers = modalities.size() == 1 ? 8 : 4;
    c.fusion.modalities = std::move(modalities);
    return c;
}

void model_config::validate() const {
    encoder.validate();
    fusion.validate();
    if (encoder.rope != fusion.rope) throw validation_error("model config: encoder and fusion rope modes differ");
}

json model_config::to_json() const {
    json mods = json::array();
    for (auto m : fusion.modalities) mods.push_back(modality_name(m));
    return json{
        {"encoder",
         {{"d_model", encoder.d_model},
          {"n_heads", encoder.n_heads},
          {"n_layers", encoder.n_layers},
          {"mlp_ratio", encoder.mlp_ratio},
          {"patch_frames", encoder.patch_frames},
          {"rope_base", encoder.rope_base},
          {"rope_mode", rope_mode_name(encoder.rope)}}},
        {"fusion",
         {{"variant", variant_name(fusion.variant)},
          {"rope_mode", rope_mode_name(fusion.rope)},
          {"modalities", mods},
          {"n_latents", fusion.n_latents},
          {"latent_direction", fusion.direction == latent_direction::latents_query ? "latents-query" : "tokens-query"}}},
        {"prompts", prompts},
        {"text_embeddings", text_embeddings},
        {"text_seed", text_seed},
        {"init_seed", init_seed},
    };
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
    if (!j.is_object()) throw validation_error(where + " must be a JSON object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, _] : j.items()) {
        if (!allowed.count(k)) throw validation_error(where + ": unknown key '" + k + "'");
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

model_config model_config::from_json(const json& j) {
    reject_unknown(j, {"encoder", "fusion", "prompts", "text_embeddings", "text_seed", "init_seed"}, "model config");
    model_config c;
    try {
        if (j.contains("fusion")) {
            const auto& f = j["fusion"];
            reject_unknown(f, {"variant", "rope_mode", "modalities", "n_latents", "latent_direction"}, "fusion config");
            if (f.contains("modalities")) {
                c.fusion.modalities.clear();
                for (const auto& m : f["modalities"]) c.fusion.modalities.push_back(parse_modality(m.get<std::string>()));
                c.encoder.n_layers = c.fusion.modalities.size() == 1 ? 8 : 4;
            }
            if (f.contains("variant")) c.fusion.variant = parse_variant(f["variant"].get<std::string>());
            if (f.contains("rope_mode")) c.fusion.rope = parse_rope_mode(f["rope_mode"].get<std::string>());
            read_opt(f, "n_latents", c.fusion.n_latents);
            if (f.contains("latent_direction")) {
                const auto d = f["latent_direction"].get<std::string>();
                if (d == "latents-query") c.fusion.direction = latent_direction::latents_query;
                else if (d == "tokens-query") c.fusion.direction = latent_direction::tokens_query;
                else throw validation_error("unknown latent_direction '" + d + "'");
            }
            c.encoder.rope = c.fusion.rope;
        }
        if (j.contains("encoder")) {
            const auto& e = j["encoder"];
            reject_unknown(e, {"d_model", "n_heads", "n_layers", "mlp_ratio", "patch_frames", "rope_base", "rope_mode"},
                           "encoder config");
            read_opt(e, "d_model", c.encoder.d_model);
            read_opt(e, "n_heads", c.encoder.n_heads);
            read_opt(e, "n_layers", c.encoder.n_layers);
            read_opt(e, "mlp_ratio", c.encoder.mlp_ratio);
            read_opt(e, "patch_frames", c.encoder.patch_frames);
            read_opt(e, "rope_base", c.encoder.rope_base);
            if (e.contains("rope_mode")) c.encoder.rope = parse_rope_mode(e["rope_mode"].get<std::string>());
            if (!j.contains("fusion") || !j["fusion"].contains("rope_mode")) c.fusion.rope = c.encoder.rope;
        }
        read_opt(j, "prompts", c.prompts);
        read_opt(j, "text_embeddings", c.text_embeddings);
        read_opt(j, "text_seed", c.text_seed);
        read_opt(j, "init_seed", c.init_seed);
    } catch (const json::exception& e) {
        throw validation_error(std::string("model config: ") + e.what());
    }
    c.validate();
    return c;
}

screening_model::screening_model(model_config cfg) : cfg_(std::move(cfg)), params_(cfg_.init_seed) {
    cfg_.validate();
    const auto& enc = cfg_.encoder;
    const auto& fus = cfg_.fusion;
    if (fus.has(modality::knowledge_map)) {
        km_embed_ = patch_embedding::make(params_, "km.patch", num_features, enc);
        km_encoder_ = transformer_encoder::make(params_, "km.encoder", enc);
    }
    if (fus.has(modality::video)) {
        video_embed_ = patch_embedding::make(params_, "video.patch", silhouette_size * silhouette_size, enc);
        video_encoder_ = transformer_encoder::make(params_, "video.encoder", enc);
    }
    if (fus.has(modality::text)) {
        text_proj_ = nn::linear_layer::make(params_, "text.proj", text_embedding_dim, enc.d_model,
                                            1.0 / std::sqrt(static_cast<double>(text_embedding_dim)));
        if (cfg_.text_embeddings.empty()) {
            text_vectors_ = text_vectors(cfg_.prompts, hashed_text_provider(cfg_.text_seed));
        } else {
            text_vectors_ = text_vectors(cfg_.prompts, file_text_provider(cfg_.text_embeddings));
        }
    }
    switch (fus.variant) {
    case fusion_variant::cat: break;
    case fusion_variant::cat_att: att_pool_ = attention_pooling::make(params_, "pool.att", enc); break;
    case fusion_variant::cat_latent:
        latent_pool_ = latent_pooling::make(params_, "pool.latent", enc, fus.n_latents, fus.direction);
        break;
    }
    head_ = classifier_head::make(params_, "head", enc.d_model);
}

forward_result screening_model::forward(const clip_input& input) const {
    const auto& enc = cfg_.encoder;
    std::vector<token_sequence> seqs;
    if (km_embed_) seqs.push_back(patch_embed_map(*km_embed_, input.map));
    if (video_embed_) {
        if (input.video.empty()) throw validation_error("model uses video but the clip has no silhouettes");
        seqs.push_back(patch_embed_video(*video_embed_, input.video, input.video.size() / (silhouette_size * silhouette_size)));
    }
    if (text_proj_ && !cfg_.prompts.empty()) seqs.push_back(embed_text(text_vectors_, cfg_.prompts.size(), *text_proj_));

    if (cfg_.fusion.rope == rope_mode::non_aligned) {
        // ordinal index within the fused sequence, assigned before encoding
        double next = 0.0;
        for (auto& s : seqs) {
            for (auto& p : s.positions) p = next++;
        }
    }
    for (auto& s : seqs) {
        if (s.kinds.front() == modality::knowledge_map) s = km_encoder_->encode(s, enc);
        else if (s.kinds.front() == modality::video) s = video_encoder_->encode(s, enc);
    }

    forward_result r;
    r.fused = fuse(std::move(seqs), cfg_.fusion.rope);
    switch (cfg_.fusion.variant) {
    case fusion_variant::cat: r.embedding = pool_mean(r.fused); break;
    case fusion_variant::cat_att: r.embedding = (*att_pool_)(r.fused, enc, &r.pool_attention); break;
    case fusion_variant::cat_latent: {
        auto lp = (*latent_pool_)(r.fused, enc);
        r.embedding = lp.embedding;
        r.pool_attention = std::move(lp.attention);
        break;
    }
    }
    r.logits = head_(r.embedding);
    return r;
}

} // namespace gaitml
