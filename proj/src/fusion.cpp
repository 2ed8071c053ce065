#include "gaitml/fusion.hpp"

#include "gaitml/errors.hpp"

#include <algorithm>
#include <cmath>

namespace gaitml {

std::string_view variant_name(fusion_variant v) {
    switch (v) {
    case fusion_variant::cat: return "cat";
    case fusion_variant::cat_att: return "cat-att";
    case fusion_variant::cat_latent: return "cat-latent";
    }
    return "?";
}

fusion_variant parse_variant(std::string_view s) {
    if (s == "cat") return fusion_variant::cat;
    if (s == "cat-att" || s == "cat_att") return fusion_variant::cat_att;
    if (s == "cat-latent" || s == "cat_latent") return fusion_variant::cat_latent;
    throw validation_error("unknown fusion variant '" + std::string(s) + "' (expected cat|cat-att|cat-latent)");
}

bool fusion_config::has(modality m) const { return std::find(modalities.begin(), modalities.end(), m) != modalities.end(); }

void fusion_config::validate() const {
    if (modalities.empty()) throw validation_error("fusion config: at least one modality required");
    for (std::size_t i = 0; i < modalities.size(); ++i) {
        for (std::size_t j = i + 1; j < modalities.size(); ++j) {
            if (modalities[i] == modalities[j]) throw validation_error("fusion config: duplicate modality");
        }
    }
    if (modalities.size() == 1 && modalities.front() == modality::text) {
        throw validation_error("fusion config: text alone carries no clip information");
    }
    if (variant == fusion_variant::cat_latent && n_latents == 0) {
        throw validation_error("fusion config: latent dictionary needs at least one latent");
    }
}

token_sequence fuse(std::vector<token_sequence> seqs, rope_mode mode) {
    std::erase_if(seqs, [](const token_sequence& s) { return s.empty(); });
    if (seqs.empty()) throw validation_error("fuse: no tokens to fuse");
    const std::size_t d = seqs.front().tokens.dim(1);
    for (const auto& s : seqs) {
        if (s.tokens.dim(1) != d) {
            throw dimension_error("fuse: token width mismatch " + shape_str(seqs.front().tokens.shape()) + " vs " +
                                  shape_str(s.tokens.shape()));
        }
    }
    std::stable_sort(seqs.begin(), seqs.end(), [](const token_sequence& a, const token_sequence& b) {
        return static_cast<int>(a.kinds.front()) < static_cast<int>(b.kinds.front());
    });
    token_sequence out;
    std::vector<tensor> parts;
    for (const auto& s : seqs) {
        parts.push_back(s.tokens);
        out.positions.insert(out.positions.end(), s.positions.begin(), s.positions.end());
        out.kinds.insert(out.kinds.end(), s.kinds.begin(), s.kinds.end());
    }
    out.tokens = parts.size() == 1 ? parts.front() : concat_rows(parts);
    if (mode == rope_mode::non_aligned) {
        for (std::size_t i = 0; i < out.positions.size(); ++i) out.positions[i] = static_cast<double>(i);
    }
    return out;
}

tensor pool_mean(const token_sequence& seq) {
    if (seq.empty()) throw validation_error("pool_mean: empty sequence");
    return mean_rows(seq.tokens);
}

latent_pooling latent_pooling::make(nn::param_store& ps, const std::string& name, const encoder_config& cfg,
                                    std::size_t n_latents, latent_direction direction) {
    const std::size_t d = cfg.d_model;
    latent_pooling lp;
    lp.latents = ps.normal(name + ".latents", {n_latents, d}, 0.02);
    lp.wq = nn::linear_layer::make(ps, name + ".wq", d, d, 0.02);
    lp.wk = nn::linear_layer::make(ps, name + ".wk", d, d, 0.02);
    lp.wv = nn::linear_layer::make(ps, name + ".wv", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
    lp.wo = nn::linear_layer::make(ps, name + ".wo", d, d, 1.0 / std::sqrt(static_cast<double>(d)));
    lp.fc1 = nn::linear_layer::make(ps, name + ".mlp.fc1", d, d * cfg.mlp_ratio, 0.02);
    lp.fc2 = nn::linear_layer::make(ps, name + ".mlp.fc2", d * cfg.mlp_ratio, d, 0.02);
    lp.direction = direction;
    return lp;
}

latent_pool_result latent_pooling::operator()(const token_sequence& seq, const encoder_config& cfg) const {
    if (seq.empty()) throw validation_error("pool_latent: empty sequence");
    latent_pool_result r;
    tensor attended;
    if (direction == latent_direction::latents_query) {
        // latents carry no position; keys keep the token clock
        const tensor q = wq(latents);
        const tensor k = rope(wk(seq.tokens), seq.positions, cfg.n_heads, cfg.rope_base);
        attended = nn::multi_head_attention(q, k, wv(seq.tokens), cfg.n_heads, &r.attention);
    } else {
        const tensor q = rope(wq(seq.tokens), seq.positions, cfg.n_heads, cfg.rope_base);
        attended = nn::multi_head_attention(q, wk(latents), wv(latents), cfg.n_heads, &r.attention);
    }
    const tensor o = wo(attended);
    const tensor refined = add(o, fc2(gelu(fc1(o))));
    r.embedding = mean_rows(refined);
    return r;
}

attention_pooling attention_pooling::make(nn::param_store& ps, const std::string& name, const encoder_config& cfg) {
    const std::size_t d = cfg.d_model;
    attention_pooling ap;
    ap.ln = nn::norm_layer::make(ps, name + ".ln", d);
    ap.wq = nn::linear_layer::make(ps, name + ".wq", d, d, 0.02);
    ap.wk = nn::linear_layer::make(ps, name + ".wk", d, d, 0.02);
    ap.wv = nn::linear_layer::make(ps, name + ".wv", d, d, 0.02);
    ap.wo = nn::linear_layer::make(ps, name + ".wo", d, d, 0.02);
    return ap;
}

tensor attention_pooling::operator()(const token_sequence& seq, const encoder_config& cfg,
                                     std::vector<tensor>* attention) const {
    if (seq.empty()) throw validation_error("pool_att: empty sequence");
    const tensor h = ln(seq.tokens);
    const tensor q = rope(wq(h), seq.positions, cfg.n_heads, cfg.rope_base);
    const tensor k = rope(wk(h), seq.positions, cfg.n_heads, cfg.rope_base);
    const tensor mixed = add(seq.tokens, wo(nn::multi_head_attention(q, k, wv(h), cfg.n_heads, attention)));
    return mean_rows(mixed);
}

classifier_head classifier_head::make(nn::param_store& ps, const std::string& name, std::size_t d_model) {
    return {nn::linear_layer::make(ps, name, d_model, 2, 0.02)};
}

prediction predict(std::span<const double> logits) {
    if (logits.size() != 2) throw dimension_error("predict expects two logits");
    const double mx = std::max(logits[0], logits[1]);
    const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
    prediction p;
    p.probability_negative = e0 / (e0 + e1);
    p.probability_positive = e1 / (e0 + e1);
    p.predicted = logits[1] > logits[0] ? label::positive : label::negative;
    return p;
}

} // namespace gaitml
