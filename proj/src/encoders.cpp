#include "gaitml/encoders.hpp"

#include "gaitml/errors.hpp"

#include <json.hpp>

#include <cctype>
#include <cmath>
#include <fstream>

namespace gaitml {

std::string_view modality_name(modality m) {
    switch (m) {
    case modality::knowledge_map: return "knowledge_map";
    case modality::video: return "video";
    case modality::text: return "text";
    }
    return "?";
}

modality parse_modality(std::string_view s) {
    if (s == "knowledge_map" || s == "km") return modality::knowledge_map;
    if (s == "video") return modality::video;
    if (s == "text") return modality::text;
    throw validation_error("unknown modality '" + std::string(s) + "'");
}

std::string_view rope_mode_name(rope_mode m) { return m == rope_mode::aligned ? "aligned" : "non-aligned"; }

rope_mode parse_rope_mode(std::string_view s) {
    if (s == "aligned") return rope_mode::aligned;
    if (s == "non-aligned" || s == "non_aligned") return rope_mode::non_aligned;
    throw validation_error("unknown rope mode '" + std::string(s) + "' (expected aligned|non-aligned)");
}

void encoder_config::validate(std::size_t clip_length) const {
    if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
        throw validation_error("encoder config: d_model must be a positive multiple of n_heads");
    }
    if (head_dim() % 2 != 0) {
        throw validation_error("encoder config: head_dim " + std::to_string(head_dim()) + " must be even for rotary pairing");
    }
    if (patch_frames == 0 || clip_length % patch_frames != 0) {
        throw validation_error("encoder config: clip length " + std::to_string(clip_length) +
                               " not divisible by patch_frames " + std::to_string(patch_frames));
    }
    if (n_layers == 0 || mlp_ratio == 0) throw validation_error("encoder config: n_layers and mlp_ratio must be positive");
    if (!(rope_base > 1.0)) throw validation_error("encoder config: rope_base must exceed 1");
}

// -- patch embedding -----------------------------------------------------------

patch_embedding patch_embedding::make(nn::param_store& ps, const std::string& name, std::size_t width,
                                      const encoder_config& cfg) {
    const std::size_t fan_in = width * cfg.patch_frames;
    patch_embedding pe;
    pe.proj = nn::linear_layer::make(ps, name, fan_in, cfg.d_model, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    pe.width = width;
    pe.patch_frames = cfg.patch_frames;
    return pe;
}

token_sequence patch_embedding::operator()(std::span<const double> values, std::size_t frames, modality kind) const {
    if (values.size() != frames * width) {
        throw dimension_error("patch embedding expects " + std::to_string(frames) + " x " + std::to_string(width) +
                              " values, got " + std::to_string(values.size()));
    }
    if (frames % patch_frames != 0) {
        throw dimension_error("patch embedding: " + std::to_string(frames) + " frames not divisible by patch " +
                              std::to_string(patch_frames));
    }
    const std::size_t n = frames / patch_frames;
    // a patch of consecutive frames is contiguous in row-major storage
    const tensor patches = tensor::from({n, patch_frames * width}, std::vector<double>(values.begin(), values.end()));
    token_sequence seq;
    seq.tokens = proj(patches);
    for (std::size_t j = 0; j < n; ++j) {
        seq.positions.push_back(static_cast<double>(j * patch_frames));
        seq.kinds.push_back(kind);
    }
    return seq;
}

token_sequence patch_embed_map(const patch_embedding& embed, const knowledge_map& map) {
    if (embed.width != num_features) throw dimension_error("knowledge-map patch embedding has wrong width");
    return embed(map.values, map.frames, modality::knowledge_map);
}

token_sequence patch_embed_video(const patch_embedding& embed, std::span<const double> frames, std::size_t n_frames,
                                 std::size_t size) {
    if (embed.width != size * size) throw dimension_error("video patch embedding has wrong frame size");
    return embed(frames, n_frames, modality::video);
}

// -- text ------------------------------------------------------------------

const std::vector<std::string>& default_prompts() {
    static const std::vector<std::string> prompts = {
        "asymmetric arm swing in thoracic curve types",
        "shoulder height asymmetry during walking",
        "pelvic obliquity with lateral trunk shift",
        "reduced coordination between contralateral limbs",
    };
    return prompts;
}

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace

std::vector<double> hashed_text_provider::embed(const std::string& prompt) const {
    std::vector<std::string> words;
    std::string cur;
    for (unsigned char c : prompt) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            words.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    if (words.empty()) words.push_back(prompt);

    std::vector<double> v(text_embedding_dim, 0.0);
    for (const auto& w : words) {
        const std::uint64_t h = fnv1a(w, seed_);
        v[h % text_embedding_dim] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        // every word cancelled out; fall back to the first word's bucket
        v[fnv1a(words.front(), seed_) % text_embedding_dim] = 1.0;
        return v;
    }
    for (auto& x : v) x /= norm;
    return v;
}

file_text_provider::file_text_provider(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open text-embedding file " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(path.string() + ": malformed JSON (" + e.what() + ")", 0);
    }
    if (!doc.is_object()) throw validation_error(path.string() + ": expected an object of prompt -> vector");
    for (const auto& [key, val] : doc.items()) {
        if (!val.is_array() || val.size() != text_embedding_dim) {
            throw validation_error(path.string() + ": vector for '" + key + "' must have 384 entries");
        }
        table_[key] = val.get<std::vector<double>>();
    }
}

std::vector<double> file_text_provider::embed(const std::string& prompt) const {
    auto it = table_.find(prompt);
    if (it == table_.end()) throw validation_error("text-embedding file has no vector for prompt '" + prompt + "'");
    return it->second;
}

std::vector<double> text_vectors(std::span<const std::string> prompts, const text_provider& provider) {
    std::vector<double> out;
    out.reserve(prompts.size() * text_embedding_dim);
    for (const auto& p : prompts) {
        auto v = provider.embed(p);
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

token_sequence embed_text(std::span<const double> vectors, std::size_t n_prompts, const nn::linear_layer& proj) {
    token_sequence seq;
    if (n_prompts == 0) return seq;
    if (vectors.size() != n_prompts * text_embedding_dim) throw dimension_error("embed_text: vector buffer size mismatch");
    seq.tokens = proj(tensor::from({n_prompts, text_embedding_dim}, std::vector<double>(vectors.begin(), vectors.end())));
    seq.positions.assign(n_prompts, 0.0);
    seq.kinds.assign(n_prompts, modality::text);
    return seq;
}

// -- rotary ------------------------------------------------------------------

std::vector<double> rope_positions(const token_sequence& seq, rope_mode mode) {
    if (mode == rope_mode::aligned) return seq.positions;
    std::vector<double> ord(seq.size());
    for (std::size_t i = 0; i < ord.size(); ++i) ord[i] = static_cast<double>(i);
    return ord;
}

token_sequence apply_rope(const token_sequence& seq, const encoder_config& cfg) {
    if (cfg.head_dim() % 2 != 0) throw validation_error("apply_rope: head_dim must be even");
    token_sequence out = seq;
    out.positions = rope_positions(seq, cfg.rope);
    if (!seq.empty()) out.tokens = rope(seq.tokens, out.positions, cfg.n_heads, cfg.rope_base);
    return out;
}

std::vector<std::vector<double>> rope_angles(const token_sequence& seq, const encoder_config& cfg) {
    const auto pos = rope_positions(seq, cfg.rope);
    const std::size_t hd = cfg.head_dim();
    std::vector<std::vector<double>> out(pos.size(), std::vector<double>(hd / 2));
    for (std::size_t i = 0; i < pos.size(); ++i) {
        for (std::size_t p = 0; p < hd / 2; ++p) out[i][p] = rope_angle(pos[i], p, hd, cfg.rope_base);
    }
    return out;
}

// -- encoder ------------------------------------------------------------------

encoder_block encoder_block::make(nn::param_store& ps, const std::string& name, const encoder_config& cfg) {
    const std::size_t d = cfg.d_model, hidden = cfg.d_model * cfg.mlp_ratio;
    const double std_in = 0.02;
    const double std_out = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
    encoder_block b;
    b.ln1 = nn::norm_layer::make(ps, name + ".ln1", d);
    b.wq = nn::linear_layer::make(ps, name + ".attn.wq", d, d, std_in);
    b.wk = nn::linear_layer::make(ps, name + ".attn.wk", d, d, std_in);
    b.wv = nn::linear_layer::make(ps, name + ".attn.wv", d, d, std_in);
    b.wo = nn::linear_layer::make(ps, name + ".attn.wo", d, d, std_out);
    b.ln2 = nn::norm_layer::make(ps, name + ".ln2", d);
    b.fc1 = nn::linear_layer::make(ps, name + ".mlp.fc1", d, hidden, std_in);
    b.fc2 = nn::linear_layer::make(ps, name + ".mlp.fc2", hidden, d, std_out);
    return b;
}

tensor encoder_block::operator()(const tensor& x, std::span<const double> positions, const encoder_config& cfg,
                                 std::vector<tensor>* attention) const {
    const tensor h = ln1(x);
    const tensor q = rope(wq(h), positions, cfg.n_heads, cfg.rope_base);
    const tensor k = rope(wk(h), positions, cfg.n_heads, cfg.rope_base);
    const tensor v = wv(h);
    const tensor x1 = add(x, wo(nn::multi_head_attention(q, k, v, cfg.n_heads, attention)));
    return add(x1, fc2(gelu(fc1(ln2(x1)))));
}

transformer_encoder transformer_encoder::make(nn::param_store& ps, const std::string& name, const encoder_config& cfg) {
    transformer_encoder enc;
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        enc.blocks.push_back(encoder_block::make(ps, name + ".layer" + std::to_string(l), cfg));
    }
    return enc;
}

token_sequence transformer_encoder::encode(const token_sequence& seq, const encoder_config& cfg,
                                           std::vector<std::vector<tensor>>* attention) const {
    if (seq.empty()) return seq;
    token_sequence out = seq;
    if (attention) attention->clear();
    for (const auto& b : blocks) {
        std::vector<tensor> probs;
        out.tokens = b(out.tokens, seq.positions, cfg, attention ? &probs : nullptr);
        if (attention) attention->push_back(std::move(probs));
    }
    return out;
}

} // namespace gaitml
