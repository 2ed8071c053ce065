#pragma once

#include "gaitml/knowledge_map.hpp"
#include "gaitml/nn.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace gaitml {

enum class modality { knowledge_map = 0, video = 1, text = 2 };
enum class rope_mode { aligned, non_aligned };

std::string_view modality_name(modality m);
modality parse_modality(std::string_view s);
std::string_view rope_mode_name(rope_mode m);
rope_mode parse_rope_mode(std::string_view s);

struct encoder_config {
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 4; // 8 for single-modality models
    std::size_t mlp_ratio = 4;
    std::size_t patch_frames = 8;
    double rope_base = 10000.0;
    rope_mode rope = rope_mode::aligned;

    std::size_t head_dim() const { return d_model / n_heads; }
    // Throws validation_error on odd head width or a clip length not divisible by the patch.
    void validate(std::size_t clip_length = clip_frames) const;
};

// Tokens on a shared temporal clock (frame units). Each token records the
// modality it came from; text tokens sit at position 0.
struct token_sequence {
    tensor tokens; // [N, d_model]; meaningless when empty()
    std::vector<double> positions;
    std::vector<modality> kinds;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
};

// Patch projection with frame-window bookkeeping.
struct patch_embedding {
    nn::linear_layer proj; // [patch_frames * width, d_model]
    std::size_t width = 0; // values per frame
    std::size_t patch_frames = 8;

    static patch_embedding make(nn::param_store& ps, const std::string& name, std::size_t width,
                                const encoder_config& cfg);
    // frames x width values, row-major -> one token per patch, position = patch start frame.
    token_sequence operator()(std::span<const double> values, std::size_t frames, modality kind) const;
};

token_sequence patch_embed_map(const patch_embedding& embed, const knowledge_map& map);
token_sequence patch_embed_video(const patch_embedding& embed, std::span<const double> frames,
                                 std::size_t n_frames, std::size_t size = 32);

// -- text ------------------------------------------------------------------

inline constexpr std::size_t text_embedding_dim = 384;

const std::vector<std::string>& default_prompts();

class text_provider {
public:
    virtual ~text_provider() = default;
    virtual std::vector<double> embed(const std::string& prompt) const = 0;
};

// Seeded signed token-hash bag of words, L2-normalised.
class hashed_text_provider final : public text_provider {
public:
    explicit hashed_text_provider(std::uint64_t seed = 0) : seed_(seed) {}
    std::vector<double> embed(const std::string& prompt) const override;

private:
    std::uint64_t seed_;
};

// Precomputed vectors from JSON {"prompt": [384 floats], ...}.
class file_text_provider final : public text_provider {
public:
    explicit file_text_provider(const std::filesystem::path& path);
    std::vector<double> embed(const std::string& prompt) const override;

private:
    std::map<std::string, std::vector<double>> table_;
};

// [P, 384] matrix of provider vectors, row per prompt.
std::vector<double> text_vectors(std::span<const std::string> prompts, const text_provider& provider);
token_sequence embed_text(std::span<const double> vectors, std::size_t n_prompts, const nn::linear_layer& proj);

// -- rotary embedding --------------------------------------------------------

// Positions used for rotation: the carried clock (aligned) or token ordinals.
std::vector<double> rope_positions(const token_sequence& seq, rope_mode mode);
token_sequence apply_rope(const token_sequence& seq, const encoder_config& cfg);
// Rotation angle per token per coordinate pair, [N][head_dim / 2].
std::vector<std::vector<double>> rope_angles(const token_sequence& seq, const encoder_config& cfg);

// -- transformer encoder -----------------------------------------------------

struct encoder_block {
    nn::norm_layer ln1, ln2;
    nn::linear_layer wq, wk, wv, wo;
    nn::linear_layer fc1, fc2;

    static encoder_block make(nn::param_store& ps, const std::string& name, const encoder_config& cfg);
    // Pre-norm: x + MHA(LN x) with rotary q/k, then x + MLP(LN x).
    tensor operator()(const tensor& x, std::span<const double> positions, const encoder_config& cfg,
                      std::vector<tensor>* attention = nullptr) const;
};

struct transformer_encoder {
    std::vector<encoder_block> blocks;

    static transformer_encoder make(nn::param_store& ps, const std::string& name, const encoder_config& cfg);
    token_sequence encode(const token_sequence& seq, const encoder_config& cfg,
                          std::vector<std::vector<tensor>>* attention = nullptr) const;
};

} // namespace gaitml
