#include <doctest.h>

#include "../support.hpp"

#include "gaitml/errors.hpp"
#include "gaitml/explain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace gaitml;
using testsupport::random_tensor;

namespace {

constexpr std::size_t P = 8;
constexpr std::size_t n_tokens = clip_frames / P;

std::vector<modality> km_and_text_kinds(std::size_t n_text = 4) {
    std::vector<modality> kinds(n_tokens, modality::knowledge_map);
    kinds.insert(kinds.end(), n_text, modality::text);
    return kinds;
}

knowledge_map constant_map(double v) {
    knowledge_map m;
    m.frames = clip_frames;
    m.values.assign(clip_frames * num_features, v);
    return m;
}

knowledge_map random_map(rng& r) {
    knowledge_map m = constant_map(0.0);
    for (auto& v : m.values) v = r.normal();
    return m;
}

std::vector<tensor> random_attention(rng& r, std::size_t heads, std::size_t q, std::size_t n) {
    std::vector<tensor> out;
    for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> v(q * n);
        for (std::size_t i = 0; i < q; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += (v[i * n + j] = r.uniform() + 1e-3);
            for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= s;
        }
        out.push_back(tensor::from({q, n}, v));
    }
    return out;
}

double total(const heat_map& h) { return std::accumulate(h.values.begin(), h.values.end(), 0.0); }

double window_mass(const heat_map& h, std::size_t token) {
    double s = 0.0;
    for (std::size_t t = token * P; t < (token + 1) * P; ++t) {
        for (std::size_t f = 0; f < num_features; ++f) s += h(t, f);
    }
    return s;
}

heat_map random_heat(rng& r) {
    heat_map h;
    h.frames = clip_frames;
    h.values.resize(clip_frames * num_features);
    for (auto& v : h.values) v = r.uniform();
    const double s = total(h);
    for (auto& v : h.values) v /= s;
    return h;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

model_config tiny(fusion_variant v, std::vector<modality> mods = {modality::knowledge_map, modality::text}) {
    model_config c;
    c.encoder.d_model = 8;
    c.encoder.n_heads = 2;
    c.encoder.n_layers = 1;
    c.encoder.mlp_ratio = 2;
    c.fusion.variant = v;
    c.fusion.modalities = std::move(mods);
    c.fusion.n_latents = 3;
    return c;
}

labelled_input tiny_input() {
    const auto seq = testsupport::walk(18.0, 5);
    const auto c = testsupport::as_clip(seq, 18.0, "demo#0");
    const std::vector<clip> clips{c};
    const auto raw = extract_maps(clips);
    auto stats = fit_norm_stats(raw);
    return prepare_inputs(clips, raw, stats, tiny(fusion_variant::cat_latent)).front();
}

} // namespace

TEST_CASE("uniform attention and uniform cell weights give a uniform heat map") {
    const auto kinds = km_and_text_kinds();
    std::vector<tensor> att;
    for (int h = 0; h < 2; ++h) {
        std::vector<double> v(3 * kinds.size(), 0.0);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < n_tokens; ++j) v[i * kinds.size() + j] = 1.0 / n_tokens;
        }
        att.push_back(tensor::from({3, kinds.size()}, v));
    }
    const auto w = tensor::full({P * num_features, 8}, 0.5);
    const auto heat = remap_attention(att, kinds, constant_map(-2.0), w, P);
    REQUIRE(heat.values.size() == clip_frames * num_features);
    const double expected = 1.0 / (96.0 * 238.0);
    for (double v : heat.values) CHECK(std::abs(v - expected) < 1e-15);

    // empty attention (mean pooling) is uniform relevance too
    const auto mean_heat = remap_attention({}, kinds, constant_map(1.0), w, P);
    for (double v : mean_heat.values) CHECK(std::abs(v - expected) < 1e-15);
}

TEST_CASE("attention on one token confines heat to its frame window") {
    rng r(1);
    const auto kinds = km_and_text_kinds();
    std::vector<double> v(2 * kinds.size(), 0.0);
    v[3] = 1.0;
    v[kinds.size() + 3] = 1.0;
    const std::vector<tensor> att{tensor::from({2, kinds.size()}, v)};
    const auto heat = remap_attention(att, kinds, random_map(r), random_tensor(r, {P * num_features, 8}), P);
    for (std::size_t t = 0; t < clip_frames; ++t) {
        for (std::size_t f = 0; f < num_features; ++f) {
            if (t < 24 || t >= 32) CHECK(heat(t, f) == 0.0);
        }
    }
    CHECK(std::abs(window_mass(heat, 3) - 1.0) < 1e-12);
}

TEST_CASE("random attention: heat is a distribution with token marginals equal to relevance") {
    rng r(2);
    for (int trial = 0; trial < 10; ++trial) {
        // knowledge-map tokens may sit anywhere in the fused order
        std::vector<modality> kinds{modality::video, modality::text};
        for (std::size_t j = 0; j < n_tokens; ++j) kinds.insert(kinds.begin() + 1, modality::knowledge_map);
        const auto att = random_attention(r, 4, 5, kinds.size());
        const auto map = random_map(r);
        const auto w = random_tensor(r, {P * num_features, 8});
        const auto heat = remap_attention(att, kinds, map, w, P);

        // oracle relevance: head and query mean of attention, restricted and renormalised
        std::vector<double> rel;
        for (std::size_t j = 0; j < kinds.size(); ++j) {
            if (kinds[j] != modality::knowledge_map) continue;
            double s = 0.0;
            for (const auto& a : att) {
                for (std::size_t i = 0; i < a.dim(0); ++i) s += a(i, j);
            }
            rel.push_back(s);
        }
        const double rs = std::accumulate(rel.begin(), rel.end(), 0.0);
        for (auto& x : rel) x /= rs;

        const auto got = token_relevance(att, kinds);
        REQUIRE(got.size() == n_tokens);
        CHECK(std::abs(total(heat) - 1.0) < 1e-9);
        for (double v : heat.values) CHECK(v >= 0.0);
        for (std::size_t j = 0; j < n_tokens; ++j) {
            CHECK(std::abs(got[j] - rel[j]) < 1e-12);
            CHECK(std::abs(window_mass(heat, j) - rel[j]) < 1e-9);
        }

        // oracle cell weight inside token 5
        std::vector<double> row_norm(P * num_features);
        for (std::size_t i = 0; i < row_norm.size(); ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < 8; ++c) s += w(i, c) * w(i, c);
            row_norm[i] = std::sqrt(s);
        }
        double z = 0.0;
        for (std::size_t t = 40; t < 48; ++t) {
            for (std::size_t f = 0; f < num_features; ++f) z += std::abs(map(t, f)) * row_norm[(t - 40) * num_features + f];
        }
        for (std::size_t t = 40; t < 48; t += 3) {
            for (std::size_t f = 0; f < num_features; f += 17) {
                const double want = rel[5] * std::abs(map(t, f)) * row_norm[(t - 40) * num_features + f] / z;
                CHECK(std::abs(heat(t, f) - want) < 1e-15);
            }
        }
    }
}

TEST_CASE("remap rejects a fusion without knowledge-map tokens") {
    rng r(3);
    const std::vector<modality> kinds(5, modality::video);
    const auto att = random_attention(r, 1, 2, 5);
    CHECK_THROWS_AS(remap_attention(att, kinds, random_map(r), random_tensor(r, {P * num_features, 8}), P),
                    validation_error);
}

TEST_CASE("top features: tie rule on uniform heat") {
    heat_map h;
    h.frames = clip_frames;
    h.values.assign(clip_frames * num_features, 1.0 / (clip_frames * num_features));
    const auto top = top_features(h, 3);
    REQUIRE(top.size() == 3);
    for (const auto& d : top) {
        const auto block = domain_columns(d.domain);
        REQUIRE(d.features.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(d.features[i].column == block.begin + i);
            CHECK(d.features[i].name == feature_schema()[block.begin + i].name);
            CHECK(d.features[i].window_start == 0); // ties go to the earliest window
        }
    }
}

TEST_CASE("top features: concentrated column ranks first with its mass and peak window") {
    rng r(4);
    heat_map h;
    h.frames = clip_frames;
    h.values.assign(clip_frames * num_features, 0.0);
    const std::size_t col = domain_columns(feature_domain::self_skeleton).begin + 9;
    for (std::size_t t = 40; t < 48; ++t) h.values[t * num_features + col] = 0.9 / 8.0;
    for (std::size_t i = 0; i < h.values.size(); ++i) h.values[i] += 0.1 / static_cast<double>(h.values.size());
    const auto top = top_features(h, 2);
    const auto& sk = top[1];
    CHECK(sk.domain == feature_domain::self_skeleton);
    CHECK(sk.features[0].column == col);
    CHECK(std::abs(sk.features[0].score - (0.9 + 0.1 / num_features)) < 1e-12);
    CHECK(sk.features[0].window_start == 40);
    CHECK(sk.features[0].window_end == 48);
    CHECK(top_features_global(h, 1).front().column == col);
}

TEST_CASE("top features: brute-force sort oracle and rescale invariance") {
    rng r(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto h = random_heat(r);
        std::vector<double> colsum(num_features, 0.0);
        for (std::size_t t = 0; t < clip_frames; ++t) {
            for (std::size_t f = 0; f < num_features; ++f) colsum[f] += h(t, f);
        }
        const auto top = top_features(h, 5);
        for (const auto& d : top) {
            const auto block = domain_columns(d.domain);
            std::vector<std::size_t> cols(block.size());
            std::iota(cols.begin(), cols.end(), block.begin);
            std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) { return colsum[a] > colsum[b]; });
            for (std::size_t i = 0; i < 5; ++i) {
                CHECK(d.features[i].column == cols[i]);
                CHECK(std::abs(d.features[i].score - colsum[cols[i]]) < 1e-12);
                CHECK(d.features[i].column >= block.begin);
                CHECK(d.features[i].column < block.end);
                if (i) CHECK(d.features[i].score <= d.features[i - 1].score);
                CHECK(d.features[i].window_end - d.features[i].window_start == P);
                CHECK(d.features[i].window_start % P == 0);
            }
        }

        std::vector<std::size_t> all(num_features);
        std::iota(all.begin(), all.end(), 0);
        std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return colsum[a] > colsum[b]; });
        const auto global = top_features_global(h, 10);
        for (std::size_t i = 0; i < 10; ++i) CHECK(global[i].column == all[i]);

        heat_map scaled = h;
        for (auto& v : scaled.values) v *= 37.5;
        const auto top2 = top_features(scaled, 5);
        for (std::size_t d = 0; d < 3; ++d) {
            for (std::size_t i = 0; i < 5; ++i) {
                CHECK(top2[d].features[i].column == top[d].features[i].column);
                CHECK(top2[d].features[i].window_start == top[d].features[i].window_start);
            }
        }
    }
}

TEST_CASE("explain_clip on a trained-shape model: report invariants and file rendering") {
    const auto input = tiny_input();
    const screening_model model(tiny(fusion_variant::cat_latent));
    const auto rep = explain_clip(model, input, 3);
    CHECK(rep.clip_id == "demo#0");
    CHECK(std::abs(total(rep.heat) - 1.0) < 1e-9);
    CHECK(rep.relevance.size() == n_tokens);
    CHECK(rep.latent_relevance.size() == 3);
    REQUIRE(rep.top.size() == 3);
    for (std::size_t j = 0; j < n_tokens; ++j) CHECK(std::abs(window_mass(rep.heat, j) - rep.relevance[j]) < 1e-9);
    const auto fwd = model.forward(input.input);
    CHECK(rep.pred.probability_positive == predict(fwd.logits.data()).probability_positive);

    const auto back = explain_report::from_json(rep.to_json());
    CHECK(back.clip_id == rep.clip_id);
    CHECK(back.pred.predicted == rep.pred.predicted);
    REQUIRE(back.heat.values.size() == rep.heat.values.size());
    for (std::size_t i = 0; i < rep.heat.values.size(); ++i) CHECK(std::abs(back.heat.values[i] - rep.heat.values[i]) < 1e-15);
    for (std::size_t d = 0; d < 3; ++d) {
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(back.top[d].features[i].column == rep.top[d].features[i].column);
            CHECK(back.top[d].features[i].score == rep.top[d].features[i].score);
        }
    }
    CHECK(back.to_json() == rep.to_json());

    const auto svg = heat_svg(rep);
    CHECK(count_of(svg, "class=\"domain-band\"") == 3);
    CHECK(count_of(svg, "class=\"topk\"") == 9);
    CHECK(svg.rfind("<?xml", 0) == 0);

    const auto csv = heat_csv(rep.heat);
    CHECK(count_of(csv, "\r\n") == 97);
    const auto header = csv.substr(0, csv.find("\r\n"));
    CHECK(count_of(header, ",") == num_features - 1);
    const auto row1 = csv.substr(header.size() + 2, csv.find("\r\n", header.size() + 2) - header.size() - 2);
    CHECK(count_of(row1, ",") == num_features - 1);

    testsupport::temp_dir dir("explain");
    const auto paths = render_report(rep, dir.path / "out", "demo");
    CHECK(std::filesystem::exists(paths.json));
    CHECK(std::filesystem::exists(paths.csv));
    CHECK(std::filesystem::exists(paths.svg));
    std::ifstream in(paths.json);
    const auto reread = explain_report::from_json(nlohmann::json::parse(in));
    CHECK(reread.to_json() == rep.to_json());
}

TEST_CASE("explain across variants and unsupported configurations") {
    const auto input = tiny_input();
    const auto cat = explain_clip(screening_model(tiny(fusion_variant::cat)), input, 2);
    for (double r : cat.relevance) CHECK(std::abs(r - 1.0 / n_tokens) < 1e-12);
    const auto att = explain_clip(screening_model(tiny(fusion_variant::cat_att)), input, 2);
    CHECK(std::abs(total(att.heat) - 1.0) < 1e-9);

    auto tq = tiny(fusion_variant::cat_latent);
    tq.fusion.direction = latent_direction::tokens_query;
    CHECK_THROWS_AS(explain_clip(screening_model(tq), input), validation_error);

    labelled_input with_video = input;
    with_video.input.video.assign(clip_frames * silhouette_size * silhouette_size, 0.25);
    CHECK_THROWS_AS(explain_clip(screening_model(tiny(fusion_variant::cat_latent, {modality::video})), with_video),
                    validation_error);
}
