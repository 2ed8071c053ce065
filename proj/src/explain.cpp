#include "gaitml/explain.hpp"

#include "gaitml/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gaitml {

using json = nlohmann::json;

namespace {

constexpr std::size_t peak_window = 8;

std::vector<std::size_t> map_token_indices(const std::vector<modality>& kinds) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        if (kinds[i] == modality::knowledge_map) idx.push_back(i);
    }
    if (idx.empty()) throw validation_error("explain unsupported: the fused sequence has no knowledge-map tokens");
    return idx;
}

std::vector<double> normalised(std::vector<double> v) {
    const double s = std::accumulate(v.begin(), v.end(), 0.0);
    if (!(s > 0.0)) {
        std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
        return v;
    }
    for (auto& x : v) x /= s;
    return v;
}

void check_attention(const std::vector<tensor>& attention, std::size_t n_tokens) {
    for (const auto& a : attention) {
        if (a.rank() != 2 || a.dim(1) != n_tokens || a.dim(0) != attention.front().dim(0)) {
            throw dimension_error("explain: attention maps must be [Q, " + std::to_string(n_tokens) + "] per head");
        }
    }
}

std::vector<std::vector<double>> per_query_relevance(const std::vector<tensor>& attention,
                                                     const std::vector<std::size_t>& km) {
    if (attention.empty()) return {};
    const std::size_t q = attention.front().dim(0);
    std::vector<std::vector<double>> out(q, std::vector<double>(km.size(), 0.0));
    for (const auto& a : attention) {
        for (std::size_t r = 0; r < q; ++r) {
            for (std::size_t j = 0; j < km.size(); ++j) out[r][j] += a(r, km[j]);
        }
    }
    for (auto& row : out) row = normalised(std::move(row));
    return out;
}

std::vector<double> column_scores(const heat_map& heat) {
    std::vector<double> s(num_features, 0.0);
    for (std::size_t t = 0; t < heat.frames; ++t) {
        for (std::size_t f = 0; f < num_features; ++f) s[f] += heat(t, f);
    }
    return s;
}

ranked_feature describe(const heat_map& heat, std::size_t column, double score) {
    ranked_feature r;
    r.name = feature_schema()[column].name;
    r.column = column;
    r.score = score;
    double best = -1.0;
    for (std::size_t start = 0; start < heat.frames; start += peak_window) {
        const std::size_t end = std::min(heat.frames, start + peak_window);
        double s = 0.0;
        for (std::size_t t = start; t < end; ++t) s += heat(t, column);
        if (s > best) {
            best = s;
            r.window_start = start;
            r.window_end = end;
        }
    }
    return r;
}

std::vector<ranked_feature> rank_columns(const heat_map& heat, const std::vector<double>& scores, column_block block,
                                         std::size_t k) {
    if (k < 1) throw validation_error("top_features: k must be at least 1");
    std::vector<std::size_t> cols(block.size());
    std::iota(cols.begin(), cols.end(), block.begin);
    std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    cols.resize(std::min(k, cols.size()));
    std::vector<ranked_feature> out;
    for (auto c : cols) out.push_back(describe(heat, c, scores[c]));
    return out;
}

constexpr std::array<feature_domain, 3> all_domains = {feature_domain::motion, feature_domain::self_skeleton,
                                                       feature_domain::cross_correlation};

feature_domain parse_domain(const std::string& s) {
    for (auto d : all_domains) {
        if (domain_name(d) == s) return d;
    }
    throw validation_error("unknown feature domain '" + s + "'");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw io_error("write failed for " + path.string());
}

} // namespace

std::vector<double> token_relevance(const std::vector<tensor>& attention, const std::vector<modality>& kinds) {
    const auto km = map_token_indices(kinds);
    if (attention.empty()) return std::vector<double>(km.size(), 1.0 / static_cast<double>(km.size()));
    check_attention(attention, kinds.size());
    std::vector<double> r(km.size(), 0.0);
    for (const auto& a : attention) {
        for (std::size_t q = 0; q < a.dim(0); ++q) {
            for (std::size_t j = 0; j < km.size(); ++j) r[j] += a(q, km[j]);
        }
    }
    return normalised(std::move(r));
}

heat_map remap_attention(const std::vector<tensor>& attention, const std::vector<modality>& kinds,
                         const knowledge_map& map, const tensor& patch_weight, std::size_t patch_frames) {
    const auto r = token_relevance(attention, kinds);
    const std::size_t width = patch_frames * num_features;
    if (patch_frames == 0 || map.frames != r.size() * patch_frames) {
        throw dimension_error("explain: " + std::to_string(r.size()) + " knowledge-map tokens do not cover " +
                              std::to_string(map.frames) + " frames");
    }
    if (patch_weight.rank() != 2 || patch_weight.dim(0) != width) {
        throw dimension_error("explain: patch weight must have " + std::to_string(width) + " input rows");
    }
    const std::size_t d = patch_weight.dim(1);
    std::vector<double> row_norm(width, 0.0);
    for (std::size_t c = 0; c < width; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += patch_weight(c, k) * patch_weight(c, k);
        row_norm[c] = std::sqrt(s);
    }
    heat_map heat;
    heat.frames = map.frames;
    heat.values.resize(map.frames * num_features);
    for (std::size_t j = 0; j < r.size(); ++j) {
        std::vector<double> w(width);
        for (std::size_t c = 0; c < width; ++c) {
            w[c] = std::abs(map.values[j * width + c]) * row_norm[c];
        }
        w = normalised(std::move(w));
        for (std::size_t c = 0; c < width; ++c) heat.values[j * width + c] = r[j] * w[c];
    }
    return heat;
}

std::vector<domain_ranking> top_features(const heat_map& heat, std::size_t k) {
    const auto scores = column_scores(heat);
    std::vector<domain_ranking> out;
    for (auto d : all_domains) out.push_back({d, rank_columns(heat, scores, domain_columns(d), k)});
    return out;
}

std::vector<ranked_feature> top_features_global(const heat_map& heat, std::size_t k) {
    return rank_columns(heat, column_scores(heat), {0, num_features}, k);
}

json explain_report::to_json() const {
    json top_j = json::object();
    for (const auto& dr : top) {
        json list = json::array();
        for (const auto& f : dr.features) {
            list.push_back({{"feature", f.name},
                            {"column", f.column},
                            {"window", {f.window_start, f.window_end}},
                            {"score", f.score}});
        }
        top_j[std::string(domain_name(dr.domain))] = std::move(list);
    }
    json rows = json::array();
    for (std::size_t t = 0; t < heat.frames; ++t) {
        rows.push_back(std::vector<double>(heat.values.begin() + static_cast<std::ptrdiff_t>(t * num_features),
                                           heat.values.begin() + static_cast<std::ptrdiff_t>((t + 1) * num_features)));
    }
    return json{{"clip_id", clip_id},
                {"prediction",
                 {{"label", label_name(pred.predicted)},
                  {"probability_positive", pred.probability_positive},
                  {"probability_negative", pred.probability_negative}}},
                {"token_relevance", relevance},
                {"latent_relevance", latent_relevance},
                {"top_features", std::move(top_j)},
                {"schema_version", feature_schema_version},
                {"heat", std::move(rows)}};
}

explain_report explain_report::from_json(const json& j) {
    try {
        explain_report r;
        r.clip_id = j.at("clip_id").get<std::string>();
        const auto& p = j.at("prediction");
        r.pred.predicted = parse_label(p.at("label").get<std::string>());
        r.pred.probability_positive = p.at("probability_positive").get<double>();
        r.pred.probability_negative = p.at("probability_negative").get<double>();
        r.relevance = j.at("token_relevance").get<std::vector<double>>();
        r.latent_relevance = j.at("latent_relevance").get<std::vector<std::vector<double>>>();
        for (const auto& [name, list] : j.at("top_features").items()) {
            domain_ranking dr{parse_domain(name), {}};
            for (const auto& f : list) {
                ranked_feature rf;
                rf.name = f.at("feature").get<std::string>();
                rf.column = f.at("column").get<std::size_t>();
                rf.window_start = f.at("window").at(0).get<std::size_t>();
                rf.window_end = f.at("window").at(1).get<std::size_t>();
                rf.score = f.at("score").get<double>();
                dr.features.push_back(std::move(rf));
            }
            r.top.push_back(std::move(dr));
        }
        std::sort(r.top.begin(), r.top.end(), [](const domain_ranking& a, const domain_ranking& b) { return a.domain < b.domain; });
        const auto& rows = j.at("heat");
        r.heat.frames = rows.size();
        for (const auto& row : rows) {
            if (row.size() != num_features) throw validation_error("explain report: heat rows must have 238 values");
            for (const auto& v : row) r.heat.values.push_back(v.get<double>());
        }
        return r;
    } catch (const json::exception& e) {
        throw validation_error(std::string("explain report: ") + e.what());
    }
}

explain_report explain_clip(const screening_model& model, const labelled_input& clip, std::size_t k) {
    const auto& cfg = model.config();
    if (!model.map_embedding()) throw validation_error("explain unsupported: the model has no knowledge-map modality");
    if (cfg.fusion.variant == fusion_variant::cat_latent && cfg.fusion.direction == latent_direction::tokens_query) {
        throw validation_error("explain unsupported: latent pooling with tokens as queries has no per-token relevance");
    }
    const auto fr = model.forward(clip.input);
    explain_report rep;
    rep.clip_id = clip.clip_id;
    rep.pred = predict(fr.logits.data());
    rep.heat = remap_attention(fr.pool_attention, fr.fused.kinds, clip.input.map, model.map_embedding()->proj.weight,
                               cfg.encoder.patch_frames);
    rep.relevance = token_relevance(fr.pool_attention, fr.fused.kinds);
    rep.latent_relevance = per_query_relevance(fr.pool_attention, map_token_indices(fr.fused.kinds));
    rep.top = top_features(rep.heat, k);
    return rep;
}

std::string heat_csv(const heat_map& heat) {
    std::string out;
    const auto& schema = feature_schema();
    for (std::size_t f = 0; f < num_features; ++f) {
        if (f) out += ',';
        out += csv_field(schema[f].name);
    }
    out += "\r\n";
    for (std::size_t t = 0; t < heat.frames; ++t) {
        for (std::size_t f = 0; f < num_features; ++f) {
            if (f) out += ',';
            out += fmt(heat(t, f));
        }
        out += "\r\n";
    }
    return out;
}

std::string heat_svg(const explain_report& report) {
    const auto& heat = report.heat;
    constexpr int cw = 6, ch = 3, left = 120, top = 24, band_w = 110;
    const int width = left + static_cast<int>(heat.frames) * cw + 10;
    const int height = top + static_cast<int>(num_features) * ch + 24;
    const double peak = heat.values.empty() ? 0.0 : *std::max_element(heat.values.begin(), heat.values.end());

    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\"" << height
       << "\">\n"
       << "<title>knowledge-map heat: " << xml_escape(report.clip_id) << "</title>\n"
       << "<text x=\"" << left << "\" y=\"14\" font-size=\"11\" font-family=\"sans-serif\">time (frames) &#8594; | "
       << label_name(report.pred.predicted) << " p=" << fmt(report.pred.probability_positive) << "</text>\n";

    static const char* band_colour[] = {"#dbe9f6", "#e3f1dc", "#f6e5d5"};
    for (std::size_t d = 0; d < all_domains.size(); ++d) {
        const auto blk = domain_columns(all_domains[d]);
        const int y = top + static_cast<int>(blk.begin) * ch;
        const int h = static_cast<int>(blk.size()) * ch;
        os << "<rect class=\"domain-band\" x=\"4\" y=\"" << y << "\" width=\"" << band_w << "\" height=\"" << h
           << "\" fill=\"" << band_colour[d] << "\"/>\n"
           << "<text x=\"8\" y=\"" << y + h / 2 << "\" font-size=\"10\" font-family=\"sans-serif\">"
           << domain_name(all_domains[d]) << "</text>\n";
    }
    os << "<g shape-rendering=\"crispEdges\">\n";
    for (std::size_t f = 0; f < num_features; ++f) {
        for (std::size_t t = 0; t < heat.frames; ++t) {
            const double a = peak > 0.0 ? heat(t, f) / peak : 0.0;
            const int gb = static_cast<int>(std::lround(255.0 * (1.0 - a)));
            char colour[8];
            std::snprintf(colour, sizeof colour, "#ff%02x%02x", gb, gb);
            os << "<rect x=\"" << left + static_cast<int>(t) * cw << "\" y=\"" << top + static_cast<int>(f) * ch
               << "\" width=\"" << cw << "\" height=\"" << ch << "\" fill=\"" << colour << "\"/>\n";
        }
    }
    os << "</g>\n";
    for (std::size_t d = 1; d < all_domains.size(); ++d) {
        const int y = top + static_cast<int>(domain_columns(all_domains[d]).begin) * ch;
        os << "<line class=\"domain-separator\" x1=\"4\" y1=\"" << y << "\" x2=\"" << width - 10 << "\" y2=\"" << y
           << "\" stroke=\"#000\" stroke-width=\"1\"/>\n";
    }
    for (const auto& dr : report.top) {
        for (const auto& f : dr.features) {
            os << "<rect class=\"topk\" x=\"" << left + static_cast<int>(f.window_start) * cw << "\" y=\""
               << top + static_cast<int>(f.column) * ch << "\" width=\""
               << static_cast<int>(f.window_end - f.window_start) * cw << "\" height=\"" << ch
               << "\" fill=\"none\" stroke=\"#0050c8\" stroke-width=\"1\"><title>" << xml_escape(f.name)
               << "</title></rect>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

report_paths render_report(const explain_report& report, const std::filesystem::path& dir, const std::string& stem) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create report directory " + dir.string() + ": " + ec.message());
    report_paths p{dir / (stem + ".json"), dir / (stem + "_heat.csv"), dir / (stem + "_heat.svg")};
    write_text(p.json, report.to_json().dump(1) + "\n");
    write_text(p.csv, heat_csv(report.heat));
    write_text(p.svg, heat_svg(report));
    return p;
}

} // namespace gaitml
