#include "gaitml/training.hpp"

#include "gaitml/checkpoint.hpp"
#include "gaitml/errors.hpp"
#include "gaitml/rng.hpp"
#include "gaitml/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace gaitml {

using json = nlohmann::json;

void train_config::validate() const {
    if (!(learning_rate > 0.0)) throw validation_error("train config: learning_rate must be positive");
    if (batch_size < 1) throw validation_error("train config: batch_size must be at least 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw validation_error("train config: Adam betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw validation_error("train config: eps must be positive");
    if (!(weight_decay >= 0.0)) throw validation_error("train config: weight_decay must be non-negative");
}

json train_config::to_json() const {
    return json{{"learning_rate", learning_rate},
                {"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"seed", seed},
                {"weight_decay", weight_decay},
                {"class_weighting", weighting == class_weighting::none ? "none" : "inverse_frequency"}};
}

train_config train_config::from_json(const json& j) {
    if (!j.is_object()) throw validation_error("train config must be a JSON object");
    train_config c;
    try {
        for (const auto& [k, v] : j.items()) {
            if (k == "learning_rate") c.learning_rate = v.get<double>();
            else if (k == "beta1") c.beta1 = v.get<double>();
            else if (k == "beta2") c.beta2 = v.get<double>();
            else if (k == "eps") c.eps = v.get<double>();
            else if (k == "batch_size") c.batch_size = v.get<std::size_t>();
            else if (k == "epochs") c.epochs = v.get<std::size_t>();
            else if (k == "seed") c.seed = v.get<std::uint64_t>();
            else if (k == "weight_decay") c.weight_decay = v.get<double>();
            else if (k == "class_weighting") {
                const auto s = v.get<std::string>();
                if (s == "none") c.weighting = class_weighting::none;
                else if (s == "inverse_frequency") c.weighting = class_weighting::inverse_frequency;
                else throw validation_error("train config: unknown class_weighting '" + s + "'");
            } else {
                throw validation_error("train config: unknown key '" + k + "'");
            }
        }
    } catch (const json::exception& e) {
        throw validation_error(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// -- splitting ---------------------------------------------------------------

std::vector<std::string> manifest_subjects(const manifest& m) {
    std::set<std::string> s;
    for (const auto& e : m.entries) s.insert(e.subject_id);
    return {s.begin(), s.end()};
}

std::vector<std::string> subject_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::set<std::string> sa(a.begin(), a.end());
    std::set<std::string> out;
    for (const auto& s : b) {
        if (sa.count(s)) out.insert(s);
    }
    return {out.begin(), out.end()};
}

split_result split_subject_disjoint(const manifest& m, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw validation_error("split: test fraction must lie in (0,1)");
    std::map<std::string, label> subject_label;
    for (const auto& e : m.entries) {
        if (e.subject_id.empty()) throw validation_error("split: every clip needs a subject_id");
        subject_label.emplace(e.subject_id, e.truth);
    }
    const std::size_t n = subject_label.size();
    if (n < 2) throw validation_error("split: need at least 2 subjects, got " + std::to_string(n));

    std::array<std::vector<std::string>, 2> groups;
    for (const auto& [s, l] : subject_label) groups[static_cast<std::size_t>(l)].push_back(s);
    rng r(seed);
    for (auto& g : groups) r.shuffle(g);

    const auto n_test = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n))), 1,
                                                n - 1);
    // largest-remainder allocation of the test quota across labels
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double ideal = static_cast<double>(n_test) * static_cast<double>(groups[c].size()) / static_cast<double>(n);
        quota[c] = static_cast<std::size_t>(std::floor(ideal));
        remainder[c] = ideal - std::floor(ideal);
        assigned += quota[c];
    }
    while (assigned < n_test) {
        const std::size_t c = remainder[1] > remainder[0] ? 1 : 0;
        const std::size_t pick = quota[c] < groups[c].size() ? c : 1 - c;
        ++quota[pick];
        remainder[pick] = -1.0;
        ++assigned;
    }
    // keep both labels on both sides when the label has at least two subjects
    for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t o = 1 - c;
        if (groups[c].size() >= 2 && quota[c] == 0 && quota[o] > 1) {
            ++quota[c];
            --quota[o];
        }
        if (groups[c].size() >= 2 && quota[c] == groups[c].size() && quota[o] + 1 < groups[o].size()) {
            --quota[c];
            ++quota[o];
        }
    }

    std::set<std::string> test_subjects;
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < quota[c]; ++i) test_subjects.insert(groups[c][i]);
    }
    split_result out;
    out.train.base_dir = m.base_dir;
    out.test.base_dir = m.base_dir;
    for (const auto& e : m.entries) (test_subjects.count(e.subject_id) ? out.test : out.train).entries.push_back(e);

    for (const auto* side : {&out.train, &out.test}) {
        std::array<bool, 2> present{};
        for (const auto& e : side->entries) present[static_cast<std::size_t>(e.truth)] = true;
        for (std::size_t c = 0; c < 2; ++c) {
            if (!present[c]) {
                out.warnings.push_back(std::string(side == &out.train ? "train" : "test") + " split has no " +
                                       std::string(label_name(static_cast<label>(c))) + " subjects");
            }
        }
    }
    return out;
}

// -- data preparation ----------------------------------------------------------

std::vector<knowledge_map> extract_maps(const std::vector<clip>& clips) {
    std::vector<knowledge_map> maps;
    maps.reserve(clips.size());
    for (const auto& c : clips) {
        try {
            maps.push_back(extract(c));
        } catch (const degenerate_geometry_error& e) {
            throw degenerate_geometry_error("clip " + c.clip_id + ": " + e.what());
        }
    }
    return maps;
}

std::vector<labelled_input> prepare_inputs(const std::vector<clip>& clips, const std::vector<knowledge_map>& raw_maps,
                                           const norm_stats& stats, const model_config& cfg) {
    if (clips.size() != raw_maps.size()) throw dimension_error("prepare_inputs: clip and map counts differ");
    const bool video = cfg.fusion.has(modality::video);
    std::vector<labelled_input> out;
    out.reserve(clips.size());
    for (std::size_t i = 0; i < clips.size(); ++i) {
        labelled_input li;
        li.clip_id = clips[i].clip_id;
        li.subject_id = clips[i].subject_id;
        li.truth = clips[i].truth;
        li.input.map = apply_norm(raw_maps[i], stats);
        if (video) li.input.video = rasterize_clip(clips[i].frames);
        out.push_back(std::move(li));
    }
    return out;
}

// -- training ------------------------------------------------------------------

namespace {

struct adam_state {
    std::vector<std::vector<double>> m, v;
    std::size_t step = 0;
};

void adam_update(nn::param_store& ps, adam_state& st, const train_config& cfg) {
    auto params = ps.all(); // handles share storage with the store
    if (st.m.empty()) {
        for (const auto& [_, t] : params) {
            st.m.emplace_back(t.size(), 0.0);
            st.v.emplace_back(t.size(), 0.0);
        }
    }
    ++st.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& t = params[p].second;
        if (!t.has_grad()) continue;
        auto w = t.mutable_data();
        auto g = t.mutable_grad();
        auto& m = st.m[p];
        auto& v = st.v[p];
        const double decay = t.rank() == 2 ? cfg.weight_decay : 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            g[i] += decay * w[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            w[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    }
}

} // namespace

std::vector<epoch_record> train(screening_model& model, const std::vector<labelled_input>& data, const train_config& cfg,
                                const std::function<void(const epoch_record&)>& on_epoch) {
    cfg.validate();
    if (data.empty()) throw validation_error("train: no training clips");

    std::array<double, 2> class_weight{1.0, 1.0};
    if (cfg.weighting == class_weighting::inverse_frequency) {
        std::array<std::size_t, 2> count{};
        for (const auto& d : data) ++count[static_cast<std::size_t>(d.truth)];
        for (std::size_t c = 0; c < 2; ++c) {
            class_weight[c] = count[c] ? static_cast<double>(data.size()) / (2.0 * static_cast<double>(count[c])) : 0.0;
        }
    }

    rng order_rng(cfg.seed);
    adam_state state;
    std::vector<std::size_t> order(data.size());
    std::vector<epoch_record> history;
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        order_rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++global_step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            try {
                std::vector<tensor> logits;
                std::vector<std::size_t> targets;
                std::vector<double> weights;
                for (std::size_t b = start; b < end; ++b) {
                    const auto& d = data[order[b]];
                    logits.push_back(model.forward(d.input).logits);
                    targets.push_back(static_cast<std::size_t>(d.truth));
                    weights.push_back(class_weight[targets.back()]);
                    if (predict(logits.back().data()).predicted == d.truth) ++correct;
                }
                // a batch holding only zero-weight samples contributes nothing
                double wsum = 0.0;
                for (double w : weights) wsum += w;
                if (wsum <= 0.0) continue;
                const tensor loss = cross_entropy(concat_rows(logits), targets, weights);
                if (!std::isfinite(loss.item())) throw numeric_error("non-finite loss");
                model.params().zero_grad();
                loss.backward();
                adam_update(model.params(), state, cfg);
                loss_sum += loss.item() * static_cast<double>(end - start);
            } catch (const numeric_error& e) {
                throw numeric_error("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(global_step) + ": " + e.what());
            }
        }
        epoch_record rec{epoch, loss_sum / static_cast<double>(data.size()),
                         static_cast<double>(correct) / static_cast<double>(data.size())};
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return history;
}

std::string loss_history_csv(const std::vector<epoch_record>& history) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,loss,train_acc\n";
    for (const auto& r : history) os << r.epoch << ',' << r.loss << ',' << r.train_accuracy << '\n';
    return os.str();
}

model_bundle train_bundle(const model_config& mcfg, const std::vector<clip>& clips, const train_config& tcfg,
                          std::vector<epoch_record>* history, const std::function<void(const epoch_record&)>& on_epoch) {
    const auto raw = extract_maps(clips);
    model_bundle bundle{screening_model(mcfg), fit_norm_stats(raw), {}};
    std::set<std::string> subjects;
    for (const auto& c : clips) subjects.insert(c.subject_id);
    bundle.train_subjects.assign(subjects.begin(), subjects.end());
    const auto inputs = prepare_inputs(clips, raw, bundle.stats, mcfg);
    auto h = train(bundle.model, inputs, tcfg, on_epoch);
    if (history) *history = std::move(h);
    return bundle;
}

void save_bundle(const std::filesystem::path& dir, const model_bundle& bundle) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create bundle directory " + dir.string() + ": " + ec.message());
    save_checkpoint((dir / "model.gmlb").string(), bundle.model.params().all());
    json degenerate = json::array();
    for (bool b : bundle.stats.degenerate) degenerate.push_back(b);
    const json doc{{"format", "gaitml-bundle"},
                   {"version", 1},
                   {"config", bundle.model.config().to_json()},
                   {"norm_stats", {{"mean", bundle.stats.mean}, {"stddev", bundle.stats.stddev}, {"degenerate", degenerate}}},
                   {"train_subjects", bundle.train_subjects}};
    std::ofstream out(dir / "bundle.json", std::ios::trunc);
    if (!out) throw io_error("cannot write " + (dir / "bundle.json").string());
    out << doc.dump(2) << '\n';
    if (!out) throw io_error("write failed for " + (dir / "bundle.json").string());
}

model_bundle load_bundle(const std::filesystem::path& dir) {
    const auto meta_path = dir / "bundle.json";
    std::ifstream in(meta_path);
    if (!in) throw io_error("cannot open " + meta_path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw parse_error(meta_path.string() + ": malformed JSON (" + e.what() + ")", 0);
    }
    try {
        if (doc.value("format", "") != "gaitml-bundle") throw validation_error(meta_path.string() + ": not a model bundle");
        norm_stats stats;
        const auto& ns = doc.at("norm_stats");
        stats.mean = ns.at("mean").get<std::vector<double>>();
        stats.stddev = ns.at("stddev").get<std::vector<double>>();
        for (const auto& b : ns.at("degenerate")) stats.degenerate.push_back(b.get<bool>());
        if (stats.mean.size() != num_features || stats.stddev.size() != num_features ||
            stats.degenerate.size() != num_features) {
            throw validation_error(meta_path.string() + ": norm stats must have " + std::to_string(num_features) + " columns");
        }
        model_bundle bundle{screening_model(model_config::from_json(doc.at("config"))), std::move(stats),
                            doc.at("train_subjects").get<std::vector<std::string>>()};
        bundle.model.params().load(load_checkpoint((dir / "model.gmlb").string()));
        return bundle;
    } catch (const json::exception& e) {
        throw validation_error(meta_path.string() + ": " + e.what());
    }
}

// -- metrics ---------------------------------------------------------------------

double f1(double precision, double recall) {
    if (!(precision >= 0.0 && precision <= 1.0 && recall >= 0.0 && recall <= 1.0)) {
        throw validation_error("f1: precision and recall must lie in [0,1]");
    }
    const double s = precision + recall;
    return s == 0.0 ? 0.0 : 2.0 * precision * recall / s;
}

double macro_f1(double f1_positive, double f1_negative) { return 0.5 * (f1_positive + f1_negative); }

namespace {

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

class_metrics class_stats(std::size_t hit, std::size_t false_alarm, std::size_t miss) {
    class_metrics c;
    c.precision = ratio(hit, hit + false_alarm);
    c.recall = ratio(hit, hit + miss);
    c.f1 = f1(c.precision, c.recall);
    return c;
}

json class_json(const class_metrics& c) { return json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}}; }

} // namespace

metrics_report metrics_report::from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
    metrics_report r;
    r.tp = tp;
    r.fp = fp;
    r.tn = tn;
    r.fn = fn;
    if (r.total() == 0) throw validation_error("metrics: no evaluated clips");
    r.accuracy = ratio(tp + tn, r.total());
    r.positive = class_stats(tp, fp, fn);
    r.negative = class_stats(tn, fn, fp);
    r.macro_f1 = gaitml::macro_f1(r.positive.f1, r.negative.f1);
    return r;
}

json metrics_report::to_json() const {
    json j{{"n_clips", total()},
           {"confusion", {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}},
           {"accuracy", accuracy},
           {"overall_f1", macro_f1},
           {"positive_class", class_json(positive)},
           {"negative_class", class_json(negative)}};
    if (leakage_override) j["watermark"] = "LEAKAGE OVERRIDE: train and test subjects overlap";
    return j;
}

std::vector<prediction> predict_all(const screening_model& model, const std::vector<labelled_input>& data) {
    std::vector<prediction> out;
    out.reserve(data.size());
    for (const auto& d : data) out.push_back(predict(model.forward(d.input).logits.data()));
    return out;
}

metrics_report evaluate(const screening_model& model, const std::vector<labelled_input>& data) {
    if (data.empty()) throw validation_error("evaluate: empty test set");
    const auto preds = predict_all(model, data);
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const bool pos_pred = preds[i].predicted == label::positive;
        const bool pos_true = data[i].truth == label::positive;
        if (pos_pred && pos_true) ++tp;
        else if (pos_pred) ++fp;
        else if (pos_true) ++fn;
        else ++tn;
    }
    return metrics_report::from_counts(tp, fp, tn, fn);
}

} // namespace gaitml
