#include "prefmem/evalharness.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>

#include "prefmem/error.hpp"
#include "prefmem/rng.hpp"

namespace prefmem {

namespace {

StreamOutcome run_stream(const PreferenceDetector& detector, const MemoryController& controller, const Stream& s,
                         std::size_t index) {
    const GateParams& g = *controller.params;
    MemoryState state = MemoryState::initial(g.W_MM.rows());
    StreamOutcome out;
    out.index = index;
    out.gap = s.spec.gap;
    out.conflicted = !s.spec.conflicts.empty();
    for (const auto& turn : s.turns) {
        const bool detected = detector.is_preference(turn.record);
        out.detection.add(detected, turn.preference);
        state = detected ? update(g, state, TurnEvent::preferred(controller.embed(turn))) : update(g, state, TurnEvent::neutral());
    }
    out.detection.finalize();
    out.truth = s.truth.empty() ? std::nullopt : s.truth.back();
    const Vector probs = predict_category(g, state);
    out.predicted = argmax(probs);
    out.confidence = probs[out.predicted];
    out.correct = out.truth && *out.truth == out.predicted;
    return out;
}

void check_streams(const MemoryController& controller, std::span<const Stream> streams) {
    if (!controller.params || !controller.embed) throw Error("memory controller is not set up");
    const std::size_t K = controller.params->W_out.rows();
    for (const auto& s : streams) {
        if (s.spec.K != K) {
            throw DataError("stream has K=" + std::to_string(s.spec.K) + " but the controller decodes K=" +
                            std::to_string(K));
        }
    }
}

EvalReport reduce(std::vector<StreamOutcome> rows) {
    EvalReport r;
    r.streams = rows.size();
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_gap;  // gap -> (hits, scored)
    std::size_t ow_hits = 0;
    std::size_t ow_scored = 0;
    for (const auto& row : rows) {
        r.detection.true_positive += row.detection.true_positive;
        r.detection.false_positive += row.detection.false_positive;
        r.detection.true_negative += row.detection.true_negative;
        r.detection.false_negative += row.detection.false_negative;
        if (!row.truth) {
            ++r.unscored;
            continue;
        }
        if (row.conflicted) {
            ++ow_scored;
            ow_hits += row.correct;
        } else {
            auto& [hits, scored] = per_gap[row.gap];
            ++scored;
            hits += row.correct;
        }
    }
    r.detection.finalize();
    for (const auto& [gap, hs] : per_gap) {
        r.retention_accuracy_per_gap[gap] = static_cast<double>(hs.first) / static_cast<double>(hs.second);
    }
    if (ow_scored) r.overwrite_accuracy = static_cast<double>(ow_hits) / static_cast<double>(ow_scored);
    r.rows = std::move(rows);
    return r;
}

std::string fmt(double x, int prec = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, x);
    return buf;
}

std::string pad(std::string s, std::size_t w) {
    if (s.size() < w) s.insert(0, w - s.size(), ' ');
    return s;
}

}  // namespace

Stream build_stream(const StreamSpec& spec, const TurnSampler* sampler) {
    if (spec.gap == 0) throw DataError("stream gap must be at least 1");
    if (spec.length == 0) throw DataError("stream length must be at least 1");
    if (spec.K < 2) throw DataError("stream needs at least 2 categories");
    for (const auto& c : spec.conflicts) {
        if (c.category >= spec.K) throw DataError("conflict category out of range");
        if (c.turn >= spec.length) throw DataError("conflict turn beyond stream length");
    }
    if (sampler && sampler->num_categories() != spec.K) throw DataError("sampler K differs from stream K");

    Rng rng(derive_seed(spec.seed, 0x57e));
    Stream s;
    s.spec = spec;
    std::size_t current = static_cast<std::size_t>(rng.below(spec.K));
    std::optional<std::size_t> active;
    for (std::size_t t = 0; t < spec.length; ++t) {
        bool pref = (t + 1) % spec.gap == 0;
        for (const auto& c : spec.conflicts) {
            if (c.turn == t) {
                current = c.category;
                pref = true;
            }
        }
        StreamTurn turn;
        turn.preference = pref;
        if (pref) {
            turn.category = current;
            active = current;
            if (sampler) turn.record = sampler->preference(current, rng);
        } else if (sampler) {
            turn.record = sampler->neutral(rng);
        }
        turn.record.label = pref ? 1 : 0;
        turn.record.id = static_cast<std::int64_t>(t);
        s.turns.push_back(std::move(turn));
        s.truth.push_back(active);
    }
    return s;
}

LearnedDetector::LearnedDetector(ClassifierParams params, const EmbeddingProvider& encoder, double threshold)
    : params_(std::move(params)), encoder_(&encoder), threshold_(threshold) {
    if (params_.input_dim() != encoder.dim()) {
        throw DimensionError("classifier expects dim " + std::to_string(params_.input_dim()) + " but encoder produces " +
                             std::to_string(encoder.dim()));
    }
}

bool LearnedDetector::is_preference(const TurnRecord& turn) const {
    return predict(params_, encoder_->embed(std::to_string(turn.id), turn.agent, turn.user), threshold_) == 1;
}

TurnEmbedder text_embedder(const EmbeddingProvider& encoder) {
    return [&encoder](const StreamTurn& t) {
        return encoder.embed(std::to_string(t.record.id), t.record.agent, t.record.user);
    };
}

TurnEmbedder code_embedder(std::size_t l) {
    return [l](const StreamTurn& t) { return t.category ? category_code(*t.category, l) : EmbeddingVector(l); };
}

EventSequence to_events(const CategorySequence& seq, const EmbeddingProvider& encoder) {
    EventSequence events;
    events.reserve(seq.turns.size());
    for (std::size_t i = 0; i < seq.turns.size(); ++i) {
        const auto& r = seq.turns[i];
        const auto& target = i < seq.targets.size() ? seq.targets[i] : std::nullopt;
        if (target) {
            events.push_back(TurnEvent::preferred(encoder.embed(std::to_string(r.id), r.agent, r.user), target));
        } else {
            events.push_back(TurnEvent::neutral());
        }
    }
    return events;
}

std::vector<EventSequence> to_events(std::span<const CategorySequence> corpus, const EmbeddingProvider& encoder) {
    std::vector<EventSequence> out;
    out.reserve(corpus.size());
    for (const auto& seq : corpus) out.push_back(to_events(seq, encoder));
    return out;
}

bool operator==(const EvalReport& a, const EvalReport& b) {
    auto row_eq = [](const StreamOutcome& x, const StreamOutcome& y) {
        return x.index == y.index && x.gap == y.gap && x.conflicted == y.conflicted && x.truth == y.truth &&
               x.predicted == y.predicted && x.confidence == y.confidence && x.correct == y.correct &&
               x.detection == y.detection;
    };
    return a.detection == b.detection && a.retention_accuracy_per_gap == b.retention_accuracy_per_gap &&
           a.overwrite_accuracy == b.overwrite_accuracy && a.streams == b.streams && a.unscored == b.unscored &&
           std::equal(a.rows.begin(), a.rows.end(), b.rows.begin(), b.rows.end(), row_eq);
}

EvalReport run_retention_serial(const PreferenceDetector& detector, const MemoryController& controller,
                                std::span<const Stream> streams) {
    check_streams(controller, streams);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<StreamOutcome> rows;
    rows.reserve(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) rows.push_back(run_stream(detector, controller, streams[i], i));
    EvalReport r = reduce(std::move(rows));
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

EvalReport run_retention(const PreferenceDetector& detector, const MemoryController& controller,
                         std::span<const Stream> streams) {
    check_streams(controller, streams);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<StreamOutcome> rows(streams.size());
    std::optional<std::string> failure;
    const auto n = static_cast<std::ptrdiff_t>(streams.size());
#pragma omp parallel for schedule(dynamic, 4)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            rows[k] = run_stream(detector, controller, streams[k], k);
        } catch (const std::exception& e) {
#pragma omp critical
            if (!failure) failure = e.what();
        }
    }
    if (failure) throw Error(*failure);
    EvalReport r = reduce(std::move(rows));
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

StyleOf style_from_templates(const std::vector<Template>& templates) {
    std::map<std::string, std::string, std::less<>> style;
    for (const auto& t : templates) style[t.id] = t.style;
    return [style = std::move(style)](const TurnRecord& r) {
        auto it = style.find(r.template_id);
        return it == style.end() ? std::string("formal") : it->second;
    };
}

DetectorComparison compare_detectors(const PreferenceDetector& heuristic, const PreferenceDetector& learned,
                                     std::span<const TurnRecord> corpus, const StyleOf& style_of) {
    if (corpus.empty()) throw DataError("cannot compare detectors on an empty corpus");
    DetectorComparison c;
    c.heuristic_name = heuristic.name();
    c.learned_name = learned.name();
    for (const auto& r : corpus) {
        const int h = heuristic.is_preference(r);
        const int l = learned.is_preference(r);
        c.heuristic.add(h, r.label);
        c.learned.add(l, r.label);
        auto& [sh, sl] = c.by_style[style_of(r)];
        sh.add(h, r.label);
        sl.add(l, r.label);
    }
    c.heuristic.finalize();
    c.learned.finalize();
    for (auto& [style, pair] : c.by_style) {
        pair.first.finalize();
        pair.second.finalize();
    }
    return c;
}

nlohmann::ordered_json to_json(const EvalMetrics& m) {
    nlohmann::ordered_json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["tp"] = m.true_positive;
    j["fp"] = m.false_positive;
    j["tn"] = m.true_negative;
    j["fn"] = m.false_negative;
    return j;
}

EvalMetrics metrics_from_json(const nlohmann::json& j) {
    EvalMetrics m;
    m.true_positive = j.at("tp").get<std::size_t>();
    m.false_positive = j.at("fp").get<std::size_t>();
    m.true_negative = j.at("tn").get<std::size_t>();
    m.false_negative = j.at("fn").get<std::size_t>();
    m.finalize();
    return m;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["streams"] = r.streams;
    j["unscored"] = r.unscored;
    j["detection"] = to_json(r.detection);
    nlohmann::ordered_json gaps = nlohmann::ordered_json::object();
    for (const auto& [gap, acc] : r.retention_accuracy_per_gap) gaps[std::to_string(gap)] = acc;
    j["retention_accuracy_per_gap"] = gaps;
    j["overwrite_accuracy"] = r.overwrite_accuracy ? nlohmann::ordered_json(*r.overwrite_accuracy) : nullptr;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& row : r.rows) {
        nlohmann::ordered_json o;
        o["index"] = row.index;
        o["gap"] = row.gap;
        o["conflicted"] = row.conflicted;
        o["truth"] = row.truth ? nlohmann::ordered_json(*row.truth) : nullptr;
        o["predicted"] = row.predicted;
        o["confidence"] = row.confidence;
        o["correct"] = row.correct;
        o["detection"] = to_json(row.detection);
        rows.push_back(std::move(o));
    }
    j["rows"] = std::move(rows);
    return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
    try {
        EvalReport r;
        r.streams = j.at("streams").get<std::size_t>();
        r.unscored = j.at("unscored").get<std::size_t>();
        r.detection = metrics_from_json(j.at("detection"));
        for (const auto& [gap, acc] : j.at("retention_accuracy_per_gap").items()) {
            r.retention_accuracy_per_gap[static_cast<std::size_t>(std::stoul(gap))] = acc.get<double>();
        }
        if (!j.at("overwrite_accuracy").is_null()) r.overwrite_accuracy = j.at("overwrite_accuracy").get<double>();
        for (const auto& o : j.at("rows")) {
            StreamOutcome row;
            row.index = o.at("index").get<std::size_t>();
            row.gap = o.at("gap").get<std::size_t>();
            row.conflicted = o.at("conflicted").get<bool>();
            if (!o.at("truth").is_null()) row.truth = o.at("truth").get<std::size_t>();
            row.predicted = o.at("predicted").get<std::size_t>();
            row.confidence = o.at("confidence").get<double>();
            row.correct = o.at("correct").get<bool>();
            row.detection = metrics_from_json(o.at("detection"));
            r.rows.push_back(row);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed report: ") + e.what());
    }
}

nlohmann::ordered_json to_json(const DetectorComparison& c) {
    nlohmann::ordered_json j;
    j[c.heuristic_name] = to_json(c.heuristic);
    j[c.learned_name] = to_json(c.learned);
    nlohmann::ordered_json styles = nlohmann::ordered_json::object();
    for (const auto& [style, pair] : c.by_style) {
        styles[style][c.heuristic_name] = to_json(pair.first);
        styles[style][c.learned_name] = to_json(pair.second);
    }
    j["by_style"] = std::move(styles);
    return j;
}

std::string format_report(const EvalReport& r) {
    std::ostringstream out;
    out << "retention (argmax of category probe at stream end)\n";
    out << pad("gap", 6) << pad("accuracy", 10) << '\n';
    for (const auto& [gap, acc] : r.retention_accuracy_per_gap) out << pad(std::to_string(gap), 6) << pad(fmt(acc), 10) << '\n';
    if (r.overwrite_accuracy) out << pad("conf", 6) << pad(fmt(*r.overwrite_accuracy), 10) << "   (streams with a conflicting preference)\n";
    out << "streams: " << r.streams << "  unscored: " << r.unscored << '\n';
    out << "detection on stream turns: acc " << fmt(r.detection.accuracy) << "  precision " << fmt(r.detection.precision)
        << "  recall " << fmt(r.detection.recall) << "  f1 " << fmt(r.detection.f1) << '\n';
    return out.str();
}

std::string format_comparison(const DetectorComparison& c) {
    std::ostringstream out;
    out << pad("subset", 10) << pad("detector", 11) << pad("acc", 9) << pad("prec", 9) << pad("recall", 9)
        << pad("f1", 9) << pad("n", 7) << '\n';
    auto line = [&](const std::string& subset, const std::string& name, const EvalMetrics& m) {
        out << pad(subset, 10) << pad(name, 11) << pad(fmt(m.accuracy), 9) << pad(fmt(m.precision), 9)
            << pad(fmt(m.recall), 9) << pad(fmt(m.f1), 9) << pad(std::to_string(m.total()), 7) << '\n';
    };
    line("all", c.heuristic_name, c.heuristic);
    line("all", c.learned_name, c.learned);
    for (const auto& [style, pair] : c.by_style) {
        line(style, c.heuristic_name, pair.first);
        line(style, c.learned_name, pair.second);
    }
    return out.str();
}

std::string report_csv(const EvalReport& r) {
    std::ostringstream out;
    out << "index,gap,conflicted,truth,predicted,confidence,correct,det_tp,det_fp,det_tn,det_fn\n";
    for (const auto& row : r.rows) {
        out << row.index << ',' << row.gap << ',' << (row.conflicted ? 1 : 0) << ','
            << (row.truth ? std::to_string(*row.truth) : std::string()) << ',' << row.predicted << ','
            << fmt(row.confidence, 6) << ',' << (row.correct ? 1 : 0) << ',' << row.detection.true_positive << ','
            << row.detection.false_positive << ',' << row.detection.true_negative << ','
            << row.detection.false_negative << '\n';
    }
    return out.str();
}

}  // namespace prefmem
