#pragma once

// Retention evaluation over injection streams: every gap-th turn restates the
// user's preference, optional conflicts switch it, and at the end of the
// stream the category probe over the final memory is compared with the most
// recently stated preference.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "prefmem/classifier.hpp"
#include "prefmem/datagen.hpp"
#include "prefmem/heurdet.hpp"
#include "prefmem/memctl.hpp"
#include "prefmem/metrics.hpp"

namespace prefmem {

struct ConflictEvent {
    std::size_t turn = 0;
    std::size_t category = 0;
};

struct StreamSpec {
    std::size_t gap = 3;
    std::size_t length = 30;
    std::size_t K = 4;
    std::vector<ConflictEvent> conflicts;
    std::uint64_t seed = 0;
};

struct StreamTurn {
    TurnRecord record;  // text is empty when the stream was built without a sampler
    bool preference = false;
    std::optional<std::size_t> category;
};

struct Stream {
    StreamSpec spec;
    std::vector<StreamTurn> turns;
    // Category of the most recent preference at or before each turn.
    std::vector<std::optional<std::size_t>> truth;
};

// Preference turns at gap-1, 2*gap-1, ... restate the current category (drawn
// from the seed); a conflict at turn t makes t a preference turn and switches
// the current category from t on. With a sampler each turn also gets text.
Stream build_stream(const StreamSpec& spec, const TurnSampler* sampler = nullptr);

class PreferenceDetector {
public:
    virtual ~PreferenceDetector() = default;
    virtual std::string name() const = 0;
    virtual bool is_preference(const TurnRecord& turn) const = 0;
};

class HeuristicDetector final : public PreferenceDetector {
public:
    explicit HeuristicDetector(RuleSet rules) : rules_(std::move(rules)) {}
    std::string name() const override { return "heuristic"; }
    bool is_preference(const TurnRecord& turn) const override { return detect(rules_, turn.user).is_preference(); }

private:
    RuleSet rules_;
};

class LearnedDetector final : public PreferenceDetector {
public:
    LearnedDetector(ClassifierParams params, const EmbeddingProvider& encoder, double threshold = 0.5);
    std::string name() const override { return "learned"; }
    bool is_preference(const TurnRecord& turn) const override;

private:
    ClassifierParams params_;
    const EmbeddingProvider* encoder_;
    double threshold_;
};

// Reads the record's own label; the reference point for controller-only
// evaluation.
class LabelDetector final : public PreferenceDetector {
public:
    std::string name() const override { return "oracle"; }
    bool is_preference(const TurnRecord& turn) const override { return turn.label == 1; }
};

// Maps a detected-preference turn to the embedding fed to the controller.
using TurnEmbedder = std::function<EmbeddingVector(const StreamTurn&)>;

TurnEmbedder text_embedder(const EmbeddingProvider& encoder);
// One-hot category code (zero vector for turns without a category).
TurnEmbedder code_embedder(std::size_t l);

// Controller training sequences from rendered conversations: preference turns
// carry their encoded text and category target, the rest are no-ops.
EventSequence to_events(const CategorySequence& seq, const EmbeddingProvider& encoder);
std::vector<EventSequence> to_events(std::span<const CategorySequence> corpus, const EmbeddingProvider& encoder);

struct MemoryController {
    const GateParams* params = nullptr;
    TurnEmbedder embed;
};

struct StreamOutcome {
    std::size_t index = 0;
    std::size_t gap = 0;
    bool conflicted = false;
    std::optional<std::size_t> truth;
    std::size_t predicted = 0;
    double confidence = 0.0;
    bool correct = false;
    EvalMetrics detection;
};

struct EvalReport {
    EvalMetrics detection;
    std::map<std::size_t, double> retention_accuracy_per_gap;  // conflict-free streams
    std::optional<double> overwrite_accuracy;                  // streams with conflicts
    std::size_t streams = 0;
    std::size_t unscored = 0;  // streams that never stated a preference
    double runtime_seconds = 0.0;
    std::vector<StreamOutcome> rows;

    friend bool operator==(const EvalReport& a, const EvalReport& b);
};

// Streams run in parallel, each with its own MemoryState; outcomes are
// reduced in stream order. Throws DataError when a stream's K differs from
// the controller's.
EvalReport run_retention(const PreferenceDetector& detector, const MemoryController& controller,
                         std::span<const Stream> streams);
EvalReport run_retention_serial(const PreferenceDetector& detector, const MemoryController& controller,
                                std::span<const Stream> streams);

struct DetectorComparison {
    std::string heuristic_name;
    std::string learned_name;
    EvalMetrics heuristic;
    EvalMetrics learned;
    std::map<std::string, std::pair<EvalMetrics, EvalMetrics>> by_style;  // style -> (heuristic, learned)
};

using StyleOf = std::function<std::string(const TurnRecord&)>;

// Style lookup through the template each record came from; records from
// unknown templates are "formal".
StyleOf style_from_templates(const std::vector<Template>& templates);

// Throws DataError on an empty corpus.
DetectorComparison compare_detectors(const PreferenceDetector& heuristic, const PreferenceDetector& learned,
                                     std::span<const TurnRecord> corpus, const StyleOf& style_of);

// JSON (runtime excluded so reruns are byte-identical) and aligned text.
nlohmann::ordered_json to_json(const EvalMetrics& m);
EvalMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const DetectorComparison& c);
std::string format_report(const EvalReport& r);
std::string format_comparison(const DetectorComparison& c);
std::string report_csv(const EvalReport& r);

}  // namespace prefmem
