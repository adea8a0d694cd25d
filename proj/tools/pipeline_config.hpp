#pragma once

// Pipeline configuration: one JSON document whose sections mirror the modules.
// Every field has a default, so an empty document (or no file) is valid.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "prefmem/classifier.hpp"
#include "prefmem/datagen.hpp"
#include "prefmem/evalharness.hpp"
#include "prefmem/memctl.hpp"
#include "prefmem/textenc.hpp"

namespace prefmem::cli {

struct DatagenSection {
    GenerationCounts counts;
    std::uint64_t seed = 42;
    // Empty: use the built-in files.
    std::string templates;
    std::string topics;
    std::string slots;
};

struct HeurdetSection {
    std::string rules;  // empty: built-in rule file
};

struct ClassifierSection {
    TrainConfig train;
    std::size_t hidden = 32;
    double threshold = 0.5;
};

struct MemorySection {
    MemoryTrainConfig train;
    std::size_t d = 32;
    std::size_t de = 64;
    std::size_t K = 4;
    // "text": preference turns are encoded with the encoder;
    // "category-code": one-hot category codes (the analytic toy task).
    std::string embedding = "text";
    CategoryCorpusSpec corpus{.num_categories = 4, .gaps = {3, 5, 10}, .sequences_per_gap = 400, .length = 30};
    std::uint64_t corpus_seed = 5;
};

struct EvalSection {
    std::vector<std::size_t> gaps{3, 5, 10};
    std::size_t length = 30;
    std::size_t streams_per_gap = 200;
    std::uint64_t seed = 1000;
    // Streams with a conflicting preference. With an empty schedule each one
    // switches category at turn length/2.
    std::size_t conflict_streams = 100;
    std::size_t conflict_gap = 5;
    std::vector<ConflictEvent> conflicts;
    // Labeled records for the heuristic vs learned comparison.
    std::size_t compare_formal = 600;
    std::size_t compare_casual = 300;
};

struct PathsSection {
    // Relative paths resolve against --out.
    std::string dataset = "dataset.jsonl";
    std::string classifier = "classifier.ckpt";
    std::string memory = "memory.ckpt";
    std::string reports = "reports";
    std::string session_log = "session.log";
};

struct ChatSection {
    std::string responder = "builtin";  // or "external"
    std::string command;                // shell command for the external responder
    int timeout_ms = 5000;
};

struct PipelineConfig {
    EncoderConfig encoder;
    std::string external_embeddings;  // sidecar file used by train-classifier
    DatagenSection datagen;
    HeurdetSection heurdet;
    ClassifierSection classifier;
    MemorySection memory;
    EvalSection eval;
    PathsSection paths;
    ChatSection chat;

    MemoryDims memory_dims() const { return {memory.d, encoder.dim, memory.K, memory.de}; }

    // Throws DataError describing the first problem.
    void validate() const;

    // Unknown keys are rejected so typos do not silently fall back to defaults.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::ordered_json to_json() const;
};

// Datagen source honoring the configured file overrides.
GenerationSource generation_source(const PipelineConfig& cfg);
RuleSet rule_set(const PipelineConfig& cfg);

}  // namespace prefmem::cli
