#include "pipeline_config.hpp"

#include <fstream>
#include <set>

#include "prefmem/default_data.hpp"
#include "prefmem/error.hpp"

namespace prefmem::cli {

namespace {

using nlohmann::json;

// Reads optional keys from one object and remembers which ones it saw.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw DataError("config section '" + name_ + "' must be an object");
    }

    template <class T>
    void get(const char* key, T& value) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            value = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw DataError("config key '" + name_ + "." + key + "' has the wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw DataError("unknown config key '" + (name_.empty() ? k : name_ + "." + k) + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string, std::less<>> seen_;
};

void read_train(Section& s, TrainConfig& t) {
    s.get("epochs", t.epochs);
    s.get("lr", t.lr);
    s.get("batch", t.batch);
    s.get("seed", t.seed);
    s.get("train_fraction", t.train_fraction);
    s.get("val_fraction", t.val_fraction);
    s.get("test_fraction", t.test_fraction);
}

nlohmann::ordered_json train_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"lr", t.lr},
            {"batch", t.batch},
            {"seed", t.seed},
            {"train_fraction", t.train_fraction},
            {"val_fraction", t.val_fraction},
            {"test_fraction", t.test_fraction}};
}

std::string read_text(const std::string& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(std::string("cannot open ") + what + " " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void PipelineConfig::validate() const {
    try {
        encoder.validate();
        classifier.train.validate();
        memory.train.base.validate();
    } catch (const DataError&) {
        throw;
    } catch (const Error& e) {
        throw DataError(e.what());
    }
    if (classifier.hidden == 0) throw DataError("classifier.hidden must be positive");
    if (!(classifier.threshold > 0.0 && classifier.threshold < 1.0)) throw DataError("classifier.threshold must be in (0, 1)");
    if (memory.d == 0 || memory.de == 0) throw DataError("memory.d and memory.de must be positive");
    if (memory.K < 2) throw DataError("memory.K must be at least 2");
    if (memory.corpus.num_categories != memory.K) throw DataError("memory.K and the corpus category count differ");
    if (memory.embedding != "text" && memory.embedding != "category-code") {
        throw DataError("memory.embedding must be 'text' or 'category-code'");
    }
    if (memory.embedding == "category-code" && memory.K > encoder.dim) {
        throw DataError("category codes need encoder.dim >= memory.K");
    }
    if (!(memory.train.clip_norm > 0.0)) throw DataError("memory.clip_norm must be positive");
    for (std::size_t g : memory.corpus.gaps) {
        if (g == 0) throw DataError("memory.gaps entries must be at least 1");
    }
    if (eval.gaps.empty()) throw DataError("eval.gaps must not be empty");
    for (std::size_t g : eval.gaps) {
        if (g == 0) throw DataError("eval.gaps entries must be at least 1");
    }
    if (eval.length == 0) throw DataError("eval.length must be at least 1");
    if (eval.conflict_gap == 0) throw DataError("eval.conflict_gap must be at least 1");
    for (const auto& c : eval.conflicts) {
        if (c.turn >= eval.length || c.category >= memory.K) throw DataError("eval.conflicts entry out of range");
    }
    for (const auto* p : {&paths.dataset, &paths.classifier, &paths.memory, &paths.reports, &paths.session_log}) {
        if (p->empty()) throw DataError("paths entries must be non-empty");
        if (p->find('\0') != std::string::npos) throw DataError("paths entries must not contain NUL");
    }
    if (chat.responder != "builtin" && chat.responder != "external") {
        throw DataError("chat.responder must be 'builtin' or 'external'");
    }
    if (chat.responder == "external" && chat.command.empty()) throw DataError("chat.command is required for 'external'");
    if (chat.timeout_ms <= 0) throw DataError("chat.timeout_ms must be positive");
}

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    Section top(j, "");
    if (const json* e = top.child("encoder")) {
        Section s(*e, "encoder");
        s.get("dim", c.encoder.dim);
        s.get("ngram_orders", c.encoder.ngram_orders);
        s.get("hash_seed", c.encoder.hash_seed);
        s.get("normalize", c.encoder.normalize);
        s.get("external_embeddings", c.external_embeddings);
        s.finish();
    }
    if (const json* e = top.child("datagen")) {
        Section s(*e, "datagen");
        s.get("preference", c.datagen.counts.preference);
        s.get("non_preference", c.datagen.counts.non_preference);
        s.get("seed", c.datagen.seed);
        s.get("templates", c.datagen.templates);
        s.get("topics", c.datagen.topics);
        s.get("slots", c.datagen.slots);
        s.finish();
    }
    if (const json* e = top.child("heurdet")) {
        Section s(*e, "heurdet");
        s.get("rules", c.heurdet.rules);
        s.finish();
    }
    if (const json* e = top.child("classifier")) {
        Section s(*e, "classifier");
        read_train(s, c.classifier.train);
        s.get("hidden", c.classifier.hidden);
        s.get("threshold", c.classifier.threshold);
        s.finish();
    }
    if (const json* e = top.child("memory")) {
        Section s(*e, "memory");
        read_train(s, c.memory.train.base);
        s.get("clip_norm", c.memory.train.clip_norm);
        s.get("d", c.memory.d);
        s.get("de", c.memory.de);
        s.get("K", c.memory.K);
        s.get("embedding", c.memory.embedding);
        s.get("gaps", c.memory.corpus.gaps);
        s.get("sequences_per_gap", c.memory.corpus.sequences_per_gap);
        s.get("length", c.memory.corpus.length);
        s.get("corpus_seed", c.memory.corpus_seed);
        s.finish();
        c.memory.corpus.num_categories = c.memory.K;
    }
    if (const json* e = top.child("eval")) {
        Section s(*e, "eval");
        s.get("gaps", c.eval.gaps);
        s.get("length", c.eval.length);
        s.get("streams_per_gap", c.eval.streams_per_gap);
        s.get("seed", c.eval.seed);
        s.get("conflict_streams", c.eval.conflict_streams);
        s.get("conflict_gap", c.eval.conflict_gap);
        s.get("compare_formal", c.eval.compare_formal);
        s.get("compare_casual", c.eval.compare_casual);
        if (const json* list = s.child("conflicts")) {
            if (!list->is_array()) throw DataError("eval.conflicts must be a list");
            for (const auto& item : *list) {
                Section cs(item, "eval.conflicts[]");
                ConflictEvent ev;
                cs.get("turn", ev.turn);
                cs.get("category", ev.category);
                cs.finish();
                c.eval.conflicts.push_back(ev);
            }
        }
        s.finish();
    }
    if (const json* e = top.child("paths")) {
        Section s(*e, "paths");
        s.get("dataset", c.paths.dataset);
        s.get("classifier", c.paths.classifier);
        s.get("memory", c.paths.memory);
        s.get("reports", c.paths.reports);
        s.get("session_log", c.paths.session_log);
        s.finish();
    }
    if (const json* e = top.child("chat")) {
        Section s(*e, "chat");
        s.get("responder", c.chat.responder);
        s.get("command", c.chat.command);
        s.get("timeout_ms", c.chat.timeout_ms);
        s.finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    const std::string text = read_text(path.string(), "config");
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

nlohmann::ordered_json PipelineConfig::to_json() const {
    nlohmann::ordered_json j;
    j["encoder"] = {{"dim", encoder.dim},
                    {"ngram_orders", encoder.ngram_orders},
                    {"hash_seed", encoder.hash_seed},
                    {"normalize", encoder.normalize},
                    {"external_embeddings", external_embeddings}};
    j["datagen"] = {{"preference", datagen.counts.preference},
                    {"non_preference", datagen.counts.non_preference},
                    {"seed", datagen.seed},
                    {"templates", datagen.templates},
                    {"topics", datagen.topics},
                    {"slots", datagen.slots}};
    j["heurdet"] = {{"rules", heurdet.rules}};
    auto cls = train_json(classifier.train);
    cls["hidden"] = classifier.hidden;
    cls["threshold"] = classifier.threshold;
    j["classifier"] = cls;
    auto mem = train_json(memory.train.base);
    mem["clip_norm"] = memory.train.clip_norm;
    mem["d"] = memory.d;
    mem["de"] = memory.de;
    mem["K"] = memory.K;
    mem["embedding"] = memory.embedding;
    mem["gaps"] = memory.corpus.gaps;
    mem["sequences_per_gap"] = memory.corpus.sequences_per_gap;
    mem["length"] = memory.corpus.length;
    mem["corpus_seed"] = memory.corpus_seed;
    j["memory"] = mem;
    nlohmann::ordered_json conflicts = nlohmann::ordered_json::array();
    for (const auto& c : eval.conflicts) conflicts.push_back({{"turn", c.turn}, {"category", c.category}});
    j["eval"] = {{"gaps", eval.gaps},
                 {"length", eval.length},
                 {"streams_per_gap", eval.streams_per_gap},
                 {"seed", eval.seed},
                 {"conflict_streams", eval.conflict_streams},
                 {"conflict_gap", eval.conflict_gap},
                 {"conflicts", conflicts},
                 {"compare_formal", eval.compare_formal},
                 {"compare_casual", eval.compare_casual}};
    j["paths"] = {{"dataset", paths.dataset},
                  {"classifier", paths.classifier},
                  {"memory", paths.memory},
                  {"reports", paths.reports},
                  {"session_log", paths.session_log}};
    j["chat"] = {{"responder", chat.responder}, {"command", chat.command}, {"timeout_ms", chat.timeout_ms}};
    return j;
}

GenerationSource generation_source(const PipelineConfig& cfg) {
    const auto& d = cfg.datagen;
    GenerationSource src = GenerationSource::defaults();
    if (!d.templates.empty()) src.templates = parse_templates(read_text(d.templates, "templates"));
    if (!d.topics.empty()) src.topics = TopicList::parse(read_text(d.topics, "topics"));
    if (!d.slots.empty()) src.slots = parse_slots(read_text(d.slots, "slots"));
    src.validate();
    return src;
}

RuleSet rule_set(const PipelineConfig& cfg) {
    return cfg.heurdet.rules.empty() ? RuleSet::defaults() : RuleSet::parse(read_text(cfg.heurdet.rules, "rules"));
}

}  // namespace prefmem::cli
