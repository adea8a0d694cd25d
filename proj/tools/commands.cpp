#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "pipeline_config.hpp"
#include "prefmem/error.hpp"
#include "prefmem/tensor_io.hpp"
#include "responder.hpp"

namespace prefmem::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string detector;  // empty: learned for eval, heuristic for chat
    std::string out = "prefmem-out";
    std::optional<std::size_t> epochs;
    bool resume = false;
    bool emit_csv = false;
    bool witness = false;
};

struct Context {
    Options opt;
    PipelineConfig cfg;
    std::istream& in;
    std::ostream& out;
    std::ostream& err;

    fs::path resolve(const std::string& p) const {
        const fs::path path(p);
        return path.is_absolute() ? path : fs::path(opt.out) / path;
    }
};

std::string fixed(double x, int prec = 4) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", prec, x);
    return buf;
}

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_file(const fs::path& p, const std::string& content) {
    ensure_parent(p);
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot write " + p.string());
    f << content;
    if (!f.flush()) throw Error("write failed for " + p.string());
}

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw MissingArtifact(what + " not found: " + p.string());
}

std::string history_tsv(const std::vector<EpochStats>& history) {
    std::string s = "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\n";
    for (const auto& h : history) {
        s += std::to_string(h.epoch) + '\t' + format_real(h.train_loss) + '\t' + format_real(h.train_accuracy) + '\t' +
             (std::isfinite(h.val_loss) ? format_real(h.val_loss) : "nan") + '\t' +
             (std::isfinite(h.val_accuracy) ? format_real(h.val_accuracy) : "nan") + '\n';
    }
    return s;
}

void print_history(std::ostream& out, const std::vector<EpochStats>& history, std::size_t every) {
    out << "epoch  train_loss  train_acc  val_loss  val_acc\n";
    for (const auto& h : history) {
        if (h.epoch % every != 0 && h.epoch != 1 && h.epoch != history.back().epoch) continue;
        char buf[128];
        std::snprintf(buf, sizeof buf, "%5zu  %10.4f  %9.4f  %8.4f  %7.4f\n", h.epoch, h.train_loss, h.train_accuracy,
                      h.val_loss, h.val_accuracy);
        out << buf;
    }
}

std::vector<std::string> category_names(const GenerationSource& src, std::size_t K) {
    return TurnSampler(src, K).categories();
}

void check_encoder_dim(std::size_t expected, std::size_t actual, const std::string& what) {
    if (expected != actual) {
        throw DimensionError(what + " expects embedding dim " + std::to_string(expected) + " but encoder.dim is " +
                             std::to_string(actual));
    }
}

// ---- gen-data ----

int cmd_gen_data(Context& c) {
    const GenerationSource src = generation_source(c.cfg);
    const std::uint64_t seed = c.opt.seed.value_or(c.cfg.datagen.seed);
    const auto records = generate(src, c.cfg.datagen.counts, seed);
    const fs::path path = c.resolve(c.cfg.paths.dataset);
    ensure_parent(path);
    write_jsonl(records, path);

    std::map<std::string, std::size_t> by_kind;
    std::map<std::string, TemplateKind> kind_of;
    for (const auto& t : src.templates) kind_of.emplace(t.id, t.kind);
    std::size_t pos = 0;
    for (const auto& r : records) {
        pos += r.label == 1;
        ++by_kind[std::string(to_string(kind_of.at(r.template_id)))];
    }
    c.out << "wrote " << records.size() << " records to " << path.string() << " (seed " << seed << ")\n";
    c.out << "label histogram: 1: " << pos << "  0: " << records.size() - pos << '\n';
    for (const auto& [kind, n] : by_kind) c.out << "  " << kind << ": " << n << '\n';
    return kOk;
}

// ---- train-classifier ----

int cmd_train_classifier(Context& c) {
    const fs::path dataset = c.resolve(c.cfg.paths.dataset);
    require_file(dataset, "dataset");
    const auto records = read_jsonl(dataset);
    if (records.empty()) throw DataError("dataset " + dataset.string() + " is empty");

    std::vector<LabeledExample> data(records.size());
    if (!c.cfg.external_embeddings.empty()) {
        const PrecomputedEmbeddings provider(load_external_embeddings(c.cfg.external_embeddings));
        check_encoder_dim(provider.dim(), c.cfg.encoder.dim, "external embedding file");
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            data[i] = {provider.embed(std::to_string(r.id), r.agent, r.user), r.label, r.topic};
        }
    } else {
        std::vector<TurnText> turns;
        turns.reserve(records.size());
        for (const auto& r : records) turns.push_back({r.agent, r.user});
        auto emb = encode_batch(c.cfg.encoder, turns);
        for (std::size_t i = 0; i < records.size(); ++i) {
            data[i] = {std::move(emb[i]), records[i].label, records[i].topic};
        }
    }

    TrainConfig tc = c.cfg.classifier.train;
    if (c.opt.seed) tc.seed = *c.opt.seed;
    if (c.opt.epochs) tc.epochs = *c.opt.epochs;
    const fs::path ckpt = c.resolve(c.cfg.paths.classifier);
    std::optional<ClassifierParams> initial;
    if (c.opt.resume) {
        require_file(ckpt, "classifier checkpoint");
        initial = load_classifier(ckpt);
        check_encoder_dim(initial->input_dim(), c.cfg.encoder.dim, "classifier checkpoint");
    }
    const auto res = train_classifier(tc, data, c.cfg.classifier.hidden, initial);
    ensure_parent(ckpt);
    save_classifier(res.params, ckpt);
    const fs::path hist = ckpt.string() + ".history.tsv";
    write_file(hist, history_tsv(res.history));

    // Reference row: the paper's frozen-BERT classifier, not a target here.
    const std::pair<const char*, const std::vector<std::size_t>*> splits[] = {
        {"train", &res.split.train}, {"val", &res.split.val}, {"test", &res.split.test}};
    const double reference[] = {0.95, 0.94, 0.90};
    nlohmann::ordered_json report;
    c.out << "split   n      accuracy  precision  recall  f1      reference acc (frozen BERT)\n";
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& [name, idx] = splits[k];
        std::vector<LabeledExample> subset;
        for (std::size_t i : *idx) subset.push_back(data[i]);
        char buf[160];
        if (subset.empty()) {
            std::snprintf(buf, sizeof buf, "%-6s  %-5zu  %8s  %9s  %6s  %6s  %.2f\n", name, subset.size(), "-", "-", "-",
                          "-", reference[k]);
            report[name] = nullptr;
        } else {
            const auto m = evaluate(res.params, subset, c.cfg.classifier.threshold);
            std::snprintf(buf, sizeof buf, "%-6s  %-5zu  %8.4f  %9.4f  %6.4f  %6.4f  %.2f\n", name, subset.size(),
                          m.accuracy, m.precision, m.recall, m.f1, reference[k]);
            report[name] = to_json(m);
        }
        c.out << buf;
    }
    report["reference_accuracy"] = {{"train", 0.95}, {"val", 0.94}, {"test", 0.90}};
    write_file(c.resolve(c.cfg.paths.reports) / "classifier.json", report.dump(2) + "\n");
    c.out << "split is held out by topic; the reference column is the published frozen-BERT result and is not "
             "expected to match this encoder\n";
    c.out << "checkpoint: " << ckpt.string() << "\nhistory: " << hist.string() << '\n';
    return kOk;
}

// ---- train-memory ----

std::vector<EventSequence> memory_corpus(const PipelineConfig& cfg, const GenerationSource& src) {
    const auto seqs = make_category_corpus(src, cfg.memory.corpus, cfg.memory.corpus_seed);
    if (cfg.memory.embedding == "text") {
        const HashingEncoder enc(cfg.encoder);
        return to_events(std::span<const CategorySequence>(seqs), enc);
    }
    std::vector<EventSequence> out;
    for (const auto& s : seqs) {
        EventSequence ev;
        for (const auto& t : s.targets) {
            ev.push_back(t ? TurnEvent::preferred(category_code(*t, cfg.encoder.dim), t) : TurnEvent::neutral());
        }
        out.push_back(std::move(ev));
    }
    return out;
}

int cmd_train_memory(Context& c) {
    const MemoryDims dims = c.cfg.memory_dims();
    const fs::path ckpt = c.resolve(c.cfg.paths.memory);
    MemoryTrainResult res;
    if (c.opt.witness) {
        if (dims.K > std::min(dims.d, dims.l)) throw DataError("the witness controller needs K <= min(d, encoder.dim)");
        res.params = copy_witness(dims);
        c.out << "hand-set copy-through controller (gate bias -50, identity codes); no training\n";
    } else {
        const GenerationSource src = generation_source(c.cfg);
        MemoryTrainConfig mc = c.cfg.memory.train;
        if (c.opt.seed) mc.base.seed = *c.opt.seed;
        if (c.opt.epochs) mc.base.epochs = *c.opt.epochs;
        std::optional<GateParams> initial;
        if (c.opt.resume) {
            require_file(ckpt, "memory checkpoint");
            initial = load_controller(ckpt);
            if (initial->dims() != dims) throw DimensionError("memory checkpoint dims differ from the config");
        }
        const auto corpus = memory_corpus(c.cfg, src);
        res = train_controller(mc, corpus, dims, initial);
        print_history(c.out, res.history, std::max<std::size_t>(1, mc.base.epochs / 10));
    }
    ensure_parent(ckpt);
    save_controller(res.params, ckpt);
    const fs::path hist = ckpt.string() + ".history.tsv";
    write_file(hist, history_tsv(res.history));
    c.out << "checkpoint: " << ckpt.string() << "\nhistory: " << hist.string() << '\n';
    return kOk;
}

// ---- eval ----

std::unique_ptr<PreferenceDetector> make_detector(const Context& c, const std::string& which,
                                                  const EmbeddingProvider& enc) {
    if (which == "heuristic") return std::make_unique<HeuristicDetector>(rule_set(c.cfg));
    if (which == "oracle") return std::make_unique<LabelDetector>();
    const fs::path ckpt = c.resolve(c.cfg.paths.classifier);
    require_file(ckpt, "classifier checkpoint");
    auto params = load_classifier(ckpt);
    check_encoder_dim(params.input_dim(), enc.dim(), "classifier checkpoint");
    return std::make_unique<LearnedDetector>(std::move(params), enc, c.cfg.classifier.threshold);
}

std::vector<Stream> eval_streams(const PipelineConfig& cfg, std::size_t K, const TurnSampler& sampler,
                                 std::uint64_t seed) {
    const auto& e = cfg.eval;
    std::vector<Stream> streams;
    std::uint64_t n = 0;
    for (std::size_t gap : e.gaps) {
        for (std::size_t s = 0; s < e.streams_per_gap; ++s) {
            streams.push_back(build_stream({gap, e.length, K, {}, derive_seed(seed, n++)}, &sampler));
        }
    }
    for (std::size_t s = 0; s < e.conflict_streams; ++s) {
        std::vector<ConflictEvent> conflicts = e.conflicts;
        if (conflicts.empty()) conflicts.push_back({e.length / 2, s % K});
        streams.push_back(build_stream({e.conflict_gap, e.length, K, conflicts, derive_seed(seed, n++)}, &sampler));
    }
    return streams;
}

void compare(Context& c, const GenerationSource& src, const EmbeddingProvider& enc, std::uint64_t seed) {
    const fs::path ckpt = c.resolve(c.cfg.paths.classifier);
    if (!fs::exists(ckpt)) {
        c.out << "detector comparison skipped: no classifier checkpoint\n";
        return;
    }
    auto params = load_classifier(ckpt);
    if (params.input_dim() != enc.dim()) {
        c.out << "detector comparison skipped: classifier dim differs from encoder.dim\n";
        return;
    }
    const HeuristicDetector heuristic(rule_set(c.cfg));
    const LearnedDetector learned(std::move(params), enc, c.cfg.classifier.threshold);

    GenerationSource casual = src;
    casual.templates = GenerationSource::casual_defaults().templates;
    const std::size_t nf = c.cfg.eval.compare_formal;
    const std::size_t nc = c.cfg.eval.compare_casual;
    auto corpus = generate(src, {nf - nf / 2, nf / 2}, derive_seed(seed, 0xf0));
    const auto extra = generate(casual, {nc - nc / 3, nc / 3}, derive_seed(seed, 0xca));
    corpus.insert(corpus.end(), extra.begin(), extra.end());
    for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].id = static_cast<std::int64_t>(i);
    if (corpus.empty()) return;

    auto templates = src.templates;
    templates.insert(templates.end(), casual.templates.begin(), casual.templates.end());
    const auto cmp = compare_detectors(heuristic, learned, corpus, style_from_templates(templates));
    const fs::path dir = c.resolve(c.cfg.paths.reports);
    write_file(dir / "detectors.json", to_json(cmp).dump(2) + "\n");
    write_file(dir / "detectors.txt", format_comparison(cmp));
    c.out << "\ndetector comparison (" << corpus.size() << " labeled turns)\n" << format_comparison(cmp);
}

int cmd_eval(Context& c) {
    const fs::path mem = c.resolve(c.cfg.paths.memory);
    require_file(mem, "memory checkpoint");
    const GateParams g = load_controller(mem);
    const MemoryDims dims = g.dims();
    const GenerationSource src = generation_source(c.cfg);
    const HashingEncoder enc(c.cfg.encoder);
    const auto detector = make_detector(c, c.opt.detector.empty() ? "learned" : c.opt.detector, enc);
    TurnEmbedder embed;
    if (c.cfg.memory.embedding == "text") {
        check_encoder_dim(dims.l, enc.dim(), "memory checkpoint");
        embed = text_embedder(enc);
    } else {
        embed = code_embedder(dims.l);
    }
    for (const auto& ev : c.cfg.eval.conflicts) {
        if (ev.category >= dims.K) throw DataError("eval.conflicts category is not below the checkpoint's K");
    }
    const TurnSampler sampler(src, dims.K);
    const std::uint64_t seed = c.opt.seed.value_or(c.cfg.eval.seed);
    const auto streams = eval_streams(c.cfg, dims.K, sampler, seed);
    const auto report = run_retention(*detector, MemoryController{&g, embed}, streams);

    const fs::path dir = c.resolve(c.cfg.paths.reports);
    write_file(dir / "eval.json", to_json(report).dump(2) + "\n");
    write_file(dir / "eval.txt", format_report(report));
    if (c.opt.emit_csv) write_file(dir / "eval.csv", report_csv(report));
    c.out << "detector: " << detector->name() << "  controller: " << mem.string() << '\n' << format_report(report);
    c.out << "runtime_seconds: " << fixed(report.runtime_seconds, 3) << '\n';
    compare(c, src, enc, seed);
    c.out << "reports: " << dir.string() << '\n';
    return kOk;
}

// ---- chat ----

struct ChatSession {
    const GateParams& g;
    std::vector<std::string> categories;
    MemoryState state;

    std::vector<std::pair<std::string, double>> ranked() const {
        const Vector p = predict_category(g, state);
        std::vector<std::pair<std::string, double>> r;
        for (std::size_t k = 0; k < p.dim(); ++k) r.emplace_back(categories[k], p[k]);
        std::stable_sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        return r;
    }

    std::string mem_line() const {
        const auto r = ranked();
        std::string s = "turn=" + std::to_string(state.turn_index) + " |M|=" + fixed(norm2(state.M), 6) + " top:";
        for (std::size_t k = 0; k < std::min<std::size_t>(2, r.size()); ++k) s += " " + r[k].first + "=" + fixed(r[k].second);
        return s;
    }
};

int cmd_chat(Context& c) {
    const fs::path mem = c.resolve(c.cfg.paths.memory);
    require_file(mem, "memory checkpoint");
    const GateParams g = load_controller(mem);
    const HashingEncoder enc(c.cfg.encoder);
    check_encoder_dim(g.dims().l, enc.dim(), "memory checkpoint");
    const GenerationSource src = generation_source(c.cfg);

    // Free-form chat text is far from the template data the classifier saw, so
    // the rule-based detector is the default here.
    std::string detector_name = c.opt.detector.empty() ? "heuristic" : c.opt.detector;
    if (detector_name == "oracle") throw DataError("chat turns carry no labels; use --detector learned or heuristic");
    std::unique_ptr<PreferenceDetector> detector = make_detector(c, detector_name, enc);

    ChatSession session{g, category_names(src, g.dims().K), MemoryState::initial(g.dims().d)};
    ResponderAdapter adapter(c.cfg.chat.responder, c.cfg.chat.command, session.categories, c.cfg.chat.timeout_ms);

    const fs::path log_path = c.resolve(c.cfg.paths.session_log);
    ensure_parent(log_path);
    std::ofstream log(log_path, std::ios::app);
    if (!log) throw Error("cannot write session log " + log_path.string());
    log << "# session start detector=" << detector->name() << " responder=" << adapter.active() << '\n';

    auto say = [&](const std::string& s) {
        c.out << s << '\n';
        log << "< " << s << '\n';
    };
    auto flush_warnings = [&] {
        for (const auto& w : adapter.take_warnings()) {
            c.err << "warning: " << w << '\n';
            log << "! " << w << '\n';
        }
    };
    flush_warnings();

    std::string agent_text;
    std::string line;
    while (std::getline(c.in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        log << "> " << line << '\n';
        if (line[0] == '/') {
            const auto space = line.find(' ');
            const std::string cmd = line.substr(0, space);
            const std::string arg = space == std::string::npos ? "" : line.substr(space + 1);
            if (cmd == "/quit") break;
            if (cmd == "/mem") {
                say(session.mem_line());
            } else if (cmd == "/softprompt") {
                say("T=" + format_real_list(soft_prompt(g, session.state).values()));
            } else if (cmd == "/reset") {
                session.state = MemoryState::initial(g.dims().d);
                agent_text.clear();
                say("memory reset");
            } else if (cmd == "/detector") {
                if (arg != "learned" && arg != "heuristic") {
                    say("usage: /detector learned|heuristic");
                } else {
                    try {
                        detector = make_detector(c, arg, enc);
                        say("detector: " + detector->name());
                    } catch (const Error& e) {
                        say(std::string("cannot switch detector: ") + e.what());
                    }
                }
            } else {
                say("unknown command " + cmd + " (try /mem, /softprompt, /reset, /detector, /quit)");
            }
            continue;
        }

        TurnRecord rec;
        rec.id = static_cast<std::int64_t>(session.state.turn_index);
        rec.agent = agent_text;
        rec.user = line;
        const bool pref = detector->is_preference(rec);
        session.state = pref ? update(g, session.state, TurnEvent::preferred(enc.embed("", rec.agent, rec.user)))
                             : update(g, session.state, TurnEvent::neutral());
        ResponderQuery q{line, pref, soft_prompt(g, session.state), session.ranked()};
        const std::string reply = adapter.respond(q);
        flush_warnings();
        log << "detected: " << (pref ? "preference" : "none") << '\n';
        say(reply);
        log << memory_snapshot(session.state) << '\n';
        agent_text = reply;
    }
    log << "# session end\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
    CLI::App app{"Preference memory pipeline: synthesize data, train the detector and memory controller, evaluate, chat",
                 "prefmem"};
    app.require_subcommand(1);
    Options opt;

    auto common = [&opt](CLI::App* sub) {
        sub->add_option("--config", opt.config, "JSON pipeline config (all fields optional)")->check(CLI::ExistingFile);
        sub->add_option("--seed", opt.seed, "Override the seed of this stage");
        sub->add_option("--out", opt.out, "Directory for artifacts (default prefmem-out)");
    };
    auto* gen = app.add_subcommand("gen-data", "Generate the labeled synthetic dataset");
    auto* tcl = app.add_subcommand("train-classifier", "Train the preference classifier");
    auto* tmem = app.add_subcommand("train-memory", "Train the memory controller");
    auto* ev = app.add_subcommand("eval", "Run the retention evaluation and detector comparison");
    auto* chat = app.add_subcommand("chat", "Interactive session over stdin");
    for (auto* sub : {gen, tcl, tmem, ev, chat}) common(sub);
    for (auto* sub : {tcl, tmem}) {
        sub->add_option("--epochs", opt.epochs, "Override the epoch count");
        sub->add_flag("--resume", opt.resume, "Start from the existing checkpoint");
    }
    tmem->add_flag("--witness", opt.witness, "Write the hand-set copy-through controller instead of training");
    for (auto* sub : {ev, chat}) {
        sub->add_option("--detector", opt.detector, "Preference detector")
            ->check(CLI::IsMember({"learned", "heuristic", "oracle"}));
    }
    ev->add_flag("--emit-csv", opt.emit_csv, "Also write per-stream rows as CSV");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        PipelineConfig cfg = opt.config.empty() ? PipelineConfig{} : PipelineConfig::load(opt.config);
        Context c{opt, std::move(cfg), in, out, err};
        if (*gen) return cmd_gen_data(c);
        if (*tcl) return cmd_train_classifier(c);
        if (*tmem) return cmd_train_memory(c);
        if (*ev) return cmd_eval(c);
        return cmd_chat(c);
    } catch (const MissingArtifact& e) {
        err << "error: " << e.what() << '\n';
        return kMissingArtifact;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
}

}  // namespace prefmem::cli
