#include "prefmem/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "prefmem/default_data.hpp"
#include "prefmem/error.hpp"

namespace prefmem {

namespace {

constexpr std::string_view kTemplateHeader = "prefmem-templates v1";

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string read_file(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(std::string("cannot open ") + what + " " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_slots(const std::string& pattern, std::size_t lineno) {
    static const std::set<std::string, std::less<>> known{"topic", "Topic", "opinion", "object"};
    std::size_t pos = 0;
    while ((pos = pattern.find('{', pos)) != std::string::npos) {
        const auto close = pattern.find('}', pos);
        if (close == std::string::npos) throw DataError("unterminated slot in '" + pattern + "'", lineno);
        const auto name = pattern.substr(pos + 1, close - pos - 1);
        if (!known.contains(name)) throw DataError("unknown slot {" + name + "}", lineno);
        pos = close + 1;
    }
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string capitalize(std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

std::string fill(const std::string& pattern, const std::string& topic, const std::string& opinion,
                 const std::string& object) {
    std::string s = replace_all(pattern, "{topic}", topic);
    s = replace_all(std::move(s), "{Topic}", capitalize(topic));
    s = replace_all(std::move(s), "{opinion}", opinion);
    return replace_all(std::move(s), "{object}", object);
}

// One point in the combination space of a template.
struct Combo {
    const Template* tmpl;
    const Topic* topic;
    std::size_t opinion;
    std::size_t object;
};

const SlotValues& slots_for(const GenerationSource& src, const Topic& topic) {
    auto it = src.slots.find(topic.category);
    if (it == src.slots.end()) throw DataError("no slot lexicon for category '" + topic.category + "'");
    return it->second;
}

std::size_t opinion_choices(const GenerationSource& src, const Template& t, const Topic& p) {
    return t.uses("opinion") ? slots_for(src, p).opinions.size() : 1;
}

std::size_t object_choices(const GenerationSource& src, const Template& t, const Topic& p) {
    return t.uses("object") ? slots_for(src, p).objects.size() : 1;
}

TurnRecord render_combo(const GenerationSource& src, const Combo& c) {
    const auto& slots = slots_for(src, *c.topic);
    const std::string opinion = c.tmpl->uses("opinion") ? slots.opinions.at(c.opinion) : std::string();
    const std::string object = c.tmpl->uses("object") ? slots.objects.at(c.object) : std::string();
    TurnRecord r;
    r.topic = c.topic->name;
    r.template_id = c.tmpl->id;
    r.agent = fill(c.tmpl->agent_pattern, c.topic->name, opinion, object);
    r.user = fill(c.tmpl->user_pattern, c.topic->name, opinion, object);
    r.label = c.tmpl->label;
    if (c.tmpl->label == 1 && c.tmpl->category_slot == "topic") r.category = c.topic->category;
    return r;
}

std::vector<TurnRecord> sample_label(const GenerationSource& src, int label, std::size_t count, std::size_t cap,
                                     Rng& rng) {
    std::vector<const Template*> pool;
    for (const auto& t : src.templates) {
        if (t.label == label) pool.push_back(&t);
    }
    if (count > cap) {
        throw DataError("requested " + std::to_string(count) + (label ? " preference" : " non-preference") +
                        " records but the templates can produce only " + std::to_string(cap) + " distinct ones");
    }
    std::vector<TurnRecord> out;
    if (count == 0) return out;
    out.reserve(count);
    std::set<std::pair<std::string, std::string>> seen;
    auto take = [&](const Combo& c) {
        TurnRecord r = render_combo(src, c);
        if (seen.emplace(r.agent, r.user).second) out.push_back(std::move(r));
    };

    if (2 * count <= cap) {
        const std::size_t max_attempts = 50 * count + 1000;
        for (std::size_t attempt = 0; out.size() < count; ++attempt) {
            if (attempt == max_attempts) throw DataError("could not draw enough distinct records");
            const Template* t = pool[rng.below(pool.size())];
            const Topic* p = &src.topics.topics[rng.below(src.topics.topics.size())];
            const std::size_t op = rng.below(opinion_choices(src, *t, *p));
            const std::size_t ob = rng.below(object_choices(src, *t, *p));
            take({t, p, op, ob});
        }
        return out;
    }

    // Dense request: enumerate the whole space and take a shuffled prefix.
    std::vector<Combo> all;
    all.reserve(cap);
    for (const Template* t : pool) {
        for (const auto& p : src.topics.topics) {
            for (std::size_t op = 0; op < opinion_choices(src, *t, p); ++op) {
                for (std::size_t ob = 0; ob < object_choices(src, *t, p); ++ob) all.push_back({t, &p, op, ob});
            }
        }
    }
    rng.shuffle(all);
    for (const auto& c : all) {
        if (out.size() == count) break;
        take(c);
    }
    if (out.size() < count) throw DataError("combination space has duplicate renderings; cannot reach count");
    return out;
}

using ordered_json = nlohmann::ordered_json;

ordered_json record_to_json(const TurnRecord& r) {
    ordered_json j;
    j["id"] = r.id;
    j["topic"] = r.topic;
    j["template_id"] = r.template_id;
    j["agent"] = r.agent;
    j["user"] = r.user;
    j["label"] = r.label;
    j["category"] = r.category ? ordered_json(*r.category) : ordered_json(nullptr);
    return j;
}

TurnRecord record_from_json(const nlohmann::json& j, std::size_t lineno) {
    if (!j.is_object()) throw DataError("record is not a JSON object", lineno);
    auto field = [&](const char* name) -> const nlohmann::json& {
        auto it = j.find(name);
        if (it == j.end()) throw DataError(std::string("missing field '") + name + "'", lineno);
        return *it;
    };
    auto str = [&](const char* name) {
        const auto& v = field(name);
        if (!v.is_string()) throw DataError(std::string("field '") + name + "' must be a string", lineno);
        return v.get<std::string>();
    };
    TurnRecord r;
    const auto& id = field("id");
    if (!id.is_number_integer()) throw DataError("field 'id' must be an integer", lineno);
    r.id = id.get<std::int64_t>();
    r.topic = str("topic");
    r.template_id = str("template_id");
    r.agent = str("agent");
    r.user = str("user");
    const auto& label = field("label");
    if (!label.is_number_integer() || (label.get<int>() != 0 && label.get<int>() != 1)) {
        throw DataError("field 'label' must be 0 or 1", lineno);
    }
    r.label = label.get<int>();
    if (auto it = j.find("category"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw DataError("field 'category' must be a string or null", lineno);
        r.category = it->get<std::string>();
    }
    if (r.agent.empty() || r.user.empty()) throw DataError("agent and user text must be non-empty", lineno);
    return r;
}

}  // namespace

std::string_view to_string(TemplateKind k) {
    switch (k) {
        case TemplateKind::ExplicitPreference: return "explicit-preference";
        case TemplateKind::ImplicitComplaint: return "implicit-complaint";
        case TemplateKind::NeutralDefinition: return "neutral-definition";
        case TemplateKind::NeutralChitchat: return "neutral-chitchat";
    }
    return "?";
}

TemplateKind parse_template_kind(std::string_view s) {
    for (auto k : {TemplateKind::ExplicitPreference, TemplateKind::ImplicitComplaint, TemplateKind::NeutralDefinition,
                   TemplateKind::NeutralChitchat}) {
        if (to_string(k) == s) return k;
    }
    throw DataError("unknown template kind '" + std::string(s) + "'");
}

bool Template::uses(std::string_view slot) const {
    const std::string a = "{" + std::string(slot) + "}";
    if (agent_pattern.find(a) != std::string::npos || user_pattern.find(a) != std::string::npos) return true;
    if (slot == "topic") return uses("Topic");
    return false;
}

std::vector<Template> parse_templates(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::vector<Template> out;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (!header) {
            if (t != kTemplateHeader) throw DataError("expected header '" + std::string(kTemplateHeader) + "'", lineno);
            header = true;
            continue;
        }
        const auto f = split(t, '|');
        if (f.size() != 7) throw DataError("expected 7 '|'-separated fields, got " + std::to_string(f.size()), lineno);
        Template tp;
        tp.id = f[0];
        try {
            tp.kind = parse_template_kind(f[1]);
        } catch (const DataError& e) {
            throw DataError(e.what(), lineno);
        }
        if (f[2] != "0" && f[2] != "1") throw DataError("label must be 0 or 1", lineno);
        tp.label = f[2] == "1" ? 1 : 0;
        if (tp.label != label_of(tp.kind)) {
            throw DataError("label " + f[2] + " inconsistent with kind " + f[1], lineno);
        }
        tp.style = f[3];
        if (f[4] != "-") {
            if (f[4] != "topic") throw DataError("category_slot must be 'topic' or '-'", lineno);
            tp.category_slot = f[4];
        }
        tp.agent_pattern = f[5];
        tp.user_pattern = f[6];
        if (tp.id.empty() || tp.agent_pattern.empty() || tp.user_pattern.empty()) {
            throw DataError("empty id or pattern", lineno);
        }
        check_slots(tp.agent_pattern, lineno);
        check_slots(tp.user_pattern, lineno);
        if (!ids.insert(tp.id).second) throw DataError("duplicate template id '" + tp.id + "'", lineno);
        out.push_back(std::move(tp));
    }
    if (!header) throw DataError("template file is empty or missing its header");
    return out;
}

std::vector<Template> load_templates(const std::filesystem::path& path) {
    return parse_templates(read_file(path, "template file"));
}

void TopicList::validate() const {
    std::set<std::string> seen;
    for (const auto& t : topics) {
        if (t.name.empty()) throw DataError("empty topic");
        if (!seen.insert(t.name).second) throw DataError("duplicate topic '" + t.name + "'");
    }
}

std::vector<std::string> TopicList::categories() const {
    std::vector<std::string> out;
    for (const auto& t : topics) {
        if (!t.category.empty() && std::find(out.begin(), out.end(), t.category) == out.end()) {
            out.push_back(t.category);
        }
    }
    return out;
}

TopicList TopicList::parse(std::string_view text) {
    TopicList list;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || trim(line).front() == '#') continue;
        Topic t;
        const auto tab = line.find('\t');
        t.name = trim(line.substr(0, tab));
        if (tab != std::string::npos) t.category = trim(line.substr(tab + 1));
        if (t.name.empty()) throw DataError("empty topic", lineno);
        if (!seen.insert(t.name).second) throw DataError("duplicate topic '" + t.name + "'", lineno);
        list.topics.push_back(std::move(t));
    }
    return list;
}

TopicList TopicList::load(const std::filesystem::path& path) { return parse(read_file(path, "topic list")); }

SlotLexicon parse_slots(std::string_view text) {
    SlotLexicon lex;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    SlotValues* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw DataError("unterminated section header", lineno);
            current = &lex[t.substr(1, t.size() - 2)];
            continue;
        }
        if (!current) throw DataError("slot values outside of a [category] section", lineno);
        const auto colon = t.find(':');
        if (colon == std::string::npos) throw DataError("expected 'opinion:' or 'object:'", lineno);
        const std::string key = trim(t.substr(0, colon));
        auto values = split(std::string_view(t).substr(colon + 1), ',');
        std::erase_if(values, [](const std::string& v) { return v.empty(); });
        if (key == "opinion") {
            current->opinions = std::move(values);
        } else if (key == "object") {
            current->objects = std::move(values);
        } else {
            throw DataError("unknown slot key '" + key + "'", lineno);
        }
    }
    return lex;
}

SlotLexicon load_slots(const std::filesystem::path& path) { return parse_slots(read_file(path, "slot file")); }

void GenerationSource::validate() const {
    if (templates.empty()) throw DataError("no templates");
    if (topics.topics.empty()) throw DataError("no topics");
    topics.validate();
    for (const auto& p : topics.topics) {
        const auto& s = slots_for(*this, p);
        for (const auto& t : templates) {
            if (t.uses("opinion") && s.opinions.empty()) {
                throw DataError("category '" + p.category + "' has no opinion values for template " + t.id);
            }
            if (t.uses("object") && s.objects.empty()) {
                throw DataError("category '" + p.category + "' has no object values for template " + t.id);
            }
        }
    }
}

GenerationSource GenerationSource::defaults() {
    return {parse_templates(data::templates_txt()), TopicList::parse(data::topics_txt()), parse_slots(data::slots_txt())};
}

GenerationSource GenerationSource::casual_defaults() {
    return {parse_templates(data::casual_templates_txt()), TopicList::parse(data::topics_txt()),
            parse_slots(data::slots_txt())};
}

std::string render_turn(const TurnRecord& r) { return "Agent: " + r.agent + "\nUser: " + r.user; }

Capacity capacity(const GenerationSource& src) {
    Capacity cap;
    for (const auto& t : src.templates) {
        std::size_t n = 0;
        for (const auto& p : src.topics.topics) n += opinion_choices(src, t, p) * object_choices(src, t, p);
        (t.label == 1 ? cap.preference : cap.non_preference) += n;
    }
    return cap;
}

std::vector<TurnRecord> enumerate_records(const GenerationSource& src) {
    src.validate();
    std::vector<TurnRecord> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& t : src.templates) {
        for (const auto& p : src.topics.topics) {
            for (std::size_t op = 0; op < opinion_choices(src, t, p); ++op) {
                for (std::size_t ob = 0; ob < object_choices(src, t, p); ++ob) {
                    TurnRecord r = render_combo(src, {&t, &p, op, ob});
                    if (seen.emplace(r.agent, r.user).second) out.push_back(std::move(r));
                }
            }
        }
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<std::int64_t>(i);
    return out;
}

std::vector<TurnRecord> generate(const GenerationSource& src, GenerationCounts counts, std::uint64_t seed) {
    src.validate();
    const Capacity cap = capacity(src);
    Rng rng(derive_seed(seed, 0x6e6));
    auto records = sample_label(src, 1, counts.preference, cap.preference, rng);
    auto neutral = sample_label(src, 0, counts.non_preference, cap.non_preference, rng);
    records.insert(records.end(), std::make_move_iterator(neutral.begin()), std::make_move_iterator(neutral.end()));
    rng.shuffle(records);
    for (std::size_t i = 0; i < records.size(); ++i) records[i].id = static_cast<std::int64_t>(i);
    return records;
}

void write_jsonl(const std::vector<TurnRecord>& records, std::ostream& out) {
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

void write_jsonl(const std::vector<TurnRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    write_jsonl(records, out);
    if (!out) throw Error("write failed for " + path.string());
}

std::vector<TurnRecord> read_jsonl(std::istream& in) {
    std::vector<TurnRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(std::string("invalid JSON: ") + e.what(), lineno);
        }
        out.push_back(record_from_json(j, lineno));
    }
    return out;
}

std::vector<TurnRecord> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("cannot open dataset " + path.string());
    return read_jsonl(in);
}

TurnSampler::TurnSampler(const GenerationSource& src, std::size_t num_categories) : src_(&src) {
    src.validate();
    for (const auto& t : src.templates) {
        if (t.label == 1 && t.category_slot) coded_preference_.push_back(&t);
        if (t.label == 0) neutral_.push_back(&t);
    }
    const auto all = src.topics.categories();
    const std::size_t families = coded_preference_.empty() ? 0 : all.size();
    if (num_categories < 2 || num_categories > families) {
        throw DataError("requested " + std::to_string(num_categories) + " categories but " +
                        std::to_string(families) + " category-coded families are available (need at least 2)");
    }
    if (neutral_.empty()) throw DataError("no neutral templates to fill the gaps");
    categories_.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(num_categories));
    topics_by_category_.resize(num_categories);
    for (const auto& p : src.topics.topics) {
        auto it = std::find(categories_.begin(), categories_.end(), p.category);
        if (it != categories_.end()) topics_by_category_[static_cast<std::size_t>(it - categories_.begin())].push_back(&p);
    }
}

TurnRecord TurnSampler::render(const Template& t, const Topic& topic, Rng& rng) const {
    const std::size_t op = rng.below(opinion_choices(*src_, t, topic));
    const std::size_t ob = rng.below(object_choices(*src_, t, topic));
    return render_combo(*src_, {&t, &topic, op, ob});
}

TurnRecord TurnSampler::preference(std::size_t category, Rng& rng) const {
    if (category >= categories_.size()) throw DataError("category index " + std::to_string(category) + " out of range");
    const Template& t = *coded_preference_[rng.below(coded_preference_.size())];
    const auto& topics = topics_by_category_[category];
    return render(t, *topics[rng.below(topics.size())], rng);
}

TurnRecord TurnSampler::neutral(Rng& rng) const {
    const Template& t = *neutral_[rng.below(neutral_.size())];
    const auto& topics = src_->topics.topics;
    return render(t, topics[rng.below(topics.size())], rng);
}

std::vector<CategorySequence> make_category_corpus(const GenerationSource& src, const CategoryCorpusSpec& spec,
                                                   std::uint64_t seed) {
    for (std::size_t g : spec.gaps) {
        if (g == 0) throw DataError("gap must be at least 1");
    }
    const TurnSampler sampler(src, spec.num_categories);
    Rng rng(derive_seed(seed, 0xc0de));
    std::vector<CategorySequence> corpus;
    std::int64_t next_id = 0;
    for (std::size_t gap : spec.gaps) {
        for (std::size_t s = 0; s < spec.sequences_per_gap; ++s) {
            CategorySequence seq;
            seq.gap = gap;
            for (std::size_t i = 0; i < spec.length; ++i) {
                TurnRecord r;
                if ((i + 1) % gap == 0) {
                    const auto c = static_cast<std::size_t>(rng.below(spec.num_categories));
                    r = sampler.preference(c, rng);
                    seq.targets.emplace_back(c);
                } else {
                    r = sampler.neutral(rng);
                    seq.targets.emplace_back(std::nullopt);
                }
                r.id = next_id++;
                seq.turns.push_back(std::move(r));
            }
            corpus.push_back(std::move(seq));
        }
    }
    return corpus;
}

}  // namespace prefmem
