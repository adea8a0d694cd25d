#pragma once

// Template-driven synthesis of labeled single-turn Agent/User exchanges,
// JSONL dataset I/O, and category-coded event sequences for memory training.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prefmem/rng.hpp"

namespace prefmem {

enum class TemplateKind { ExplicitPreference, ImplicitComplaint, NeutralDefinition, NeutralChitchat };

std::string_view to_string(TemplateKind k);
TemplateKind parse_template_kind(std::string_view s);
inline int label_of(TemplateKind k) {
    return k == TemplateKind::ExplicitPreference || k == TemplateKind::ImplicitComplaint ? 1 : 0;
}

struct Template {
    std::string id;
    TemplateKind kind = TemplateKind::NeutralChitchat;
    int label = 0;
    std::string style = "formal";
    // "topic": preference records carry the topic's category.
    std::optional<std::string> category_slot;
    std::string agent_pattern;
    std::string user_pattern;

    bool uses(std::string_view slot) const;
};

// Versioned, '|'-delimited template file (see data/templates.txt).
std::vector<Template> parse_templates(std::string_view text);
std::vector<Template> load_templates(const std::filesystem::path& path);

struct Topic {
    std::string name;
    std::string category;
};

struct TopicList {
    std::vector<Topic> topics;

    // Unique, non-empty names.
    void validate() const;
    // Distinct categories in first-appearance order.
    std::vector<std::string> categories() const;

    // One topic per line, optionally followed by TAB and a category.
    static TopicList parse(std::string_view text);
    static TopicList load(const std::filesystem::path& path);
};

struct SlotValues {
    std::vector<std::string> opinions;
    std::vector<std::string> objects;
};

// Per-category slot fillers: "[category]" sections with "opinion:" and
// "object:" comma lists.
using SlotLexicon = std::map<std::string, SlotValues, std::less<>>;
SlotLexicon parse_slots(std::string_view text);
SlotLexicon load_slots(const std::filesystem::path& path);

// Everything the generator draws from.
struct GenerationSource {
    std::vector<Template> templates;
    TopicList topics;
    SlotLexicon slots;

    void validate() const;
    static GenerationSource defaults();
    static GenerationSource casual_defaults();
};

struct TurnRecord {
    std::int64_t id = 0;
    std::string topic;
    std::string template_id;
    std::string agent;
    std::string user;
    int label = 0;
    std::optional<std::string> category;

    friend bool operator==(const TurnRecord&, const TurnRecord&) = default;
};

// "Agent: ...\nUser: ..."
std::string render_turn(const TurnRecord& r);

struct GenerationCounts {
    std::size_t preference = 3537;
    std::size_t non_preference = 4915;
};

// Number of distinct (template, topic, opinion, object) combinations per
// label, which bounds what generate can produce without duplicates.
struct Capacity {
    std::size_t preference = 0;
    std::size_t non_preference = 0;
};
Capacity capacity(const GenerationSource& src);

// Exactly the requested counts, no duplicate (agent, user) pairs, records
// shuffled together and numbered from 0. Throws DataError if the combination
// space is too small.
std::vector<TurnRecord> generate(const GenerationSource& src, GenerationCounts counts, std::uint64_t seed);

// Every distinct (agent, user) rendering the source can produce, in template
// order. Used for exhaustive checks of the detector against the templates.
std::vector<TurnRecord> enumerate_records(const GenerationSource& src);

void write_jsonl(const std::vector<TurnRecord>& records, std::ostream& out);
void write_jsonl(const std::vector<TurnRecord>& records, const std::filesystem::path& path);
std::vector<TurnRecord> read_jsonl(std::istream& in);
std::vector<TurnRecord> read_jsonl(const std::filesystem::path& path);

// Renders single turns on demand: a preference turn coded with one of the
// first K categories, or a neutral turn on any topic.
class TurnSampler {
public:
    TurnSampler(const GenerationSource& src, std::size_t num_categories);

    std::size_t num_categories() const noexcept { return categories_.size(); }
    const std::vector<std::string>& categories() const noexcept { return categories_; }

    TurnRecord preference(std::size_t category, Rng& rng) const;
    TurnRecord neutral(Rng& rng) const;

private:
    TurnRecord render(const Template& t, const Topic& topic, Rng& rng) const;

    const GenerationSource* src_;
    std::vector<std::string> categories_;
    std::vector<const Template*> coded_preference_;
    std::vector<const Template*> neutral_;
    std::vector<std::vector<const Topic*>> topics_by_category_;
};

// A conversation in which every gap-th turn states a preference from one of K
// categories; targets[i] is set on exactly those turns.
struct CategorySequence {
    std::size_t gap = 0;
    std::vector<TurnRecord> turns;
    std::vector<std::optional<std::size_t>> targets;
};

struct CategoryCorpusSpec {
    std::size_t num_categories = 4;
    std::vector<std::size_t> gaps{3};
    std::size_t sequences_per_gap = 100;
    std::size_t length = 30;
};

// Preference turns sit at indices gap-1, 2*gap-1, ...; each draws its
// category uniformly. Throws DataError for gap 0 or K above the number of
// category-coded families.
std::vector<CategorySequence> make_category_corpus(const GenerationSource& src, const CategoryCorpusSpec& spec,
                                                   std::uint64_t seed);

}  // namespace prefmem
