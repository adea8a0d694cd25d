#pragma once

// Rule-based preference detection over user utterances: a first-person
// trigger phrase that opens a clause, followed within a small token window by
// an opinionated word. Strong-sentiment triggers and negated triggers
// ("i don't like") fire on their own.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace prefmem {

using Phrase = std::vector<std::string>;

struct RuleSet {
    std::vector<Phrase> triggers;
    std::vector<Phrase> strong_triggers;
    std::set<std::string, std::less<>> opinion_lexicon;
    std::vector<Phrase> negation_markers;
    std::size_t window = 5;

    // Triggers non-empty, all entries lowercase.
    void validate() const;

    // Sectioned plain text: [triggers], [strong], [opinions], [negations];
    // one entry per line, '#' starts a comment.
    static RuleSet parse(std::string_view text);
    static RuleSet load(const std::filesystem::path& path);
    static RuleSet defaults();
};

enum class Label { NonPreference = 0, Preference = 1 };

struct RuleFiring {
    std::string rule;
    std::string detail;
    friend bool operator==(const RuleFiring&, const RuleFiring&) = default;
};

struct Detection {
    Label label = Label::NonPreference;
    std::optional<std::string> matched_trigger;
    std::optional<std::string> matched_opinion;
    std::vector<RuleFiring> trace;

    bool is_preference() const noexcept { return label == Label::Preference; }
    friend bool operator==(const Detection&, const Detection&) = default;
};

// Rule names used in traces.
namespace rules {
inline constexpr std::string_view kTrigger = "trigger";
inline constexpr std::string_view kStrong = "strong-trigger";
inline constexpr std::string_view kNegated = "negated-trigger";
inline constexpr std::string_view kNotClauseStart = "not-clause-start";
inline constexpr std::string_view kOpinion = "opinion";
inline constexpr std::string_view kNoOpinion = "no-opinion-in-window";
}  // namespace rules

Detection detect(const RuleSet& rules, std::string_view user_text);

// One "rule: detail" line per firing, or "no trigger matched" for an empty
// trace.
std::string explain(const Detection& d);

}  // namespace prefmem
