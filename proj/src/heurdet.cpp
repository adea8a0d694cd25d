#include "prefmem/heurdet.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "prefmem/default_data.hpp"
#include "prefmem/error.hpp"
#include "prefmem/textenc.hpp"

namespace prefmem {

namespace {

struct Token {
    std::string text;
    bool clause_start = false;
};

bool is_clause_break(char c) {
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '\n';
}

std::vector<Token> clause_tokens(std::string_view text) {
    std::vector<Token> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = start;
        while (end < text.size() && !is_clause_break(text[end])) ++end;
        bool first = true;
        for (auto& t : tokenize(text.substr(start, end - start))) {
            const bool after_conj = !out.empty() && !first && (out.back().text == "and" || out.back().text == "but");
            out.push_back({std::move(t), first || after_conj});
            first = false;
        }
        start = end + 1;
    }
    return out;
}

std::string join(const Phrase& p) {
    std::string s;
    for (const auto& w : p) {
        if (!s.empty()) s.push_back(' ');
        s += w;
    }
    return s;
}

bool matches_at(const std::vector<Token>& toks, std::size_t pos, const Phrase& p, std::size_t from = 0) {
    if (pos + (p.size() - from) > toks.size()) return false;
    for (std::size_t k = from; k < p.size(); ++k) {
        if (toks[pos + k - from].text != p[k]) return false;
    }
    return true;
}

// Length in tokens of the trigger occurrence at pos, or 0. Sets `negated`
// when a negation marker sits between the first trigger word and the rest.
std::size_t match_trigger(const RuleSet& rules, const std::vector<Token>& toks, std::size_t pos, const Phrase& trig,
                          bool& negated) {
    negated = false;
    if (matches_at(toks, pos, trig)) return trig.size();
    if (trig.size() < 2 || toks[pos].text != trig[0]) return 0;
    for (const auto& neg : rules.negation_markers) {
        if (matches_at(toks, pos + 1, neg) && matches_at(toks, pos + 1 + neg.size(), trig, 1)) {
            negated = true;
            return trig.size() + neg.size();
        }
    }
    return 0;
}

std::optional<std::string> opinion_word(const RuleSet& rules, std::string_view tok) {
    if (rules.opinion_lexicon.contains(tok)) return std::string(tok);
    if (tok.size() > 3 && tok.back() == 's') {
        auto stem = tok.substr(0, tok.size() - 1);
        if (rules.opinion_lexicon.contains(stem)) return std::string(stem);
    }
    return std::nullopt;
}

Phrase to_phrase(std::string_view line) {
    std::istringstream ss{std::string(line)};
    Phrase p;
    std::string w;
    while (ss >> w) p.push_back(w);
    return p;
}

bool is_lower(const std::string& s) {
    return std::none_of(s.begin(), s.end(), [](unsigned char c) { return std::isupper(c); });
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

void RuleSet::validate() const {
    if (triggers.empty() && strong_triggers.empty()) throw DataError("rule set has no trigger phrases");
    auto check = [](const std::vector<Phrase>& ps, const char* what) {
        for (const auto& p : ps) {
            if (p.empty()) throw DataError(std::string("empty ") + what + " entry");
            for (const auto& w : p) {
                if (!is_lower(w)) throw DataError(std::string(what) + " entry '" + w + "' is not lowercase");
            }
        }
    };
    check(triggers, "trigger");
    check(strong_triggers, "strong trigger");
    check(negation_markers, "negation");
    for (const auto& w : opinion_lexicon) {
        if (!is_lower(w)) throw DataError("opinion entry '" + w + "' is not lowercase");
    }
}

RuleSet RuleSet::parse(std::string_view text) {
    RuleSet rules;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw DataError("unterminated section header", lineno);
            section = line.substr(1, line.size() - 2);
            if (section != "triggers" && section != "strong" && section != "opinions" && section != "negations") {
                throw DataError("unknown section [" + section + "]", lineno);
            }
            continue;
        }
        if (section.empty()) throw DataError("entry outside of any section", lineno);
        if (!is_lower(line)) throw DataError("entry '" + line + "' is not lowercase", lineno);
        if (section == "opinions") {
            rules.opinion_lexicon.insert(line);
            continue;
        }
        Phrase p = to_phrase(line);
        if (section == "triggers") {
            rules.triggers.push_back(std::move(p));
        } else if (section == "strong") {
            rules.strong_triggers.push_back(std::move(p));
        } else {
            rules.negation_markers.push_back(std::move(p));
        }
    }
    rules.validate();
    return rules;
}

RuleSet RuleSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open rule file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

RuleSet RuleSet::defaults() { return parse(data::rules_txt()); }

Detection detect(const RuleSet& rules, std::string_view user_text) {
    Detection d;
    const auto toks = clause_tokens(user_text);
    auto fire = [&](std::string_view rule, std::string detail) { d.trace.push_back({std::string(rule), std::move(detail)}); };
    auto accept = [&](const Phrase& trig) {
        d.label = Label::Preference;
        d.matched_trigger = join(trig);
    };

    for (std::size_t pos = 0; pos < toks.size(); ++pos) {
        bool negated = false;
        for (const auto& trig : rules.strong_triggers) {
            if (match_trigger(rules, toks, pos, trig, negated) == 0) continue;
            fire(negated ? rules::kNegated : rules::kStrong, "'" + join(trig) + "' at token " + std::to_string(pos));
            accept(trig);
            return d;
        }
        for (const auto& trig : rules.triggers) {
            const std::size_t len = match_trigger(rules, toks, pos, trig, negated);
            if (len == 0) continue;
            const std::string where = "'" + join(trig) + "' at token " + std::to_string(pos);
            if (negated) {
                fire(rules::kNegated, where);
                accept(trig);
                return d;
            }
            if (!toks[pos].clause_start) {
                fire(rules::kNotClauseStart, where);
                continue;
            }
            fire(rules::kTrigger, where);
            const std::size_t stop = std::min(toks.size(), pos + len + rules.window);
            for (std::size_t k = pos + len; k < stop; ++k) {
                if (auto op = opinion_word(rules, toks[k].text)) {
                    fire(rules::kOpinion, "'" + *op + "' at token " + std::to_string(k));
                    accept(trig);
                    d.matched_opinion = *op;
                    return d;
                }
            }
            fire(rules::kNoOpinion, "'" + join(trig) + "' window " + std::to_string(rules.window));
        }
    }
    return d;
}

std::string explain(const Detection& d) {
    if (d.trace.empty()) return "no trigger matched";
    std::string out;
    for (std::size_t i = 0; i < d.trace.size(); ++i) {
        if (i) out.push_back('\n');
        out += d.trace[i].rule + ": " + d.trace[i].detail;
    }
    return out;
}

}  // namespace prefmem
