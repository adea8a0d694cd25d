#include "prefmem/textenc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "prefmem/error.hpp"
#include "prefmem/tensor_io.hpp"

namespace prefmem {

namespace {

// Record separator byte; the tokenizer can never produce it.
const std::string kSeparator = "\x1e";

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

void EncoderConfig::validate() const {
    if (dim < 8) throw Error("encoder dim must be >= 8, got " + std::to_string(dim));
    if (ngram_orders.empty()) throw Error("encoder needs at least one n-gram order");
    for (int n : ngram_orders) {
        if (n < 1 || n > 3) throw Error("n-gram order must be 1, 2 or 3, got " + std::to_string(n));
    }
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    auto byte_at = [&](std::size_t i) { return i < text.size() ? static_cast<unsigned char>(text[i]) : 0; };
    // Width of a separator-or-apostrophe at i: 0 if i starts a word byte.
    // U+2000..U+203F (E2 80 xx) is general punctuation; E2 80 99 is the
    // typographic apostrophe.
    auto punct_width = [&](std::size_t i) -> std::size_t {
        const unsigned char c = byte_at(i);
        if (c == 0xE2 && byte_at(i + 1) == 0x80 && byte_at(i + 2) >= 0x80 && byte_at(i + 2) <= 0xBF) return 3;
        return is_word_byte(c) ? 0 : 1;
    };
    auto is_apostrophe = [&](std::size_t i) {
        return byte_at(i) == '\'' || (byte_at(i) == 0xE2 && byte_at(i + 1) == 0x80 && byte_at(i + 2) == 0x99);
    };

    std::size_t i = 0;
    while (i < text.size()) {
        const std::size_t w = punct_width(i);
        if (w == 0) {
            const unsigned char c = byte_at(i);
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
            ++i;
            continue;
        }
        if (is_apostrophe(i) && !current.empty() && i + w < text.size() && punct_width(i + w) == 0) {
            current.push_back('\'');
        } else {
            flush();
        }
        i += w;
    }
    flush();
    return tokens;
}

EmbeddingVector encode(const EncoderConfig& cfg, std::string_view agent_text, std::string_view user_text) {
    std::vector<std::string> seq = tokenize(agent_text);
    seq.push_back(kSeparator);
    for (auto& t : tokenize(user_text)) seq.push_back(std::move(t));

    EmbeddingVector out(cfg.dim);
    const std::uint64_t seed_mix = finalize(cfg.hash_seed ^ 0x6a09e667f3bcc909ULL);
    for (int order : cfg.ngram_orders) {
        const auto n = static_cast<std::size_t>(order);
        if (seq.size() < n) continue;
        for (std::size_t start = 0; start + n <= seq.size(); ++start) {
            if (n == 1 && seq[start] == kSeparator) continue;
            std::uint64_t h = 0xcbf29ce484222325ULL ^ static_cast<std::uint64_t>(n);
            for (std::size_t k = 0; k < n; ++k) {
                if (k) h = fnv1a(h, "\x1f");
                h = fnv1a(h, seq[start + k]);
            }
            h = finalize(h ^ seed_mix);
            const double sign = (h >> 63) ? -1.0 : 1.0;
            out[h % cfg.dim] += sign;
        }
    }
    if (cfg.normalize) {
        const double norm = norm2(out);
        if (norm > 0.0) {
            for (auto& x : out) x /= norm;
        }
    }
    return out;
}

std::vector<EmbeddingVector> encode_batch_serial(const EncoderConfig& cfg, std::span<const TurnText> turns) {
    std::vector<EmbeddingVector> out;
    out.reserve(turns.size());
    for (const auto& t : turns) out.push_back(encode(cfg, t.agent, t.user));
    return out;
}

std::vector<EmbeddingVector> encode_batch(const EncoderConfig& cfg, std::span<const TurnText> turns) {
    std::vector<EmbeddingVector> out(turns.size());
    const auto n = static_cast<std::ptrdiff_t>(turns.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& t = turns[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = encode(cfg, t.agent, t.user);
    }
    return out;
}

HashingEncoder::HashingEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

EmbeddingVector HashingEncoder::embed(std::string_view, std::string_view agent, std::string_view user) const {
    return encode(cfg_, agent, user);
}

EmbeddingTable load_external_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open embedding file " + path.string());
    EmbeddingTable table;
    std::size_t dim = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') throw DataError("CRLF line ending", lineno);
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw DataError("expected 'id<TAB>values'", lineno);
        std::string id = line.substr(0, tab);
        Vector v = parse_real_list(std::string_view(line).substr(tab + 1), lineno);
        if (v.empty()) throw DataError("record '" + id + "' has no values", lineno);
        if (table.empty()) {
            dim = v.dim();
        } else if (v.dim() != dim) {
            throw DataError("record '" + id + "' has dim " + std::to_string(v.dim()) + ", expected " +
                                std::to_string(dim),
                            lineno);
        }
        if (!table.emplace(id, std::move(v)).second) throw DataError("duplicate id '" + id + "'", lineno);
    }
    return table;
}

void write_external_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& [id, v] : table) out << id << '\t' << format_real_list(v.values()) << '\n';
}

PrecomputedEmbeddings::PrecomputedEmbeddings(EmbeddingTable table) : table_(std::move(table)) {
    if (!table_.empty()) dim_ = table_.begin()->second.dim();
}

EmbeddingVector PrecomputedEmbeddings::embed(std::string_view id, std::string_view, std::string_view) const {
    auto it = table_.find(id);
    if (it == table_.end()) throw DataError("no precomputed embedding for turn '" + std::string(id) + "'");
    return it->second;
}

}  // namespace prefmem
