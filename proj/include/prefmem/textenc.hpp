#pragma once

// Sentence encoder: signed feature hashing of word n-grams over the joint
// "agent [SEP] user" token sequence, plus an adapter for embeddings computed
// offline by an external model.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "prefmem/numerics.hpp"

namespace prefmem {

using EmbeddingVector = Vector;

struct EncoderConfig {
    std::size_t dim = 64;
    std::vector<int> ngram_orders{1, 2};
    std::uint64_t hash_seed = 0x9f1c3a5d27e4b601ULL;
    bool normalize = true;

    // Throws Error when dim < 8 or an order is outside {1,2,3}.
    void validate() const;
};

// Lowercased words. Splits on anything that is not an ASCII letter/digit or a
// non-ASCII byte; an apostrophe (ASCII or U+2019) between two word characters
// stays inside the word.
std::vector<std::string> tokenize(std::string_view text);

EmbeddingVector encode(const EncoderConfig& cfg, std::string_view agent_text, std::string_view user_text);

struct TurnText {
    std::string agent;
    std::string user;
};

// Parallel over turns; element i equals encode(cfg, turns[i]...) bit for bit.
std::vector<EmbeddingVector> encode_batch(const EncoderConfig& cfg, std::span<const TurnText> turns);
std::vector<EmbeddingVector> encode_batch_serial(const EncoderConfig& cfg, std::span<const TurnText> turns);

// Anything that turns a conversation turn into an embedding. `id` identifies
// the turn for providers backed by precomputed vectors.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector embed(std::string_view id, std::string_view agent, std::string_view user) const = 0;
};

class HashingEncoder final : public EmbeddingProvider {
public:
    explicit HashingEncoder(EncoderConfig cfg);
    std::size_t dim() const override { return cfg_.dim; }
    EmbeddingVector embed(std::string_view id, std::string_view agent, std::string_view user) const override;
    const EncoderConfig& config() const noexcept { return cfg_; }

private:
    EncoderConfig cfg_;
};

using EmbeddingTable = std::map<std::string, EmbeddingVector, std::less<>>;

// Sidecar format: `id<TAB>v1,v2,...,vl` per line. Blank lines are skipped.
// Throws DataError (with line number) on malformed lines, duplicate ids or
// inconsistent dims; MissingArtifact if the file does not exist.
EmbeddingTable load_external_embeddings(const std::filesystem::path& path);
void write_external_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

class PrecomputedEmbeddings final : public EmbeddingProvider {
public:
    explicit PrecomputedEmbeddings(EmbeddingTable table);
    std::size_t dim() const override { return dim_; }
    // Throws DataError for an unknown id.
    EmbeddingVector embed(std::string_view id, std::string_view agent, std::string_view user) const override;

private:
    EmbeddingTable table_;
    std::size_t dim_ = 0;
};

}  // namespace prefmem
