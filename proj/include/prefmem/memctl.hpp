#pragma once

// Gated preference memory.
//
// Preference turn with encoder embedding e:
//   Ebar = W_in e
//   f    = sigmoid(W_MM M_prev + W_EM Ebar + b)
//   M    = f * M_prev + (1 - f) * Ebar          (elementwise)
// Non-preference turn: M = M_prev, bit for bit.
//
// Read-outs: soft prompt T = W_M M, category probe softmax(W_out M + b_out).
// Training minimizes summed cross-entropy of the probe at every turn that
// carries a target, with exact gradients through the unrolled recurrence.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prefmem/classifier.hpp"
#include "prefmem/numerics.hpp"
#include "prefmem/textenc.hpp"

namespace prefmem {

struct MemoryDims {
    std::size_t d = 32;   // memory
    std::size_t l = 64;   // encoder embedding
    std::size_t K = 4;    // preference categories
    std::size_t de = 64;  // soft-prompt (token embedding) width

    friend bool operator==(const MemoryDims&, const MemoryDims&) = default;
};

struct GateParams {
    Matrix W_MM;   // d x d
    Matrix W_EM;   // d x d
    Vector b;      // d
    Matrix W_in;   // d x l
    Matrix W_out;  // K x d
    Vector b_out;  // K
    Matrix W_M;    // de x d

    MemoryDims dims() const noexcept { return {W_MM.rows(), W_in.cols(), W_out.rows(), W_M.rows()}; }

    static GateParams zeros(const MemoryDims& dims);
    // Recurrent, input and soft-prompt weights uniform in [-0.1, 0.1); the
    // probe head starts at zero so the initial prediction is uniform.
    static GateParams random(const MemoryDims& dims, std::uint64_t seed);

    void validate() const;

    friend bool operator==(const GateParams&, const GateParams&) = default;
};

// The six tensors the cross-entropy objective trains (W_M is not among them).
struct GateGradients {
    Matrix W_MM;
    Matrix W_EM;
    Vector b;
    Matrix W_in;
    Matrix W_out;
    Vector b_out;

    static GateGradients zeros(const MemoryDims& dims);
    double norm() const;
    void scale(double s);
    void add(const GateGradients& other);
};

// Visits the trainable tensors of params/gradients in a fixed order.
std::vector<std::span<double>> trainable_views(GateParams& g);
std::vector<std::span<double>> gradient_views(GateGradients& g);

struct MemoryState {
    Vector M;
    std::size_t turn_index = 0;

    static MemoryState initial(std::size_t d) { return {Vector(d), 0}; }
    friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

struct TurnEvent {
    bool preference = false;
    std::optional<EmbeddingVector> embedding;  // present exactly when preference
    std::optional<std::size_t> category;       // training/eval target

    static TurnEvent neutral(std::optional<std::size_t> target = std::nullopt) { return {false, std::nullopt, target}; }
    static TurnEvent preferred(EmbeddingVector e, std::optional<std::size_t> target = std::nullopt) {
        return {true, std::move(e), target};
    }
};

Vector project_input(const GateParams& g, const EmbeddingVector& e);
Vector gate(const GateParams& g, const Vector& M_prev, const Vector& E_bar);

// Throws DataError when a preference event has no embedding (or a neutral
// event has one).
MemoryState update(const GateParams& g, const MemoryState& state, const TurnEvent& ev);

Vector soft_prompt(const GateParams& g, const MemoryState& state);
Vector predict_category(const GateParams& g, const MemoryState& state);

struct StepCache {
    bool preference = false;
    EmbeddingVector e;
    Vector M_prev;
    Vector E_bar;
    Vector f;
    Vector M;
    std::optional<Vector> probs;  // set when the event carried a target
};

struct QueryPrediction {
    std::size_t step = 0;
    Vector probs;
};

struct SequenceForward {
    MemoryState final_state;
    std::vector<QueryPrediction> predictions;
    std::vector<StepCache> cache;
    double loss = 0.0;  // summed CE over targeted steps
};

SequenceForward forward_sequence(const GateParams& g, std::span<const TurnEvent> events);

// Gradients of the summed CE loss. `targets[i]` must be set exactly where the
// forward pass emitted a prediction; otherwise DataError.
GateGradients backward_sequence(const GateParams& g, const SequenceForward& fwd,
                                std::span<const std::optional<std::size_t>> targets);

std::vector<std::optional<std::size_t>> targets_of(std::span<const TurnEvent> events);

using EventSequence = std::vector<TurnEvent>;

struct MemoryTrainConfig {
    TrainConfig base{.epochs = 200, .lr = 0.5, .batch = 16, .seed = 11, .train_fraction = 0.9, .val_fraction = 0.1,
                     .test_fraction = 0.0};
    double clip_norm = 5.0;
};

struct MemoryTrainResult {
    GateParams params;
    std::vector<EpochStats> history;  // loss = mean CE per query, accuracy = argmax hit rate
};

// Mini-batch SGD over sequences with global-norm clipping. Only the six
// trainable tensors change; W_M and anything outside GateParams (encoder,
// classifier) are untouched. Throws DataError on an empty corpus or a target
// outside [0, K).
MemoryTrainResult train_controller(const MemoryTrainConfig& cfg, std::span<const EventSequence> corpus,
                                   const MemoryDims& dims, const std::optional<GateParams>& initial = std::nullopt);

// Query-level loss and accuracy of `g` over a corpus.
std::pair<double, double> controller_loss_accuracy(const GateParams& g, std::span<const EventSequence> corpus);

// Hand-set copy-through solution: gate bias -50 (f ~ 0, so memory becomes the
// newest projected embedding), W_in and W_out identity-like, zero recurrent
// weights. With one-hot category codes as embeddings the probe recovers the
// most recent preference exactly. Requires K <= min(d, l).
GateParams copy_witness(const MemoryDims& dims, double decode_scale = 20.0);

// One-hot code for category c in R^l.
EmbeddingVector category_code(std::size_t category, std::size_t l);

// Header "prefmem v1 d=<d> l=<l> K=<K> de=<de>" then tensors
// W_MM, W_EM, b, W_in, W_out, b_out, W_M.
void save_controller(const GateParams& g, std::ostream& out);
void save_controller(const GateParams& g, const std::filesystem::path& path);
GateParams load_controller(std::istream& in);
GateParams load_controller(const std::filesystem::path& path);

// "turn=<t> M=<v1,...,vd>"
std::string memory_snapshot(const MemoryState& s);
MemoryState parse_memory_snapshot(std::string_view line);

}  // namespace prefmem
