#pragma once

// Binary preference classifier: a two-layer tanh MLP with a single sigmoid
// logit over frozen sentence embeddings, trained by mini-batch SGD on mean
// binary cross-entropy.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "prefmem/metrics.hpp"
#include "prefmem/numerics.hpp"
#include "prefmem/textenc.hpp"

namespace prefmem {

struct ClassifierParams {
    Matrix W1;  // h x l
    Vector b1;  // h
    Matrix W2;  // 1 x h
    Vector b2;  // 1

    std::size_t input_dim() const noexcept { return W1.cols(); }
    std::size_t hidden() const noexcept { return W1.rows(); }

    static ClassifierParams zeros(std::size_t input_dim, std::size_t hidden);
    // Every entry uniform in [-0.1, 0.1).
    static ClassifierParams random(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);

    // Shapes consistent and entries finite.
    void validate() const;

    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

// W2 tanh(W1 e + b1) + b2
double forward(const ClassifierParams& p, const EmbeddingVector& e);

// 1 iff sigmoid(logit) >= threshold.
int predict_from_logit(double logit, double threshold = 0.5);
int predict(const ClassifierParams& p, const EmbeddingVector& e, double threshold = 0.5);

struct LabeledExample {
    EmbeddingVector embedding;
    int label = 0;
    std::string group;  // topic; drives the held-out split when non-empty
};

// Mean BCE over `batch` and its gradient, accumulated into `grad` (which must
// be shaped like `p`; it is overwritten).
double loss_and_gradient(const ClassifierParams& p, std::span<const LabeledExample> batch, ClassifierParams& grad);
double mean_loss(const ClassifierParams& p, std::span<const LabeledExample> examples);

struct TrainConfig {
    std::size_t epochs = 50;
    double lr = 0.05;
    std::size_t batch = 32;
    std::uint64_t seed = 7;
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;

    // lr > 0, batch > 0, fractions non-negative and summing to 1.
    void validate() const;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

// Assigns whole groups to train/val/test when every example has a group,
// otherwise individual rows. Deterministic under seed.
DataSplit split_dataset(std::span<const LabeledExample> data, const TrainConfig& cfg);

struct ClassifierTrainResult {
    ClassifierParams params;
    std::vector<EpochStats> history;
    DataSplit split;
};

// Splits `data`, then trains on the train split. `initial` overrides the
// seeded random initialization (used to resume). Throws DataError if the
// training split lacks either class.
ClassifierTrainResult train_classifier(const TrainConfig& cfg, std::span<const LabeledExample> data,
                                       std::size_t hidden = 32,
                                       const std::optional<ClassifierParams>& initial = std::nullopt);

// Logits for many embeddings; parallel version is bit-identical to serial.
std::vector<double> logits(const ClassifierParams& p, std::span<const LabeledExample> examples);
std::vector<double> logits_serial(const ClassifierParams& p, std::span<const LabeledExample> examples);

// Throws DataError on an empty split.
EvalMetrics evaluate(const ClassifierParams& p, std::span<const LabeledExample> examples, double threshold = 0.5);

// Header "prefclf v1 l=<l> h=<h>" followed by tensors W1, b1, W2, b2.
void save_classifier(const ClassifierParams& p, std::ostream& out);
void save_classifier(const ClassifierParams& p, const std::filesystem::path& path);
ClassifierParams load_classifier(std::istream& in);
ClassifierParams load_classifier(const std::filesystem::path& path);

}  // namespace prefmem
