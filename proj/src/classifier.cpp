#include "prefmem/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "prefmem/error.hpp"
#include "prefmem/rng.hpp"
#include "prefmem/tensor_io.hpp"

namespace prefmem {

namespace {

struct Activations {
    Vector hidden;  // tanh(W1 e + b1)
    double logit = 0.0;
};

Activations run(const ClassifierParams& p, const EmbeddingVector& e) {
    if (e.dim() != p.input_dim()) {
        throw DimensionError("classifier expects embeddings of dim " + std::to_string(p.input_dim()) + ", got " +
                             std::to_string(e.dim()));
    }
    Activations a;
    a.hidden = matvec(p.W1, e);
    for (std::size_t i = 0; i < a.hidden.dim(); ++i) a.hidden[i] = std::tanh(a.hidden[i] + p.b1[i]);
    a.logit = dot(p.W2.row(0), a.hidden.values()) + p.b2[0];
    return a;
}

void fill_uniform(std::span<double> xs, Rng& rng) {
    for (auto& x : xs) x = rng.uniform(-0.1, 0.1);
}

void sgd_step(ClassifierParams& p, const ClassifierParams& g, double lr) {
    axpy(-lr, g.W1.values(), p.W1.values());
    axpy(-lr, g.b1.values(), p.b1.values());
    axpy(-lr, g.W2.values(), p.W2.values());
    axpy(-lr, g.b2.values(), p.b2.values());
}

std::pair<double, double> loss_and_accuracy(const ClassifierParams& p, std::span<const LabeledExample> data) {
    if (data.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const auto ls = logits(p, data);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        loss += bce_loss(ls[i], data[i].label);
        correct += predict_from_logit(ls[i]) == data[i].label;
    }
    const auto n = static_cast<double>(data.size());
    return {loss / n, static_cast<double>(correct) / n};
}

std::vector<LabeledExample> gather(std::span<const LabeledExample> data, const std::vector<std::size_t>& idx) {
    std::vector<LabeledExample> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data[i]);
    return out;
}

}  // namespace

ClassifierParams ClassifierParams::zeros(std::size_t input_dim, std::size_t hidden) {
    return {Matrix(hidden, input_dim), Vector(hidden), Matrix(1, hidden), Vector(1)};
}

ClassifierParams ClassifierParams::random(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
    ClassifierParams p = zeros(input_dim, hidden);
    Rng rng(derive_seed(seed, 0xc1a5));
    fill_uniform(p.W1.values(), rng);
    fill_uniform(p.b1.values(), rng);
    fill_uniform(p.W2.values(), rng);
    fill_uniform(p.b2.values(), rng);
    return p;
}

void ClassifierParams::validate() const {
    if (b1.dim() != W1.rows() || W2.rows() != 1 || W2.cols() != W1.rows() || b2.dim() != 1) {
        throw DimensionError("inconsistent classifier shapes: W1 " + W1.shape() + ", b1 " + std::to_string(b1.dim()) +
                             ", W2 " + W2.shape() + ", b2 " + std::to_string(b2.dim()));
    }
    if (!all_finite(W1.values()) || !all_finite(b1.values()) || !all_finite(W2.values()) || !all_finite(b2.values())) {
        throw DataError("classifier parameters contain non-finite values");
    }
}

double forward(const ClassifierParams& p, const EmbeddingVector& e) { return run(p, e).logit; }

int predict_from_logit(double logit, double threshold) { return sigmoid(logit) >= threshold ? 1 : 0; }

int predict(const ClassifierParams& p, const EmbeddingVector& e, double threshold) {
    return predict_from_logit(forward(p, e), threshold);
}

double loss_and_gradient(const ClassifierParams& p, std::span<const LabeledExample> batch, ClassifierParams& grad) {
    grad = ClassifierParams::zeros(p.input_dim(), p.hidden());
    if (batch.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    Vector dz(p.hidden());
    for (const auto& ex : batch) {
        const Activations a = run(p, ex.embedding);
        loss += bce_loss(a.logit, ex.label);
        const double ds = (sigmoid(a.logit) - ex.label) * scale;
        grad.b2[0] += ds;
        axpy(ds, a.hidden.values(), grad.W2.row(0));
        for (std::size_t j = 0; j < p.hidden(); ++j) {
            dz[j] = ds * p.W2(0, j) * (1.0 - a.hidden[j] * a.hidden[j]);
        }
        axpy(1.0, dz.values(), grad.b1.values());
        add_outer(grad.W1, dz, ex.embedding);
    }
    return loss * scale;
}

double mean_loss(const ClassifierParams& p, std::span<const LabeledExample> examples) {
    double loss = 0.0;
    for (const auto& ex : examples) loss += bce_loss(forward(p, ex.embedding), ex.label);
    return examples.empty() ? 0.0 : loss / static_cast<double>(examples.size());
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw Error("learning rate must be positive");
    if (batch == 0) throw Error("batch size must be positive");
    if (train_fraction < 0 || val_fraction < 0 || test_fraction < 0 ||
        std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
        throw Error("split fractions must be non-negative and sum to 1");
    }
}

DataSplit split_dataset(std::span<const LabeledExample> data, const TrainConfig& cfg) {
    cfg.validate();
    DataSplit split;
    Rng rng(derive_seed(cfg.seed, 0x5b17));
    const bool grouped =
        !data.empty() && std::all_of(data.begin(), data.end(), [](const auto& e) { return !e.group.empty(); });

    auto assign = [&](std::size_t n, auto&& bucket_of) {
        const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
        const auto n_val = std::min(n - std::min(n, n_train),
                                    static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(n))));
        for (std::size_t k = 0; k < n; ++k) {
            auto& dst = k < n_train ? split.train : (k < n_train + n_val ? split.val : split.test);
            bucket_of(k, dst);
        }
    };

    if (grouped) {
        // Group order is first appearance, then a seeded shuffle.
        std::vector<std::string> groups;
        std::map<std::string, std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < data.size(); ++i) {
            auto& m = members[data[i].group];
            if (m.empty()) groups.push_back(data[i].group);
            m.push_back(i);
        }
        rng.shuffle(groups);
        assign(groups.size(), [&](std::size_t k, std::vector<std::size_t>& dst) {
            const auto& m = members[groups[k]];
            dst.insert(dst.end(), m.begin(), m.end());
        });
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.val.begin(), split.val.end());
        std::sort(split.test.begin(), split.test.end());
    } else {
        std::vector<std::size_t> rows(data.size());
        std::iota(rows.begin(), rows.end(), 0);
        rng.shuffle(rows);
        assign(rows.size(), [&](std::size_t k, std::vector<std::size_t>& dst) { dst.push_back(rows[k]); });
    }
    return split;
}

ClassifierTrainResult train_classifier(const TrainConfig& cfg, std::span<const LabeledExample> data,
                                       std::size_t hidden, const std::optional<ClassifierParams>& initial) {
    cfg.validate();
    if (data.empty()) throw DataError("training data is empty");
    const std::size_t l = data.front().embedding.dim();
    for (const auto& ex : data) {
        if (ex.embedding.dim() != l) throw DimensionError("training embeddings have inconsistent dims");
        if (ex.label != 0 && ex.label != 1) throw DataError("labels must be 0 or 1");
    }

    ClassifierTrainResult result;
    result.split = split_dataset(data, cfg);
    const auto train = gather(data, result.split.train);
    const auto val = gather(data, result.split.val);
    const auto positives = std::count_if(train.begin(), train.end(), [](const auto& e) { return e.label == 1; });
    if (positives == 0 || positives == static_cast<std::ptrdiff_t>(train.size())) {
        throw DataError("training split must contain both classes");
    }

    result.params = initial ? *initial : ClassifierParams::random(l, hidden, cfg.seed);
    result.params.validate();
    if (result.params.input_dim() != l) {
        throw DimensionError("initial classifier expects dim " + std::to_string(result.params.input_dim()) +
                             " but data has dim " + std::to_string(l));
    }

    Rng rng(derive_seed(cfg.seed, 0xe90c));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<LabeledExample> batch;
    ClassifierParams grad;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            batch.clear();
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            for (std::size_t k = start; k < stop; ++k) batch.push_back(train[order[k]]);
            loss_and_gradient(result.params, batch, grad);
            sgd_step(result.params, grad, cfg.lr);
        }
        EpochStats s;
        s.epoch = epoch;
        std::tie(s.train_loss, s.train_accuracy) = loss_and_accuracy(result.params, train);
        std::tie(s.val_loss, s.val_accuracy) = loss_and_accuracy(result.params, val);
        result.history.push_back(s);
    }
    return result;
}

std::vector<double> logits_serial(const ClassifierParams& p, std::span<const LabeledExample> examples) {
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) out.push_back(forward(p, ex.embedding));
    return out;
}

std::vector<double> logits(const ClassifierParams& p, std::span<const LabeledExample> examples) {
    std::vector<double> out(examples.size());
    const auto n = static_cast<std::ptrdiff_t>(examples.size());
    std::optional<DimensionError> failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            out[static_cast<std::size_t>(i)] = forward(p, examples[static_cast<std::size_t>(i)].embedding);
        } catch (const DimensionError& e) {
#pragma omp critical
            if (!failure) failure = e;
        }
    }
    if (failure) throw *failure;
    return out;
}

EvalMetrics evaluate(const ClassifierParams& p, std::span<const LabeledExample> examples, double threshold) {
    if (examples.empty()) throw DataError("cannot evaluate on an empty split");
    const auto ls = logits(p, examples);
    EvalMetrics m;
    for (std::size_t i = 0; i < examples.size(); ++i) m.add(predict_from_logit(ls[i], threshold), examples[i].label);
    m.finalize();
    return m;
}

void save_classifier(const ClassifierParams& p, std::ostream& out) {
    p.validate();
    out << "prefclf v1 l=" << p.input_dim() << " h=" << p.hidden() << '\n';
    write_tensor(out, "W1", p.W1);
    write_tensor(out, "b1", p.b1);
    write_tensor(out, "W2", p.W2);
    write_tensor(out, "b2", p.b2);
}

void save_classifier(const ClassifierParams& p, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    save_classifier(p, out);
}

ClassifierParams load_classifier(std::istream& in) {
    TensorReader reader(in);
    const std::string header = reader.next_line();
    if (header.rfind("prefclf v1 ", 0) != 0) throw DataError("not a prefclf v1 checkpoint", 1);
    const std::size_t l = header_field(header, "l");
    const std::size_t h = header_field(header, "h");
    ClassifierParams p;
    p.W1 = reader.read_matrix("W1", h, l);
    p.b1 = reader.read_vector("b1", h);
    p.W2 = reader.read_matrix("W2", 1, h);
    p.b2 = reader.read_vector("b2", 1);
    p.validate();
    return p;
}

ClassifierParams load_classifier(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("classifier checkpoint not found: " + path.string());
    return load_classifier(in);
}

}  // namespace prefmem
