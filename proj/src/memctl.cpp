#include "prefmem/memctl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "prefmem/error.hpp"
#include "prefmem/rng.hpp"
#include "prefmem/tensor_io.hpp"

namespace prefmem {

namespace {

void fill_uniform(std::span<double> xs, Rng& rng) {
    for (auto& x : xs) x = rng.uniform(-0.1, 0.1);
}

void require_dim(const Vector& v, std::size_t d, const char* what) {
    if (v.dim() != d) {
        throw DimensionError(std::string(what) + " has dim " + std::to_string(v.dim()) + ", expected " +
                             std::to_string(d));
    }
}

// f * m + (1 - f) * e, written as a step from m toward e so that e == m
// returns m bit for bit. The exact value lies between m and e; the clamp
// undoes the last-ulp overshoot rounding can introduce.
double blend(double m, double e, double f) {
    const double v = m + (1.0 - f) * (e - m);
    return std::clamp(v, std::min(m, e), std::max(m, e));
}

}  // namespace

GateParams GateParams::zeros(const MemoryDims& dims) {
    return {Matrix(dims.d, dims.d), Matrix(dims.d, dims.d), Vector(dims.d),  Matrix(dims.d, dims.l),
            Matrix(dims.K, dims.d), Vector(dims.K),         Matrix(dims.de, dims.d)};
}

GateParams GateParams::random(const MemoryDims& dims, std::uint64_t seed) {
    GateParams g = zeros(dims);
    Rng rng(derive_seed(seed, 0x3e3));
    fill_uniform(g.W_MM.values(), rng);
    fill_uniform(g.W_EM.values(), rng);
    fill_uniform(g.b.values(), rng);
    fill_uniform(g.W_in.values(), rng);
    fill_uniform(g.W_M.values(), rng);
    return g;
}

void GateParams::validate() const {
    const MemoryDims d = dims();
    const bool ok = W_MM.cols() == d.d && W_EM.rows() == d.d && W_EM.cols() == d.d && b.dim() == d.d &&
                    W_in.rows() == d.d && W_out.cols() == d.d && b_out.dim() == d.K && W_M.cols() == d.d;
    if (!ok) {
        throw DimensionError("inconsistent controller shapes: W_MM " + W_MM.shape() + ", W_EM " + W_EM.shape() +
                             ", b " + std::to_string(b.dim()) + ", W_in " + W_in.shape() + ", W_out " +
                             W_out.shape() + ", b_out " + std::to_string(b_out.dim()) + ", W_M " + W_M.shape());
    }
    if (d.K < 2) throw DimensionError("controller needs at least 2 categories");
    for (auto v : {W_MM.values(), W_EM.values(), b.values(), W_in.values(), W_out.values(), b_out.values(),
                   W_M.values()}) {
        if (!all_finite(v)) throw DataError("controller parameters contain non-finite values");
    }
}

GateGradients GateGradients::zeros(const MemoryDims& dims) {
    return {Matrix(dims.d, dims.d), Matrix(dims.d, dims.d), Vector(dims.d),
            Matrix(dims.d, dims.l), Matrix(dims.K, dims.d), Vector(dims.K)};
}

std::vector<std::span<double>> trainable_views(GateParams& g) {
    return {g.W_MM.values(), g.W_EM.values(), g.b.values(), g.W_in.values(), g.W_out.values(), g.b_out.values()};
}

std::vector<std::span<double>> gradient_views(GateGradients& g) {
    return {g.W_MM.values(), g.W_EM.values(), g.b.values(), g.W_in.values(), g.W_out.values(), g.b_out.values()};
}

double GateGradients::norm() const {
    double s = 0.0;
    for (auto v : gradient_views(const_cast<GateGradients&>(*this))) s += dot(v, v);
    return std::sqrt(s);
}

void GateGradients::scale(double s) {
    for (auto v : gradient_views(*this)) {
        for (auto& x : v) x *= s;
    }
}

void GateGradients::add(const GateGradients& other) {
    auto dst = gradient_views(*this);
    auto src = gradient_views(const_cast<GateGradients&>(other));
    for (std::size_t i = 0; i < dst.size(); ++i) axpy(1.0, src[i], dst[i]);
}

Vector project_input(const GateParams& g, const EmbeddingVector& e) {
    require_dim(e, g.W_in.cols(), "embedding");
    return matvec(g.W_in, e);
}

Vector gate(const GateParams& g, const Vector& M_prev, const Vector& E_bar) {
    require_dim(M_prev, g.W_MM.cols(), "memory");
    require_dim(E_bar, g.W_EM.cols(), "projected embedding");
    Vector a = matvec(g.W_MM, M_prev) + matvec(g.W_EM, E_bar) + g.b;
    return sigmoid(a);
}

MemoryState update(const GateParams& g, const MemoryState& state, const TurnEvent& ev) {
    if (ev.preference != ev.embedding.has_value()) {
        throw DataError(ev.preference ? "preference event is missing its embedding"
                                      : "non-preference event must not carry an embedding");
    }
    MemoryState next{state.M, state.turn_index + 1};
    if (!ev.preference) return next;
    const Vector E_bar = project_input(g, *ev.embedding);
    const Vector f = gate(g, state.M, E_bar);
    for (std::size_t j = 0; j < f.dim(); ++j) next.M[j] = blend(state.M[j], E_bar[j], f[j]);
    return next;
}

Vector soft_prompt(const GateParams& g, const MemoryState& state) { return matvec(g.W_M, state.M); }

Vector predict_category(const GateParams& g, const MemoryState& state) {
    return softmax(matvec(g.W_out, state.M) + g.b_out);
}

SequenceForward forward_sequence(const GateParams& g, std::span<const TurnEvent> events) {
    const std::size_t d = g.W_MM.rows();
    SequenceForward out;
    out.final_state = MemoryState::initial(d);
    out.cache.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        const TurnEvent& ev = events[i];
        StepCache step;
        step.preference = ev.preference;
        step.M_prev = out.final_state.M;
        if (ev.preference) {
            if (!ev.embedding) throw DataError("preference event " + std::to_string(i) + " is missing its embedding");
            step.e = *ev.embedding;
            step.E_bar = project_input(g, step.e);
            step.f = gate(g, step.M_prev, step.E_bar);
            Vector M(d);
            for (std::size_t j = 0; j < d; ++j) M[j] = blend(step.M_prev[j], step.E_bar[j], step.f[j]);
            out.final_state.M = std::move(M);
        } else if (ev.embedding) {
            throw DataError("non-preference event " + std::to_string(i) + " carries an embedding");
        }
        ++out.final_state.turn_index;
        step.M = out.final_state.M;
        if (ev.category) {
            if (*ev.category >= g.W_out.rows()) {
                throw DataError("category " + std::to_string(*ev.category) + " out of range for K=" +
                                std::to_string(g.W_out.rows()));
            }
            Vector probs = predict_category(g, out.final_state);
            out.loss += ce_loss(probs, *ev.category);
            out.predictions.push_back({i, probs});
            step.probs = std::move(probs);
        }
        out.cache.push_back(std::move(step));
    }
    return out;
}

GateGradients backward_sequence(const GateParams& g, const SequenceForward& fwd,
                                std::span<const std::optional<std::size_t>> targets) {
    const MemoryDims dims = g.dims();
    if (targets.size() != fwd.cache.size()) {
        throw DataError("backward: " + std::to_string(targets.size()) + " targets for " +
                        std::to_string(fwd.cache.size()) + " cached steps");
    }
    GateGradients grad = GateGradients::zeros(dims);
    Vector dM(dims.d);
    for (std::size_t i = fwd.cache.size(); i-- > 0;) {
        const StepCache& step = fwd.cache[i];
        if (targets[i].has_value() != step.probs.has_value()) {
            throw DataError("backward: target presence at step " + std::to_string(i) + " does not match the forward pass");
        }
        if (targets[i]) {
            if (*targets[i] >= dims.K) throw DataError("backward: target out of range at step " + std::to_string(i));
            Vector dz = *step.probs;
            dz[*targets[i]] -= 1.0;
            add_outer(grad.W_out, dz, step.M);
            axpy(1.0, dz.values(), grad.b_out.values());
            dM = dM + matvec_transposed(g.W_out, dz);
        }
        if (!step.preference) continue;  // identity step

        Vector da(dims.d);
        Vector dM_prev(dims.d);
        Vector dE(dims.d);
        for (std::size_t j = 0; j < dims.d; ++j) {
            const double f = step.f[j];
            da[j] = dM[j] * (step.M_prev[j] - step.E_bar[j]) * f * (1.0 - f);
            dM_prev[j] = dM[j] * f;
            dE[j] = dM[j] * (1.0 - f);
        }
        dM_prev = dM_prev + matvec_transposed(g.W_MM, da);
        dE = dE + matvec_transposed(g.W_EM, da);
        add_outer(grad.W_MM, da, step.M_prev);
        add_outer(grad.W_EM, da, step.E_bar);
        axpy(1.0, da.values(), grad.b.values());
        add_outer(grad.W_in, dE, step.e);
        dM = std::move(dM_prev);
    }
    return grad;
}

std::vector<std::optional<std::size_t>> targets_of(std::span<const TurnEvent> events) {
    std::vector<std::optional<std::size_t>> t;
    t.reserve(events.size());
    for (const auto& ev : events) t.push_back(ev.category);
    return t;
}

std::pair<double, double> controller_loss_accuracy(const GateParams& g, std::span<const EventSequence> corpus) {
    double loss = 0.0;
    std::size_t queries = 0;
    std::size_t hits = 0;
    for (const auto& seq : corpus) {
        const auto fwd = forward_sequence(g, seq);
        loss += fwd.loss;
        for (const auto& q : fwd.predictions) {
            ++queries;
            hits += argmax(q.probs) == *seq[q.step].category;
        }
    }
    if (queries == 0) return {std::nan(""), std::nan("")};
    return {loss / static_cast<double>(queries), static_cast<double>(hits) / static_cast<double>(queries)};
}

MemoryTrainResult train_controller(const MemoryTrainConfig& cfg, std::span<const EventSequence> corpus,
                                   const MemoryDims& dims, const std::optional<GateParams>& initial) {
    cfg.base.validate();
    if (corpus.empty()) throw DataError("memory training corpus is empty");
    for (const auto& seq : corpus) {
        for (const auto& ev : seq) {
            if (ev.category && *ev.category >= dims.K) {
                throw DataError("category " + std::to_string(*ev.category) + " is not among the K=" +
                                std::to_string(dims.K) + " categories");
            }
            if (ev.embedding && ev.embedding->dim() != dims.l) {
                throw DimensionError("event embedding dim " + std::to_string(ev.embedding->dim()) +
                                     " does not match l=" + std::to_string(dims.l));
            }
        }
    }

    MemoryTrainResult result;
    result.params = initial ? *initial : GateParams::random(dims, cfg.base.seed);
    result.params.validate();
    if (result.params.dims() != dims) throw DimensionError("initial controller dims differ from the requested dims");

    // Sequence-level split.
    std::vector<std::size_t> idx(corpus.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng(derive_seed(cfg.base.seed, 0x5b17));
    split_rng.shuffle(idx);
    auto n_train = static_cast<std::size_t>(std::llround(cfg.base.train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size());
    const auto n_val = std::min(idx.size() - n_train,
                                static_cast<std::size_t>(std::llround(cfg.base.val_fraction * static_cast<double>(idx.size()))));
    std::vector<EventSequence> train;
    std::vector<EventSequence> val;
    for (std::size_t k = 0; k < n_train; ++k) train.push_back(corpus[idx[k]]);
    for (std::size_t k = n_train; k < n_train + n_val; ++k) val.push_back(corpus[idx[k]]);

    Rng rng(derive_seed(cfg.base.seed, 0xe90c));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    auto params = trainable_views(result.params);
    for (std::size_t epoch = 1; epoch <= cfg.base.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.base.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.base.batch);
            GateGradients total = GateGradients::zeros(dims);
            for (std::size_t k = start; k < stop; ++k) {
                const auto& seq = train[order[k]];
                const auto fwd = forward_sequence(result.params, seq);
                total.add(backward_sequence(result.params, fwd, targets_of(seq)));
            }
            total.scale(1.0 / static_cast<double>(stop - start));
            const double norm = total.norm();
            if (norm > cfg.clip_norm) total.scale(cfg.clip_norm / norm);
            auto grads = gradient_views(total);
            for (std::size_t t = 0; t < params.size(); ++t) axpy(-cfg.base.lr, grads[t], params[t]);
        }
        EpochStats s;
        s.epoch = epoch;
        std::tie(s.train_loss, s.train_accuracy) = controller_loss_accuracy(result.params, train);
        std::tie(s.val_loss, s.val_accuracy) = controller_loss_accuracy(result.params, val);
        result.history.push_back(s);
    }
    return result;
}

GateParams copy_witness(const MemoryDims& dims, double decode_scale) {
    if (dims.K > std::min(dims.d, dims.l)) {
        throw DimensionError("copy witness needs K <= min(d, l)");
    }
    GateParams g = GateParams::zeros(dims);
    for (std::size_t i = 0; i < std::min(dims.d, dims.l); ++i) g.W_in(i, i) = 1.0;
    for (auto& x : g.b) x = -50.0;
    for (std::size_t c = 0; c < dims.K; ++c) g.W_out(c, c) = decode_scale;
    for (std::size_t i = 0; i < std::min(dims.de, dims.d); ++i) g.W_M(i, i) = 1.0;
    return g;
}

EmbeddingVector category_code(std::size_t category, std::size_t l) {
    if (category >= l) throw DimensionError("category code " + std::to_string(category) + " does not fit in dim " + std::to_string(l));
    EmbeddingVector e(l);
    e[category] = 1.0;
    return e;
}

void save_controller(const GateParams& g, std::ostream& out) {
    g.validate();
    const MemoryDims d = g.dims();
    out << "prefmem v1 d=" << d.d << " l=" << d.l << " K=" << d.K << " de=" << d.de << '\n';
    write_tensor(out, "W_MM", g.W_MM);
    write_tensor(out, "W_EM", g.W_EM);
    write_tensor(out, "b", g.b);
    write_tensor(out, "W_in", g.W_in);
    write_tensor(out, "W_out", g.W_out);
    write_tensor(out, "b_out", g.b_out);
    write_tensor(out, "W_M", g.W_M);
}

void save_controller(const GateParams& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    save_controller(g, out);
}

GateParams load_controller(std::istream& in) {
    TensorReader reader(in);
    const std::string header = reader.next_line();
    if (header.rfind("prefmem v1 ", 0) != 0) throw DataError("not a prefmem v1 checkpoint", 1);
    MemoryDims d{header_field(header, "d"), header_field(header, "l"), header_field(header, "K"),
                 header_field(header, "de")};
    GateParams g;
    g.W_MM = reader.read_matrix("W_MM", d.d, d.d);
    g.W_EM = reader.read_matrix("W_EM", d.d, d.d);
    g.b = reader.read_vector("b", d.d);
    g.W_in = reader.read_matrix("W_in", d.d, d.l);
    g.W_out = reader.read_matrix("W_out", d.K, d.d);
    g.b_out = reader.read_vector("b_out", d.K);
    g.W_M = reader.read_matrix("W_M", d.de, d.d);
    g.validate();
    return g;
}

GateParams load_controller(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact("memory checkpoint not found: " + path.string());
    return load_controller(in);
}

std::string memory_snapshot(const MemoryState& s) {
    return "turn=" + std::to_string(s.turn_index) + " M=" + format_real_list(s.M.values());
}

MemoryState parse_memory_snapshot(std::string_view line) {
    if (line.rfind("turn=", 0) != 0) throw DataError("snapshot must start with 'turn='");
    const auto space = line.find(" M=");
    if (space == std::string_view::npos) throw DataError("snapshot missing ' M='");
    MemoryState s;
    const auto digits = line.substr(5, space - 5);
    s.turn_index = static_cast<std::size_t>(parse_real(digits));
    s.M = parse_real_list(line.substr(space + 3));
    return s;
}

}  // namespace prefmem
