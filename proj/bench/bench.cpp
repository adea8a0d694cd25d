// Serial references against the OpenMP kernels.
#include <benchmark/benchmark.h>

#include "prefmem/classifier.hpp"
#include "prefmem/datagen.hpp"
#include "prefmem/evalharness.hpp"
#include "prefmem/memctl.hpp"
#include "prefmem/rng.hpp"
#include "prefmem/textenc.hpp"

using namespace prefmem;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Matrix m(r, c);
    for (auto& x : m.values()) x = rng.uniform(-1, 1);
    return m;
}

Vector random_vector(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Vector v(n);
    for (auto& x : v) x = rng.uniform(-1, 1);
    return v;
}

template <Vector (*F)(const Matrix&, const Vector&)>
void BM_matvec(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto m = random_matrix(n, n, 1);
    const auto v = random_vector(n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(F(m, v));
}
BENCHMARK_TEMPLATE(BM_matvec, matvec_serial)->Arg(64)->Arg(512)->Arg(2048);
BENCHMARK_TEMPLATE(BM_matvec, matvec)->Arg(64)->Arg(512)->Arg(2048);

const std::vector<TurnText>& turns() {
    static const auto texts = [] {
        std::vector<TurnText> out;
        for (const auto& r : generate(GenerationSource::defaults(), GenerationCounts{}, 42)) out.push_back({r.agent, r.user});
        return out;
    }();
    return texts;
}

void BM_encode_batch_serial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(encode_batch_serial(EncoderConfig{}, turns()));
}
void BM_encode_batch(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(encode_batch(EncoderConfig{}, turns()));
}
BENCHMARK(BM_encode_batch_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_encode_batch)->Unit(benchmark::kMillisecond);

const std::vector<LabeledExample>& examples() {
    static const auto data = [] {
        std::vector<LabeledExample> out;
        for (const auto& e : encode_batch(EncoderConfig{}, turns())) out.push_back({e, 0, ""});
        return out;
    }();
    return data;
}

void BM_logits_serial(benchmark::State& state) {
    const auto p = ClassifierParams::random(64, 32, 3);
    for (auto _ : state) benchmark::DoNotOptimize(logits_serial(p, examples()));
}
void BM_logits(benchmark::State& state) {
    const auto p = ClassifierParams::random(64, 32, 3);
    for (auto _ : state) benchmark::DoNotOptimize(logits(p, examples()));
}
BENCHMARK(BM_logits_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_logits)->Unit(benchmark::kMillisecond);

const std::vector<Stream>& streams() {
    static const auto out = [] {
        std::vector<Stream> s;
        for (std::size_t i = 0; i < 600; ++i) s.push_back(build_stream({3 + i % 8, 30, 4, {}, i}));
        return s;
    }();
    return out;
}

template <EvalReport (*F)(const PreferenceDetector&, const MemoryController&, std::span<const Stream>)>
void BM_retention(benchmark::State& state) {
    const auto g = copy_witness({32, 64, 4, 64});
    const MemoryController c{&g, code_embedder(64)};
    const LabelDetector oracle;
    for (auto _ : state) benchmark::DoNotOptimize(F(oracle, c, streams()));
}
BENCHMARK_TEMPLATE(BM_retention, run_retention_serial)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_retention, run_retention)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
