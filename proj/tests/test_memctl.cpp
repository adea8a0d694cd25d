#include <cmath>
#include <sstream>

#include "doctest.h"
#include "prefmem/error.hpp"
#include "prefmem/memctl.hpp"
#include "prefmem/rng.hpp"
#include "support.hpp"

using namespace prefmem;

namespace {

Vector random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

GateParams random_params(const MemoryDims& dims, std::uint64_t seed, double scale) {
    GateParams g = GateParams::random(dims, seed);
    Rng rng(derive_seed(seed, 77));
    for (auto view : trainable_views(g)) {
        for (auto& x : view) x = rng.uniform(-scale, scale);
    }
    return g;
}

std::vector<double> flat_params(GateParams g) {
    std::vector<double> out;
    for (auto view : trainable_views(g)) out.insert(out.end(), view.begin(), view.end());
    return out;
}

std::vector<double> flat_grads(GateGradients g) {
    std::vector<double> out;
    for (auto view : gradient_views(g)) out.insert(out.end(), view.begin(), view.end());
    return out;
}

double max_grad_error(const GateParams& g, std::span<const TurnEvent> events) {
    const auto fwd = forward_sequence(g, events);
    const auto grads = flat_grads(backward_sequence(g, fwd, targets_of(events)));
    auto f = [&](std::span<const double> t) { return support::reference_sequence_loss(g, t, events); };
    return grad_check(f, flat_params(g), grads);
}

std::vector<EventSequence> code_corpus(std::size_t K, std::size_t l, std::size_t gap, std::size_t n, std::size_t length,
                                       std::uint64_t seed) {
    Rng rng(seed);
    std::vector<EventSequence> corpus;
    for (std::size_t s = 0; s < n; ++s) {
        EventSequence ev;
        for (std::size_t t = 0; t < length; ++t) {
            if ((t + 1) % gap == 0) {
                const auto c = rng.below(K);
                ev.push_back(TurnEvent::preferred(category_code(c, l), c));
            } else {
                ev.push_back(TurnEvent::neutral());
            }
        }
        corpus.push_back(std::move(ev));
    }
    return corpus;
}

}  // namespace

TEST_SUITE("memctl") {

TEST_CASE("project_input and gate examples") {
    const MemoryDims dims{3, 3, 2, 3};
    auto g = GateParams::zeros(dims);
    CHECK(project_input(g, Vector{1, 2, 3}) == Vector(3));
    g.W_in = Matrix::identity(3);
    CHECK(project_input(g, Vector{1, 2, 3}) == Vector{1, 2, 3});
    CHECK_THROWS_AS(project_input(g, Vector{1, 2}), DimensionError);

    const auto half = gate(g, Vector{1, -1, 2}, Vector{0, 3, 1});
    for (double f : half) CHECK(f == 0.5);
    for (auto& x : g.b) x = 50.0;
    for (double f : gate(g, Vector(3), Vector(3))) CHECK(f == doctest::Approx(1.0).epsilon(1e-12));
    for (auto& x : g.b) x = -50.0;
    for (double f : gate(g, Vector(3), Vector(3))) CHECK(f < 1e-12);
}

TEST_CASE("update examples") {
    const MemoryDims dims{2, 2, 2, 2};
    auto g = GateParams::zeros(dims);
    g.W_in = Matrix::identity(2);
    const MemoryState s{Vector{1, 0}, 4};
    const auto blended = update(g, s, TurnEvent::preferred(Vector{0, 1}));
    CHECK(blended.M == Vector{0.5, 0.5});
    CHECK(blended.turn_index == 5);

    const auto kept = update(g, s, TurnEvent::neutral());
    CHECK(kept.M == s.M);
    CHECK(kept.turn_index == 5);

    for (auto& x : g.b) x = -50.0;
    const auto over = update(g, s, TurnEvent::preferred(Vector{0.25, -3}));
    CHECK(over.M[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(over.M[1] == doctest::Approx(-3).epsilon(1e-12));

    CHECK_THROWS_AS(update(g, s, TurnEvent{true, std::nullopt, std::nullopt}), DataError);
    CHECK_THROWS_AS(update(g, s, TurnEvent{false, Vector{1, 1}, std::nullopt}), DataError);
}

TEST_CASE("read-out examples") {
    const MemoryDims dims{3, 3, 4, 3};
    auto g = GateParams::zeros(dims);
    const auto s0 = MemoryState::initial(3);
    CHECK(soft_prompt(g, s0) == Vector(3));
    g.W_M = Matrix::identity(3);
    const MemoryState s{Vector{0.5, -1, 2}, 0};
    CHECK(soft_prompt(g, s) == s.M);
    for (double p : predict_category(g, s)) CHECK(p == 0.25);
    CHECK(ce_loss(predict_category(g, s), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
    g.b_out[1] = 60.0;
    CHECK(predict_category(g, s)[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("forward_sequence examples") {
    const MemoryDims dims{2, 2, 2, 2};
    auto g = GateParams::zeros(dims);
    g.W_in = Matrix::identity(2);
    const auto empty = forward_sequence(g, {});
    CHECK(empty.final_state.M == Vector(2));
    CHECK(empty.predictions.empty());

    const std::vector<TurnEvent> quiet(7, TurnEvent::neutral());
    CHECK(forward_sequence(g, quiet).final_state.M == Vector(2));

    const std::vector<TurnEvent> one{TurnEvent::preferred(Vector{2, -4}, 1)};
    const auto f = forward_sequence(g, one);
    CHECK(f.final_state.M == Vector{1, -2});
    REQUIRE(f.predictions.size() == 1);
    CHECK(f.loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("fixture matches the autograd reference") {
    // tests/oracles/math_oracle.py
    const auto g = support::memctl_fixture();
    const auto events = support::memctl_fixture_events();
    const auto fwd = forward_sequence(g, events);
    const double M[] = {0.1171207217845148, -0.010955921257087674, -0.08864562677197964};
    for (std::size_t i = 0; i < 3; ++i) CHECK(support::close(fwd.final_state.M[i], M[i], 1e-12));
    CHECK(support::close(fwd.loss, 2.624881849268997, 1e-12));

    auto grads = backward_sequence(g, fwd, targets_of(events));
    const std::vector<std::vector<double>> expected{
        {-0.0019178818888032525, 0.0020161812012255277, -0.00038469656135785746, 4.8042532576200546e-05,
         0.002868392873002321, -0.0035649939516125, -0.0009850229914663694, 0.0031027635443081143,
         -0.0027292443026320314},
        {0.005364251199232136, -0.002409587646967319, -0.002214228010528237, -0.0038665249933737375,
         -0.0013271295090994486, 0.005601464468739159, 0.00010281610926260665, -0.0020193313681334145,
         0.0025370300251177846},
        {0.03834458713476181, 0.02383375424980849, 0.03802290279170381},
        {-0.12304156716102368, -0.35534848894189225, -0.3187347587113727, -0.04090891755677635, -0.10983193004114158,
         -0.316473550843541, -0.28361429775557445, -0.03612139841435788, 0.06232575868262836, 0.1798211372844369,
         0.16123146420091888, 0.02062503340789502},
        {-0.12251084731141065, -0.051006126149142836, 0.18291932435027447, 0.12251084731141068,
         0.05100612614914285, -0.18291932435027453},
        {-0.07838117281028256, 0.07838117281028228}};
    const auto views = gradient_views(grads);
    REQUIRE(views.size() == expected.size());
    for (std::size_t t = 0; t < views.size(); ++t) {
        REQUIRE(views[t].size() == expected[t].size());
        for (std::size_t i = 0; i < views[t].size(); ++i) {
            INFO("tensor " << t << " entry " << i);
            CHECK(support::close(views[t][i], expected[t][i], 1e-9, 1e-14));
        }
    }
}

TEST_CASE("reference loss agrees with forward_sequence") {
    const auto g = support::memctl_fixture();
    const auto events = support::memctl_fixture_events();
    CHECK(support::close(support::reference_sequence_loss(g, flat_params(g), events), forward_sequence(g, events).loss,
                         1e-13));
}

TEST_CASE("backward examples") {
    const MemoryDims dims{4, 4, 2, 4};
    const auto g = GateParams::random(dims, 3);
    const std::vector<TurnEvent> quiet(4, TurnEvent::neutral());
    const auto fwd = forward_sequence(g, quiet);
    CHECK(backward_sequence(g, fwd, targets_of(quiet)).norm() == 0.0);

    // Saturated correct predictions: the loss and every gradient vanish.
    auto sat = GateParams::zeros(dims);
    sat.b_out[0] = 60.0;
    const std::vector<TurnEvent> ev{TurnEvent::preferred(Vector{1, 0, 0, 0}, 0), TurnEvent::neutral(0)};
    const auto f2 = forward_sequence(sat, ev);
    CHECK(backward_sequence(sat, f2, targets_of(ev)).norm() < 1e-20);

    Rng rng(1);
    std::vector<TurnEvent> three;
    for (int t = 0; t < 3; ++t) three.push_back(TurnEvent::preferred(random_vector(4, rng), t % 2));
    CHECK(max_grad_error(GateParams::random(dims, 9), three) <= 1e-4);

    const std::vector<std::optional<std::size_t>> wrong(2);
    CHECK_THROWS_AS(backward_sequence(sat, f2, wrong), DataError);
}

TEST_CASE("property: convex combination and fixed point over 1000 random updates") {
    Rng rng(2024);
    int strict_checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 2 + rng.below(7);
        const MemoryDims dims{d, d, 2, d};
        const auto g = random_params(dims, static_cast<std::uint64_t>(trial), 2.0);
        const MemoryState prev{random_vector(d, rng, -3, 3), 0};
        const auto e = random_vector(d, rng, -3, 3);
        const auto next = update(g, prev, TurnEvent::preferred(e));
        const auto E = project_input(g, e);
        for (std::size_t j = 0; j < d; ++j) {
            const double lo = std::min(prev.M[j], E[j]);
            const double hi = std::max(prev.M[j], E[j]);
            CHECK(next.M[j] >= lo);
            CHECK(next.M[j] <= hi);
            const auto f = gate(g, prev.M, E)[j];
            if (std::fabs(prev.M[j] - E[j]) > 1e-6 && f > 1e-9 && f < 1 - 1e-9) {
                CHECK(next.M[j] > lo);
                CHECK(next.M[j] < hi);
                ++strict_checked;
            }
        }
        // Ebar = M_prev: identity W_in with e = M_prev.
        auto fixed = g;
        fixed.W_in = Matrix::identity(d);
        const auto same = update(fixed, prev, TurnEvent::preferred(prev.M));
        CHECK(same.M == prev.M);
    }
    CHECK(strict_checked > 1000);
}

TEST_CASE("property: neutral turns are bit-exact no-ops over 10k interleavings") {
    const MemoryDims dims{6, 6, 3, 6};
    const auto g = GateParams::random(dims, 5);
    Rng rng(6);
    MemoryState s = MemoryState::initial(6);
    for (int i = 0; i < 10000; ++i) {
        if (rng.below(4) == 0) {
            s = update(g, s, TurnEvent::preferred(random_vector(6, rng)));
        } else {
            const auto before = s.M;
            s = update(g, s, TurnEvent::neutral(rng.below(3)));
            REQUIRE(s.M == before);
        }
    }
    CHECK(s.turn_index == 10000);
}

TEST_CASE("property: soft prompt is linear") {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const MemoryDims dims{5, 5, 2, 7};
        const auto g = GateParams::random(dims, static_cast<std::uint64_t>(trial));
        const auto m1 = random_vector(5, rng);
        const auto m2 = random_vector(5, rng);
        const double a = rng.uniform(-2, 2);
        const double b = rng.uniform(-2, 2);
        const auto lhs = soft_prompt(g, {a * m1 + b * m2, 0});
        const auto rhs = a * soft_prompt(g, {m1, 0}) + b * soft_prompt(g, {m2, 0});
        for (std::size_t i = 0; i < 7; ++i) CHECK(std::fabs(lhs[i] - rhs[i]) <= 1e-12);
    }
}

TEST_CASE("property: BPTT gradients agree with finite differences on 20 instances") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_seed(seed, 1));
        const std::size_t d = 4 + rng.below(5);
        const std::size_t l = 3 + rng.below(4);
        const std::size_t K = 2 + rng.below(3);
        const std::size_t len = 3 + rng.below(4);
        const MemoryDims dims{d, l, K, 3};
        auto g = random_params(dims, seed, 0.5);
        std::vector<TurnEvent> events;
        for (std::size_t t = 0; t < len; ++t) {
            const std::optional<std::size_t> target =
                rng.below(3) == 0 ? std::nullopt : std::optional<std::size_t>(rng.below(K));
            if (t == 0 || rng.below(3) != 0) {
                events.push_back(TurnEvent::preferred(random_vector(l, rng), target));
            } else {
                events.push_back(TurnEvent::neutral(target));
            }
        }
        events.back().category = rng.below(K);
        INFO("seed " << seed);
        CHECK(max_grad_error(g, events) <= 1e-4);
    }
}

TEST_CASE("untrained K=4 controller has loss ln 4") {
    const MemoryDims dims{32, 64, 4, 64};
    const auto g = GateParams::random(dims, 1);
    const auto corpus = code_corpus(4, 64, 3, 5, 12, 2);
    const auto [loss, acc] = controller_loss_accuracy(g, corpus);
    CHECK(std::fabs(loss - std::log(4.0)) <= 1e-9);
    (void)acc;
}

TEST_CASE("copy witness decodes the latest category exactly") {
    const MemoryDims dims{32, 64, 4, 64};
    const auto w = copy_witness(dims);
    for (std::size_t gap : {3, 5, 10}) {
        const auto corpus = code_corpus(4, 64, gap, 50, 30, gap);
        CHECK(controller_loss_accuracy(w, corpus).second == 1.0);
    }
    CHECK_THROWS_AS(copy_witness({2, 2, 4, 2}), DimensionError);
    CHECK(category_code(2, 5) == Vector{0, 0, 1, 0, 0});
}

TEST_CASE("training: zero epochs, determinism, errors") {
    const MemoryDims dims{8, 4, 2, 4};
    const auto corpus = code_corpus(2, 4, 2, 20, 8, 4);
    MemoryTrainConfig cfg;
    cfg.base.epochs = 0;
    const auto init = GateParams::random(dims, 77);
    CHECK(train_controller(cfg, corpus, dims, init).params == init);

    cfg.base.epochs = 5;
    const auto a = train_controller(cfg, corpus, dims);
    const auto b = train_controller(cfg, corpus, dims);
    CHECK(a.params == b.params);
    CHECK(a.params.W_M == GateParams::random(dims, cfg.base.seed).W_M);

    CHECK_THROWS_AS(train_controller(cfg, std::span<const EventSequence>{}, dims), DataError);
    auto bad = corpus;
    bad[0][1] = TurnEvent::preferred(category_code(0, 4), 5);
    CHECK_THROWS_AS(train_controller(cfg, bad, dims), DataError);
}

TEST_CASE("training on the orthogonal-code toy reaches 0.9 query accuracy") {
    const MemoryDims dims{32, 64, 4, 64};
    const auto corpus = code_corpus(4, 64, 3, 200, 30, 9);
    MemoryTrainConfig cfg;
    const auto res = train_controller(cfg, corpus, dims);
    CHECK(controller_loss_accuracy(res.params, corpus).second >= 0.9);
}

TEST_CASE("checkpoint and snapshot round-trips") {
    const auto g = GateParams::random({5, 6, 3, 4}, 21);
    std::ostringstream a;
    save_controller(g, a);
    CHECK(a.str().rfind("prefmem v1 d=5 l=6 K=3 de=4\n", 0) == 0);
    std::istringstream in(a.str());
    const auto h = load_controller(in);
    CHECK(h == g);
    std::ostringstream b;
    save_controller(h, b);
    CHECK(a.str() == b.str());

    const MemoryState s{Vector{0.1, -1.0 / 3.0, 1e-300}, 12};
    const auto line = memory_snapshot(s);
    CHECK(line.rfind("turn=12 M=", 0) == 0);
    CHECK(parse_memory_snapshot(line) == s);
    CHECK_THROWS_AS(parse_memory_snapshot("M=1,2"), DataError);
}

}  // TEST_SUITE
