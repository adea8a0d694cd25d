#include <cmath>
#include <limits>

#include "doctest.h"
#include "prefmem/error.hpp"
#include "prefmem/numerics.hpp"
#include "prefmem/rng.hpp"
#include "support.hpp"

using namespace prefmem;

TEST_SUITE("numerics") {

TEST_CASE("matvec matches hand computation and rejects bad shapes") {
    const Matrix m{{1, 2, 3}, {4, 5, 6}};
    CHECK(matvec(m, Vector{1, 0, -1}) == Vector{-2, -2});
    CHECK(matvec_transposed(m, Vector{1, 1}) == Vector{5, 7, 9});
    CHECK_THROWS_AS(matvec(m, Vector{1, 2}), DimensionError);
    CHECK_THROWS_AS(matvec_transposed(m, Vector{1, 2, 3}), DimensionError);
}

TEST_CASE("parallel matvec is bit-identical to the serial reference") {
    Rng rng(3);
    for (std::size_t rows : {1u, 7u, 300u}) {
        Matrix m(rows, 129);
        for (auto& x : m.values()) x = rng.uniform(-1, 1);
        Vector v(129);
        for (auto& x : v) x = rng.uniform(-1, 1);
        CHECK(matvec(m, v) == matvec_serial(m, v));
    }
}

TEST_CASE("add_outer, hadamard, axpy, norms") {
    Matrix m(2, 2);
    add_outer(m, Vector{1, 2}, Vector{3, 4}, 0.5);
    CHECK(m == Matrix{{1.5, 2}, {3, 4}});
    CHECK(hadamard(Vector{1, 2}, Vector{3, 4}) == Vector{3, 8});
    Vector y{1, 1};
    axpy(2.0, Vector{1, 2}.values(), y.values());
    CHECK(y == Vector{3, 5});
    CHECK(norm2(Vector{3, 4}) == 5.0);
    CHECK(cosine(Vector{1, 0}, Vector{0, 1}) == 0.0);
    CHECK(dot(Vector{1, 2}.values(), Vector{3, 4}.values()) == 11.0);
}

TEST_CASE("argmax takes the lowest index on ties") {
    CHECK(argmax(Vector{0.25, 0.25, 0.25, 0.25}) == 0);
    CHECK(argmax(Vector{0.1, 0.7, 0.7}) == 1);
}

TEST_CASE("activations agree with high-precision references") {
    // 50-digit mpmath values (tests/oracles/math_oracle.py).
    CHECK(support::close(softplus(-3.0), 0.048587351573742059));
    CHECK(support::close(softplus(40.0), 40.0));
    CHECK(std::isfinite(softplus(1000.0)));
    CHECK(softplus(1000.0) == 1000.0);
    CHECK(support::close(sigmoid(2.0), 0.88079707797788244));
    CHECK(sigmoid(-800.0) >= 0.0);
    CHECK(support::close(bce_loss(0.7, 1), 0.40318604888545791));
    CHECK(support::close(bce_loss(0.7, 0), 1.1031860488854579));
    const Vector p = softmax(Vector{1, 2, 3});
    CHECK(support::close(p[0], 0.090030573170380458));
    CHECK(support::close(p[1], 0.24472847105479765));
    CHECK(support::close(p[2], 0.66524095577482189));
}

TEST_CASE("softmax is shift invariant and survives large logits") {
    const Vector a = softmax(Vector{1000, 1001, 1002});
    const Vector b = softmax(Vector{0, 1, 2});
    for (std::size_t i = 0; i < 3; ++i) CHECK(support::close(a[i], b[i], 1e-14));
    CHECK(all_finite(a.values()));
}

TEST_CASE("cross-entropy of a uniform K=4 prediction is ln 4") {
    CHECK(std::fabs(ce_loss(softmax(Vector(4)), 2) - 1.3862943611198906) <= 1e-15);
    CHECK(ce_loss(Vector{1.0, 0.0}, 1) == doctest::Approx(-std::log(kProbabilityFloor)));
    CHECK_THROWS_AS(ce_loss(Vector{0.5, 0.5}, 2), DimensionError);
}

TEST_CASE("grad_check accepts exact gradients and flags wrong ones") {
    auto f = [](std::span<const double> t) { return t[0] * t[0] * t[1] + std::sin(t[1]); };
    const std::vector<double> theta{0.7, -1.3};
    const std::vector<double> good{2 * 0.7 * -1.3, 0.7 * 0.7 + std::cos(-1.3)};
    const std::vector<double> bad{good[0], good[1] + 0.1};
    CHECK(grad_check(f, theta, good) < 1e-8);
    CHECK(grad_check(f, theta, bad) > 1e-2);
    auto nan = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS(grad_check(nan, theta, good));
}

}  // TEST_SUITE
