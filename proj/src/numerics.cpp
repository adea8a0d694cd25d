#include "prefmem/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prefmem/error.hpp"

namespace prefmem {

namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelMatvecWork = 1 << 14;

void require_same_dim(const Vector& a, const Vector& b, const char* op) {
    if (a.dim() != b.dim()) {
        throw DimensionError(std::string(op) + ": dimension mismatch " + std::to_string(a.dim()) +
                             " vs " + std::to_string(b.dim()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                             shape());
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

static void check_matvec(const Matrix& m, const Vector& v) {
    if (m.cols() != v.dim()) {
        throw DimensionError("matvec: matrix " + m.shape() + " cannot multiply vector of dim " +
                             std::to_string(v.dim()));
    }
}

Vector matvec_serial(const Matrix& m, const Vector& v) {
    check_matvec(m, v);
    Vector out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v.values());
    return out;
}

Vector matvec(const Matrix& m, const Vector& v) {
    check_matvec(m, v);
    Vector out(m.rows());
    const auto rows = static_cast<std::ptrdiff_t>(m.rows());
    const bool wide = m.size() >= kParallelMatvecWork;
#pragma omp parallel for schedule(static) if (wide)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
        out[static_cast<std::size_t>(r)] = dot(m.row(static_cast<std::size_t>(r)), v.values());
    }
    return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows() != v.dim()) {
        throw DimensionError("matvec_transposed: matrix " + m.shape() +
                             " cannot left-multiply vector of dim " + std::to_string(v.dim()));
    }
    Vector out(m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double s = v[r];
        if (s == 0.0) continue;
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += row[c] * s;
    }
    return out;
}

void add_outer(Matrix& m, const Vector& u, const Vector& v, double alpha) {
    if (m.rows() != u.dim() || m.cols() != v.dim()) {
        throw DimensionError("add_outer: matrix " + m.shape() + " vs outer product " +
                             std::to_string(u.dim()) + "x" + std::to_string(v.dim()));
    }
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double s = alpha * u[r];
        if (s == 0.0) continue;
        auto row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) row[c] += s * v[c];
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& v) { return std::sqrt(dot(v.values(), v.values())); }

double cosine(const Vector& a, const Vector& b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a.values(), b.values()) / (na * nb);
}

Vector operator+(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "add");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector operator-(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "subtract");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector operator*(double s, const Vector& v) {
    Vector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = s * v[i];
    return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
    require_same_dim(a, b, "hadamard");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] * b[i];
    return out;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) {
        throw DimensionError("axpy: length mismatch " + std::to_string(x.size()) + " vs " +
                             std::to_string(y.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

std::size_t argmax(const Vector& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.dim(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double z = std::exp(x);
    return z / (1.0 + z);
}

Vector sigmoid(const Vector& v) {
    Vector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) out[i] = sigmoid(v[i]);
    return out;
}

Vector softmax(const Vector& v) {
    Vector out(v.dim());
    if (v.empty()) return out;
    const double peak = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = std::exp(v[i] - peak);
        total += out[i];
    }
    for (auto& x : out) x /= total;
    return out;
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double bce_loss(double logit, int label) {
    // -log sigma(s) = softplus(-s); -log(1 - sigma(s)) = softplus(s)
    return label == 1 ? softplus(-logit) : softplus(logit);
}

double ce_loss(const Vector& probs, std::size_t target) {
    if (target >= probs.dim()) {
        throw DimensionError("ce_loss: target " + std::to_string(target) + " out of range for " +
                             std::to_string(probs.dim()) + " classes");
    }
    return -std::log(std::max(probs[target], kProbabilityFloor));
}

double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> theta,
                  std::span<const double> analytic,
                  double h) {
    if (theta.size() != analytic.size()) {
        throw DimensionError("grad_check: " + std::to_string(theta.size()) + " parameters but " +
                             std::to_string(analytic.size()) + " gradient entries");
    }
    if (!(h > 0.0)) throw Error("grad_check: step must be positive");

    std::vector<double> probe(theta.begin(), theta.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double up = f(probe);
        probe[i] = saved - h;
        const double down = f(probe);
        probe[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error("grad_check: objective is non-finite near coordinate " + std::to_string(i));
        }
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace prefmem
