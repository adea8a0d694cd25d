#pragma once

// Small dense linear algebra in double precision, activations, stable losses
// and a central-difference gradient checker.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace prefmem {

class Vector {
public:
    Vector() = default;
    explicit Vector(std::size_t dim, double fill = 0.0) : data_(dim, fill) {}
    Vector(std::initializer_list<double> values) : data_(values) {}
    explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

    std::size_t dim() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    auto begin() noexcept { return data_.begin(); }
    auto end() noexcept { return data_.end(); }
    auto begin() const noexcept { return data_.begin(); }
    auto end() const noexcept { return data_.end(); }

    // Bitwise-equal comparison of dims and entries.
    friend bool operator==(const Vector&, const Vector&) = default;

private:
    std::vector<double> data_;
};

// Row-major dense matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    std::string shape() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// ---- linear maps ---------------------------------------------------------

// m * v. Rows are distributed over OpenMP threads once the matrix is large
// enough; every row is a sequential dot product, so the result is
// bit-identical to matvec_serial.
Vector matvec(const Matrix& m, const Vector& v);
Vector matvec_serial(const Matrix& m, const Vector& v);

// m^T * v without materializing the transpose.
Vector matvec_transposed(const Matrix& m, const Vector& v);

// m += alpha * u v^T
void add_outer(Matrix& m, const Vector& u, const Vector& v, double alpha = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(const Vector& v);
double cosine(const Vector& a, const Vector& b);

Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double s, const Vector& v);
Vector hadamard(const Vector& a, const Vector& b);

// y += alpha * x over flat storage of identical length
void axpy(double alpha, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> xs);

std::size_t argmax(const Vector& v);  // lowest index on ties

// ---- activations and losses ---------------------------------------------

double sigmoid(double x);
Vector sigmoid(const Vector& v);
Vector softmax(const Vector& v);

// log(1 + exp(x)) without overflow
double softplus(double x);

// Binary cross-entropy of a logit against label 0/1, in softplus form.
double bce_loss(double logit, int label);

inline constexpr double kProbabilityFloor = 1e-12;

// -log p[target], with p[target] clamped below at kProbabilityFloor.
double ce_loss(const Vector& probs, std::size_t target);

// ---- gradient checking ---------------------------------------------------

// Compares `analytic` against central differences of `f` around `theta` and
// returns the largest per-coordinate relative error
// |a - n| / max(|a|, |n|, 1e-8). Throws if f is non-finite anywhere probed.
double grad_check(const std::function<double(std::span<const double>)>& f,
                  std::span<const double> theta,
                  std::span<const double> analytic,
                  double h = 1e-5);

}  // namespace prefmem
