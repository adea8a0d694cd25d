#pragma once

// Text serialization shared by the checkpoint formats. Reals are written with
// 17 significant digits, which round-trips every double exactly.
//
// Block layout:
//   tensor <name> <rows> <cols>
//   <cols values>            (repeated <rows> times)
// Vectors are stored as a single row.

#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "prefmem/numerics.hpp"

namespace prefmem {

std::string format_real(double x);

// Whole-string parse; throws DataError on trailing garbage or non-finite.
double parse_real(std::string_view text, std::size_t line = 0);

// Comma-separated reals ("1.5,2,-3").
Vector parse_real_list(std::string_view text, std::size_t line = 0);
std::string format_real_list(std::span<const double> xs, char sep = ',');

void write_tensor(std::ostream& out, std::string_view name, const Matrix& m);
void write_tensor(std::ostream& out, std::string_view name, const Vector& v);

// Line-counting reader for checkpoint files.
class TensorReader {
public:
    explicit TensorReader(std::istream& in) : in_(in) {}

    // Next line, throwing DataError at end of input.
    std::string next_line();
    std::size_t line() const noexcept { return line_; }

    Matrix read_matrix(std::string_view name, std::size_t rows, std::size_t cols);
    Vector read_vector(std::string_view name, std::size_t dim);

private:
    std::istream& in_;
    std::size_t line_ = 0;
};

// Parses "key=value" tokens out of a header line such as
// "prefclf v1 l=64 h=32". Throws DataError if the key is absent.
std::size_t header_field(std::string_view header, std::string_view key, std::size_t line = 1);

}  // namespace prefmem
