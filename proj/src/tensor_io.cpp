#include "prefmem/tensor_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "prefmem/error.hpp"

namespace prefmem {

std::string format_real(double x) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

double parse_real(std::string_view text, std::size_t line) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw DataError("not a number: '" + std::string(text) + "'", line);
    }
    if (!std::isfinite(value)) throw DataError("non-finite value: '" + std::string(text) + "'", line);
    return value;
}

Vector parse_real_list(std::string_view text, std::size_t line) {
    std::vector<double> out;
    if (text.empty()) return Vector(std::move(out));
    std::size_t start = 0;
    for (;;) {
        const auto comma = text.find(',', start);
        out.push_back(parse_real(text.substr(start, comma - start), line));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return Vector(std::move(out));
}

std::string format_real_list(std::span<const double> xs, char sep) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out.push_back(sep);
        out += format_real(xs[i]);
    }
    return out;
}

void write_tensor(std::ostream& out, std::string_view name, const Matrix& m) {
    out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) out << format_real_list(m.row(r), ' ') << '\n';
}

void write_tensor(std::ostream& out, std::string_view name, const Vector& v) {
    out << "tensor " << name << " 1 " << v.dim() << '\n';
    out << format_real_list(v.values(), ' ') << '\n';
}

std::string TensorReader::next_line() {
    std::string s;
    if (!std::getline(in_, s)) throw DataError("unexpected end of file", line_ + 1);
    ++line_;
    return s;
}

Matrix TensorReader::read_matrix(std::string_view name, std::size_t rows, std::size_t cols) {
    const std::string head = next_line();
    std::istringstream hs(head);
    std::string tag, got_name;
    std::size_t got_rows = 0, got_cols = 0;
    if (!(hs >> tag >> got_name >> got_rows >> got_cols) || tag != "tensor") {
        throw DataError("expected 'tensor <name> <rows> <cols>', got '" + head + "'", line_);
    }
    if (got_name != name) {
        throw DataError("expected tensor '" + std::string(name) + "', found '" + got_name + "'", line_);
    }
    if (got_rows != rows || got_cols != cols) {
        throw DataError("tensor " + got_name + " has shape " + std::to_string(got_rows) + "x" +
                            std::to_string(got_cols) + ", expected " + std::to_string(rows) + "x" +
                            std::to_string(cols),
                        line_);
    }
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::string row = next_line();
        std::istringstream rs(row);
        std::string tok;
        std::size_t c = 0;
        while (rs >> tok) {
            if (c >= cols) throw DataError("too many values in row of " + got_name, line_);
            m(r, c++) = parse_real(tok, line_);
        }
        if (c != cols) throw DataError("too few values in row of " + got_name, line_);
    }
    return m;
}

Vector TensorReader::read_vector(std::string_view name, std::size_t dim) {
    Matrix m = read_matrix(name, 1, dim);
    return Vector(std::vector<double>(m.values().begin(), m.values().end()));
}

std::size_t header_field(std::string_view header, std::string_view key, std::size_t line) {
    std::istringstream hs{std::string(header)};
    std::string tok;
    const std::string prefix = std::string(key) + "=";
    while (hs >> tok) {
        if (tok.rfind(prefix, 0) == 0) {
            const std::string_view digits = std::string_view(tok).substr(prefix.size());
            std::size_t value = 0;
            auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
            if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
                throw DataError("bad header field '" + tok + "'", line);
            }
            return value;
        }
    }
    throw DataError("header missing field '" + std::string(key) + "'", line);
}

}  // namespace prefmem
