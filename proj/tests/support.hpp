#pragma once

#include <atomic>
#include <algorithm>
#include <cmath>
#include <span>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "prefmem/classifier.hpp"
#include "prefmem/memctl.hpp"

namespace support {

inline std::filesystem::path golden_dir() { return PREFMEM_GOLDEN_DIR; }

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("prefmem-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Parameters shared with tests/oracles/math_oracle.py: d=3, l=4, K=2, de=2.
inline prefmem::GateParams memctl_fixture() {
    using std::cos;
    using std::sin;
    prefmem::GateParams g = prefmem::GateParams::zeros({3, 4, 2, 2});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            g.W_MM(i, j) = 0.1 * sin(1.0 + double(i) * 3 + double(j));
            g.W_EM(i, j) = 0.2 * cos(2.0 + double(i) + double(j) * 2);
        }
        g.b[i] = 0.05 * (double(i) - 1.0);
        for (std::size_t j = 0; j < 4; ++j) g.W_in(i, j) = 0.3 * sin(0.5 + double(i) * 4 + double(j) * 1.5);
    }
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t i = 0; i < 3; ++i) g.W_out(k, i) = 0.4 * cos(double(k) * 2 + double(i) * 1.3);
        g.b_out[k] = 0.1 * double(k);
    }
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t i = 0; i < 3; ++i) g.W_M(r, i) = double(r) - double(i) * 0.5;
    }
    return g;
}

inline std::vector<prefmem::TurnEvent> memctl_fixture_events() {
    auto e = [](std::size_t t) {
        prefmem::Vector v(4);
        for (std::size_t j = 0; j < 4; ++j) v[j] = std::sin(1.7 * double(t) + 0.9 * double(j));
        return v;
    };
    using prefmem::TurnEvent;
    return {TurnEvent::preferred(e(0), 0), TurnEvent::neutral(), TurnEvent::preferred(e(2), 1), TurnEvent::neutral(1),
            TurnEvent::preferred(e(4), 0)};
}

// l=4, h=3, batch of three.
inline prefmem::ClassifierParams classifier_fixture() {
    auto p = prefmem::ClassifierParams::zeros(4, 3);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) p.W1(i, j) = 0.5 * std::sin(double(i) * 2 + double(j) + 0.3);
        p.b1[i] = 0.1 * double(i);
        p.W2(0, i) = 0.7 * std::cos(double(i) + 0.2);
    }
    p.b2[0] = -0.05;
    return p;
}

inline std::vector<prefmem::LabeledExample> classifier_fixture_batch() {
    std::vector<prefmem::LabeledExample> batch;
    const int labels[] = {1, 0, 1};
    for (std::size_t n = 0; n < 3; ++n) {
        prefmem::Vector x(4);
        for (std::size_t j = 0; j < 4; ++j) x[j] = std::cos(double(n) * 1.1 + double(j) * 0.7);
        batch.push_back({x, labels[n], ""});
    }
    return batch;
}

// Independent long-double forward pass of the summed CE loss, with the
// trainable tensors taken from `theta` in trainable_views order. Finite
// differences of a double-precision loss lose about five digits at h=1e-5,
// which swamps gradient entries near 1e-7.
inline double reference_sequence_loss(const prefmem::GateParams& shape, std::span<const double> theta,
                                      std::span<const prefmem::TurnEvent> events) {
    using LD = long double;
    const auto dims = shape.dims();
    const std::size_t d = dims.d, l = dims.l, K = dims.K;
    std::size_t k = 0;
    auto take = [&](std::size_t n) {
        std::vector<LD> v(theta.begin() + static_cast<std::ptrdiff_t>(k), theta.begin() + static_cast<std::ptrdiff_t>(k + n));
        k += n;
        return v;
    };
    const auto W_MM = take(d * d), W_EM = take(d * d), b = take(d), W_in = take(d * l), W_out = take(K * d),
               b_out = take(K);
    std::vector<LD> M(d, 0.0L);
    LD loss = 0.0L;
    for (const auto& ev : events) {
        if (ev.preference) {
            std::vector<LD> E(d, 0.0L);
            for (std::size_t i = 0; i < d; ++i) {
                for (std::size_t j = 0; j < l; ++j) E[i] += W_in[i * l + j] * static_cast<LD>((*ev.embedding)[j]);
            }
            std::vector<LD> next(d);
            for (std::size_t i = 0; i < d; ++i) {
                LD a = b[i];
                for (std::size_t j = 0; j < d; ++j) a += W_MM[i * d + j] * M[j] + W_EM[i * d + j] * E[j];
                const LD f = 1.0L / (1.0L + std::exp(-a));
                next[i] = f * M[i] + (1.0L - f) * E[i];
            }
            M = next;
        }
        if (ev.category) {
            std::vector<LD> z(K);
            LD zmax = -1e300L;
            for (std::size_t c = 0; c < K; ++c) {
                z[c] = b_out[c];
                for (std::size_t j = 0; j < d; ++j) z[c] += W_out[c * d + j] * M[j];
                zmax = std::max(zmax, z[c]);
            }
            LD sum = 0.0L;
            for (std::size_t c = 0; c < K; ++c) sum += std::exp(z[c] - zmax);
            loss += zmax + std::log(sum) - z[*ev.category];
        }
    }
    return static_cast<double>(loss);
}

// Relative closeness for oracle comparisons.
inline bool close(double a, double b, double rel = 1e-12, double abs = 1e-15) {
    return std::fabs(a - b) <= std::max(abs, rel * std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace support
