#include "stepwise/numerics.hpp"

#include <cmath>

namespace stepwise {

namespace {

// splitmix64 finalizer; used to mix (seed, stream_id) into a child seed.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

SeededRng SeededRng::derive(std::uint64_t stream_id) const {
    return SeededRng(mix64(seed_ ^ mix64(stream_id)));
}

std::uint64_t SeededRng::next_u64() { return gen_(); }

double SeededRng::uniform01() {
    // top 53 bits -> [0,1) on the double grid
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double a, double b) {
    return a + (b - a) * uniform01();
}

double SeededRng::gauss() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * uniform01() - 1.0;
        v = 2.0 * uniform01() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

std::uint64_t SeededRng::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SeededRng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
        r = gen_();
    } while (r >= limit);
    return r % n;
}

Matrix gauss_init(std::size_t rows, std::size_t cols, double variance, SeededRng& rng) {
    if (!(variance >= 0.0) || !std::isfinite(variance))
        throw std::invalid_argument("gauss_init: variance must be finite and >= 0");
    Matrix m(rows, cols);
    const double sd = std::sqrt(variance);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = sd * rng.gauss();
    return m;
}

Vec matvec(const Matrix& m, const Vec& x) {
    if (x.size() != m.cols())
        throw std::invalid_argument("matvec: got length-" + std::to_string(x.size()) +
                                    " vector for " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()) + " matrix");
    Vec y(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

Vec matvec_transposed(const Matrix& m, const Vec& x) {
    if (x.size() != m.rows())
        throw std::invalid_argument("matvec_transposed: got length-" + std::to_string(x.size()) +
                                    " vector for " + std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()) + " matrix");
    Vec y(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols(); ++c) y[c] += xr * row[c];
    }
    return y;
}

Vec relu(Vec x) {
    for (double& v : x)
        if (v < 0.0) v = 0.0;
    return x;
}

bool all_finite(const Vec& x) {
    for (double v : x)
        if (!std::isfinite(v)) return false;
    return true;
}

bool all_finite(const Matrix& m) {
    for (std::size_t i = 0; i < m.size(); ++i)
        if (!std::isfinite(m.data()[i])) return false;
    return true;
}

}  // namespace stepwise
