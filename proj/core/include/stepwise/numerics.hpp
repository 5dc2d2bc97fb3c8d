#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace stepwise {

using Vec = std::vector<double>;

// ----- Matrix -----
// Dense row-major matrix of doubles. Minimal on purpose: the model code
// only ever needs matvec, transposed matvec and rank-1 accumulation.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {
        if (rows == 0 || cols == 0)
            throw std::invalid_argument("Matrix: dimensions must be positive");
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& at(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    double* row(std::size_t r) { return v_.data() + r * cols_; }
    const double* row(std::size_t r) const { return v_.data() + r * cols_; }

    double* data() { return v_.data(); }
    const double* data() const { return v_.data(); }
    std::size_t size() const { return v_.size(); }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    Vec v_;
};

// ----- SeededRng -----
// Deterministic random source. mt19937_64 is fully specified by the
// standard and the gaussian transform below is our own (Marsaglia polar
// with a cached spare), so a given seed yields the same stream on every
// platform and build. std::normal_distribution is avoided because its
// algorithm is implementation-defined.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed);

    // Independent child stream keyed by (this stream's seed, id). Used to
    // keep e.g. data sampling, weight init and perturbation noise from
    // consuming each other's draws.
    SeededRng derive(std::uint64_t stream_id) const;

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    // uniform on [0,1) with 53 random bits
    double uniform01();
    // uniform on [a,b)
    double uniform(double a, double b);
    // standard normal
    double gauss();
    // unbiased integer in [0,n) via rejection
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ----- constructors / kernels -----

// rows x cols matrix with i.i.d. N(0, variance) entries, filled row-major.
Matrix gauss_init(std::size_t rows, std::size_t cols, double variance, SeededRng& rng);

// y = M x. Each output entry is accumulated left to right over the row so
// reruns are bit-identical.
Vec matvec(const Matrix& m, const Vec& x);

// y = M^T x, accumulated in fixed (row-major over M) order.
Vec matvec_transposed(const Matrix& m, const Vec& x);

// elementwise max(0, x)
Vec relu(Vec x);

bool all_finite(const Vec& x);
bool all_finite(const Matrix& m);

}  // namespace stepwise
