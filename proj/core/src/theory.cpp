#include "stepwise/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace stepwise {

// ----- exact counting -----

std::string big_to_string(BigCount v) {
    if (v == 0) return "0";
    std::string s;
    while (v != 0) {
        s.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
        v /= 10;
    }
    std::reverse(s.begin(), s.end());
    return s;
}

BigCount binomial(int n, int k) {
    if (n < 0 || k < 0 || k > n) throw std::invalid_argument("binomial: need 0 <= k <= n");
    if (k > n - k) k = n - k;
    BigCount r = 1;
    for (int i = 1; i <= k; ++i) {
        BigCount factor = static_cast<BigCount>(n - k + i);
        if (r > ~BigCount{0} / factor) throw std::overflow_error("binomial: exceeds 128 bits");
        r = r * factor / static_cast<BigCount>(i);  // divisible at every step
    }
    return r;
}

// ----- polynomial gate simulation -----

double PolyGate::eval_inner(double inner) const {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * inner + coeffs[i];
    return acc;
}

double PolyGate::eval_bits(const std::vector<std::uint8_t>& bits) const {
    if (static_cast<int>(bits.size()) != fan_in)
        throw std::invalid_argument("PolyGate::eval_bits: wrong bit count");
    double inner = 0.0;
    for (int i = 0; i < fan_in; ++i) {
        if (bits[i] > 1) throw std::invalid_argument("PolyGate::eval_bits: bits must be 0/1");
        inner += w[2 * i + bits[i]];
    }
    return eval_inner(inner);
}

PolyGate two_bit_parity_poly() {
    const double r = 1.0 / std::sqrt(2.0);
    PolyGate g;
    g.fan_in = 2;
    g.w = {r, 0.0, r, 0.0};
    g.coeffs = {1.0, -4.0 * std::sqrt(2.0), 4.0};
    return g;
}

std::uint64_t alpha_encode(const std::vector<std::uint8_t>& bits) {
    if (bits.empty() || bits.size() > 63)
        throw std::invalid_argument("alpha_encode: need 1..63 bits");
    std::uint64_t a = 0;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] > 1) throw std::invalid_argument("alpha_encode: bits must be 0/1");
        if (bits[i] == 0) a += std::uint64_t{1} << i;
    }
    return a;
}

double gate_weight_scale(int N) {
    if (N < 1) throw std::invalid_argument("gate_weight_scale: N must be >= 1");
    return std::sqrt(3.0 / (std::pow(4.0, N) - 1.0));
}

Vec gate_weight_vector(int N) {
    const double c = gate_weight_scale(N);
    Vec w(2 * static_cast<std::size_t>(N), 0.0);
    double p = 1.0;
    for (int i = 0; i < N; ++i, p *= 2.0) w[2 * i] = c * p;
    return w;
}

PolyGate lagrange_gate_poly(const GateTable& table) {
    const int N = table.fan_in;
    if (N < 1 || N > 6) throw std::invalid_argument("lagrange_gate_poly: fan-in must be 1..6");
    const std::size_t M = std::size_t{1} << N;
    if (table.outputs.size() != M)
        throw std::invalid_argument("lagrange_gate_poly: table needs 2^N outputs");

    // Newton divided differences at the integer nodes alpha = 0..M-1. The
    // pattern with alpha = a is the bit-complement of index a.
    Vec dd(M);
    for (std::size_t a = 0; a < M; ++a) dd[a] = table.outputs[(M - 1) - a];
    for (std::size_t j = 1; j < M; ++j)
        for (std::size_t i = M - 1; i >= j; --i)
            dd[i] = (dd[i] - dd[i - 1]) / static_cast<double>(j);

    // expand the Newton form to monomial coefficients
    Vec coeffs(M, 0.0);
    coeffs[0] = dd[M - 1];
    std::size_t deg = 0;
    for (std::size_t j = M - 1; j-- > 0;) {
        const double node = static_cast<double>(j);
        ++deg;
        for (std::size_t k = deg; k >= 1; --k) coeffs[k] = coeffs[k - 1] - node * coeffs[k];
        coeffs[0] = dd[j] - node * coeffs[0];
    }

    // psi receives the unit-w inner product c*alpha, so absorb c into the
    // coefficients
    const double c = gate_weight_scale(N);
    double scale = 1.0;
    for (std::size_t i = 0; i < M; ++i, scale *= c) coeffs[i] /= scale;
    for (double v : coeffs)
        if (!std::isfinite(v)) throw std::runtime_error("lagrange_gate_poly: non-finite coefficient");

    PolyGate g;
    g.fan_in = N;
    g.w = gate_weight_vector(N);
    g.coeffs = std::move(coeffs);
    return g;
}

double phi_index(int T, int max_deg, double max_coef, int N) {
    if (T < 1 || max_deg < 1 || N < 1) throw std::invalid_argument("phi_index: T, max_deg, N must be >= 1");
    if (!(max_coef > 0.0)) throw std::invalid_argument("phi_index: max_coef must be > 0");
    const double lg = (16.0 + 3.0 * N + max_deg) * std::log(static_cast<double>(T)) +
                      3.0 * N * std::log(static_cast<double>(max_deg)) + 2.0 * std::log(max_coef);
    return std::exp(lg);  // +inf past double range, which is fine for a growth index
}

// ----- hardness quantities -----

namespace {

std::uint32_t subset_mask(const std::vector<int>& s, int d) {
    if (d < 1 || d > 20) throw std::invalid_argument("parity enumeration: d must be 1..20");
    std::uint32_t mask = 0;
    int prev = 0;
    for (int i : s) {
        if (i <= prev || i > d) throw std::invalid_argument("subset must be sorted 1-based within [1, d]");
        prev = i;
        mask |= std::uint32_t{1} << (i - 1);
    }
    return mask;
}

int subset_label(const std::vector<int>& subset, const std::vector<std::uint8_t>& x) {
    int bit = 0;
    for (int i : subset) bit ^= x[static_cast<std::size_t>(i - 1)];
    return bit ? -1 : +1;
}

std::vector<int> sample_half_subset(int d, SeededRng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) idx[static_cast<std::size_t>(i)] = i + 1;
    const int k = d / 2;
    for (int i = 0; i < k; ++i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[i + static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(d - i)))]);
    idx.resize(static_cast<std::size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

double frob_sq_diff(const Matrix& a, const Matrix& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a.data()[i] - b.data()[i];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

double parity_correlation(const std::vector<int>& a, const std::vector<int>& b, int d) {
    const std::uint32_t ma = subset_mask(a, d);
    const std::uint32_t mb = subset_mask(b, d);
    long long acc = 0;
    const std::uint32_t total = std::uint32_t{1} << d;
    for (std::uint32_t x = 0; x < total; ++x) {
        const int sa = (std::popcount(x & ma) & 1) ? -1 : +1;
        const int sb = (std::popcount(x & mb) & 1) ? -1 : +1;
        acc += sa * sb;
    }
    // 2^d is a power of two, so this division is exact
    return static_cast<double>(acc) / static_cast<double>(total);
}

Matrix logit_grad_w(const RnnParams& p, const std::vector<std::uint8_t>& z) {
    const ForwardTrace tr = forward(p, z);
    const std::size_t T = z.size();
    const std::size_t m = static_cast<std::size_t>(p.m);

    Matrix g(m, m);
    Vec delta(m, 0.0);
    for (std::size_t t = T; t >= 1; --t) {
        Vec dh = (t == T) ? Vec(m, 0.0) : matvec_transposed(p.W, delta);
        if (t == T)
            for (std::size_t i = 0; i < m; ++i) dh[i] = p.B[i];
        for (std::size_t i = 0; i < m; ++i) delta[i] = tr.pre[t - 1][i] > 0.0 ? dh[i] : 0.0;
        const Vec& hprev = tr.h[t - 1];
        for (std::size_t i = 0; i < m; ++i) {
            const double di = delta[i];
            if (di == 0.0) continue;
            double* row = g.row(i);
            for (std::size_t j = 0; j < m; ++j) row[j] += di * hprev[j];
        }
    }
    return g;
}

double hypothesis_gradient_variance(const RnnParams& p,
                                    const std::vector<std::vector<int>>& subsets,
                                    const std::vector<std::vector<std::uint8_t>>& inputs) {
    const std::size_t K = subsets.size();
    if (K < 2) throw std::invalid_argument("hypothesis_gradient_variance: need at least 2 hypotheses");
    if (inputs.empty()) throw std::invalid_argument("hypothesis_gradient_variance: need inputs");

    const std::size_t m = static_cast<std::size_t>(p.m);
    std::vector<Matrix> means;
    means.reserve(K);
    std::vector<int> target(1);
    for (const auto& subset : subsets) {
        Matrix acc(m, m);
        for (const auto& x : inputs) {
            target[0] = subset_label(subset, x);
            const Matrix g = grad_w(p, x, target);
            for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += g.data()[i];
        }
        const double inv = 1.0 / static_cast<double>(inputs.size());
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] *= inv;
        means.push_back(std::move(acc));
    }

    Matrix center(m, m);
    for (const Matrix& g : means)
        for (std::size_t i = 0; i < center.size(); ++i) center.data()[i] += g.data()[i];
    const double invk = 1.0 / static_cast<double>(K);
    for (std::size_t i = 0; i < center.size(); ++i) center.data()[i] *= invk;

    double var = 0.0;
    for (const Matrix& g : means) var += frob_sq_diff(g, center);
    return var / static_cast<double>(K - 1);
}

VarianceReport variance_estimate(const RnnParams& p, int d, std::size_t K, std::size_t M,
                                 SeededRng& rng) {
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("variance_estimate: d must be even and >= 2");
    if (K < 2 || M < 1) throw std::invalid_argument("variance_estimate: need K >= 2 and M >= 1");

    // inputs first so every hypothesis is scored on the same sample
    std::vector<std::vector<std::uint8_t>> xs;
    xs.reserve(M);
    for (std::size_t i = 0; i < M; ++i) xs.push_back(random_bits(d, rng));
    std::vector<std::vector<int>> subsets;
    subsets.reserve(K);
    for (std::size_t i = 0; i < K; ++i) subsets.push_back(sample_half_subset(d, rng));

    VarianceReport rep;
    rep.d = d;
    rep.hypotheses = K;
    rep.inputs = M;
    rep.estimate = hypothesis_gradient_variance(p, subsets, xs);
    rep.class_size = binomial(d, d / 2);
    double gsq = 0.0;
    for (const auto& x : xs) {
        const Matrix j = logit_grad_w(p, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < j.size(); ++i) acc += j.data()[i] * j.data()[i];
        gsq += acc;
    }
    rep.grad_sq_mean = gsq / static_cast<double>(M);
    return rep;
}

double guess_error(double alpha, BigCount class_size) {
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("guess_error: alpha must be in (0, 1]");
    if (class_size == 0) throw std::invalid_argument("guess_error: empty class");
    const double ah = alpha * static_cast<double>(class_size);
    if (ah < 1.0) throw std::invalid_argument("guess_error: alpha shrinks the class below one hypothesis");
    return (ah - 1.0) / (2.0 * ah);
}

std::vector<std::vector<int>> all_half_subsets(int d) {
    if (d < 2 || d % 2 != 0 || d > 30) throw std::invalid_argument("all_half_subsets: d must be even in [2, 30]");
    const int k = d / 2;
    std::vector<std::vector<int>> out;
    std::vector<int> cur(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) cur[static_cast<std::size_t>(i)] = i + 1;
    while (true) {
        out.push_back(cur);
        int i = k - 1;
        while (i >= 0 && cur[static_cast<std::size_t>(i)] == d - (k - 1 - i)) --i;
        if (i < 0) break;
        ++cur[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

double guess_error_empirical(int d) {
    if (d < 2 || d % 2 != 0 || d > 10) throw std::invalid_argument("guess_error_empirical: d must be even in [2, 10]");
    const auto hypotheses = all_half_subsets(d);
    const std::uint32_t total = std::uint32_t{1} << d;

    // target = first subset; by symmetry any choice gives the same count
    const std::uint32_t target = subset_mask(hypotheses.front(), d);
    std::uint64_t disagreements = 0;
    for (const auto& h : hypotheses) {
        const std::uint32_t mask = subset_mask(h, d);
        for (std::uint32_t x = 0; x < total; ++x)
            disagreements += (std::popcount(x & mask) & 1) != (std::popcount(x & target) & 1);
    }
    const std::uint64_t den = static_cast<std::uint64_t>(hypotheses.size()) * total;
    return static_cast<double>(disagreements) / static_cast<double>(den);
}

}  // namespace stepwise
