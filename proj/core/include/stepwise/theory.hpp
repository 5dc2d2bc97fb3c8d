#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stepwise/numerics.hpp"
#include "stepwise/rnn.hpp"

namespace stepwise {

// Exact integer counts that outgrow 64 bits (subset-class sizes and their
// products). 128 bits covers C(d, d/2) up to d ≈ 128.
using BigCount = unsigned __int128;

std::string big_to_string(BigCount v);

// exact C(n, k); throws on 128-bit overflow
BigCount binomial(int n, int k);

// ----- polynomial gate simulation -----
// A gate over N bits realized as psi(<w, stacked one-hots>) with a unit
// direction w and polynomial psi. This is the witness object for "every
// O(1)-fan-in step is expressible by the recurrent model's feature class".
struct PolyGate {
    int fan_in = 0;    // N
    Vec w;             // length 2N, unit norm
    Vec coeffs;        // psi coefficients, ascending degree

    double eval_inner(double inner) const;                     // Horner
    double eval_bits(const std::vector<std::uint8_t>& bits) const;
};

// The 2-bit equality-parity gate: w = (1,0,1,0)/sqrt(2) sends the bit
// pairs to {sqrt(2), 1/sqrt(2), 0} and psi interpolates +1, -1, +1 there.
// psi(z) = 4 z^2 - 4 sqrt(2) z + 1 (the unique quadratic through those
// nodes; all |coeffs| < 10).
PolyGate two_bit_parity_poly();

// alpha(bits) = sum over i of 2^i when bits[i] == 0 — integer encoding of
// the N input bits (zero bits carry the weight)
std::uint64_t alpha_encode(const std::vector<std::uint8_t>& bits);

// unit vector sqrt(3/(4^N - 1)) * (2^0, 0, 2^1, 0, ..., 2^{N-1}, 0);
// its inner product with stacked one-hots is alpha * sqrt(3/(4^N - 1))
Vec gate_weight_vector(int N);
double gate_weight_scale(int N);   // sqrt(3/(4^N - 1))

// Truth table over N inputs. outputs[idx] is the gate value for the
// pattern whose i-th bit (LSB first) is input bit i+1.
struct GateTable {
    int fan_in = 0;
    std::vector<double> outputs;   // size 2^N
};

// Interpolates the table at the integer nodes alpha = 0..2^N-1 (Newton
// divided differences), then rescales coefficients so psi applies to the
// unit-w inner product. Throws when a coefficient comes out non-finite.
PolyGate lagrange_gate_poly(const GateTable& table);

// Growth index T^(16+3N+max_deg) * max_deg^(3N) * max_coef^2, a
// comparative quantity only (unknown constants set to 1, log factors
// dropped). Overflow surfaces as +infinity.
double phi_index(int T, int max_deg, double max_coef, int N);

// ----- hardness quantities for the no-supervision regime -----

// exact E_x[(-1)^{sum_A x} (-1)^{sum_B x}] by enumerating all 2^d inputs;
// subsets are sorted 1-based index lists. 0 exactly for distinct subsets.
double parity_correlation(const std::vector<int>& a, const std::vector<int>& b, int d);

// d(f_T)/dW for the final position of a sequence (the predictor's own
// gradient, no loss attached)
Matrix logit_grad_w(const RnnParams& p, const std::vector<std::uint8_t>& z);

// Variance across candidate subsets of the mean final-answer loss
// gradient, all hypotheses scored on one shared input sample: for each
// subset, average d(loss)/dW of the answer-only sequence over the inputs,
// then take the Bessel-corrected variance of those matrices around their
// mean (squared Frobenius distances).
double hypothesis_gradient_variance(const RnnParams& p,
                                    const std::vector<std::vector<int>>& subsets,
                                    const std::vector<std::vector<std::uint8_t>>& inputs);

struct VarianceReport {
    int d = 0;
    std::size_t hypotheses = 0;    // K sampled
    std::size_t inputs = 0;        // M sampled
    double estimate = 0.0;         // gradient variance across the K subsets
    double grad_sq_mean = 0.0;     // mean squared Frobenius norm of d(f)/dW
    BigCount class_size = 0;       // |H| = C(d, d/2), exact
};

// Monte Carlo estimate: draws M uniform inputs (shared across hypotheses),
// then K uniform d/2-subsets, and reports hypothesis_gradient_variance.
// d only needs to be even here — no combine-tree constraint.
VarianceReport variance_estimate(const RnnParams& p, int d, std::size_t K, std::size_t M,
                                 SeededRng& rng);

// expected zero-one loss of guessing uniformly from an alpha-fraction of a
// size-H hypothesis class: (alpha*H - 1) / (2*alpha*H)
double guess_error(double alpha, BigCount class_size);

// the same quantity for the d/2-subset parity class at alpha = 1, by full
// enumeration of hypotheses and inputs (exact integer counting)
double guess_error_empirical(int d);

// all d/2-subsets of [1, d] in lexicographic order
std::vector<std::vector<int>> all_half_subsets(int d);

}  // namespace stepwise
