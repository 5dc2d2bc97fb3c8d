#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stepwise/numerics.hpp"
#include "stepwise/parity.hpp"

namespace stepwise {

// ----- Elman network -----
// State recursion over a bit stream z_1..z_T:
//   h_0 = relu(M0)
//   h_t = relu(W h_{t-1} + A e_{z_t})    e_0 = (1,0), e_1 = (0,1)
//   f_t = <B, h_t>
// W is the weight matrix the theory trains; A, B, M0 are frozen at init
// in that regime. Entries start at N(0, 2/m) except B at N(0, 1/m).
struct RnnParams {
    int m = 0;
    Matrix W;   // m x m
    Matrix A;   // m x 2
    Vec B;      // m
    Vec M0;     // m

    bool operator==(const RnnParams&) const = default;
};

RnnParams init_params(int m, SeededRng& rng);

struct ForwardTrace {
    std::vector<Vec> h;     // h[0..T]; h[0] is the initial state
    std::vector<Vec> pre;   // pre[t-1] = W h_{t-1} + A e_{z_t}
    Vec logits;             // logits[t-1] = f_t
};
ForwardTrace forward(const RnnParams& p, std::span<const std::uint8_t> z);

// mean logistic loss over the scored slice: (1/K) sum log(1+exp(-y s))
double sequence_loss(std::span<const int> targets, std::span<const double> logits);

// loss of one supervised example (targets score the last |targets| logits)
double example_loss(const RnnParams& p, const SupervisedSequence& s);

// backprop through time of the mean logistic loss; the K targets sit on
// the last K positions of z. Reverse-order accumulation, relu'(0) = 0.
Matrix grad_w(const RnnParams& p, std::span<const std::uint8_t> z, std::span<const int> targets);
Matrix grad_w(const RnnParams& p, const SupervisedSequence& s);

struct Gradients {
    Matrix W;   // m x m
    Matrix A;   // m x 2
    Vec B;      // m
    Vec M0;     // m
};
// same pass but also accumulates the frozen tensors' gradients, for the
// variant that trains everything
Gradients grad_all(const RnnParams& p, std::span<const std::uint8_t> z, std::span<const int> targets);
Gradients grad_all(const RnnParams& p, const SupervisedSequence& s);

// decode rule: positive logit -> bit 1, negative -> 0, exact zero -> 1
int predict_bit(double logit);

// FNV-1a over the bytes of A, B, M0; cheap guard that frozen tensors stay put
std::uint64_t frozen_checksum(const RnnParams& p);

// ----- checkpoints -----
// Binary file: magic "SWCKPT01", then u32 version, u64 m, u64 seed,
// u64 step, then W, A, B, M0 as little-endian f64 in row-major order.
struct Checkpoint {
    RnnParams params;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
};
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stepwise
