#include "stepwise/rnn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stepwise {

RnnParams init_params(int m, SeededRng& rng) {
    if (m < 1) throw std::invalid_argument("init_params: m must be positive");
    RnnParams p;
    p.m = m;
    const double mm = static_cast<double>(m);
    // draw order is part of the determinism contract: W, A, B, M0
    p.W = gauss_init(m, m, 2.0 / mm, rng);
    p.A = gauss_init(m, 2, 2.0 / mm, rng);
    p.B.resize(m);
    const double sb = std::sqrt(1.0 / mm);
    for (auto& v : p.B) v = sb * rng.gauss();
    p.M0.resize(m);
    const double sm = std::sqrt(2.0 / mm);
    for (auto& v : p.M0) v = sm * rng.gauss();
    return p;
}

ForwardTrace forward(const RnnParams& p, std::span<const std::uint8_t> z) {
    if (z.empty()) throw std::invalid_argument("forward: empty sequence");
    const int m = p.m;
    ForwardTrace tr;
    tr.h.reserve(z.size() + 1);
    tr.pre.reserve(z.size());
    tr.logits.reserve(z.size());
    tr.h.push_back(relu(p.M0));
    for (std::uint8_t zt : z) {
        if (zt > 1) throw std::invalid_argument("forward: input symbols must be bits");
        Vec pre = matvec(p.W, tr.h.back());
        for (int i = 0; i < m; ++i) pre[i] += p.A.at(i, zt);  // A e_z is a column pick
        Vec h = relu(pre);
        double f = 0.0;
        for (int i = 0; i < m; ++i) f += p.B[i] * h[i];
        tr.pre.push_back(std::move(pre));
        tr.h.push_back(std::move(h));
        tr.logits.push_back(f);
    }
    return tr;
}

namespace {

// log(1 + exp(v)) without overflow
double softplus(double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

// sigmoid(-u) = 1 / (1 + e^u)
double sigmoid_neg(double u) {
    if (u >= 0.0) {
        const double e = std::exp(-u);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(u));
}

void check_scored_slice(std::size_t T, std::size_t K) {
    if (K < 1 || K > T)
        throw std::invalid_argument("got " + std::to_string(K) + " targets for a length-" +
                                    std::to_string(T) + " sequence");
}

}  // namespace

double sequence_loss(std::span<const int> targets, std::span<const double> logits) {
    if (targets.size() != logits.size() || targets.empty())
        throw std::invalid_argument("sequence_loss: need matching nonempty targets/logits");
    double acc = 0.0;
    for (std::size_t k = 0; k < targets.size(); ++k)
        acc += softplus(-static_cast<double>(targets[k]) * logits[k]);
    return acc / static_cast<double>(targets.size());
}

double example_loss(const RnnParams& p, const SupervisedSequence& s) {
    check_scored_slice(s.z.size(), s.targets.size());
    const ForwardTrace tr = forward(p, s.z);
    return sequence_loss(s.targets,
                         std::span<const double>(tr.logits).last(s.targets.size()));
}

namespace {

Gradients backward(const RnnParams& p, std::span<const std::uint8_t> z,
                   std::span<const int> targets) {
    check_scored_slice(z.size(), targets.size());
    const int m = p.m;
    const int T = static_cast<int>(z.size());
    const int first = T - static_cast<int>(targets.size()) + 1;  // first scored position
    const double K = static_cast<double>(targets.size());

    const ForwardTrace tr = forward(p, z);

    Gradients g;
    g.W = Matrix(m, m);
    g.A = Matrix(m, 2);
    g.B.assign(m, 0.0);
    g.M0.assign(m, 0.0);

    Vec delta(m, 0.0);  // dLoss/d(pre_{t+1}) from the step above
    for (int t = T; t >= 1; --t) {
        Vec dh = (t == T) ? Vec(m, 0.0) : matvec_transposed(p.W, delta);
        if (t >= first) {
            const double y = static_cast<double>(targets[t - first]);
            const double coef = -y * sigmoid_neg(y * tr.logits[t - 1]) / K;
            const Vec& ht = tr.h[t];
            for (int i = 0; i < m; ++i) {
                dh[i] += coef * p.B[i];
                g.B[i] += coef * ht[i];
            }
        }
        const Vec& pre = tr.pre[t - 1];
        for (int i = 0; i < m; ++i) delta[i] = pre[i] > 0.0 ? dh[i] : 0.0;

        const Vec& hprev = tr.h[t - 1];
        for (int i = 0; i < m; ++i) {
            double* row = g.W.row(i);
            const double di = delta[i];
            if (di != 0.0)
                for (int j = 0; j < m; ++j) row[j] += di * hprev[j];
        }
        const std::uint8_t zt = z[t - 1];
        for (int i = 0; i < m; ++i) g.A.at(i, zt) += delta[i];
    }
    // initial state: h_0 = relu(M0)
    const Vec back0 = matvec_transposed(p.W, delta);
    for (int i = 0; i < m; ++i) g.M0[i] = p.M0[i] > 0.0 ? back0[i] : 0.0;
    return g;
}

}  // namespace

Matrix grad_w(const RnnParams& p, std::span<const std::uint8_t> z, std::span<const int> targets) {
    return backward(p, z, targets).W;
}

Matrix grad_w(const RnnParams& p, const SupervisedSequence& s) {
    return backward(p, s.z, s.targets).W;
}

Gradients grad_all(const RnnParams& p, std::span<const std::uint8_t> z, std::span<const int> targets) {
    return backward(p, z, targets);
}

Gradients grad_all(const RnnParams& p, const SupervisedSequence& s) {
    return backward(p, s.z, s.targets);
}

int predict_bit(double logit) {
    return logit < 0.0 ? 0 : 1;  // ties go to +1
}

std::uint64_t frozen_checksum(const RnnParams& p) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits = std::bit_cast<std::uint64_t>(v[i]);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xff;
                h *= 0x100000001b3ull;
            }
        }
    };
    mix(p.A.data(), p.A.size());
    mix(p.B.data(), p.B.size());
    mix(p.M0.data(), p.M0.size());
    return h;
}

// ----- checkpoint io -----

namespace {

constexpr char kMagic[8] = {'S', 'W', 'C', 'K', 'P', 'T', '0', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& o, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    o.write(b, 4);
}
void put_u64(std::ostream& o, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    o.write(b, 8);
}
void put_f64(std::ostream& o, double d) { put_u64(o, std::bit_cast<std::uint64_t>(d)); }
void put_block(std::ostream& o, const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) put_f64(o, v[i]);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }
void get_block(std::istream& in, double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f64(in);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 8);
    put_u32(out, kVersion);
    put_u64(out, static_cast<std::uint64_t>(c.params.m));
    put_u64(out, c.seed);
    put_u64(out, c.step);
    put_block(out, c.params.W.data(), c.params.W.size());
    put_block(out, c.params.A.data(), c.params.A.size());
    put_block(out, c.params.B.data(), c.params.B.size());
    put_block(out, c.params.M0.data(), c.params.M0.size());
    if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t m64 = get_u64(in);
    if (m64 == 0 || m64 > (1ull << 20))
        throw std::runtime_error("implausible network width in checkpoint: " + path);
    const int m = static_cast<int>(m64);

    Checkpoint c;
    c.params.m = m;
    c.seed = get_u64(in);
    c.step = get_u64(in);
    c.params.W = Matrix(m, m);
    c.params.A = Matrix(m, 2);
    c.params.B.resize(m);
    c.params.M0.resize(m);
    get_block(in, c.params.W.data(), c.params.W.size());
    get_block(in, c.params.A.data(), c.params.A.size());
    get_block(in, c.params.B.data(), c.params.B.size());
    get_block(in, c.params.M0.data(), c.params.M0.size());
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    in.peek();
    if (!in.eof()) throw std::runtime_error("trailing bytes in checkpoint: " + path);
    return c;
}

}  // namespace stepwise
