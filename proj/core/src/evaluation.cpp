#include "stepwise/evaluation.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace stepwise {

namespace {

// incremental forward that swaps in the model's own bit once the prefix
// runs out; returns the predicted bit per position first..T
std::vector<std::uint8_t> decode_from_prefix(const RnnParams& p,
                                             const std::vector<std::uint8_t>& prefix, int T,
                                             int first) {
    if (first < 1 || first > T) throw std::invalid_argument("decode: bad scored window");
    if (static_cast<int>(prefix.size()) != first)
        throw std::invalid_argument("decode: prefix must cover positions 1..first");

    const std::size_t m = static_cast<std::size_t>(p.m);
    Vec h = relu(p.M0);
    std::vector<std::uint8_t> preds;
    preds.reserve(static_cast<std::size_t>(T - first + 1));
    for (int t = 1; t <= T; ++t) {
        const std::uint8_t zt = t <= first
                                    ? prefix[static_cast<std::size_t>(t - 1)]
                                    : preds[static_cast<std::size_t>(t - 1 - first)];
        Vec pre = matvec(p.W, h);
        for (std::size_t i = 0; i < m; ++i) pre[i] += p.A.at(i, zt);
        h = relu(std::move(pre));
        double f = 0.0;
        for (std::size_t i = 0; i < m; ++i) f += p.B[i] * h[i];
        if (t >= first) preds.push_back(static_cast<std::uint8_t>(predict_bit(f)));
    }
    return preds;
}

}  // namespace

std::vector<std::uint8_t> decode_sequence(const RnnParams& p, const SupervisedSequence& s) {
    const int first = s.first_scored();
    std::vector<std::uint8_t> prefix(s.z.begin(), s.z.begin() + first);
    return decode_from_prefix(p, prefix, s.T(), first);
}

DecodedSequence greedy_decode(const RnnParams& p, const std::vector<std::uint8_t>& x, int T) {
    const int d = static_cast<int>(x.size());
    if (d < 1 || T < d) throw std::invalid_argument("greedy_decode: need T >= |x| >= 1");
    const auto preds = decode_from_prefix(p, x, T, d);  // positions d..T

    DecodedSequence out;
    out.z = x;
    out.z.reserve(static_cast<std::size_t>(T));
    for (int t = d + 1; t <= T; ++t) out.z.push_back(preds[static_cast<std::size_t>(t - 1 - d)]);
    out.final_label = bit_to_label(preds[static_cast<std::size_t>(T - d)]);
    return out;
}

EvalReport evaluate(const RnnParams& p, const std::vector<DatasetExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const std::size_t K = examples.front().seq.targets.size();

    EvalReport rep;
    rep.samples = examples.size();
    rep.tf_losses.assign(K, 0.0);
    double slack_sum = 0.0;
    for (std::size_t n = 0; n < examples.size(); ++n) {
        const SupervisedSequence& s = examples[n].seq;
        if (s.targets.size() != K)
            throw std::invalid_argument("evaluate: examples disagree on target count");
        const int first = s.first_scored();

        const ForwardTrace tr = forward(p, s.z);
        int tf_wrong = 0;
        for (std::size_t k = 0; k < K; ++k) {
            const double logit = tr.logits[static_cast<std::size_t>(first - 1) + k];
            const int wrong = predict_bit(logit) != label_to_bit(s.targets[k]);
            rep.tf_losses[k] += wrong;
            tf_wrong += wrong;
        }

        const auto decoded = decode_sequence(p, s);
        const std::uint8_t final_bit = decoded[static_cast<std::size_t>(s.final_pos - first)];
        const int ar_wrong = final_bit != label_to_bit(s.final_label);
        rep.ar_final_loss += ar_wrong;

        const int slack = tf_wrong - ar_wrong;
        if (slack < 0)
            throw std::runtime_error("union bound violated at sample " + std::to_string(n));
        slack_sum += slack;
    }

    const double inv = 1.0 / static_cast<double>(rep.samples);
    double tf_total = 0.0;
    for (double& v : rep.tf_losses) {
        v *= inv;
        tf_total += v;
    }
    rep.tf_loss_mean = tf_total / static_cast<double>(K);
    rep.ar_final_loss *= inv;
    rep.accuracy = 1.0 - rep.ar_final_loss;
    rep.union_bound_slack = slack_sum * inv;
    return rep;
}

Vec teacher_forced_eval(const RnnParams& p, const std::vector<DatasetExample>& examples) {
    return evaluate(p, examples).tf_losses;
}

double autoregressive_eval(const RnnParams& p, const std::vector<DatasetExample>& examples) {
    return evaluate(p, examples).ar_final_loss;
}

UnionBoundReport union_bound_check(const RnnParams& p,
                                   const std::vector<DatasetExample>& examples) {
    if (examples.empty()) throw std::invalid_argument("union_bound_check: empty dataset");

    UnionBoundReport rep;
    rep.samples = examples.size();
    rep.min_slack = static_cast<int>(examples.front().seq.targets.size()) + 1;
    for (const auto& ex : examples) {
        const SupervisedSequence& s = ex.seq;
        const int first = s.first_scored();
        const std::size_t K = s.targets.size();

        const ForwardTrace tr = forward(p, s.z);
        int tf_wrong = 0;
        for (std::size_t k = 0; k < K; ++k)
            tf_wrong += predict_bit(tr.logits[static_cast<std::size_t>(first - 1) + k]) !=
                        label_to_bit(s.targets[k]);

        const auto decoded = decode_sequence(p, s);
        const int ar_wrong =
            decoded[static_cast<std::size_t>(s.final_pos - first)] != label_to_bit(s.final_label);

        const int slack = tf_wrong - ar_wrong;
        rep.min_slack = std::min(rep.min_slack, slack);
        if (slack < 0) ++rep.violations;
        if (tf_wrong == 0) {
            ++rep.perfect;
            for (std::size_t k = 0; k < K; ++k)
                if (decoded[k] != label_to_bit(s.targets[k])) {
                    ++rep.agreement_failures;
                    break;
                }
        }
    }
    return rep;
}

}  // namespace stepwise
