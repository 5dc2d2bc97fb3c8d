#pragma once

#include <cstdint>
#include <vector>

#include "stepwise/parity.hpp"
#include "stepwise/rnn.hpp"

namespace stepwise {

// ----- decoding -----

// Runs the model on its own output: feeds the label-independent prefix
// z_1..z_first, then at each later step the bit it predicted one step
// earlier. Returns the predicted bit for every scored position first..T.
std::vector<std::uint8_t> decode_sequence(const RnnParams& p, const SupervisedSequence& s);

// Parity-shaped decode: z_t = x_t for t <= d, then each later z_t is the
// model's own previous prediction; the answer is read off position T.
struct DecodedSequence {
    std::vector<std::uint8_t> z;   // decoded stream, length T
    int final_label = 0;           // +/-1 prediction at position T
};
DecodedSequence greedy_decode(const RnnParams& p, const std::vector<std::uint8_t>& x, int T);

// ----- scoring -----
// Teacher-forced numbers come from one forward pass on the ground-truth
// stream; autoregressive numbers from decode_sequence. The per-sample
// slack sum(tf wrong) - ar_wrong can never be negative: if every
// teacher-forced position is right, the decoder feeds itself exactly the
// ground-truth bits and reproduces them. evaluate() enforces that
// invariant on every call and throws if it ever breaks.
struct EvalReport {
    std::size_t samples = 0;
    Vec tf_losses;                   // mean zero-one loss per scored position
    double tf_loss_mean = 0.0;       // average over positions
    double ar_final_loss = 0.0;      // zero-one loss of the decoded final answer
    double accuracy = 0.0;           // 1 - ar_final_loss
    double union_bound_slack = 0.0;  // sum(tf_losses) - ar_final_loss, >= 0
};

EvalReport evaluate(const RnnParams& p, const std::vector<DatasetExample>& examples);

// per-position teacher-forced zero-one losses only
Vec teacher_forced_eval(const RnnParams& p, const std::vector<DatasetExample>& examples);
// autoregressive final zero-one loss only
double autoregressive_eval(const RnnParams& p, const std::vector<DatasetExample>& examples);

// The same invariant surfaced as data instead of an exception, plus the
// stronger agreement check: every sample whose teacher-forced predictions
// are all correct must decode to exactly the ground-truth labels.
struct UnionBoundReport {
    std::size_t samples = 0;
    int min_slack = 0;
    std::size_t violations = 0;            // samples with negative slack
    std::size_t perfect = 0;               // samples with all TF positions correct
    std::size_t agreement_failures = 0;    // perfect samples whose decode differs
};

UnionBoundReport union_bound_check(const RnnParams& p, const std::vector<DatasetExample>& examples);

}  // namespace stepwise
