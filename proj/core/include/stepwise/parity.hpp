#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "stepwise/numerics.hpp"

namespace stepwise {

// Labels are +/-1 ints; the bit fed back into the input channel is
// (1+y)/2, i.e. +1 -> 1, -1 -> 0.
inline std::uint8_t label_to_bit(int y) { return y > 0 ? 1 : 0; }
inline int bit_to_label(std::uint8_t b) { return b ? +1 : -1; }

// ----- supervised sequences -----
// One example after a task has been unrolled into sequence form: the model
// consumes z_1..z_T and is scored on the last |targets| positions. Each
// scored step sees the previous step's ground-truth label bit (teacher
// forcing); whatever comes before the first scored position (the raw input
// bits, plus a fixed pad step for circuit traces) is label-independent.
struct SupervisedSequence {
    std::vector<std::uint8_t> z;   // full input stream, length T
    int input_len = 0;             // d = number of raw task input bits
    std::vector<int> targets;      // +/-1 labels for the last |targets| positions
    int final_label = 0;           // +/-1 answer to the whole task
    int final_pos = 0;             // 1-based position whose target is the answer

    int T() const { return static_cast<int>(z.size()); }
    // 1-based position of the first scored logit (= input_len for parity
    // sequences, input_len + 1 for circuit traces)
    int first_scored() const { return T() - static_cast<int>(targets.size()) + 1; }
};

// ----- bit-subset parity with a halving tree -----
// The task: parity of d/2 chosen bits out of d. The supervised version
// exposes the whole pairwise-combine tree: d/4 leaf labels (parity of
// consecutive chosen pairs), then each level multiplies adjacent labels
// until the root, giving d/2 - 1 targets on positions d..3d/2-2.
struct ParityInstance {
    int d = 0;                     // input length
    std::vector<int> subset;       // 1-based indices, sorted, size d/2
};

// d must be even with d/2 a power of two (the combine tree is perfect)
void validate_dims(int d);

ParityInstance sample_subset(int d, SeededRng& rng);

int sequence_length(int d);        // 3d/2 - 2

// +/-1 parity of the chosen bits: +1 iff an even number are 1
int final_parity(const std::vector<std::uint8_t>& x, const ParityInstance& inst);

// all d/2 - 1 tree labels in position order (leaves level, then up)
std::vector<int> tree_targets(const std::vector<std::uint8_t>& x, const ParityInstance& inst);

// supervised: every tree label is a target
SupervisedSequence train_sequence(const std::vector<std::uint8_t>& x, const ParityInstance& inst);

// no-supervision baseline: x, one pad step, then a single scored position
// carrying the final parity (sequence length d + 1)
SupervisedSequence answer_only_sequence(const std::vector<std::uint8_t>& x, const ParityInstance& inst);

std::vector<std::uint8_t> random_bits(int d, SeededRng& rng);

struct ParityExample {
    std::vector<std::uint8_t> x;
    SupervisedSequence seq;
};
// uniform x plus its supervised sequence
ParityExample sample_example(const ParityInstance& inst, SeededRng& rng);

// ----- dataset lines -----
// One example per line: "<x as 0/1 string> TAB <targets as +/- string>
// TAB <final as +/->". The z stream is rebuilt on load; circuit-trace
// files need the Delayed layout because of their pad step, which the line
// itself does not record.
enum class FeedbackLayout {
    Immediate,   // z = x ++ bits(targets except last); supervised parity
    Delayed,     // z = x ++ 0 ++ bits(targets except last); circuit traces
                 // and answer-only sequences (one pad step after x)
};

struct DatasetExample {
    std::vector<std::uint8_t> x;
    SupervisedSequence seq;
};

std::string format_example(const SupervisedSequence& s, const std::vector<std::uint8_t>& x);
DatasetExample parse_example(const std::string& line, int line_no,
                             FeedbackLayout layout = FeedbackLayout::Immediate);
std::vector<DatasetExample> read_dataset(std::istream& in,
                                         FeedbackLayout layout = FeedbackLayout::Immediate);
std::vector<DatasetExample> load_dataset(const std::string& path,
                                         FeedbackLayout layout = FeedbackLayout::Immediate);
void write_dataset(std::ostream& out, const std::vector<DatasetExample>& ex);
void save_dataset(const std::string& path, const std::vector<DatasetExample>& ex);

}  // namespace stepwise
