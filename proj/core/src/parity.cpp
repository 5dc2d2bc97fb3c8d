#include "stepwise/parity.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace stepwise {

void validate_dims(int d) {
    if (d < 4 || d % 2 != 0)
        throw std::invalid_argument("parity: d must be even and >= 4, got " + std::to_string(d));
    const int half = d / 2;
    if ((half & (half - 1)) != 0)
        throw std::invalid_argument("parity: d/2 must be a power of two so the combine tree is perfect, got d=" +
                                    std::to_string(d));
}

ParityInstance sample_subset(int d, SeededRng& rng) {
    validate_dims(d);
    // partial Fisher-Yates over 1..d, keep the first d/2, then sort
    std::vector<int> idx(d);
    for (int i = 0; i < d; ++i) idx[i] = i + 1;
    const int k = d / 2;
    for (int i = 0; i < k; ++i) {
        const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(d - i)));
        std::swap(idx[i], idx[j]);
    }
    ParityInstance inst;
    inst.d = d;
    inst.subset.assign(idx.begin(), idx.begin() + k);
    std::sort(inst.subset.begin(), inst.subset.end());
    return inst;
}

int sequence_length(int d) {
    validate_dims(d);
    return 3 * d / 2 - 2;
}

namespace {

void check_example(const std::vector<std::uint8_t>& x, const ParityInstance& inst) {
    validate_dims(inst.d);
    if (static_cast<int>(x.size()) != inst.d)
        throw std::invalid_argument("parity: x has " + std::to_string(x.size()) +
                                    " bits, instance expects " + std::to_string(inst.d));
    if (static_cast<int>(inst.subset.size()) != inst.d / 2)
        throw std::invalid_argument("parity: subset size must be d/2");
    for (std::size_t i = 0; i < inst.subset.size(); ++i) {
        if (inst.subset[i] < 1 || inst.subset[i] > inst.d)
            throw std::invalid_argument("parity: subset index out of range");
        if (i > 0 && inst.subset[i] <= inst.subset[i - 1])
            throw std::invalid_argument("parity: subset must be strictly increasing");
    }
}

}  // namespace

int final_parity(const std::vector<std::uint8_t>& x, const ParityInstance& inst) {
    check_example(x, inst);
    int ones = 0;
    for (int i : inst.subset) ones += x[i - 1] ? 1 : 0;
    return ones % 2 == 0 ? +1 : -1;
}

std::vector<int> tree_targets(const std::vector<std::uint8_t>& x, const ParityInstance& inst) {
    check_example(x, inst);
    const int d = inst.d;
    const int leaves = d / 4;          // pair-parity labels
    const int total = d / 2 - 1;       // whole tree
    std::vector<int> y(total);
    for (int k = 0; k < leaves; ++k) {
        const std::uint8_t a = x[inst.subset[2 * k] - 1];
        const std::uint8_t b = x[inst.subset[2 * k + 1] - 1];
        y[k] = (a ^ b) ? -1 : +1;
    }
    // each internal label multiplies the two labels one level down
    for (int k = leaves; k < total; ++k) y[k] = y[2 * (k - leaves)] * y[2 * (k - leaves) + 1];
    return y;
}

namespace {

// z for the Immediate layout: inputs, then each target's bit except the last
SupervisedSequence assemble(const std::vector<std::uint8_t>& x, std::vector<int> targets,
                            FeedbackLayout layout) {
    SupervisedSequence s;
    s.input_len = static_cast<int>(x.size());
    s.z = x;
    if (layout == FeedbackLayout::Delayed) s.z.push_back(0);  // pad step before the first gate
    for (std::size_t i = 0; i + 1 < targets.size(); ++i) s.z.push_back(label_to_bit(targets[i]));
    s.targets = std::move(targets);
    s.final_label = s.targets.back();
    s.final_pos = s.T();
    return s;
}

}  // namespace

SupervisedSequence train_sequence(const std::vector<std::uint8_t>& x, const ParityInstance& inst) {
    SupervisedSequence s = assemble(x, tree_targets(x, inst), FeedbackLayout::Immediate);
    if (s.T() != sequence_length(inst.d))
        throw std::logic_error("parity: sequence length mismatch");  // should be unreachable
    return s;
}

SupervisedSequence answer_only_sequence(const std::vector<std::uint8_t>& x, const ParityInstance& inst) {
    // x, one pad step, then the answer position: T = d + 1, single target
    return assemble(x, {final_parity(x, inst)}, FeedbackLayout::Delayed);
}

std::vector<std::uint8_t> random_bits(int d, SeededRng& rng) {
    std::vector<std::uint8_t> x(d);
    for (auto& b : x) b = static_cast<std::uint8_t>(rng.below(2));
    return x;
}

ParityExample sample_example(const ParityInstance& inst, SeededRng& rng) {
    ParityExample ex;
    ex.x = random_bits(inst.d, rng);
    ex.seq = train_sequence(ex.x, inst);
    return ex;
}

// ----- dataset lines -----

std::string format_example(const SupervisedSequence& s, const std::vector<std::uint8_t>& x) {
    std::string line;
    line.reserve(x.size() + s.targets.size() + 4);
    for (auto b : x) line += b ? '1' : '0';
    line += '\t';
    for (int y : s.targets) line += y > 0 ? '+' : '-';
    line += '\t';
    line += s.final_label > 0 ? '+' : '-';
    return line;
}

DatasetExample parse_example(const std::string& line, int line_no, FeedbackLayout layout) {
    const auto fail = [line_no](const std::string& what) {
        throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + what);
    };
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
        fail("expected three tab-separated fields");
    const std::string xs = line.substr(0, t1);
    const std::string ys = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string fs = line.substr(t2 + 1);
    if (xs.empty()) fail("empty input field");
    if (ys.empty()) fail("empty target field");
    if (fs.size() != 1 || (fs[0] != '+' && fs[0] != '-')) fail("final field must be '+' or '-'");

    DatasetExample ex;
    ex.x.reserve(xs.size());
    for (char c : xs) {
        if (c != '0' && c != '1') fail(std::string("bad input bit '") + c + "'");
        ex.x.push_back(c == '1' ? 1 : 0);
    }
    std::vector<int> targets;
    targets.reserve(ys.size());
    for (char c : ys) {
        if (c != '+' && c != '-') fail(std::string("bad target '") + c + "'");
        targets.push_back(c == '+' ? +1 : -1);
    }
    ex.seq = assemble(ex.x, std::move(targets), layout);
    const int final_label = fs[0] == '+' ? +1 : -1;
    if (final_label != ex.seq.final_label)
        fail("final column disagrees with last target");
    return ex;
}

std::vector<DatasetExample> read_dataset(std::istream& in, FeedbackLayout layout) {
    std::vector<DatasetExample> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        out.push_back(parse_example(line, line_no, layout));
    }
    return out;
}

std::vector<DatasetExample> load_dataset(const std::string& path, FeedbackLayout layout) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    return read_dataset(in, layout);
}

void write_dataset(std::ostream& out, const std::vector<DatasetExample>& ex) {
    for (const auto& e : ex) out << format_example(e.seq, e.x) << '\n';
}

void save_dataset(const std::string& path, const std::vector<DatasetExample>& ex) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    write_dataset(out, ex);
}

}  // namespace stepwise
