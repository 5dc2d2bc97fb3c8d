#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "stepwise/parity.hpp"

namespace stepwise {

// ----- circuit netlists -----
// Text format, one statement per line, '#' starts a comment:
//   INPUT <id>
//   CONST <id> <0|1>
//   <id> = <AND|OR|XOR> <ref> <ref> [<ref>...]
//   <id> = NOT <ref>
//   OUTPUT <id>
// Every reference must name an already-declared id, so cycles cannot be
// written down; the j-th INPUT is x_j. Exactly one OUTPUT.

enum class GateKind { And, Or, Not, Xor, Const0, Const1 };

const char* gate_kind_name(GateKind k);

struct Gate {
    std::string id;
    GateKind kind;
    std::vector<std::string> args;   // referenced ids, empty for consts

    bool operator==(const Gate&) const = default;
};

struct CircuitError : std::runtime_error {
    explicit CircuitError(const std::string& msg) : std::runtime_error(msg) {}
    CircuitError(int line, const std::string& msg)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg) {}
};

class Circuit {
public:
    std::vector<std::string> inputs;   // declaration order
    std::vector<Gate> gates;           // declaration order
    std::string output_id;

    int num_inputs() const { return static_cast<int>(inputs.size()); }
    bool is_input(const std::string& id) const;
    // index into gates, or -1 when id names an input
    int gate_index(const std::string& id) const;
    void rebuild_index();

    bool operator==(const Circuit& o) const {
        return inputs == o.inputs && gates == o.gates && output_id == o.output_id;
    }

private:
    std::unordered_map<std::string, int> index_;
};

Circuit parse_circuit(const std::string& text);
std::string format_circuit(const Circuit& c);

// Rewrites every AND/OR/XOR with more than two arguments into a balanced
// tree of two-argument gates; helper gates get "__r<k>" suffixes and the
// original id stays on the root so references are untouched. Binary
// circuits come back unchanged.
Circuit fanin_reduce(const Circuit& c);

// Kahn's algorithm over the gate DAG; ties broken by picking the
// lexicographically smallest ready id, so the order is unique. Throws on
// cycles, naming the gates left over.
std::vector<std::string> topo_sort(const Circuit& c);

struct CircuitEval {
    std::vector<std::uint8_t> values;   // by Circuit::gates order
    std::uint8_t output;
};
CircuitEval eval_circuit(const Circuit& c, const std::vector<std::uint8_t>& x);

// Unrolls a binary circuit into a supervised sequence of length d+G: the
// d input bits, one fixed pad step, then teacher-forced gate bits. The
// (k+1)-th gate in topo order is scored at position d+1+k against its
// label 2v-1, with its bit fed on the following step; the last gate in
// topo order has no following step, so its value is never fed. The answer
// is the output gate's label (its position need not be last when some
// gates do not feed the output).
SupervisedSequence supervision_sequence(const Circuit& binary, const std::vector<std::uint8_t>& x);

struct CompiledTrace {
    Circuit reduced;
    std::vector<std::string> order;     // topo
    std::vector<std::uint8_t> values;   // by topo order
    SupervisedSequence seq;
};
CompiledTrace compile_circuit(const Circuit& parsed, const std::vector<std::uint8_t>& x);

// XOR tree over the chosen bits, shaped exactly like the parity combine
// tree: gate k computes the running parity whose +/-1 tree label is
// (-1)^{gate value}. Ids are zero-padded so topo order equals tree order.
Circuit parity_as_circuit(const ParityInstance& inst);

}  // namespace stepwise
