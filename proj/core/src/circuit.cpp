#include "stepwise/circuit.hpp"

#include <algorithm>
#include <queue>
#include <sstream>
#include <unordered_set>

namespace stepwise {

const char* gate_kind_name(GateKind k) {
    switch (k) {
        case GateKind::And: return "AND";
        case GateKind::Or: return "OR";
        case GateKind::Not: return "NOT";
        case GateKind::Xor: return "XOR";
        case GateKind::Const0: return "CONST0";
        case GateKind::Const1: return "CONST1";
    }
    return "?";
}

bool Circuit::is_input(const std::string& id) const {
    auto it = index_.find(id);
    return it != index_.end() && it->second < 0;
}

int Circuit::gate_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw CircuitError("unknown id '" + id + "'");
    return it->second;
}

void Circuit::rebuild_index() {
    index_.clear();
    for (const auto& in : inputs) index_[in] = -1;
    for (std::size_t i = 0; i < gates.size(); ++i) index_[gates[i].id] = static_cast<int>(i);
}

// ----- parsing -----

namespace {

bool valid_id(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    static const std::unordered_set<std::string> reserved = {
        "INPUT", "CONST", "OUTPUT", "AND", "OR", "NOT", "XOR"};
    return !reserved.count(s);
}

std::vector<std::string> tokenize(const std::string& line) {
    std::string body = line.substr(0, line.find('#'));
    std::istringstream ss(body);
    std::vector<std::string> toks;
    std::string t;
    while (ss >> t) toks.push_back(t);
    return toks;
}

}  // namespace

Circuit parse_circuit(const std::string& text) {
    Circuit c;
    std::unordered_set<std::string> declared;
    int output_line = 0;

    std::istringstream in(text);
    std::string line;
    int ln = 0;
    auto declare = [&](int at, const std::string& id) {
        if (!valid_id(id)) throw CircuitError(at, "bad id '" + id + "'");
        if (!declared.insert(id).second) throw CircuitError(at, "duplicate id '" + id + "'");
    };
    // references must point at already-declared ids, so the file order is
    // itself a topological order and cycles cannot be written down
    auto check_ref = [&](int at, const std::string& self, const std::string& id) {
        if (declared.count(id)) return;
        if (id == self)
            throw CircuitError(at, "cycle: gate '" + id + "' references itself");
        throw CircuitError(at, "reference to undeclared id '" + id +
                                   "' (gates must be declared before use)");
    };
    while (std::getline(in, line)) {
        ++ln;
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        if (toks[0] == "INPUT") {
            if (toks.size() != 2) throw CircuitError(ln, "INPUT takes exactly one id");
            declare(ln, toks[1]);
            c.inputs.push_back(toks[1]);
        } else if (toks[0] == "CONST") {
            if (toks.size() != 3 || (toks[2] != "0" && toks[2] != "1"))
                throw CircuitError(ln, "expected: CONST <id> <0|1>");
            declare(ln, toks[1]);
            c.gates.push_back({toks[1], toks[2] == "1" ? GateKind::Const1 : GateKind::Const0, {}});
        } else if (toks[0] == "OUTPUT") {
            if (toks.size() != 2) throw CircuitError(ln, "OUTPUT takes exactly one id");
            if (output_line) throw CircuitError(ln, "second OUTPUT (first on line " +
                                                        std::to_string(output_line) + ")");
            if (!declared.count(toks[1]))
                throw CircuitError(ln, "OUTPUT references undeclared id '" + toks[1] + "'");
            output_line = ln;
            c.output_id = toks[1];
        } else {
            // gate definition: <id> = <KIND> <ref>...
            if (toks.size() < 3 || toks[1] != "=")
                throw CircuitError(ln, "expected: <id> = <AND|OR|NOT|XOR> <ref>...");
            GateKind kind;
            if (toks[2] == "AND") kind = GateKind::And;
            else if (toks[2] == "OR") kind = GateKind::Or;
            else if (toks[2] == "NOT") kind = GateKind::Not;
            else if (toks[2] == "XOR") kind = GateKind::Xor;
            else throw CircuitError(ln, "unknown gate kind '" + toks[2] + "'");
            std::vector<std::string> args(toks.begin() + 3, toks.end());
            if (kind == GateKind::Not && args.size() != 1)
                throw CircuitError(ln, "NOT takes exactly one argument, got " +
                                           std::to_string(args.size()));
            if (kind != GateKind::Not && args.size() < 2)
                throw CircuitError(ln, toks[2] + " needs at least two arguments, got " +
                                           std::to_string(args.size()));
            for (const auto& a : args) check_ref(ln, toks[0], a);
            declare(ln, toks[0]);
            c.gates.push_back({toks[0], kind, std::move(args)});
        }
    }
    if (!output_line) throw CircuitError("missing OUTPUT statement");
    c.rebuild_index();
    if (c.is_input(c.output_id))
        throw CircuitError(output_line, "OUTPUT must name a gate, not an input");
    return c;
}

std::string format_circuit(const Circuit& c) {
    std::ostringstream out;
    for (const auto& in : c.inputs) out << "INPUT " << in << '\n';
    for (const auto& g : c.gates) {
        if (g.kind == GateKind::Const0 || g.kind == GateKind::Const1) {
            out << "CONST " << g.id << ' ' << (g.kind == GateKind::Const1 ? 1 : 0) << '\n';
        } else {
            out << g.id << " = " << gate_kind_name(g.kind);
            for (const auto& a : g.args) out << ' ' << a;
            out << '\n';
        }
    }
    out << "OUTPUT " << c.output_id << '\n';
    return out.str();
}

// ----- fan-in reduction -----

Circuit fanin_reduce(const Circuit& c) {
    std::unordered_set<std::string> used;
    for (const auto& in : c.inputs) used.insert(in);
    for (const auto& g : c.gates) used.insert(g.id);

    Circuit out;
    out.inputs = c.inputs;
    out.output_id = c.output_id;
    for (const auto& g : c.gates) {
        if (g.args.size() <= 2) {
            out.gates.push_back(g);
            continue;
        }
        // balanced split; helpers are emitted children-first, the original
        // id lands on the root so nothing referencing it changes
        int counter = 0;
        auto fresh = [&] {
            std::string id;
            do {
                id = g.id + "__r" + std::to_string(counter++);
            } while (used.count(id));
            used.insert(id);
            return id;
        };
        auto build = [&](auto&& self, std::size_t lo, std::size_t hi) -> std::string {
            const std::size_t n = hi - lo;
            if (n == 1) return g.args[lo];
            const std::size_t mid = lo + (n + 1) / 2;
            std::string left = self(self, lo, mid);
            std::string right = self(self, mid, hi);
            std::string id = fresh();
            out.gates.push_back({id, g.kind, {std::move(left), std::move(right)}});
            return id;
        };
        const std::size_t mid = (g.args.size() + 1) / 2;
        std::string left = build(build, 0, mid);
        std::string right = build(build, mid, g.args.size());
        out.gates.push_back({g.id, g.kind, {std::move(left), std::move(right)}});
    }
    out.rebuild_index();
    return out;
}

// ----- topological order -----

std::vector<std::string> topo_sort(const Circuit& c) {
    const std::size_t n = c.gates.size();
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> succ(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& a : c.gates[i].args) {
            const int j = c.gate_index(a);
            if (j >= 0) {  // edges from inputs don't gate readiness
                succ[j].push_back(static_cast<int>(i));
                ++indeg[i];
            }
        }
    }
    // lowest ready id first -> unique order
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push(c.gates[i].id);

    std::vector<std::string> order;
    order.reserve(n);
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        const int i = c.gate_index(id);
        order.push_back(std::move(id));
        for (int j : succ[i])
            if (--indeg[j] == 0) ready.push(c.gates[j].id);
    }
    if (order.size() != n) {
        std::string stuck;
        for (std::size_t i = 0; i < n; ++i)
            if (indeg[i] > 0) stuck += (stuck.empty() ? "" : ", ") + c.gates[i].id;
        throw CircuitError("cycle detected involving: " + stuck);
    }
    return order;
}

// ----- evaluation -----

CircuitEval eval_circuit(const Circuit& c, const std::vector<std::uint8_t>& x) {
    if (static_cast<int>(x.size()) != c.num_inputs())
        throw CircuitError("circuit expects " + std::to_string(c.num_inputs()) +
                           " input bits, got " + std::to_string(x.size()));
    std::unordered_map<std::string, std::uint8_t> input_val;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) input_val[c.inputs[i]] = x[i];

    CircuitEval ev;
    ev.values.assign(c.gates.size(), 0);
    std::vector<bool> done(c.gates.size(), false);
    auto value_of = [&](const std::string& id) -> std::uint8_t {
        const int j = c.gate_index(id);
        if (j < 0) return input_val[id];
        if (!done[j]) throw CircuitError("internal: gate '" + id + "' used before computed");
        return ev.values[j];
    };
    for (const auto& id : topo_sort(c)) {
        const int i = c.gate_index(id);
        const Gate& g = c.gates[i];
        std::uint8_t v = 0;
        switch (g.kind) {
            case GateKind::Const0: v = 0; break;
            case GateKind::Const1: v = 1; break;
            case GateKind::Not: v = value_of(g.args[0]) ? 0 : 1; break;
            case GateKind::And: {
                v = 1;
                for (const auto& a : g.args) v &= value_of(a);
                break;
            }
            case GateKind::Or: {
                v = 0;
                for (const auto& a : g.args) v |= value_of(a);
                break;
            }
            case GateKind::Xor: {
                v = 0;
                for (const auto& a : g.args) v ^= value_of(a);
                break;
            }
        }
        ev.values[i] = v;
        done[i] = true;
    }
    ev.output = ev.values[c.gate_index(c.output_id)];
    return ev;
}

// ----- supervised unrolling -----

SupervisedSequence supervision_sequence(const Circuit& binary, const std::vector<std::uint8_t>& x) {
    for (const auto& g : binary.gates)
        if (g.args.size() > 2)
            throw CircuitError("gate '" + g.id + "' has fan-in " + std::to_string(g.args.size()) +
                               "; run fanin_reduce first");
    const int d = binary.num_inputs();
    if (d < 1) throw CircuitError("supervision needs at least one input");
    if (binary.gates.empty()) throw CircuitError("supervision needs at least one gate");

    const auto order = topo_sort(binary);
    const auto ev = eval_circuit(binary, x);
    const int G = static_cast<int>(order.size());

    // one pad step after the inputs, then gate k is scored at position
    // d+1+k while its value is fed back on the following step; the last
    // gate has no following step, so its value is never fed
    SupervisedSequence s;
    s.input_len = d;
    s.z = x;
    s.z.push_back(0);
    s.targets.reserve(G);
    for (int k = 0; k < G; ++k) {
        const std::uint8_t v = ev.values[binary.gate_index(order[k])];
        s.targets.push_back(bit_to_label(v));
        if (k + 1 < G) s.z.push_back(v);
        if (order[k] == binary.output_id) s.final_pos = d + 1 + k;
    }
    s.final_label = bit_to_label(ev.output);
    if (s.T() != d + G || s.first_scored() != d + 1)
        throw CircuitError("internal: sequence length mismatch");
    return s;
}

CompiledTrace compile_circuit(const Circuit& parsed, const std::vector<std::uint8_t>& x) {
    CompiledTrace t;
    t.reduced = fanin_reduce(parsed);
    t.order = topo_sort(t.reduced);
    const auto ev = eval_circuit(t.reduced, x);
    t.values.reserve(t.order.size());
    for (const auto& id : t.order) t.values.push_back(ev.values[t.reduced.gate_index(id)]);
    t.seq = supervision_sequence(t.reduced, x);
    if (t.seq.final_label != bit_to_label(ev.output))
        throw CircuitError("internal: final label disagrees with direct evaluation");
    return t;
}

// ----- parity bridge -----

Circuit parity_as_circuit(const ParityInstance& inst) {
    validate_dims(inst.d);
    const int leaves = inst.d / 4;
    const int total = inst.d / 2 - 1;
    int width = 1;
    for (int v = total; v >= 10; v /= 10) ++width;
    auto gate_id = [&](int k) {  // zero-padded so lexicographic = numeric
        std::string num = std::to_string(k + 1);
        return "g" + std::string(width - num.size(), '0') + num;
    };

    Circuit c;
    for (int i = 1; i <= inst.d; ++i) c.inputs.push_back("x" + std::to_string(i));
    for (int k = 0; k < leaves; ++k)
        c.gates.push_back({gate_id(k), GateKind::Xor,
                           {"x" + std::to_string(inst.subset[2 * k]),
                            "x" + std::to_string(inst.subset[2 * k + 1])}});
    for (int k = leaves; k < total; ++k)
        c.gates.push_back({gate_id(k), GateKind::Xor,
                           {gate_id(2 * (k - leaves)), gate_id(2 * (k - leaves) + 1)}});
    c.output_id = gate_id(total - 1);
    c.rebuild_index();
    return c;
}

}  // namespace stepwise
