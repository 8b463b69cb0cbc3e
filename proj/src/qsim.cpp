#include "biqc/qsim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace biqc::qsim {

namespace {

void check_qubit(int qubit, int num_qubits, const char* what) {
    if (qubit < 0 || qubit >= num_qubits) {
        throw std::out_of_range(std::string(what) + ": qubit index " + std::to_string(qubit) +
                                " out of range for " + std::to_string(num_qubits) + "-qubit state");
    }
}

void check_gate(const Gate& gate, int num_qubits) {
    check_qubit(gate.targets[0], num_qubits, gate_name(gate.kind));
    if (gate.arity() == 2) {
        check_qubit(gate.targets[1], num_qubits, gate_name(gate.kind));
        if (gate.targets[0] == gate.targets[1]) {
            throw std::invalid_argument("CZ: control and target must differ (both " +
                                        std::to_string(gate.targets[0]) + ")");
        }
    }
}

std::size_t bit_of(int qubit, int num_qubits) { return std::size_t{1} << (num_qubits - 1 - qubit); }

void apply_single(std::span<Complex> amps, std::size_t stride, const std::array<Complex, 4>& m) {
    const std::size_t n = amps.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
        for (std::size_t i = base; i < base + stride; ++i) {
            const Complex a0 = amps[i];
            const Complex a1 = amps[i + stride];
            amps[i] = m[0] * a0 + m[1] * a1;
            amps[i + stride] = m[2] * a0 + m[3] * a1;
        }
    }
}

void apply_diagonal(std::span<Complex> amps, std::size_t stride, Complex d0, Complex d1) {
    const std::size_t n = amps.size();
    for (std::size_t base = 0; base < n; base += 2 * stride) {
        for (std::size_t i = base; i < base + stride; ++i) {
            amps[i] *= d0;
            amps[i + stride] *= d1;
        }
    }
}

}  // namespace

StateVector::StateVector(int num_qubits) : num_qubits_(num_qubits) {
    if (num_qubits < 1 || num_qubits > 24) {
        throw std::invalid_argument("StateVector: num_qubits must be in [1, 24], got " +
                                    std::to_string(num_qubits));
    }
    amplitudes_.assign(std::size_t{1} << num_qubits, Complex{0.0, 0.0});
    amplitudes_[0] = 1.0;
}

StateVector::StateVector(int num_qubits, std::vector<Complex> amplitudes)
    : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {
    if (num_qubits < 1 || amplitudes_.size() != (std::size_t{1} << num_qubits)) {
        throw std::invalid_argument("StateVector: expected 2^" + std::to_string(num_qubits) +
                                    " amplitudes, got " + std::to_string(amplitudes_.size()));
    }
}

StateVector StateVector::basis(int num_qubits, std::size_t index) {
    StateVector s(num_qubits);
    if (index >= s.dimension()) throw std::out_of_range("StateVector::basis: index out of range");
    s.amplitudes_[0] = 0.0;
    s.amplitudes_[index] = 1.0;
    return s;
}

double StateVector::norm() const {
    double sum = 0.0;
    for (const auto& a : amplitudes_) sum += std::norm(a);
    return std::sqrt(sum);
}

const char* gate_name(GateKind kind) {
    switch (kind) {
        case GateKind::RX: return "RX";
        case GateKind::RY: return "RY";
        case GateKind::RZ: return "RZ";
        case GateKind::ROT: return "ROT";
        case GateKind::CZ: return "CZ";
    }
    return "?";
}

int Gate::angle_count() const {
    switch (kind) {
        case GateKind::ROT: return 3;
        case GateKind::CZ: return 0;
        default: return 1;
    }
}

std::array<Complex, 4> gate_matrix(const Gate& gate) {
    const Complex i{0.0, 1.0};
    auto rz = [&](double t) -> std::array<Complex, 4> {
        return {std::exp(-i * (t / 2)), 0.0, 0.0, std::exp(i * (t / 2))};
    };
    auto ry = [](double t) -> std::array<Complex, 4> {
        const double c = std::cos(t / 2), s = std::sin(t / 2);
        return {c, -s, s, c};
    };
    auto mul = [](const std::array<Complex, 4>& a, const std::array<Complex, 4>& b) -> std::array<Complex, 4> {
        return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
    };
    switch (gate.kind) {
        case GateKind::RX: {
            const double c = std::cos(gate.angles[0] / 2), s = std::sin(gate.angles[0] / 2);
            return {c, -i * s, -i * s, c};
        }
        case GateKind::RY: return ry(gate.angles[0]);
        case GateKind::RZ: return rz(gate.angles[0]);
        case GateKind::ROT: return mul(rz(gate.angles[2]), mul(ry(gate.angles[1]), rz(gate.angles[0])));
        case GateKind::CZ: break;
    }
    throw std::invalid_argument("gate_matrix: CZ is a two-qubit gate");
}

void apply_gate_inplace(StateVector& state, const Gate& gate) {
    const int d = state.num_qubits();
    check_gate(gate, d);
    auto amps = state.mutable_amplitudes();
    switch (gate.kind) {
        case GateKind::CZ: {
            const std::size_t mask = bit_of(gate.targets[0], d) | bit_of(gate.targets[1], d);
            for (std::size_t k = 0; k < amps.size(); ++k) {
                if ((k & mask) == mask) amps[k] = -amps[k];
            }
            return;
        }
        case GateKind::RZ: {
            const Complex phase = std::polar(1.0, -gate.angles[0] / 2);
            apply_diagonal(amps, bit_of(gate.targets[0], d), phase, std::conj(phase));
            return;
        }
        default:
            apply_single(amps, bit_of(gate.targets[0], d), gate_matrix(gate));
    }
}

StateVector apply_gate(StateVector state, const Gate& gate) {
    apply_gate_inplace(state, gate);
    return state;
}

double expectation_z(const StateVector& state, int qubit) {
    check_qubit(qubit, state.num_qubits(), "expectation_z");
    const std::size_t bit = bit_of(qubit, state.num_qubits());
    double z = 0.0;
    const auto amps = state.amplitudes();
    for (std::size_t k = 0; k < amps.size(); ++k) {
        z += (k & bit) ? -std::norm(amps[k]) : std::norm(amps[k]);
    }
    return z;
}

std::vector<double> expectations_z(const StateVector& state) {
    const int d = state.num_qubits();
    std::vector<double> z(d, 0.0);
    const auto amps = state.amplitudes();
    for (std::size_t k = 0; k < amps.size(); ++k) {
        const double p = std::norm(amps[k]);
        for (int q = 0; q < d; ++q) z[q] += (k & bit_of(q, d)) ? -p : p;
    }
    return z;
}

CircuitTape::CircuitTape(int num_qubits) : num_qubits_(num_qubits) {
    if (num_qubits < 1) throw std::invalid_argument("CircuitTape: num_qubits must be >= 1");
}

std::size_t CircuitTape::add_gate(const Gate& gate) {
    check_gate(gate, num_qubits_);
    gates_.push_back(gate);
    return gates_.size() - 1;
}

std::size_t CircuitTape::bind(std::size_t gate, int angle) {
    if (gate >= gates_.size()) throw std::out_of_range("CircuitTape::bind: no gate " + std::to_string(gate));
    if (angle < 0 || angle >= gates_[gate].angle_count()) {
        throw std::invalid_argument(std::string("CircuitTape::bind: ") + gate_name(gates_[gate].kind) +
                                    " has no angle " + std::to_string(angle));
    }
    slots_.push_back({gate, angle});
    return slots_.size() - 1;
}

std::vector<Gate> CircuitTape::bound_gates(std::span<const double> bindings) const {
    if (bindings.size() != slots_.size()) {
        throw std::invalid_argument("run_tape: expected " + std::to_string(slots_.size()) +
                                    " bindings, got " + std::to_string(bindings.size()));
    }
    std::vector<Gate> gates = gates_;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
        gates[slots_[k].gate].angles[slots_[k].angle] = bindings[k];
    }
    return gates;
}

StateVector prepare_state(const CircuitTape& tape, std::span<const double> bindings) {
    StateVector state(tape.num_qubits());
    for (const auto& g : tape.bound_gates(bindings)) apply_gate_inplace(state, g);
    return state;
}

std::vector<double> run_tape(const CircuitTape& tape, std::span<const double> bindings) {
    return expectations_z(prepare_state(tape, bindings));
}

Jacobian parameter_shift_grad(const CircuitTape& tape, std::span<const double> bindings) {
    const std::vector<Gate> gates = tape.bound_gates(bindings);
    const std::size_t d = static_cast<std::size_t>(tape.num_qubits());

    // prefix[g] is the state just before gate g; every shifted run restarts there.
    std::vector<StateVector> prefix;
    prefix.reserve(gates.size());
    StateVector state(tape.num_qubits());
    for (const auto& g : gates) {
        prefix.push_back(state);
        apply_gate_inplace(state, g);
    }

    Jacobian jac{d, tape.num_slots(), std::vector<double>(d * tape.num_slots(), 0.0)};
    constexpr double shift = std::numbers::pi / 2;
    for (std::size_t k = 0; k < tape.num_slots(); ++k) {
        const ParamSlot slot = tape.slots()[k];
        std::vector<double> f[2];
        for (int side = 0; side < 2; ++side) {
            StateVector s = prefix[slot.gate];
            Gate shifted = gates[slot.gate];
            shifted.angles[slot.angle] += side == 0 ? shift : -shift;
            apply_gate_inplace(s, shifted);
            for (std::size_t g = slot.gate + 1; g < gates.size(); ++g) apply_gate_inplace(s, gates[g]);
            f[side] = expectations_z(s);
        }
        for (std::size_t j = 0; j < d; ++j) jac(j, k) = 0.5 * (f[0][j] - f[1][j]);
    }
    return jac;
}

}  // namespace biqc::qsim
