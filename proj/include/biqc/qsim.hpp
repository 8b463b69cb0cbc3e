#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Statevector simulator for the small circuits used by the quantum pathway.
//
// Basis ordering: qubit 0 is the most significant bit of the basis index, so
// on 2 qubits |q0 q1> = |10> is amplitude index 2.

namespace biqc::qsim {

using Complex = std::complex<double>;

class StateVector {
public:
    /// |0...0> on `num_qubits` qubits.
    explicit StateVector(int num_qubits);
    StateVector(int num_qubits, std::vector<Complex> amplitudes);

    static StateVector basis(int num_qubits, std::size_t index);

    int num_qubits() const { return num_qubits_; }
    std::size_t dimension() const { return amplitudes_.size(); }
    std::span<const Complex> amplitudes() const { return amplitudes_; }
    Complex amplitude(std::size_t i) const { return amplitudes_[i]; }
    double norm() const;

    // Mutable access for the in-place kernels; callers own the state.
    std::span<Complex> mutable_amplitudes() { return amplitudes_; }

    bool operator==(const StateVector&) const = default;

private:
    int num_qubits_;
    std::vector<Complex> amplitudes_;
};

enum class GateKind { RX, RY, RZ, ROT, CZ };

const char* gate_name(GateKind kind);

/// RX/RY/RZ(t) = exp(-i t P / 2). ROT(a, b, c) = RZ(c) RY(b) RZ(a). CZ = diag(1, 1, 1, -1).
struct Gate {
    GateKind kind = GateKind::RZ;
    std::array<int, 2> targets{0, 0};
    std::array<double, 3> angles{0.0, 0.0, 0.0};

    static Gate rx(int q, double t) { return {GateKind::RX, {q, q}, {t, 0, 0}}; }
    static Gate ry(int q, double t) { return {GateKind::RY, {q, q}, {t, 0, 0}}; }
    static Gate rz(int q, double t) { return {GateKind::RZ, {q, q}, {t, 0, 0}}; }
    static Gate rot(int q, double a, double b, double c) { return {GateKind::ROT, {q, q}, {a, b, c}}; }
    static Gate cz(int a, int b) { return {GateKind::CZ, {a, b}, {0, 0, 0}}; }

    int arity() const { return kind == GateKind::CZ ? 2 : 1; }
    int angle_count() const;
};

/// 2x2 unitary of a single-qubit gate, row-major.
std::array<Complex, 4> gate_matrix(const Gate& gate);

void apply_gate_inplace(StateVector& state, const Gate& gate);
StateVector apply_gate(StateVector state, const Gate& gate);

double expectation_z(const StateVector& state, int qubit);
std::vector<double> expectations_z(const StateVector& state);

/// Binds one entry of the binding vector to one rotation angle of one gate.
struct ParamSlot {
    std::size_t gate = 0;
    int angle = 0;
};

/// Ordered gate list plus the angles that are supplied at run time.
///
/// Gates keep their own stored angles unless a slot overrides them, so fixed
/// rotations (e.g. sampled noise) can live on the same tape as bound ones.
class CircuitTape {
public:
    explicit CircuitTape(int num_qubits);

    int num_qubits() const { return num_qubits_; }
    const std::vector<Gate>& gates() const { return gates_; }
    const std::vector<ParamSlot>& slots() const { return slots_; }
    std::size_t num_slots() const { return slots_.size(); }

    /// Appends a gate; throws if its targets are invalid for this tape.
    std::size_t add_gate(const Gate& gate);

    /// Registers a slot for angle `angle` of gate `gate`; returns the slot index.
    std::size_t bind(std::size_t gate, int angle = 0);

    /// Gate list with every slot's angle replaced by its binding.
    std::vector<Gate> bound_gates(std::span<const double> bindings) const;

private:
    int num_qubits_;
    std::vector<Gate> gates_;
    std::vector<ParamSlot> slots_;
};

/// Final state after running the tape from |0...0>.
StateVector prepare_state(const CircuitTape& tape, std::span<const double> bindings);

/// <Z_j> for j = 0..d-1 after running the tape from |0...0>.
std::vector<double> run_tape(const CircuitTape& tape, std::span<const double> bindings);

/// Jacobian d<Z_j>/d binding_k, stored row-major with rows = qubits.
struct Jacobian {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

/// Two-term parameter-shift rule, [f(t + pi/2) - f(t - pi/2)] / 2 per slot.
/// Costs 2 * num_slots circuit evaluations.
Jacobian parameter_shift_grad(const CircuitTape& tape, std::span<const double> bindings);

}  // namespace biqc::qsim
