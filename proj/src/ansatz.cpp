#include "biqc/ansatz.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace biqc::ansatz {

namespace {

void entangling_layer(qsim::CircuitTape& tape, int d) {
    for (int j = 0; j < d; ++j) tape.add_gate(qsim::Gate::rot(j, 0, 0, 0));
    if (d == 2) {
        tape.add_gate(qsim::Gate::cz(0, 1));
    } else if (d > 2) {
        for (int j = 0; j < d; ++j) tape.add_gate(qsim::Gate::cz(j, (j + 1) % d));
    }
}

std::vector<double> block_bindings(const TensorF& theta, std::span<const double> z) {
    std::vector<double> b(theta.values());
    b.insert(b.end(), z.begin(), z.end());
    return b;
}

qsim::CircuitTape tape_with_noise(const AnsatzConfig& config, std::span<const double> noise) {
    qsim::CircuitTape tape = build_block_tape(config);
    for (std::size_t j = 0; j < noise.size(); ++j) tape.add_gate(qsim::Gate::rx(static_cast<int>(j), noise[j]));
    return tape;
}

// Empty when noise_level == 0, so the noiseless path consumes no randomness.
std::vector<double> sample_noise(int num_qubits, double noise_level, std::mt19937_64& rng) {
    if (!(noise_level >= 0.0)) {
        throw std::invalid_argument("inject_noise: noise_level must be >= 0, got " + std::to_string(noise_level));
    }
    std::vector<double> angles;
    if (noise_level == 0.0) return angles;
    std::uniform_real_distribution<double> dist(0.0, noise_level);
    for (int j = 0; j < num_qubits; ++j) angles.push_back(dist(rng));
    return angles;
}

}  // namespace

void validate(const AnsatzConfig& c) {
    if (c.num_qubits < 1 || c.num_blocks < 1 || c.layers_per_block < 1) {
        throw std::invalid_argument("AnsatzConfig: qubits, blocks and layers must all be >= 1 (got " +
                                    std::to_string(c.num_qubits) + ", " + std::to_string(c.num_blocks) + ", " +
                                    std::to_string(c.layers_per_block) + ")");
    }
    if (!(c.noise_level >= 0.0) || !std::isfinite(c.noise_level)) {
        throw std::invalid_argument("AnsatzConfig: noise_level must be a finite value >= 0");
    }
}

std::vector<std::size_t> theta_shape(const AnsatzConfig& c) {
    return {static_cast<std::size_t>(c.layers_per_block + 1), static_cast<std::size_t>(c.num_qubits), 3};
}

AnsatzParams zero_params(const AnsatzConfig& config) {
    validate(config);
    return AnsatzParams{std::vector<TensorF>(config.num_blocks, TensorF(theta_shape(config)))};
}

void check_params(const AnsatzConfig& config, const AnsatzParams& params) {
    if (params.theta.size() != static_cast<std::size_t>(config.num_blocks)) {
        throw std::invalid_argument("AnsatzParams: expected " + std::to_string(config.num_blocks) +
                                    " blocks, got " + std::to_string(params.theta.size()));
    }
    for (const auto& t : params.theta) {
        if (t.shape() != theta_shape(config)) {
            throw std::invalid_argument("AnsatzParams: theta shape " + t.shape_string() + ", expected " +
                                        TensorF::shape_string(theta_shape(config)));
        }
    }
}

qsim::CircuitTape build_block_tape(const AnsatzConfig& config) {
    validate(config);
    const int d = config.num_qubits;
    const int layers = config.layers_per_block;
    qsim::CircuitTape tape(d);

    std::vector<std::size_t> rot_gates;  // (layer, qubit) -> gate index
    std::vector<std::size_t> rz_gates;
    for (int k = 0; k <= layers; ++k) {
        const std::size_t first = tape.gates().size();
        entangling_layer(tape, d);
        for (int j = 0; j < d; ++j) rot_gates.push_back(first + static_cast<std::size_t>(j));
        if (k < layers) {
            for (int j = 0; j < d; ++j) rz_gates.push_back(tape.add_gate(qsim::Gate::rz(j, 0)));
        }
    }
    for (std::size_t g : rot_gates) {
        for (int a = 0; a < 3; ++a) tape.bind(g, a);
    }
    for (std::size_t g : rz_gates) tape.bind(g);
    return tape;
}

qsim::StateVector inject_noise(qsim::StateVector state, double noise_level, std::mt19937_64& rng) {
    const std::vector<double> angles = sample_noise(state.num_qubits(), noise_level, rng);
    for (std::size_t j = 0; j < angles.size(); ++j) {
        qsim::apply_gate_inplace(state, qsim::Gate::rx(static_cast<int>(j), angles[j]));
    }
    return state;
}

BlocksTrace forward_blocks(const AnsatzConfig& config, const AnsatzParams& params,
                           std::span<const double> first_input, const BlockEncoder& encoder,
                           std::mt19937_64& rng) {
    validate(config);
    check_params(config, params);
    const qsim::CircuitTape tape = build_block_tape(config);

    BlocksTrace trace;
    std::vector<double> input(first_input.begin(), first_input.end());
    for (int l = 0; l < config.num_blocks; ++l) {
        if (l > 0) input = encoder(static_cast<std::size_t>(l), trace.outputs.back());
        if (input.size() != config.input_size()) {
            throw std::invalid_argument("forward_blocks: block " + std::to_string(l) + " expects " +
                                        std::to_string(config.input_size()) + " angles, got " +
                                        std::to_string(input.size()));
        }
        for (double v : input) {
            if (!std::isfinite(v)) throw std::invalid_argument("forward_blocks: non-finite input angle");
        }

        qsim::StateVector state = qsim::prepare_state(tape, block_bindings(params.theta[l], input));
        std::vector<double> noise = sample_noise(config.num_qubits, config.noise_level, rng);
        for (std::size_t j = 0; j < noise.size(); ++j) {
            qsim::apply_gate_inplace(state, qsim::Gate::rx(static_cast<int>(j), noise[j]));
        }
        trace.inputs.push_back(input);
        trace.outputs.push_back(qsim::expectations_z(state));
        trace.noise_angles.push_back(std::move(noise));
        ++trace.circuit_evaluations;
    }
    return trace;
}

BlocksGrad backward_blocks(const AnsatzConfig& config, const AnsatzParams& params, const BlocksTrace& trace,
                           std::span<const double> output_grad, const BlockEncoderBackward& encoder_backward) {
    check_params(config, params);
    const auto L = static_cast<std::size_t>(config.num_blocks);
    const auto d = static_cast<std::size_t>(config.num_qubits);
    if (trace.outputs.size() != L || output_grad.size() != d) {
        throw std::invalid_argument("backward_blocks: trace or gradient does not match the ansatz config");
    }

    BlocksGrad grad;
    grad.theta.assign(L, TensorF(theta_shape(config)));
    const std::size_t n_theta = config.params_per_block();

    std::vector<double> g_h(output_grad.begin(), output_grad.end());
    for (std::size_t l = L; l-- > 0;) {
        const qsim::CircuitTape tape = tape_with_noise(config, trace.noise_angles[l]);
        const qsim::Jacobian jac = qsim::parameter_shift_grad(tape, block_bindings(params.theta[l], trace.inputs[l]));
        grad.circuit_evaluations += 2 * tape.num_slots();

        std::vector<double> g_z(config.input_size(), 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            if (g_h[j] == 0.0) continue;
            for (std::size_t k = 0; k < n_theta; ++k) grad.theta[l][k] += g_h[j] * jac(j, k);
            for (std::size_t k = 0; k < g_z.size(); ++k) g_z[k] += g_h[j] * jac(j, n_theta + k);
        }
        if (l == 0) {
            grad.first_input = std::move(g_z);
        } else {
            g_h = encoder_backward(l, g_z);
        }
    }
    return grad;
}

std::size_t circuit_evaluations_per_pass(const AnsatzConfig& config) {
    const std::size_t slots = config.params_per_block() + config.input_size();
    return static_cast<std::size_t>(config.num_blocks) * (1 + 2 * slots);
}

}  // namespace biqc::ansatz
