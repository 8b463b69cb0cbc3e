#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "biqc/qsim.hpp"
#include "biqc/tensor.hpp"

// Stacked data re-uploading blocks.
//
// One block, in circuit time order:
//
//   for k in 1..layers:  U_SE(theta_k), then RZ(z_{k,j}) on every qubit j
//   U_SE(theta_out)
//   measure <Z_j> on every qubit
//
// U_SE is a ROT on every qubit followed by a CZ ring (j, j+1 mod d). Block
// l + 1 is fed the measurements of block l through a caller-supplied encoder.

namespace biqc::ansatz {

struct AnsatzConfig {
    int num_qubits = 4;
    int num_blocks = 2;
    int layers_per_block = 2;
    double noise_level = 0.0;  // radians; RX(U(0, noise)) per qubit before measurement

    std::size_t input_size() const { return static_cast<std::size_t>(layers_per_block * num_qubits); }
    std::size_t params_per_block() const {
        return static_cast<std::size_t>(3 * num_qubits * (layers_per_block + 1));
    }
    std::size_t total_params() const { return params_per_block() * static_cast<std::size_t>(num_blocks); }

    bool operator==(const AnsatzConfig&) const = default;
};

void validate(const AnsatzConfig& config);

/// theta[l] has shape (layers + 1, d, 3); the last layer row is theta_out.
struct AnsatzParams {
    std::vector<TensorF> theta;
};

std::vector<std::size_t> theta_shape(const AnsatzConfig& config);
AnsatzParams zero_params(const AnsatzConfig& config);
void check_params(const AnsatzConfig& config, const AnsatzParams& params);

/// Slot order: all theta angles in (layer, qubit, euler) row-major order,
/// followed by the data angles in (layer, qubit) order. The binding vector for
/// a block is therefore [theta.values() ..., z ...].
qsim::CircuitTape build_block_tape(const AnsatzConfig& config);

/// Appends RX(theta_j) with theta_j ~ U(0, noise_level) on every qubit.
/// noise_level == 0 returns the state untouched and consumes no randomness.
qsim::StateVector inject_noise(qsim::StateVector state, double noise_level, std::mt19937_64& rng);

/// Maps the previous block's d measurements to the next block's L*d angles.
using BlockEncoder = std::function<std::vector<double>(std::size_t block, std::span<const double> previous)>;

/// Pulls dL/d(angles of `block`) back to dL/d(measurements of block - 1) and
/// accumulates any encoder parameter gradients on the caller's side.
using BlockEncoderBackward =
    std::function<std::vector<double>(std::size_t block, std::span<const double> angle_grad)>;

struct BlocksTrace {
    std::vector<std::vector<double>> inputs;        // angles fed to each block
    std::vector<std::vector<double>> outputs;       // <Z> of each block
    std::vector<std::vector<double>> noise_angles;  // realized RX noise per block (empty if none)
    std::size_t circuit_evaluations = 0;

    const std::vector<double>& h_quantum() const { return outputs.back(); }
};

BlocksTrace forward_blocks(const AnsatzConfig& config, const AnsatzParams& params,
                           std::span<const double> first_input, const BlockEncoder& encoder,
                           std::mt19937_64& rng);

struct BlocksGrad {
    std::vector<TensorF> theta;       // same shapes as AnsatzParams::theta
    std::vector<double> first_input;  // dL/d(first_input)
    std::size_t circuit_evaluations = 0;
};

/// Reverse pass through the stack. Each block's Jacobian comes from the
/// parameter-shift rule on the circuit that was actually run (including any
/// recorded noise rotations, which are held fixed).
BlocksGrad backward_blocks(const AnsatzConfig& config, const AnsatzParams& params, const BlocksTrace& trace,
                           std::span<const double> output_grad, const BlockEncoderBackward& encoder_backward);

/// Circuit evaluations for one forward + backward pass of one input.
std::size_t circuit_evaluations_per_pass(const AnsatzConfig& config);

}  // namespace biqc::ansatz
