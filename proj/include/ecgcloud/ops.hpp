// SPDX-License-Identifier: Apache-2.0
//
// Network operations. Each op exists as a plain tensor kernel and as a
// differentiable tape node built on the same kernel.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ecgcloud/autodiff.hpp"
#include "ecgcloud/tensor.hpp"

namespace ecgcloud::nn {

enum class Activation { Relu, Sigmoid, Tanh };

/// "Same"-padded cross-correlation. input is [C_in x L] or [N x C_in x L],
/// kernel [C_out x C_in x K] with K odd, bias [C_out]. Output length is
/// ceil(L / stride).
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride);

/// weight [M x N] times input [N] plus bias [M].
Tensor dense(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor activation(const Tensor& x, Activation kind);

struct GruWeights {
  Tensor w_update, u_update, b_update;  // [H x N], [H x H], [H]
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
};

/// Runs the GRU over `inputs` starting from h0 and returns the final state.
Tensor gru_layer(std::span<const Tensor> inputs, const GruWeights& weights, const Tensor& h0);

namespace op {

Var conv1d(Tape& tape, Var input, Var kernel, Var bias, std::size_t stride);
Var dense(Tape& tape, Var input, Var weight, Var bias);
Var matvec(Tape& tape, Var weight, Var input);
Var activation(Tape& tape, Var x, Activation kind);
inline Var relu(Tape& t, Var x) { return activation(t, x, Activation::Relu); }
inline Var sigmoid(Tape& t, Var x) { return activation(t, x, Activation::Sigmoid); }
inline Var tanh(Tape& t, Var x) { return activation(t, x, Activation::Tanh); }

Var add(Tape& tape, Var a, Var b);
Var sub(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var sum(Tape& tape, Var x);
Var scale(Tape& tape, Var x, double factor);

/// [N x C x L] -> [N x C] by averaging over the last axis.
Var mean_last_axis(Tape& tape, Var x);
/// Row i of an [N x E] tensor as an [E] tensor.
Var row(Tape& tape, Var x, std::size_t i);

struct GruVars {
  Var w_update, u_update, b_update;
  Var w_reset, u_reset, b_reset;
  Var w_cand, u_cand, b_cand;
};

Var gru_layer(Tape& tape, std::span<const Var> inputs, const GruVars& weights, Var h0);

}  // namespace op

}  // namespace ecgcloud::nn
