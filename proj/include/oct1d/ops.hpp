#pragma once

#include <cstddef>
#include <vector>

#include "oct1d/tape.hpp"

// Differentiable primitives. Sequence tensors are (batch, time, channels).
namespace oct1d::ops {

/// Same-padded stride-1 convolution. w is (K, Cin, Cout), b is (Cout).
/// floor((K-1)/2) zeros are padded on the left, the remainder on the right,
/// so the output keeps the input length for every K, including K > T.
Var conv1d(Tape& tape, Var x, Var w, Var b);

/// Kernel-2, stride-2 average pooling. Odd lengths drop the trailing step.
Var avg_pool1d(Tape& tape, Var x);

/// Nearest-neighbour x2 upsampling to `target_len` (2T or 2T+1); the extra
/// position of an odd target repeats the last input step.
Var upsample1d_nearest(Tape& tape, Var x, std::size_t target_len);

/// Running statistics for batch_norm1d, updated in train mode as
/// running = momentum * running + (1 - momentum) * batch.
struct BatchNormState {
  Tensor* running_mean = nullptr;
  Tensor* running_var = nullptr;
  // Update count. When set, the running statistics are the bias-corrected
  // moving average, so they equal the batch statistics after the first step.
  Tensor* steps = nullptr;
  double momentum = 0.99;
  double epsilon = 1e-3;
};

/// Per-channel normalization over every axis but the last.
Var batch_norm1d(Tape& tape, Var x, Var gamma, Var beta, BatchNormState state);

Var relu(Tape& tape, Var x);
/// Inverted dropout; identity when the tape is in inference mode.
Var dropout(Tape& tape, Var x, double rate);

/// x (B, D) times w (D, O) plus b (O).
Var dense(Tape& tape, Var x, Var w, Var b);

/// Mean over the time axis: (B, T, C) -> (B, C).
Var global_avg_pool(Tape& tape, Var x);

/// Swaps the last two axes: (B, T, C) -> (B, C, T).
Var dimension_shuffle(Tape& tape, Var x);

Var add(Tape& tape, Var a, Var b);
/// Concatenation along the last axis; leading axes must agree.
Var concat(Tape& tape, Var a, Var b);

struct LstmOutput {
  Var last;      // (B, H)
  Var sequence;  // (B, T, H)
};

/// Single-layer LSTM with gate order (input, forget, cell, output).
/// w_ih is (C, 4H), w_hh is (H, 4H), b is (4H). Zero initial state.
LstmOutput lstm(Tape& tape, Var x, Var w_ih, Var w_hh, Var b);

/// Additive attention pooling: e[b,t] = v . tanh(states[b,t] W),
/// a = softmax_t(e), context = sum_t a[b,t] states[b,t].
/// w is (H, A), v is (A). Returns (B, H).
Var attention_context(Tape& tape, Var states, Var w, Var v);

/// Attention weights (B, T) for the same parameters, without recording.
Tensor attention_weights(const Tensor& states, const Tensor& w, const Tensor& v);

/// Mean over the batch of -log softmax(logits)[label]. Scalar result.
Var softmax_cross_entropy(Tape& tape, Var logits, const std::vector<std::size_t>& labels);

/// Row-wise softmax of a (B, K) tensor, log-sum-exp stabilized.
Tensor softmax(const Tensor& logits);

/// Sum of all elements (scalar).
Var sum(Tape& tape, Var x);
/// sum(weights * x) for a constant weight tensor (scalar).
Var weighted_sum(Tape& tape, Var x, const Tensor& weights);
/// 0.5 * ||x||^2 (scalar).
Var half_squared_norm(Tape& tape, Var x);

/// (B, T, H) -> (B, H) at the final time step.
Var last_step(Tape& tape, Var x);

}  // namespace oct1d::ops
