// Differentiable operations on C x T feature maps.

#pragma once

#include "hsvc/autograd.h"

namespace hsvc::nn {

struct Conv1dSpec {
  int stride = 1;
  int dilation = 1;
  int pad_left = 0;
  int pad_right = 0;
  int groups = 1;
};

// x: Cin x T, weight: Cout x (Cin / groups) x K, bias: Cout (may be null).
// Zero padding; output length (T + pads - dilation (K - 1) - 1) / stride + 1.
Var conv1d(const Var& x, const Var& weight, const Var& bias, const Conv1dSpec& spec);

// x: Cin x T, weight: Cin x Cout x K. The full output of length
// (T - 1) * stride + K is cropped by crop_left / crop_right.
Var conv_transpose1d(const Var& x, const Var& weight, const Var& bias, int stride,
                     int crop_left, int crop_right);

Var leaky_relu(const Var& x, float slope);
Var tanh(const Var& x);
Var add(const Var& a, const Var& b);

// (gamma_a + gamma_b) * u + shift_a + shift_b, all shapes equal.
Var film(const Var& u, const Var& gamma_a, const Var& shift_a, const Var& gamma_b,
         const Var& shift_b);

// Per-row mean over time: C x T -> C x 1 (accumulated in double).
Var time_mean(const Var& x);
// x (C x T) plus/minus a column (C x 1) broadcast over time.
Var add_column(const Var& x, const Var& column);
Var sub_column(const Var& x, const Var& column);

// Rows [begin, end) of a C x T map.
Var slice_rows(const Var& x, std::size_t begin, std::size_t end);
Var transpose(const Var& x);

// Non-overlapping average of `factor` consecutive samples; floor(T / factor)
// outputs.
Var avg_pool(const Var& x, int factor);

}  // namespace hsvc::nn
