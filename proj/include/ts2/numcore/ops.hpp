// SPDX-License-Identifier: Apache-2.0
//
// Differentiable ops. Each op builds one tape node with a fused backward.
// Shape rules follow the conventions: activations are [T, C] row-major,
// weights for affine maps are [in, out], conv weights [Cout, Cin, K].

#pragma once

#include <vector>

#include "ts2/common/rng.hpp"
#include "ts2/numcore/graph.hpp"

namespace ts2::numcore {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var sum(const Var& x);
Var mean(const Var& x);

// y = x W + b. W is [in, out]; b is [out] and may be null.
Var affine(const Var& x, const Var& w, const Var& b);

Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k] x [n,k]^T -> [m,n]

Var add_bias_rows(const Var& x, const Var& b);
Var slice_cols(const Var& x, int c0, int c1);
Var concat_cols(const std::vector<Var>& parts);

Var relu(const Var& x);

// Gated linear unit over rows: [T, 2C] -> [T, C], a * sigmoid(b).
Var glu_rows(const Var& x);

Var row_softmax(const Var& x);
Var log_row_softmax(const Var& x);

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// Gather rows of `table` ([V, C]) by token id.
Var embedding_rows(const Var& table, const std::vector<int>& ids);

int conv1d_out_len(int t, int k, int stride, int pad);

// 1-D convolution over time: x [T, Cin], w [Cout, Cin, K], b [Cout] (may be
// null), zero padding.
Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad);

// Inverted dropout; p <= 0 returns x unchanged.
Var dropout(const Var& x, double p, Rng& rng);

// Sum over rows of label-smoothed cross-entropy. logits [T, V], one target
// id per row. smoothing == 0 reduces to plain cross-entropy exactly.
Var cross_entropy_smooth_sum(const Var& logits, const std::vector<int>& targets, double smoothing);

// Sum of squared differences against a constant target.
Var mse_sum(const Var& pred, const Tensor& target);

// Copy of `base` with the listed rows replaced by the broadcast [1, C] row
// vector. Row indices may repeat; gradients flow only into the row vector.
Var replace_rows(const Tensor& base, const std::vector<int>& rows, const Var& row_vec);

// Select rows by index: [T, C] -> [N, C]. Duplicate indices accumulate on the
// way back.
Var gather_rows(const Var& x, const std::vector<int>& rows);

// Internal helper shared with other modules that define custom nodes.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd);

}  // namespace ts2::numcore
