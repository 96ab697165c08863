// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode autodiff tape. A forward pass builds a DAG of Nodes; each
// node knows how to push its gradient into its parents. Graphs are
// per-sample and freed by shared_ptr refcounting after the step.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ts2/numcore/tensor.hpp"

namespace ts2::numcore {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by ensure_grad()
    bool requires_grad = false;
    bool grad_accumulated = false;  // set when backward adds into grad
    std::vector<Var> parents;
    // Adds this node's gradient contribution into its parents' grads.
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad() {
        if (!grad.same_shape(value)) grad = Tensor(value.shape());
        return grad;
    }

    void accumulate(const Tensor& g) {
        Tensor& dst = ensure_grad();
        const double* src = g.data();
        double* d = dst.data();
        const int n = dst.numel();
        for (int i = 0; i < n; ++i) d[i] += src[i];
        grad_accumulated = true;
    }

    void zero_grad() {
        if (grad.same_shape(value)) grad.fill(0.0);
        grad_accumulated = false;
    }
};

// A node with no parents. requires_grad marks it as trainable (parameters).
Var leaf(Tensor value, bool requires_grad);

// A node with no parents and no gradient (inputs, masks, positional tables).
Var constant(Tensor value);

// Reverse-mode sweep from a scalar loss. `seed` is the gradient injected at
// the loss node (used to weight per-sample losses during gradient
// accumulation). Throws UsageError if loss is not a scalar.
void backward(const Var& loss, double seed = 1.0);

}  // namespace ts2::numcore
