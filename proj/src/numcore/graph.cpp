// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/graph.hpp"

#include <unordered_set>

#include "ts2/common/error.hpp"

namespace ts2::numcore {

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

void backward(const Var& loss, double seed) {
    if (!loss) throw UsageError("backward: null loss node");
    if (loss->value.numel() != 1)
        throw UsageError("backward requires a scalar loss, got shape " + loss->value.shape_str());

    // Iterative post-order DFS; topo holds children after all their parents'
    // dependents, so reverse iteration runs each backward_fn exactly once
    // with the node's full gradient in place.
    std::vector<Node*> topo;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Node* p = f.node->parents[f.next_parent++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    // Interior gradients are scratch state from any previous sweep over this
    // graph; reset them so only leaves (parameters, inputs) accumulate across
    // repeated backward calls.
    for (Node* n : topo)
        if (!n->parents.empty()) n->zero_grad();

    loss->ensure_grad();
    loss->grad[0] += seed;
    loss->grad_accumulated = true;

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        Node* n = *it;
        // Nodes that received no gradient (e.g. below an infeasible loss
        // term) have nothing to push and may not even have grad storage.
        if (n->backward_fn && n->requires_grad && n->grad_accumulated) n->backward_fn(*n);
    }
}

}  // namespace ts2::numcore
