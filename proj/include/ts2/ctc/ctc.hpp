// SPDX-License-Identifier: Apache-2.0
//
// Connectionist Temporal Classification: log-space forward-backward loss
// with analytic gradient, an exact enumeration oracle for small instances,
// and greedy best-path decoding. The blank symbol always sits at index V,
// one past the unit inventory, so unit files never contain it.

#pragma once

#include "ts2/numcore/graph.hpp"
#include "ts2/numcore/tensor.hpp"
#include "ts2/units/units.hpp"

namespace ts2::ctc {

struct CtcResult {
    // -log P(target | log_probs). +infinity when no alignment fits (target
    // longer than the frame count allows).
    double loss = 0.0;
    // dLoss/dlog_probs, same shape as the input; empty when not requested or
    // when the loss is infinite.
    numcore::Tensor grad;
};

// `log_probs` is [T, V+1] with rows that are log-distributions; the target
// holds tokens < V. Throws UsageError when rows are not normalized or the
// target contains a blank.
CtcResult ctc_loss(const numcore::Tensor& log_probs, const units::UnitSeq& target,
                   bool want_grad = false);

// Exact path enumeration over all (V+1)^T frame labelings; returns the total
// probability of paths that collapse to `target`. Only for tiny instances
// (T <= 8, V <= 5); larger ones throw UsageError.
double ctc_brute_force(const numcore::Tensor& log_probs, const units::UnitSeq& target);

// Per-frame argmax (ties to the lowest index), collapse adjacent repeats,
// then drop blanks. Repeats separated by a blank survive as distinct units.
units::UnitSeq best_path_decode(const numcore::Tensor& log_probs);

// Graph wrapper around ctc_loss: forward caches the analytic gradient and
// backward scatters it into the log-probability node. An infeasible target
// yields an infinite loss value and a zero gradient contribution.
numcore::Var ctc_loss_node(const numcore::Var& log_probs, const units::UnitSeq& target);

}  // namespace ts2::ctc
