// SPDX-License-Identifier: Apache-2.0
//
// Named parameter store and Adam optimizer with a warmup-then-decay learning
// rate schedule. Every parameter draws its initial values from an RNG stream
// derived from (store seed, parameter name), so initialization is independent
// of creation order: adding or removing one parameter never perturbs the
// starting values of the others.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ts2/numcore/graph.hpp"
#include "ts2/numcore/tensor.hpp"

namespace ts2::numcore {

enum class Init {
    zeros,
    ones,
    xavier_uniform,  // limit sqrt(6 / (fan_in + fan_out)) over the trailing two dims
    normal_002,      // gauss(0, 0.02), used for embedding tables
};

struct Parameter {
    std::string name;
    Var var;
    Tensor m;  // Adam first moment
    Tensor v;  // Adam second moment
    long updates = 0;
    bool frozen = false;
};

class ParamStore {
  public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    // Creates a trainable leaf. Throws UsageError if the name already exists.
    Var create(const std::string& name, const std::vector<int>& shape, Init init);

    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Var get(const std::string& name) const;

    void zero_grads();

    // Marks every parameter whose name starts with `prefix` (un)frozen. Frozen
    // parameters are skipped entirely by the optimizer: no value update, no
    // moment update, no bias-correction advance.
    int set_frozen(const std::string& prefix, bool frozen);

    // Parameters in name order (deterministic iteration).
    std::vector<Parameter*> items();
    std::vector<const Parameter*> items() const;

    std::uint64_t seed() const { return seed_; }
    int count() const { return static_cast<int>(params_.size()); }
    long total_values() const;

    // Name -> value snapshot, used by checkpointing.
    std::map<std::string, Tensor> state_dict() const;
    // Restores values from a snapshot. Every stored name must exist with a
    // matching shape and every parameter must be covered, otherwise DataError.
    void load_state_dict(const std::map<std::string, Tensor>& state);

  private:
    std::uint64_t seed_;
    std::map<std::string, Parameter> params_;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double peak_lr = 1e-3;
    int warmup_steps = 400;
    // Multiplicative decay applied per step after warmup. The default halves
    // the rate every 2000 steps.
    double decay_per_step = 0.999653482;
    double clip_norm = 0.0;  // 0 disables gradient clipping
};

class Adam {
  public:
    Adam(ParamStore& store, AdamConfig cfg) : store_(store), cfg_(cfg) {}

    // Learning rate for a 0-based global step: linear warmup to peak_lr,
    // then exponential decay.
    double lr_at(long step) const;

    // Applies one update using the accumulated gradients, then clears them.
    // Throws UsageError when no backward pass has produced any gradient since
    // the previous step. Returns the learning rate that was applied.
    double step();

    long steps_taken() const { return step_; }

  private:
    ParamStore& store_;
    AdamConfig cfg_;
    long step_ = 0;
};

AdamConfig adam_config_halving(double peak_lr, int warmup_steps, double half_life_steps);

}  // namespace ts2::numcore
