// SPDX-License-Identifier: Apache-2.0
//
// Duration prediction for reduced unit sequences, and the resynthesis proxy
// that scores a unit sequence by rendering it with the reference speaker,
// re-quantizing, and measuring the unit error rate against intended content.

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"

#include "ts2/common/rng.hpp"
#include "ts2/numcore/optim.hpp"
#include "ts2/numcore/tensor.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/kmeans.hpp"
#include "ts2/units/units.hpp"

namespace ts2::duration {

struct DurationConfig {
    std::uint64_t seed = 1;
    int vocab = 100;
    int width = 24;
    int hidden = 48;
    double weight = 1.0;  // multiplier on the log-domain MSE loss
    int batch = 16;
    int updates = 600;
    int warmup = 50;
    double peak_lr = 2e-3;
    double half_life = 2000;
    int eval_interval = 100;

    nlohmann::json to_json() const;
    static DurationConfig from_json(const nlohmann::json& j);
};

struct DurationSample {
    units::UnitSeq units;          // reduced sequence
    units::DurationSeq durations;  // run lengths, all >= 1
};

class DurationModel {
  public:
    explicit DurationModel(const DurationConfig& cfg);

    const DurationConfig& config() const { return cfg_; }
    numcore::ParamStore& store() { return store_; }

    // Per-unit predicted log durations, shape [L, 1].
    numcore::Var forward(const units::UnitSeq& reduced);

    // max(1, round(exp(log prediction))) per unit.
    units::DurationSeq predict(const units::UnitSeq& reduced);

  private:
    DurationConfig cfg_;
    numcore::ParamStore store_;
    numcore::Var emb_;
    numcore::Var w1_, b1_;
    numcore::Var w2_, b2_;
};

struct DurationTrainResult {
    double final_train_mse = 0.0;
    double dev_mse = 0.0;
};

// Log-domain MSE with the configured weight. Throws DataError on empty data,
// non-positive durations, or length mismatches.
DurationTrainResult train_duration(DurationModel& model,
                                   const std::vector<DurationSample>& train,
                                   const std::vector<DurationSample>& dev);

// Predicted durations applied through units::expand.
units::UnitSeq predict_and_expand(DurationModel& model, const units::UnitSeq& reduced);

// Renders `u` (ids in `cb`'s space) with the language's reference speaker and
// returns the UER of the re-quantized reduced result against `content`, also
// in `cb`'s space. Input ids are first mapped to inventory ids by nearest
// centroid; when `cb` is the language inventory itself that map is identity.
double resynthesis_proxy(const units::UnitSeq& u, const units::UnitSeq& content,
                         const synthworld::Language& lang, const units::Codebook& cb);

}  // namespace ts2::duration
