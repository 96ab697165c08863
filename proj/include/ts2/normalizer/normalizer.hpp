// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ts2/numcore/optim.hpp"
#include "ts2/numcore/tensor.hpp"
#include "ts2/numcore/transformer.hpp"
#include "ts2/units/units.hpp"

#include "json.hpp"

namespace ts2::normalizer {

// Speech normalizer: stride-2 convolutional front-end with a gated linear
// unit, a pre-norm transformer encoder, and a linear CTC head over the
// learned unit vocabulary plus blank.  Trained in two phases: masked unit
// prediction on unlabeled data, then CTC finetuning towards reference-speaker
// unit sequences.
struct NormalizerConfig {
    std::uint64_t seed = 1;
    int feature_dim = 16;
    int vocab = 100;  // learned units; the CTC head adds one blank column
    int width = 64;
    int blocks = 4;
    int heads = 4;
    int ff_hidden = 128;
    int conv_kernel = 3;
    double dropout = 0.1;
    double mask_rate = 0.3;  // expected fraction of masked input frames
    int mask_span = 3;

    int batch = 8;
    int pretrain_updates = 600;
    double pretrain_peak_lr = 1e-3;
    int pretrain_warmup = 100;
    double pretrain_half_life = 1500;

    int finetune_updates = 2500;
    int freeze_updates = 1000;  // transformer blocks stay frozen this long
    int warmup = 200;
    double peak_lr = 1e-3;
    double half_life = 2000;
    double clip_norm = 1.0;
    int eval_interval = 100;

    nlohmann::json to_json() const;
    static NormalizerConfig from_json(const nlohmann::json& j);
};

struct NormSample {
    numcore::Tensor features;    // [T, D]
    units::UnitSeq frame_units;  // per-frame learned units, pretrain targets
    units::UnitSeq target;       // reference reduced units, CTC targets
};

class NormalizerModel {
  public:
    explicit NormalizerModel(const NormalizerConfig& cfg);

    const NormalizerConfig& config() const { return cfg_; }
    numcore::ParamStore& store() { return store_; }

    // Encoder output [ceil(T/2), width].  Masked rows are replaced by the
    // learned mask vector before the front-end.
    numcore::Var encode(const numcore::Tensor& features, const std::vector<int>& masked_rows,
                        bool train_mode, Rng* rng);
    numcore::Var ctc_log_probs(const numcore::Var& encoded);
    numcore::Var pretrain_logits(const numcore::Var& encoded, const std::vector<int>& positions);

    // Greedy CTC decode of one utterance, reduced.
    units::UnitSeq normalize(const numcore::Tensor& features);

    // Encoder positions whose receptive-field centers fall on masked frames.
    std::vector<int> masked_encoder_positions(const std::vector<int>& masked_rows, int t) const;

    // Span mask over t input frames drawn from `rng`.
    std::vector<int> sample_mask(int t, Rng& rng) const;

  private:
    NormalizerConfig cfg_;
    numcore::ParamStore store_;
    numcore::Var mask_vec_, conv_w_, conv_b_;
    std::vector<numcore::EncoderBlockParams> blocks_;
    numcore::LayerNormParams ln_f_;
    numcore::Var ctc_w_, ctc_b_, pre_w_, pre_b_;
};

struct PretrainResult {
    double final_loss = 0.0;
    double dev_masked_accuracy = 0.0;
};

struct FinetuneResult {
    double best_dev_uer = 0.0;
    int best_update = -1;
    int infeasible_skipped = 0;
    std::vector<std::pair<int, double>> dev_curve;  // (update, dev UER)
    std::map<std::string, numcore::Tensor> best_state;
};

// Masked unit prediction on unlabeled data; trains encoder, mask vector and
// the pretraining head.  Throws DivergenceError on non-finite loss.
PretrainResult pretrain(NormalizerModel& model, const std::vector<NormSample>& train,
                        const std::vector<NormSample>& dev);

// CTC finetuning with dev-UER checkpoint selection; the model is left loaded
// with the best checkpoint.  Pairs whose targets cannot be aligned are
// skipped and counted.
FinetuneResult finetune(NormalizerModel& model, const std::vector<NormSample>& train,
                        const std::vector<NormSample>& dev);

// Mean per-utterance unit error rate of greedy decodes against targets.
double dev_uer(NormalizerModel& model, const std::vector<NormSample>& dev);

}  // namespace ts2::normalizer
