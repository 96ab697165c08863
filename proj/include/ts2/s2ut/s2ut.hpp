// SPDX-License-Identifier: Apache-2.0
//
// Speech-to-unit translation: a conv-downsampled transformer encoder over
// feature frames, an autoregressive unit decoder trained with label-smoothed
// cross entropy, an auxiliary decoder that reconstructs source units from an
// intermediate encoder layer during training only, and an optional speaker
// fusion layer on the encoder output. Inference runs a cached beam search.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ts2/common/rng.hpp"
#include "ts2/numcore/optim.hpp"
#include "ts2/numcore/tensor.hpp"
#include "ts2/numcore/transformer.hpp"
#include "ts2/units/units.hpp"

namespace ts2::s2ut {

struct S2utConfig {
    std::uint64_t seed = 1;
    int feature_dim = 16;
    int vocab = 100;      // target unit inventory
    int aux_vocab = 100;  // source unit inventory reconstructed by the aux decoder
    int width = 64;
    int enc_blocks = 3;
    int dec_blocks = 3;
    int aux_blocks = 1;
    int heads = 4;
    int ff_hidden = 128;
    int conv_kernel = 3;
    int aux_attach = 2;  // aux decoder reads the output of this many encoder blocks
    double aux_weight = 8.0;
    double label_smoothing = 0.1;
    double dropout = 0.1;
    bool speaker_fusion = false;
    int speaker_dim = 16;
    int batch = 8;
    int updates = 3000;
    int warmup = 200;
    double peak_lr = 1e-3;
    double half_life = 2500;
    double clip_norm = 1.0;
    int eval_interval = 200;
    int beam = 5;
    int max_len_factor = 4;

    nlohmann::json to_json() const;
    static S2utConfig from_json(const nlohmann::json& j);
};

struct S2utSample {
    numcore::Tensor features;     // [T, feature_dim] source render
    units::UnitSeq target;        // reduced target units
    units::UnitSeq aux_target;    // reduced source units
    std::vector<double> speaker;  // target speaker vector; empty when fusion is off
};

struct Encoded {
    numcore::Var top;  // encoder output consumed by the primary decoder
    numcore::Var aux;  // intermediate tap consumed by the auxiliary decoder
};

struct TranslateResult {
    units::UnitSeq units;
    bool truncated = false;
    double score = 0.0;  // total log probability of the returned hypothesis
};

class S2utModel {
  public:
    explicit S2utModel(const S2utConfig& cfg);

    const S2utConfig& config() const { return cfg_; }
    numcore::ParamStore& store() { return store_; }

    // Teacher-forcing graph paths used by training.
    Encoded encode(const numcore::Tensor& features, const std::vector<double>& speaker,
                   bool train_mode, Rng* rng);
    numcore::Var decoder_logits(const numcore::Var& memory, const units::UnitSeq& target,
                                bool train_mode, Rng* rng);
    numcore::Var aux_logits(const numcore::Var& aux_memory, const units::UnitSeq& aux_target,
                            bool train_mode, Rng* rng);

    // Cached beam decode over plain tensors; beam == 1 is exactly greedy.
    TranslateResult translate(const numcore::Tensor& features,
                              const std::vector<double>& speaker, int beam);

    int bos() const { return cfg_.vocab; }
    int eos() const { return cfg_.vocab + 1; }
    int aux_bos() const { return cfg_.aux_vocab; }
    int aux_eos() const { return cfg_.aux_vocab + 1; }

  private:
    S2utConfig cfg_;
    numcore::ParamStore store_;
    numcore::Var conv1_w_, conv1_b_;
    numcore::Var conv2_w_, conv2_b_;
    std::vector<numcore::EncoderBlockParams> enc_blocks_;
    numcore::LayerNormParams enc_ln_f_;
    numcore::Var fuse_w_, fuse_b_;
    numcore::Var dec_emb_;
    std::vector<numcore::DecoderBlockParams> dec_blocks_;
    numcore::LayerNormParams dec_ln_f_;
    numcore::Var dec_out_w_, dec_out_b_;
    numcore::Var aux_emb_;
    std::vector<numcore::DecoderBlockParams> aux_blocks_;
    numcore::LayerNormParams aux_ln_f_;
    numcore::Var aux_out_w_, aux_out_b_;

    numcore::Var decode_stack(const numcore::Var& memory, const units::UnitSeq& prefix,
                              int bos_id, const numcore::Var& emb,
                              const std::vector<numcore::DecoderBlockParams>& blocks,
                              const numcore::LayerNormParams& ln_f, const numcore::Var& out_w,
                              const numcore::Var& out_b, int vocab, bool train_mode, Rng* rng);
};

struct TrainResult {
    double best_dev_bleu = 0.0;
    int best_update = 0;
    std::vector<std::pair<int, double>> loss_curve;  // (update, mean batch loss)
    std::vector<std::pair<int, double>> bleu_curve;  // (update, dev BLEU)
    std::map<std::string, numcore::Tensor> best_state;
};

// Trains with primary + weighted auxiliary label-smoothed cross entropy,
// evaluates greedy dev BLEU every eval_interval updates, and leaves the model
// at the best dev checkpoint. Throws DivergenceError on non-finite loss.
TrainResult train_s2ut(S2utModel& model, const std::vector<S2utSample>& train,
                       const std::vector<S2utSample>& dev);

}  // namespace ts2::s2ut
