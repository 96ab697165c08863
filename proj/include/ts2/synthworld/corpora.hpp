// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ts2/numcore/tensor.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/units.hpp"

#include "json.hpp"

namespace ts2::synthworld {

// Sizes and mining parameters for the corpus suite built on top of a world.
struct CorporaConfig {
    std::uint64_t seed = 77;

    int s2st_train_pairs = 5000;
    int s2st_dev_pairs = 120;
    int s2st_test_pairs = 300;

    // Normalizer training tiers are nested prefixes of one shuffled pool, so
    // the largest entry is the pool size.
    std::vector<int> norm_tiers = {40, 240, 1500};
    int norm_dev_utts = 80;
    int pretrain_utts = 600;

    int uer_pairs = 400;

    int mined_pairs = 2400;
    double mined_misaligned_fraction = 0.3;
    double mined_aligned_mean = 1.09;
    double mined_misaligned_mean = 1.03;
    double mined_score_sigma = 0.02;

    nlohmann::json to_json() const;
    static CorporaConfig from_json(const nlohmann::json& j);
};

struct UtteranceRow {
    std::string id;
    std::string split;
    std::string language;       // "src" or "tgt"
    int speaker = 0;
    std::string feature_path;   // relative to the corpus directory
    units::UnitSeq content;     // reference reduced units (inventory space)
    std::string provenance;
    double score = 0.0;
    bool has_score = false;
    std::vector<int> words;     // sentence as word ids
};

struct PairRow {
    std::string id;
    std::string split;
    std::string source_id;
    std::string target_id;
    std::string provenance;
    double score = 0.0;
    bool has_score = false;
};

struct Corpora {
    std::vector<UtteranceRow> utterances;
    std::vector<PairRow> pairs;
    std::map<std::string, std::size_t> by_id;

    const UtteranceRow& utterance(const std::string& id) const;
    void rebuild_index();
};

// Binary feature file: magic "TSFT", version, T, D, then row-major f32.
void write_features(const std::filesystem::path& path, const numcore::Tensor& features);
numcore::Tensor read_features(const std::filesystem::path& path);

void write_utterance_manifest(const std::filesystem::path& path,
                              const std::vector<UtteranceRow>& rows);
std::vector<UtteranceRow> read_utterance_manifest(const std::filesystem::path& path);

void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairRow>& rows);
std::vector<PairRow> read_pair_manifest(const std::filesystem::path& path);

// Samples every corpus split, renders all feature files under dir/features/,
// and writes dir/utterances.tsv and dir/pairs.tsv.  Splits:
//   s2st-train / s2st-dev / s2st-test   parallel pairs (both sides rendered)
//   norm-train / norm-dev               target-language normalizer data
//   pretrain                            target-language unlabeled pool
//   uer                                 same-content pairs of distinct speakers
//   mined                               scored pairs, a fraction misaligned
Corpora make_corpora(const World& world, const CorporaConfig& cfg,
                     const std::filesystem::path& dir);

Corpora load_corpora(const std::filesystem::path& dir);

}  // namespace ts2::synthworld
