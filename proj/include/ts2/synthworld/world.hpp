// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ts2/numcore/tensor.hpp"
#include "ts2/units/kmeans.hpp"
#include "ts2/units/units.hpp"

#include "json.hpp"

namespace ts2::synthworld {

// Knobs for the generative world: two languages with disjoint unit
// inventories, a shared translation lexicon, and a pool of speakers per
// language whose accent maps, embedding offsets, silence habits and noise
// levels perturb the rendered feature streams.
struct WorldConfig {
    std::uint64_t seed = 1234;

    int feature_dim = 16;
    int inventory_size = 24;
    int vocab_size = 50;
    int word_len_min = 3;
    int word_len_max = 6;
    int sentence_len_min = 3;
    int sentence_len_max = 6;

    int speakers_per_lang = 8;  // speaker 0 is the clean reference speaker
    int speaker_groups = 2;     // accent groups among non-reference speakers

    double inventory_radius = 3.0;
    double inventory_min_dist = 2.5;
    double group_offset_scale = 0.9;
    double speaker_offset_scale = 0.1;

    double accent_map_fraction = 0.5;
    double accent_confusion_prob = 0.85;
    double duration_jitter = 0.3;
    double silence_rate = 0.08;       // per inter-token gap
    int silence_frames_min = 2;
    int silence_frames_max = 5;
    double silence_radius = 8.0;
    double silence_jitter = 0.15;
    double noise_sigma = 0.08;

    int base_duration_min = 2;
    int base_duration_max = 4;

    std::string reorder = "reverse";  // none | reverse | rotate

    nlohmann::json to_json() const;
    static WorldConfig from_json(const nlohmann::json& j);
};

struct SpeakerProfile {
    int id = 0;
    int group = -1;  // -1 for the reference speaker
    std::vector<double> voice;  // embedding offset; doubles as the d-vector
    double confusion_prob = 0.0;
    double duration_jitter = 0.0;
    double silence_rate = 0.0;
    double noise_sigma = 0.0;
};

struct Language {
    std::string name;
    units::Codebook inventory;                    // [inventory_size, D]
    std::vector<int> base_durations;              // frames per inventory unit
    std::vector<units::UnitSeq> words;            // reduced unit sequences
    std::vector<SpeakerProfile> speakers;
    std::vector<std::vector<double>> group_offsets;
    std::vector<std::map<int, int>> group_accent_maps;
    std::vector<double> silence_anchor;
    int silence_frames_min = 2;
    int silence_frames_max = 5;
    double silence_jitter = 0.15;
};

struct World {
    WorldConfig config;
    std::vector<Language> langs;      // [0] = source, [1] = target
    std::vector<int> translation;     // source word id -> target word id

    const Language& source() const { return langs[0]; }
    const Language& target() const { return langs[1]; }
};

// Builds the full world deterministically from the config seed.  Word shapes
// are resampled until, within every accent variant, all pairs of words keep
// an edit distance of at least two, so renderings stay parseable.
World build_world(const WorldConfig& cfg);

// Concatenates the (boundary-clean) word unit sequences of a sentence.
units::UnitSeq sentence_units(const Language& lang, const std::vector<int>& word_ids);

// Word-level translation: per-word lexicon lookup plus the sentence reorder
// rule from the config.
std::vector<int> translate_words(const World& world, const std::vector<int>& src_words);

// Applies a group's accent map deterministically to every mapped token and
// collapses any adjacent duplicates this creates.  group -1 is the identity.
units::UnitSeq accent_variant(const Language& lang, const units::UnitSeq& content, int group);

// Renders content units to a [T, D] feature matrix for one speaker.  All
// stochastic choices (confusion draws, duration jitter, silence, noise) come
// from the given seed, so renders are reproducible per utterance.
numcore::Tensor render(const units::UnitSeq& content, const SpeakerProfile& spk,
                       const Language& lang, std::uint64_t seed);

// Deterministic per-group rendering of a word in learned-codebook space:
// accent applied to every mapped token, group offset added, no noise, one
// frame per token, then quantized and reduced.  Used as the reference
// signature for word-level decoding of unit sequences.
units::UnitSeq word_signature(const Language& lang, int word_id, int group,
                              const units::Codebook& learned);

// Maps every inventory unit of one accent group through "render one clean
// frame, quantize against the learned codebook".  With require_injective set
// this throws DataError if two distinct inventory units of the group land on
// the same learned unit; the reference group must stay injective for
// normalization targets to be well defined, other groups may overlap on
// rarely rendered units.
std::vector<int> inventory_to_learned(const Language& lang, int group,
                                      const units::Codebook& learned,
                                      bool require_injective = true);

nlohmann::json world_to_json(const World& world);
World world_from_json(const nlohmann::json& j);

}  // namespace ts2::synthworld
