// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: one versioned JSON document describing the whole
// pipeline (world, corpora, codebooks, normalizer, translation model, data
// selection, evaluation). Validation collects every violation with its field
// path and rejects unknown keys; absent fields keep their defaults; absent
// per-block seeds are derived from the top-level seed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ts2/normalizer/normalizer.hpp"
#include "ts2/s2ut/s2ut.hpp"
#include "ts2/synthworld/corpora.hpp"
#include "ts2/synthworld/world.hpp"

namespace ts2::pipeline {

struct CodebookBlock {
    std::uint64_t seed = 0;  // filled from the experiment seed when absent
    int k = 40;
    int pool_utterances = 150;  // utterances pooled per language for fitting
};

struct NormalizerBlock {
    std::string tier = "10hr";  // 10min | 1hr | 10hr, indexes corpora.norm_tiers
    normalizer::NormalizerConfig model;
};

struct S2utBlock {
    std::string target_kind = "norm";  // norm | orig
    s2ut::S2utConfig model;
};

struct DataBlock {
    int supervised_pairs = 0;  // 0 = the whole s2st-train split
    bool use_mined = false;
    double mined_threshold = 1.06;
    std::vector<double> sweep_thresholds = {1.00, 1.03, 1.06, 1.09, 1.12};
};

struct EvalBlock {
    int beam = 5;
    bool compute_proxy = false;
    std::string corpus = "s2st-test";  // s2st-dev | s2st-test
};

struct ExperimentConfig {
    int version = 1;
    std::uint64_t seed = 1234;
    synthworld::WorldConfig world;
    synthworld::CorporaConfig corpora;
    CodebookBlock codebook;
    NormalizerBlock normalizer;
    S2utBlock s2ut;
    DataBlock data;
    EvalBlock eval;

    // The schema-level document with every default and derived seed filled
    // in; parsing it back yields the same config.
    nlohmann::json to_json() const;
};

// Parses and validates a config document. Returns the resolved config;
// appends one "field.path: problem" entry per violation to `errors` and the
// result is only meaningful when `errors` stays empty.
ExperimentConfig parse_config(const nlohmann::json& doc, std::vector<std::string>& errors);

// Applies one --override entry ("block.field=value") to the raw document.
// Values parse as JSON when possible and fall back to strings. Throws
// ConfigError on a malformed spec.
void apply_override(nlohmann::json& doc, const std::string& spec);

// Reads, overrides, validates. Throws ConfigError whose message lists every
// violation, one per line. `seed_override` replaces the top-level seed.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides,
                             const std::uint64_t* seed_override = nullptr);

}  // namespace ts2::pipeline
