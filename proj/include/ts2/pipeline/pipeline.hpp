// SPDX-License-Identifier: Apache-2.0
//
// Stage runner behind the CLI. Every subcommand materializes one artifact
// directory named <stage>-<hash> under the output root, where the hash
// covers the stage's parent artifacts and the config fields the stage reads.
// A directory with a manifest whose file hashes still verify is a cache hit
// and is returned as-is; anything else is rebuilt from scratch, so reruns
// are idempotent byte-for-byte. Single-stage commands require their parent
// artifacts to exist already and name the producing subcommand when they do
// not; the reproduce-table commands build their own chains.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ts2/pipeline/config.hpp"
#include "ts2/units/units.hpp"

namespace ts2::pipeline {

struct RunContext {
    ExperimentConfig cfg;
    std::filesystem::path out_root;
    int workers = 1;
};

// World build + corpus rendering: world.json and corpus/ (features + manifests).
std::filesystem::path run_gen_world(const RunContext& ctx);

// K-means codebooks per language: src.codebook / tgt.codebook.
std::filesystem::path run_fit_codebook(const RunContext& ctx);

// Frame units and reduced units for every utterance (units.tsv) plus the
// reference-speaker unit targets for the target language (targets.tsv).
std::filesystem::path run_quantize(const RunContext& ctx);

// Masked pretraining + CTC finetuning at the configured tier:
// checkpoint.ckpt and metrics.json.
std::filesystem::path run_train_normalizer(const RunContext& ctx);

// Normalized unit sequences for every target-language utterance
// (normalized.tsv).
std::filesystem::path run_normalize(const RunContext& ctx);

// Translation model training on the configured target kind and data
// selection: checkpoint.ckpt and metrics.json.
std::filesystem::path run_train_s2ut(const RunContext& ctx);

// Beam decodes for the evaluation corpus: hyps.tsv.
std::filesystem::path run_translate(const RunContext& ctx);

// Word-level BLEU / UER report for the decoded corpus: report.tsv.
std::filesystem::path run_evaluate(const RunContext& ctx);

// One training per mined-score threshold, scored on the evaluation corpus:
// sweep.tsv.
std::filesystem::path run_sweep_threshold(const RunContext& ctx);

// Five-system comparison (orig, orig+speaker, norm at each tier), building
// every required stage: table2.tsv.
std::filesystem::path run_reproduce_table2(const RunContext& ctx);

// Cross-speaker unit agreement before and after normalization on the paired
// split: table6.tsv.
std::filesystem::path run_reproduce_table6(const RunContext& ctx);

// True when `dir` holds a manifest whose recorded file hashes all verify.
bool stage_cached(const std::filesystem::path& dir);

// Space-joined unit column helpers shared by the TSV artifact formats.
std::string format_units(const units::UnitSeq& u);
units::UnitSeq parse_units(const std::string& cell);

// id -> units maps from the two-column TSV artifacts (targets.tsv,
// normalized.tsv).
std::map<std::string, units::UnitSeq> read_id_units(const std::filesystem::path& path);

}  // namespace ts2::pipeline
