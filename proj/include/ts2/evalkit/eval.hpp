// SPDX-License-Identifier: Apache-2.0
//
// System-level evaluation: word decoding of unit sequences against the
// lexicon, report rows with BLEU / UER / resynthesis scores, tab-separated
// report files, and the mined-data threshold sweep.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ts2/synthworld/corpora.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/kmeans.hpp"
#include "ts2/units/units.hpp"

namespace ts2::evalkit {

// Segments a unit sequence in learned-codebook space into lexicon word ids
// by minimum-cost dynamic programming over per-accent word signatures.
// Costs: 0.25 to emit a word whose signature matches a window exactly, plus
// 1.25 per edit (at most one edit per word), and 1.0 to skip one unit
// without emitting anything. Ties resolve deterministically (word emissions
// before skips, then lower word id, then shorter window).
class WordDecoder {
  public:
    WordDecoder(const synthworld::Language& lang, const units::Codebook& learned);

    std::vector<int> decode(const units::UnitSeq& u) const;

  private:
    struct Entry {
        units::UnitSeq signature;
        int word = 0;
    };
    std::vector<Entry> entries_;
};

struct SystemHyp {
    std::string id;  // utterance id of the reference this hypothesis answers
    units::UnitSeq units;
};

struct EvalRow {
    std::string system;
    std::string target_kind;
    std::string corpus;
    double bleu = 0.0;
    double uer = 0.0;
    std::optional<double> proxy_wer;
    int samples = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    std::string config_fingerprint;
    std::vector<std::uint64_t> seeds;
};

// Scores one system against reference utterances: corpus BLEU over decoded
// word sequences, mean per-utterance UER against the reference-speaker unit
// targets (the reference content mapped into the learned codebook), and,
// when requested, the mean resynthesis proxy score. Throws DataError when
// the hypothesis and reference id sets differ, listing the offending ids.
EvalRow evaluate_system(const std::string& system_id, const std::string& target_kind,
                        const std::string& corpus_name, const std::vector<SystemHyp>& hyps,
                        const std::vector<synthworld::UtteranceRow>& refs,
                        const synthworld::Language& lang, const units::Codebook& learned,
                        bool compute_proxy = false);

// Tab-separated report with a header row; a JSON metadata file with the
// config fingerprint and seed set is written next to it (path + ".meta.json").
void write_report(const std::filesystem::path& path, const EvalReport& report);

// Parses a report written by write_report, including the metadata sidecar
// when present. Throws DataError on a malformed row.
EvalReport read_report(const std::filesystem::path& path);

struct SweepPoint {
    double threshold = 0.0;
    double score = 0.0;
    int selected = 0;  // mined pairs admitted at this threshold
    bool calibrated = false;
};

// Runs `train_and_score` once per threshold on the mined pairs whose score
// passes it; the callback supplies its own supervised data, so an empty
// selection yields the supervised-only system. Thresholds must be sorted
// ascending (UsageError) and every mined row must carry a score (DataError).
std::vector<SweepPoint> threshold_sweep(
    const std::vector<synthworld::PairRow>& mined, const std::vector<double>& thresholds,
    double calibrated_threshold,
    const std::function<double(const std::vector<synthworld::PairRow>&)>& train_and_score);

// (threshold, score, selected, calibrated) rows for external plotting.
void write_sweep_points(const std::filesystem::path& path, const std::vector<SweepPoint>& points);

}  // namespace ts2::evalkit
