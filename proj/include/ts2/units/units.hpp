// SPDX-License-Identifier: Apache-2.0
//
// Discrete-unit primitives: run-length reduction, edit distance / UER, and
// the text formats for unit and codebook files. A unit sequence is a vector
// of cluster indices; a reduced sequence additionally has no two adjacent
// equal tokens and carries per-token frame counts.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ts2/numcore/tensor.hpp"

namespace ts2::units {

using UnitSeq = std::vector<int>;
using DurationSeq = std::vector<int>;

struct Reduced {
    UnitSeq units;
    DurationSeq durations;
};

// Collapses adjacent duplicates; durations record the run lengths.
Reduced reduce(const UnitSeq& u);

// Exact inverse of reduce. Throws UsageError on length mismatch or a
// non-positive duration.
UnitSeq expand(const UnitSeq& reduced, const DurationSeq& durations);

struct EditCounts {
    int distance = 0;
    int substitutions = 0;
    int deletions = 0;   // tokens of `a` absent from the alignment
    int insertions = 0;  // tokens of `b` added by the alignment
};

// Levenshtein distance with unit costs, transforming `a` into `b`. The
// reported counts follow one optimal alignment; ties during backtrace prefer
// substitution, then deletion, then insertion.
EditCounts edit_distance(const UnitSeq& a, const UnitSeq& b);

// 100 * edit_distance(hyp, ref) / len(ref). Throws DataError on empty ref.
double uer(const UnitSeq& hyp, const UnitSeq& ref);

// Units file: one utterance per line, space-separated decimal tokens.
void write_units_file(const std::filesystem::path& path, const std::vector<UnitSeq>& seqs);
std::vector<UnitSeq> read_units_file(const std::filesystem::path& path);

}  // namespace ts2::units
