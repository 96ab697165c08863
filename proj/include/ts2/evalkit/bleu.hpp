// SPDX-License-Identifier: Apache-2.0
//
// Corpus-level BLEU over integer token sequences: clipped modified n-gram
// precisions pooled over the corpus, geometric mean over n = 1..max_n,
// brevity penalty, and add-one smoothing on the precisions for n >= 2. The
// exact scheme is pinned by golden tests.

#pragma once

#include <vector>

namespace ts2::evalkit {

using TokenSeq = std::vector<int>;

// Returns a score in [0, 100]. Throws DataError when the reference corpus is
// empty of tokens and UsageError when hyp/ref counts differ.
double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int max_n = 4);

}  // namespace ts2::evalkit
