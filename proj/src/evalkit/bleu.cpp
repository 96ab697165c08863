// SPDX-License-Identifier: Apache-2.0

#include "ts2/evalkit/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>

#include "ts2/common/error.hpp"

namespace ts2::evalkit {

namespace {

// n-grams encoded as token vectors; counts per distinct n-gram.
std::map<std::vector<int>, int> ngram_counts(const TokenSeq& seq, int n) {
    std::map<std::vector<int>, int> counts;
    if (static_cast<int>(seq.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= seq.size(); ++i) {
        std::vector<int> gram(seq.begin() + static_cast<std::ptrdiff_t>(i),
                              seq.begin() + static_cast<std::ptrdiff_t>(i) + n);
        ++counts[std::move(gram)];
    }
    return counts;
}

}  // namespace

double bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs, int max_n) {
    if (hyps.size() != refs.size())
        throw UsageError("bleu: " + std::to_string(hyps.size()) + " hypotheses vs " +
                         std::to_string(refs.size()) + " references");
    if (max_n < 1) throw UsageError("bleu: max_n must be >= 1");

    std::int64_t hyp_len = 0, ref_len = 0;
    for (const auto& h : hyps) hyp_len += static_cast<std::int64_t>(h.size());
    for (const auto& r : refs) ref_len += static_cast<std::int64_t>(r.size());
    if (ref_len == 0) throw DataError("bleu: reference corpus has no tokens");
    if (hyp_len == 0) return 0.0;

    double log_precision_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        std::int64_t matched = 0, total = 0;
        for (std::size_t i = 0; i < hyps.size(); ++i) {
            auto hyp_grams = ngram_counts(hyps[i], n);
            auto ref_grams = ngram_counts(refs[i], n);
            for (const auto& [gram, count] : hyp_grams) {
                total += count;
                auto it = ref_grams.find(gram);
                if (it != ref_grams.end()) matched += std::min(count, it->second);
            }
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0;
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        log_precision_sum += std::log(p);
    }

    const double brevity =
        hyp_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return 100.0 * brevity * std::exp(log_precision_sum / max_n);
}

}  // namespace ts2::evalkit
