// SPDX-License-Identifier: Apache-2.0

#include "ts2/units/units.hpp"

#include <fstream>
#include <sstream>

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"

namespace ts2::units {

Reduced reduce(const UnitSeq& u) {
    Reduced out;
    for (int tok : u) {
        if (!out.units.empty() && out.units.back() == tok) {
            ++out.durations.back();
        } else {
            out.units.push_back(tok);
            out.durations.push_back(1);
        }
    }
    return out;
}

UnitSeq expand(const UnitSeq& reduced, const DurationSeq& durations) {
    if (reduced.size() != durations.size())
        throw UsageError("expand: " + std::to_string(reduced.size()) + " units but " +
                         std::to_string(durations.size()) + " durations");
    UnitSeq out;
    for (std::size_t i = 0; i < reduced.size(); ++i) {
        if (durations[i] < 1)
            throw UsageError("expand: non-positive duration at position " + std::to_string(i));
        out.insert(out.end(), static_cast<std::size_t>(durations[i]), reduced[i]);
    }
    return out;
}

EditCounts edit_distance(const UnitSeq& a, const UnitSeq& b) {
    const int n = static_cast<int>(a.size());
    const int m = static_cast<int>(b.size());
    // cost[i][j] = distance between a[0..i) and b[0..j)
    std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1));
    for (int i = 0; i <= n; ++i) cost[i][0] = i;
    for (int j = 0; j <= m; ++j) cost[0][j] = j;
    for (int i = 1; i <= n; ++i) {
        for (int j = 1; j <= m; ++j) {
            const int diag = cost[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            const int del = cost[i - 1][j] + 1;
            const int ins = cost[i][j - 1] + 1;
            cost[i][j] = std::min({diag, del, ins});
        }
    }

    EditCounts out;
    out.distance = cost[n][m];
    // Backtrace one optimal alignment; on ties prefer substitution, then
    // deletion, then insertion.
    int i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 &&
            cost[i][j] == cost[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)) {
            if (a[i - 1] != b[j - 1]) ++out.substitutions;
            --i;
            --j;
        } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
            ++out.deletions;
            --i;
        } else {
            ++out.insertions;
            --j;
        }
    }
    return out;
}

double uer(const UnitSeq& hyp, const UnitSeq& ref) {
    if (ref.empty()) throw DataError("uer: empty reference sequence");
    return 100.0 * edit_distance(hyp, ref).distance / static_cast<double>(ref.size());
}

void write_units_file(const std::filesystem::path& path, const std::vector<UnitSeq>& seqs) {
    std::ostringstream out;
    for (const auto& seq : seqs) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i) out << ' ';
            out << seq[i];
        }
        out << '\n';
    }
    io::write_text_file(path, out.str());
}

std::vector<UnitSeq> read_units_file(const std::filesystem::path& path) {
    std::istringstream in(io::read_text_file(path));
    std::vector<UnitSeq> seqs;
    std::string line;
    while (std::getline(in, line)) {
        UnitSeq seq;
        std::istringstream ls(line);
        long long tok = 0;
        while (ls >> tok) seq.push_back(static_cast<int>(tok));
        if (!ls.eof())
            throw DataError("units file has a non-numeric token: " + path.string());
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

}  // namespace ts2::units
