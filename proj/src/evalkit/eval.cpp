// SPDX-License-Identifier: Apache-2.0

#include "ts2/evalkit/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <tuple>

#include "json.hpp"

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"
#include "ts2/duration/duration.hpp"
#include "ts2/evalkit/bleu.hpp"

namespace ts2::evalkit {

namespace {

constexpr double k_word_cost = 0.25;
constexpr double k_edit_cost = 1.25;
constexpr double k_skip_cost = 1.0;

std::string join_ids(const std::set<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) {
            out += ", ";
        }
        out += id;
    }
    return out;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

WordDecoder::WordDecoder(const synthworld::Language& lang, const units::Codebook& learned) {
    // Signature -> lowest word id that produces it, across all accent
    // variants (group -1 is the reference rendering).
    std::map<units::UnitSeq, int> best;
    const int groups = static_cast<int>(lang.group_offsets.size());
    for (int w = 0; w < static_cast<int>(lang.words.size()); ++w) {
        for (int g = -1; g < groups; ++g) {
            const units::UnitSeq sig = synthworld::word_signature(lang, w, g, learned);
            if (sig.empty()) {
                continue;
            }
            auto [it, inserted] = best.emplace(sig, w);
            if (!inserted) {
                it->second = std::min(it->second, w);
            }
        }
    }
    entries_.reserve(best.size());
    for (const auto& [sig, w] : best) {
        entries_.push_back({sig, w});
    }
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
        return a.word != b.word ? a.word < b.word : a.signature < b.signature;
    });
}

std::vector<int> WordDecoder::decode(const units::UnitSeq& u) const {
    const int n = static_cast<int>(u.size());
    struct Back {
        int prev = -1;
        int word = -1;  // -1 for a skip step
        int key_kind = 2;
        int key_word = std::numeric_limits<int>::max();
        int key_len = 0;
    };
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dp(static_cast<std::size_t>(n) + 1, inf);
    std::vector<Back> back(static_cast<std::size_t>(n) + 1);
    dp[0] = 0.0;

    const auto relax = [&](int from, int to, double cost, int word, int kind, int len) {
        const double cand = dp[static_cast<std::size_t>(from)] + cost;
        Back& b = back[static_cast<std::size_t>(to)];
        const auto key = std::make_tuple(kind, word < 0 ? std::numeric_limits<int>::max() : word,
                                         len);
        const auto cur = std::make_tuple(b.key_kind, b.key_word, b.key_len);
        double& slot = dp[static_cast<std::size_t>(to)];
        if (cand < slot || (cand == slot && key < cur)) {
            slot = cand;
            b = Back{from, word, std::get<0>(key), std::get<1>(key), std::get<2>(key)};
        }
    };

    for (int i = 0; i < n; ++i) {
        if (dp[static_cast<std::size_t>(i)] == inf) {
            continue;
        }
        relax(i, i + 1, k_skip_cost, -1, 1, 1);
        for (const Entry& e : entries_) {
            const int sig_len = static_cast<int>(e.signature.size());
            for (int len = sig_len - 1; len <= sig_len + 1; ++len) {
                if (len < 1 || i + len > n) {
                    continue;
                }
                const units::UnitSeq window(u.begin() + i, u.begin() + i + len);
                const int d = units::edit_distance(window, e.signature).distance;
                if (d > 1) {
                    continue;
                }
                relax(i, i + len, k_word_cost + k_edit_cost * d, e.word, 0, len);
            }
        }
    }

    std::vector<int> words;
    for (int at = n; at > 0; at = back[static_cast<std::size_t>(at)].prev) {
        const Back& b = back[static_cast<std::size_t>(at)];
        if (b.word >= 0) {
            words.push_back(b.word);
        }
    }
    std::reverse(words.begin(), words.end());
    return words;
}

EvalRow evaluate_system(const std::string& system_id, const std::string& target_kind,
                        const std::string& corpus_name, const std::vector<SystemHyp>& hyps,
                        const std::vector<synthworld::UtteranceRow>& refs,
                        const synthworld::Language& lang, const units::Codebook& learned,
                        bool compute_proxy) {
    if (refs.empty()) {
        throw DataError("evaluate: empty reference set for corpus " + corpus_name);
    }
    std::map<std::string, const SystemHyp*> hyp_by_id;
    for (const auto& h : hyps) {
        if (!hyp_by_id.emplace(h.id, &h).second) {
            throw DataError("evaluate: duplicate hypothesis id " + h.id);
        }
    }
    std::set<std::string> missing;
    std::set<std::string> ref_ids;
    for (const auto& r : refs) {
        if (!ref_ids.insert(r.id).second) {
            throw DataError("evaluate: duplicate reference id " + r.id);
        }
        if (hyp_by_id.count(r.id) == 0) {
            missing.insert(r.id);
        }
    }
    if (!missing.empty()) {
        throw DataError("evaluate: no hypothesis for reference ids: " + join_ids(missing));
    }
    std::set<std::string> extra;
    for (const auto& h : hyps) {
        if (ref_ids.count(h.id) == 0) {
            extra.insert(h.id);
        }
    }
    if (!extra.empty()) {
        throw DataError("evaluate: hypotheses without references: " + join_ids(extra));
    }

    const std::vector<int> to_learned = synthworld::inventory_to_learned(lang, -1, learned);
    const WordDecoder decoder(lang, learned);

    std::vector<TokenSeq> hyp_words;
    std::vector<TokenSeq> ref_words;
    double uer_sum = 0.0;
    double proxy_sum = 0.0;
    for (const auto& r : refs) {
        const SystemHyp& h = *hyp_by_id.at(r.id);
        hyp_words.push_back(decoder.decode(h.units));
        ref_words.push_back(r.words);
        units::UnitSeq oracle;
        oracle.reserve(r.content.size());
        for (int unit : r.content) {
            oracle.push_back(to_learned[static_cast<std::size_t>(unit)]);
        }
        oracle = units::reduce(oracle).units;
        if (oracle.empty()) {
            throw DataError("evaluate: reference utterance has empty content: " + r.id);
        }
        uer_sum += units::uer(h.units, oracle);
        if (compute_proxy) {
            proxy_sum += duration::resynthesis_proxy(h.units, oracle, lang, learned);
        }
    }

    EvalRow row;
    row.system = system_id;
    row.target_kind = target_kind;
    row.corpus = corpus_name;
    row.bleu = bleu(hyp_words, ref_words);
    row.uer = uer_sum / static_cast<double>(refs.size());
    if (compute_proxy) {
        row.proxy_wer = proxy_sum / static_cast<double>(refs.size());
    }
    row.samples = static_cast<int>(refs.size());
    return row;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
    std::string out = "system\ttarget_kind\tcorpus\tbleu\tuer\tproxy_wer\tsamples\n";
    for (const auto& r : report.rows) {
        out += r.system + '\t' + r.target_kind + '\t' + r.corpus + '\t' + format_double(r.bleu) +
               '\t' + format_double(r.uer) + '\t' +
               (r.proxy_wer ? format_double(*r.proxy_wer) : std::string("-")) + '\t' +
               std::to_string(r.samples) + '\n';
    }
    io::write_text_file(path, out);

    nlohmann::json meta;
    meta["config_fingerprint"] = report.config_fingerprint;
    meta["seeds"] = report.seeds;
    io::write_text_file(path.string() + ".meta.json", meta.dump(2) + "\n");
}

EvalReport read_report(const std::filesystem::path& path) {
    EvalReport report;
    const std::vector<std::string> lines = io::split(io::read_text_file(path), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            continue;
        }
        const std::vector<std::string> cols = io::split(lines[i], '\t');
        if (cols.size() != 7) {
            throw DataError("report " + path.string() + ": expected 7 columns per row");
        }
        EvalRow row;
        row.system = cols[0];
        row.target_kind = cols[1];
        row.corpus = cols[2];
        row.bleu = std::stod(cols[3]);
        row.uer = std::stod(cols[4]);
        if (cols[5] != "-") {
            row.proxy_wer = std::stod(cols[5]);
        }
        row.samples = std::stoi(cols[6]);
        report.rows.push_back(std::move(row));
    }
    const std::filesystem::path meta_path = path.string() + ".meta.json";
    if (std::filesystem::exists(meta_path)) {
        const nlohmann::json meta = nlohmann::json::parse(io::read_text_file(meta_path));
        report.config_fingerprint = meta.value("config_fingerprint", "");
        if (meta.contains("seeds")) {
            for (const auto& s : meta["seeds"]) {
                report.seeds.push_back(s.get<std::uint64_t>());
            }
        }
    }
    return report;
}

std::vector<SweepPoint> threshold_sweep(
    const std::vector<synthworld::PairRow>& mined, const std::vector<double>& thresholds,
    double calibrated_threshold,
    const std::function<double(const std::vector<synthworld::PairRow>&)>& train_and_score) {
    if (thresholds.empty()) {
        throw UsageError("threshold sweep: no thresholds given");
    }
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] <= thresholds[i - 1]) {
            throw UsageError("threshold sweep: thresholds must be strictly ascending");
        }
    }
    for (const auto& p : mined) {
        if (!p.has_score) {
            throw DataError("threshold sweep: mined pair without a score: " + p.id);
        }
    }

    std::vector<SweepPoint> points;
    points.reserve(thresholds.size());
    for (double t : thresholds) {
        std::vector<synthworld::PairRow> selected;
        for (const auto& p : mined) {
            if (p.score >= t) {
                selected.push_back(p);
            }
        }
        SweepPoint point;
        point.threshold = t;
        point.selected = static_cast<int>(selected.size());
        point.calibrated = (t == calibrated_threshold);
        point.score = train_and_score(selected);
        points.push_back(point);
    }
    return points;
}

void write_sweep_points(const std::filesystem::path& path, const std::vector<SweepPoint>& points) {
    std::string out = "threshold\tscore\tselected\tcalibrated\n";
    for (const auto& p : points) {
        out += format_double(p.threshold) + '\t' + format_double(p.score) + '\t' +
               std::to_string(p.selected) + '\t' + (p.calibrated ? "1" : "0") + '\n';
    }
    io::write_text_file(path, out);
}

}  // namespace ts2::evalkit
