// SPDX-License-Identifier: Apache-2.0
#include "ts2/synthworld/corpora.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"
#include "ts2/common/rng.hpp"

namespace ts2::synthworld {

namespace {

constexpr char k_feature_magic[4] = {'T', 'S', 'F', 'T'};
constexpr std::uint32_t k_feature_version = 1;

std::string format_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", score);
    return buf;
}

std::string join_ints(const std::vector<int>& xs) {
    if (xs.empty()) {
        return "-";
    }
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += std::to_string(xs[i]);
    }
    return out;
}

std::vector<int> parse_ints(const std::string& field, const char* what) {
    std::vector<int> out;
    if (field == "-") {
        return out;
    }
    std::istringstream in(field);
    std::string tok;
    while (in >> tok) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw DataError(std::string("manifest: bad integer in ") + what + ": '" + tok + "'");
        }
    }
    return out;
}

// Draws a sentence whose word boundaries stay distinct in the given language;
// when `check_translation` is set the translated word sequence must be
// boundary-clean in the target language as well, so both sides of a parallel
// pair are exact concatenations of their word signatures.
std::vector<int> sample_sentence(Rng& rng, const World& world, int lang_index,
                                 bool check_translation) {
    const Language& lang = world.langs[static_cast<std::size_t>(lang_index)];
    const WorldConfig& cfg = world.config;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const int len = rng.uniform_int(cfg.sentence_len_min, cfg.sentence_len_max);
        std::vector<int> words(static_cast<std::size_t>(len));
        for (int i = 0; i < len; ++i) {
            words[static_cast<std::size_t>(i)] =
                static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.vocab_size)));
        }
        auto clean = [](const Language& l, const std::vector<int>& ws) {
            for (std::size_t i = 1; i < ws.size(); ++i) {
                if (l.words[static_cast<std::size_t>(ws[i - 1])].back() ==
                    l.words[static_cast<std::size_t>(ws[i])].front()) {
                    return false;
                }
            }
            return true;
        };
        if (!clean(lang, words)) {
            continue;
        }
        if (check_translation && !clean(world.target(), translate_words(world, words))) {
            continue;
        }
        return words;
    }
    throw DataError("sample_sentence: could not draw a boundary-clean sentence");
}

}  // namespace

const UtteranceRow& Corpora::utterance(const std::string& id) const {
    const auto it = by_id.find(id);
    if (it == by_id.end()) {
        throw DataError("corpora: unknown utterance id '" + id + "'");
    }
    return utterances[it->second];
}

void Corpora::rebuild_index() {
    by_id.clear();
    for (std::size_t i = 0; i < utterances.size(); ++i) {
        if (!by_id.emplace(utterances[i].id, i).second) {
            throw DataError("corpora: duplicate utterance id '" + utterances[i].id + "'");
        }
    }
}

void write_features(const std::filesystem::path& path, const numcore::Tensor& features) {
    if (features.ndim() != 2) {
        throw UsageError("write_features: expected a [T, D] tensor");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("write_features: cannot open '" + path.string() + "'");
    }
    out.write(k_feature_magic, 4);
    io::write_u32(out, k_feature_version);
    io::write_u32(out, static_cast<std::uint32_t>(features.rows()));
    io::write_u32(out, static_cast<std::uint32_t>(features.cols()));
    io::write_f32_array(out, features.data(), features.numel());
    if (!out) {
        throw IoError("write_features: write failed for '" + path.string() + "'");
    }
}

numcore::Tensor read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("read_features: cannot open '" + path.string() + "'");
    }
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(k_feature_magic, 4)) {
        throw IoError("read_features: bad magic in '" + path.string() + "'");
    }
    const std::uint32_t version = io::read_u32(in);
    if (version != k_feature_version) {
        throw IoError("read_features: unsupported version " + std::to_string(version));
    }
    const std::uint32_t t = io::read_u32(in);
    const std::uint32_t d = io::read_u32(in);
    numcore::Tensor out({static_cast<int>(t), static_cast<int>(d)});
    io::read_f32_array(in, out.data(), out.numel());
    if (!in) {
        throw IoError("read_features: truncated file '" + path.string() + "'");
    }
    return out;
}

void write_utterance_manifest(const std::filesystem::path& path,
                              const std::vector<UtteranceRow>& rows) {
    std::string out = "id\tsplit\tlanguage\tspeaker\tfeatures\tunits\tprovenance\tscore\twords\n";
    for (const auto& r : rows) {
        out += r.id + '\t' + r.split + '\t' + r.language + '\t' + std::to_string(r.speaker) +
               '\t' + r.feature_path + '\t' + join_ints(r.content) + '\t' + r.provenance + '\t' +
               (r.has_score ? format_score(r.score) : "-") + '\t' + join_ints(r.words) + '\n';
    }
    io::write_text_file(path, out);
}

std::vector<UtteranceRow> read_utterance_manifest(const std::filesystem::path& path) {
    const std::string text = io::read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<UtteranceRow> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (first) {
            first = false;
            continue;  // header
        }
        const std::vector<std::string> f = io::split(line, '\t');
        if (f.size() != 9) {
            throw DataError("utterance manifest: expected 9 columns, got " +
                            std::to_string(f.size()));
        }
        UtteranceRow r;
        r.id = f[0];
        r.split = f[1];
        r.language = f[2];
        r.speaker = std::stoi(f[3]);
        r.feature_path = f[4];
        r.content = parse_ints(f[5], "units");
        r.provenance = f[6];
        if (f[7] != "-") {
            r.score = std::stod(f[7]);
            r.has_score = true;
        }
        r.words = parse_ints(f[8], "words");
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_pair_manifest(const std::filesystem::path& path, const std::vector<PairRow>& rows) {
    std::string out = "id\tsplit\tsource\ttarget\tprovenance\tscore\n";
    for (const auto& r : rows) {
        out += r.id + '\t' + r.split + '\t' + r.source_id + '\t' + r.target_id + '\t' +
               r.provenance + '\t' + (r.has_score ? format_score(r.score) : "-") + '\n';
    }
    io::write_text_file(path, out);
}

std::vector<PairRow> read_pair_manifest(const std::filesystem::path& path) {
    const std::string text = io::read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::vector<PairRow> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (first) {
            first = false;
            continue;
        }
        const std::vector<std::string> f = io::split(line, '\t');
        if (f.size() != 6) {
            throw DataError("pair manifest: expected 6 columns, got " + std::to_string(f.size()));
        }
        PairRow r;
        r.id = f[0];
        r.split = f[1];
        r.source_id = f[2];
        r.target_id = f[3];
        r.provenance = f[4];
        if (f[5] != "-") {
            r.score = std::stod(f[5]);
            r.has_score = true;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

struct Builder {
    const World& world;
    const CorporaConfig& cfg;
    std::filesystem::path dir;
    Corpora out;
    Rng rng;
    int next_utt = 0;
    int next_pair = 0;

    Builder(const World& w, const CorporaConfig& c, const std::filesystem::path& d)
        : world(w), cfg(c), dir(d), rng(derive_seed(c.seed, "corpora")) {}

    int pick_speaker(int lang_index) {
        (void)lang_index;
        return static_cast<int>(
            rng.below(static_cast<std::uint64_t>(world.config.speakers_per_lang)));
    }

    // Renders and records one utterance; returns its id.
    std::string add_utterance(const std::string& split, int lang_index, int speaker,
                              const std::vector<int>& words, const std::string& provenance) {
        const Language& lang = world.langs[static_cast<std::size_t>(lang_index)];
        UtteranceRow r;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "u%06d", next_utt);
        const std::uint64_t render_seed = derive_seed(cfg.seed, "render",
                                                      static_cast<std::uint64_t>(next_utt));
        ++next_utt;
        r.id = buf;
        r.split = split;
        r.language = lang.name;
        r.speaker = speaker;
        r.feature_path = std::string("features/") + r.id + ".feat";
        r.words = words;
        r.content = sentence_units(lang, words);
        r.provenance = provenance;
        const numcore::Tensor feats =
            render(r.content, lang.speakers[static_cast<std::size_t>(speaker)], lang, render_seed);
        write_features(dir / r.feature_path, feats);
        out.utterances.push_back(std::move(r));
        return out.utterances.back().id;
    }

    void add_pair(const std::string& split, const std::string& src_id, const std::string& tgt_id,
                  const std::string& provenance, double score, bool has_score) {
        PairRow p;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "p%06d", next_pair);
        ++next_pair;
        p.id = buf;
        p.split = split;
        p.source_id = src_id;
        p.target_id = tgt_id;
        p.provenance = provenance;
        p.score = score;
        p.has_score = has_score;
        out.pairs.push_back(std::move(p));
    }

    void parallel_block(const std::string& split, int count, const std::string& provenance) {
        for (int i = 0; i < count; ++i) {
            const std::vector<int> src_words = sample_sentence(rng, world, 0, true);
            const std::vector<int> tgt_words = translate_words(world, src_words);
            const std::string src_id =
                add_utterance(split, 0, pick_speaker(0), src_words, provenance);
            const std::string tgt_id =
                add_utterance(split, 1, pick_speaker(1), tgt_words, provenance);
            add_pair(split, src_id, tgt_id, provenance, 0.0, false);
        }
    }

    void mono_block(const std::string& split, int count, const std::string& provenance) {
        for (int i = 0; i < count; ++i) {
            const std::vector<int> words = sample_sentence(rng, world, 1, false);
            add_utterance(split, 1, pick_speaker(1), words, provenance);
        }
    }

    void uer_block() {
        for (int i = 0; i < cfg.uer_pairs; ++i) {
            const std::vector<int> words = sample_sentence(rng, world, 1, false);
            const int spk_a = pick_speaker(1);
            int spk_b = spk_a;
            while (spk_b == spk_a) {
                spk_b = pick_speaker(1);
            }
            const std::string a = add_utterance("uer", 1, spk_a, words, "uer");
            const std::string b = add_utterance("uer", 1, spk_b, words, "uer");
            add_pair("uer", a, b, "uer", 0.0, false);
        }
    }

    void mined_block() {
        for (int i = 0; i < cfg.mined_pairs; ++i) {
            const std::vector<int> src_words = sample_sentence(rng, world, 0, true);
            const bool misaligned = rng.bernoulli(cfg.mined_misaligned_fraction);
            std::vector<int> tgt_words;
            if (misaligned) {
                std::vector<int> decoy = sample_sentence(rng, world, 0, true);
                while (decoy == src_words) {
                    decoy = sample_sentence(rng, world, 0, true);
                }
                tgt_words = translate_words(world, decoy);
            } else {
                tgt_words = translate_words(world, src_words);
            }
            const double score =
                rng.gauss(misaligned ? cfg.mined_misaligned_mean : cfg.mined_aligned_mean,
                          cfg.mined_score_sigma);
            const std::string prov = misaligned ? "mined-misaligned" : "mined-aligned";
            const std::string src_id = add_utterance("mined", 0, pick_speaker(0), src_words, prov);
            const std::string tgt_id = add_utterance("mined", 1, pick_speaker(1), tgt_words, prov);
            add_pair("mined", src_id, tgt_id, prov, score, true);
        }
    }
};

}  // namespace

Corpora make_corpora(const World& world, const CorporaConfig& cfg,
                     const std::filesystem::path& dir) {
    if (cfg.norm_tiers.empty()) {
        throw ConfigError("make_corpora: norm_tiers must not be empty");
    }
    for (std::size_t i = 1; i < cfg.norm_tiers.size(); ++i) {
        if (cfg.norm_tiers[i] < cfg.norm_tiers[i - 1]) {
            throw ConfigError("make_corpora: norm_tiers must be non-decreasing");
        }
    }
    std::filesystem::create_directories(dir / "features");

    Builder b(world, cfg, dir);
    b.parallel_block("s2st-train", cfg.s2st_train_pairs, "supervised");
    b.parallel_block("s2st-dev", cfg.s2st_dev_pairs, "supervised");
    b.parallel_block("s2st-test", cfg.s2st_test_pairs, "supervised");
    b.mono_block("norm-train", cfg.norm_tiers.back(), "norm");
    b.mono_block("norm-dev", cfg.norm_dev_utts, "norm");
    b.mono_block("pretrain", cfg.pretrain_utts, "pretrain");
    b.uer_block();
    b.mined_block();

    b.out.rebuild_index();
    write_utterance_manifest(dir / "utterances.tsv", b.out.utterances);
    write_pair_manifest(dir / "pairs.tsv", b.out.pairs);
    return std::move(b.out);
}

Corpora load_corpora(const std::filesystem::path& dir) {
    Corpora c;
    c.utterances = read_utterance_manifest(dir / "utterances.tsv");
    c.pairs = read_pair_manifest(dir / "pairs.tsv");
    c.rebuild_index();
    return c;
}

nlohmann::json CorporaConfig::to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"s2st_train_pairs", s2st_train_pairs},
                          {"s2st_dev_pairs", s2st_dev_pairs},
                          {"s2st_test_pairs", s2st_test_pairs},
                          {"norm_tiers", norm_tiers},
                          {"norm_dev_utts", norm_dev_utts},
                          {"pretrain_utts", pretrain_utts},
                          {"uer_pairs", uer_pairs},
                          {"mined_pairs", mined_pairs},
                          {"mined_misaligned_fraction", mined_misaligned_fraction},
                          {"mined_aligned_mean", mined_aligned_mean},
                          {"mined_misaligned_mean", mined_misaligned_mean},
                          {"mined_score_sigma", mined_score_sigma}};
}

CorporaConfig CorporaConfig::from_json(const nlohmann::json& j) {
    CorporaConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.s2st_train_pairs = j.at("s2st_train_pairs").get<int>();
    c.s2st_dev_pairs = j.at("s2st_dev_pairs").get<int>();
    c.s2st_test_pairs = j.at("s2st_test_pairs").get<int>();
    c.norm_tiers = j.at("norm_tiers").get<std::vector<int>>();
    c.norm_dev_utts = j.at("norm_dev_utts").get<int>();
    c.pretrain_utts = j.at("pretrain_utts").get<int>();
    c.uer_pairs = j.at("uer_pairs").get<int>();
    c.mined_pairs = j.at("mined_pairs").get<int>();
    c.mined_misaligned_fraction = j.at("mined_misaligned_fraction").get<double>();
    c.mined_aligned_mean = j.at("mined_aligned_mean").get<double>();
    c.mined_misaligned_mean = j.at("mined_misaligned_mean").get<double>();
    c.mined_score_sigma = j.at("mined_score_sigma").get<double>();
    return c;
}

}  // namespace ts2::synthworld
