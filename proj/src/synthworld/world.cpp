// SPDX-License-Identifier: Apache-2.0
#include "ts2/synthworld/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <string>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"

namespace ts2::synthworld {

namespace {

std::vector<double> random_direction(Rng& rng, int dim) {
    std::vector<double> v(dim);
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (int i = 0; i < dim; ++i) {
            v[i] = rng.gauss(0.0, 1.0);
            norm_sq += v[i] * v[i];
        }
    } while (norm_sq < 1e-12);
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) {
        x *= inv;
    }
    return v;
}

numcore::Tensor sample_inventory(Rng& rng, const WorldConfig& cfg) {
    numcore::Tensor points({cfg.inventory_size, cfg.feature_dim});
    const double min_sq = cfg.inventory_min_dist * cfg.inventory_min_dist;
    for (int i = 0; i < cfg.inventory_size; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 10000) {
                throw DataError("sample_inventory: cannot place " +
                                std::to_string(cfg.inventory_size) +
                                " units with min distance " +
                                std::to_string(cfg.inventory_min_dist));
            }
            const std::vector<double> dir = random_direction(rng, cfg.feature_dim);
            bool ok = true;
            for (int j = 0; j < i && ok; ++j) {
                double d_sq = 0.0;
                for (int d = 0; d < cfg.feature_dim; ++d) {
                    const double diff = dir[d] * cfg.inventory_radius - points.at2(j, d);
                    d_sq += diff * diff;
                }
                ok = d_sq >= min_sq;
            }
            if (ok) {
                for (int d = 0; d < cfg.feature_dim; ++d) {
                    points.at2(i, d) = dir[d] * cfg.inventory_radius;
                }
                break;
            }
        }
    }
    return points;
}

units::UnitSeq sample_word(Rng& rng, const WorldConfig& cfg) {
    const int len = rng.uniform_int(cfg.word_len_min, cfg.word_len_max);
    units::UnitSeq w(len);
    for (int i = 0; i < len; ++i) {
        do {
            w[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.inventory_size)));
        } while (i > 0 && w[i] == w[i - 1]);
    }
    return w;
}

// Words whose accent variants collide (edit distance below two against some
// other word in the same variant) are resampled until every variant of the
// lexicon is unambiguous.
void sample_words(Rng& rng, const WorldConfig& cfg, Language& lang) {
    lang.words.resize(cfg.vocab_size);
    for (auto& w : lang.words) {
        w = sample_word(rng, cfg);
    }
    for (int round = 0; round < 500; ++round) {
        std::set<int> bad;
        for (int g = -1; g < cfg.speaker_groups; ++g) {
            std::vector<units::UnitSeq> sigs(cfg.vocab_size);
            for (int w = 0; w < cfg.vocab_size; ++w) {
                sigs[w] = accent_variant(lang, lang.words[w], g);
            }
            for (int a = 0; a < cfg.vocab_size; ++a) {
                for (int b = a + 1; b < cfg.vocab_size; ++b) {
                    if (units::edit_distance(sigs[a], sigs[b]).distance < 2) {
                        bad.insert(b);
                    }
                }
            }
        }
        if (bad.empty()) {
            return;
        }
        for (int w : bad) {
            lang.words[w] = sample_word(rng, cfg);
        }
    }
    throw DataError("sample_words: could not build a collision-free lexicon; "
                    "increase inventory_size or word lengths");
}

std::map<int, int> sample_accent_map(Rng& rng, const WorldConfig& cfg) {
    const int n_mapped =
        static_cast<int>(std::floor(cfg.accent_map_fraction * cfg.inventory_size));
    std::vector<int> ids(cfg.inventory_size);
    for (int i = 0; i < cfg.inventory_size; ++i) {
        ids[i] = i;
    }
    rng.shuffle(ids);
    std::map<int, int> m;
    for (int i = 0; i < n_mapped; ++i) {
        const int from = ids[i];
        int to = from;
        while (to == from) {
            to = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.inventory_size)));
        }
        m[from] = to;
    }
    return m;
}

Language build_language(const WorldConfig& cfg, int lang_index, const std::string& name) {
    Language lang;
    lang.name = name;

    Rng inv_rng(derive_seed(cfg.seed, "inventory", lang_index));
    lang.inventory.centroids = sample_inventory(inv_rng, cfg);

    Rng dur_rng(derive_seed(cfg.seed, "durations", lang_index));
    lang.base_durations.resize(cfg.inventory_size);
    for (int i = 0; i < cfg.inventory_size; ++i) {
        lang.base_durations[i] = dur_rng.uniform_int(cfg.base_duration_min, cfg.base_duration_max);
    }

    Rng group_rng(derive_seed(cfg.seed, "groups", lang_index));
    for (int g = 0; g < cfg.speaker_groups; ++g) {
        std::vector<double> off = random_direction(group_rng, cfg.feature_dim);
        for (double& x : off) {
            x *= cfg.group_offset_scale;
        }
        lang.group_offsets.push_back(off);
        lang.group_accent_maps.push_back(sample_accent_map(group_rng, cfg));
    }

    lang.silence_anchor = random_direction(group_rng, cfg.feature_dim);
    for (double& x : lang.silence_anchor) {
        x *= cfg.silence_radius;
    }
    lang.silence_frames_min = cfg.silence_frames_min;
    lang.silence_frames_max = cfg.silence_frames_max;
    lang.silence_jitter = cfg.silence_jitter;

    Rng word_rng(derive_seed(cfg.seed, "words", lang_index));
    sample_words(word_rng, cfg, lang);

    Rng spk_rng(derive_seed(cfg.seed, "speakers", lang_index));
    for (int s = 0; s < cfg.speakers_per_lang; ++s) {
        SpeakerProfile p;
        p.id = s;
        if (s == 0) {
            p.group = -1;
            p.voice.assign(cfg.feature_dim, 0.0);
        } else {
            p.group = (s - 1) % cfg.speaker_groups;
            p.voice = lang.group_offsets[p.group];
            const std::vector<double> eps = random_direction(spk_rng, cfg.feature_dim);
            for (int d = 0; d < cfg.feature_dim; ++d) {
                p.voice[d] += eps[d] * cfg.speaker_offset_scale;
            }
            p.confusion_prob = cfg.accent_confusion_prob;
            p.duration_jitter = cfg.duration_jitter;
            p.silence_rate = cfg.silence_rate;
            p.noise_sigma = cfg.noise_sigma;
        }
        lang.speakers.push_back(std::move(p));
    }
    return lang;
}

}  // namespace

World build_world(const WorldConfig& cfg) {
    if (cfg.feature_dim < 2 || cfg.inventory_size < 2 || cfg.vocab_size < 2 ||
        cfg.word_len_min < 1 || cfg.word_len_max < cfg.word_len_min ||
        cfg.sentence_len_min < 1 || cfg.sentence_len_max < cfg.sentence_len_min ||
        cfg.speakers_per_lang < 2 || cfg.speaker_groups < 1 ||
        cfg.base_duration_min < 1 || cfg.base_duration_max < cfg.base_duration_min) {
        throw ConfigError("build_world: invalid world configuration");
    }
    World world;
    world.config = cfg;
    world.langs.push_back(build_language(cfg, 0, "src"));
    world.langs.push_back(build_language(cfg, 1, "tgt"));

    world.translation.resize(cfg.vocab_size);
    for (int i = 0; i < cfg.vocab_size; ++i) {
        world.translation[i] = i;
    }
    Rng map_rng(derive_seed(cfg.seed, "translation"));
    map_rng.shuffle(world.translation);
    return world;
}

units::UnitSeq sentence_units(const Language& lang, const std::vector<int>& word_ids) {
    units::UnitSeq out;
    for (int w : word_ids) {
        if (w < 0 || w >= static_cast<int>(lang.words.size())) {
            throw UsageError("sentence_units: word id out of range");
        }
        out.insert(out.end(), lang.words[w].begin(), lang.words[w].end());
    }
    return out;
}

std::vector<int> translate_words(const World& world, const std::vector<int>& src_words) {
    std::vector<int> out;
    out.reserve(src_words.size());
    for (int w : src_words) {
        if (w < 0 || w >= static_cast<int>(world.translation.size())) {
            throw UsageError("translate_words: word id out of range");
        }
        out.push_back(world.translation[w]);
    }
    if (world.config.reorder == "reverse") {
        std::reverse(out.begin(), out.end());
    } else if (world.config.reorder == "rotate") {
        if (out.size() > 1) {
            std::rotate(out.begin(), out.begin() + 1, out.end());
        }
    } else if (world.config.reorder != "none") {
        throw ConfigError("translate_words: unknown reorder rule '" + world.config.reorder + "'");
    }
    return out;
}

units::UnitSeq accent_variant(const Language& lang, const units::UnitSeq& content, int group) {
    units::UnitSeq mapped;
    mapped.reserve(content.size());
    const std::map<int, int>* accent =
        group >= 0 ? &lang.group_accent_maps.at(static_cast<std::size_t>(group)) : nullptr;
    for (int u : content) {
        int tok = u;
        if (accent != nullptr) {
            const auto it = accent->find(u);
            if (it != accent->end()) {
                tok = it->second;
            }
        }
        if (mapped.empty() || mapped.back() != tok) {
            mapped.push_back(tok);
        }
    }
    return mapped;
}

numcore::Tensor render(const units::UnitSeq& content, const SpeakerProfile& spk,
                       const Language& lang, std::uint64_t seed) {
    const int dim = lang.inventory.dim();
    const int inv_size = lang.inventory.size();
    const std::map<int, int>* accent =
        spk.group >= 0 ? &lang.group_accent_maps.at(static_cast<std::size_t>(spk.group)) : nullptr;

    // Every stochastic event draws from its own derived stream, so changing
    // one corruption knob never perturbs the draws behind another.
    std::vector<std::vector<double>> frames;
    auto emit = [&](const double* base, double jitter_sigma) {
        Rng noise_rng(derive_seed(seed, "noise", static_cast<std::uint64_t>(frames.size())));
        std::vector<double> f(dim);
        for (int d = 0; d < dim; ++d) {
            f[d] = base[d];
            if (jitter_sigma > 0.0) {
                f[d] += noise_rng.gauss(0.0, jitter_sigma);
            }
        }
        frames.push_back(std::move(f));
    };

    const int n = static_cast<int>(content.size());
    std::vector<double> base(dim);
    for (int gap = 0; gap <= n; ++gap) {
        if (spk.silence_rate > 0.0) {
            Rng gap_rng(derive_seed(seed, "gap", static_cast<std::uint64_t>(gap)));
            if (gap_rng.bernoulli(spk.silence_rate)) {
                const int run =
                    gap_rng.uniform_int(lang.silence_frames_min, lang.silence_frames_max);
                for (int f = 0; f < run; ++f) {
                    emit(lang.silence_anchor.data(), lang.silence_jitter);
                }
            }
        }
        if (gap == n) {
            break;
        }
        int tok = content[static_cast<std::size_t>(gap)];
        if (tok < 0 || tok >= inv_size) {
            throw UsageError("render: content unit out of inventory range");
        }
        Rng tok_rng(derive_seed(seed, "token", static_cast<std::uint64_t>(gap)));
        if (accent != nullptr) {
            const auto it = accent->find(tok);
            if (it != accent->end() && tok_rng.bernoulli(spk.confusion_prob)) {
                tok = it->second;
            }
        }
        int dur = lang.base_durations[static_cast<std::size_t>(tok)];
        if (spk.duration_jitter > 0.0) {
            Rng dur_rng(derive_seed(seed, "duration", static_cast<std::uint64_t>(gap)));
            const double scale =
                dur_rng.uniform(1.0 - spk.duration_jitter, 1.0 + spk.duration_jitter);
            dur = std::max(2, static_cast<int>(std::lround(dur * scale)));
        }
        for (int d = 0; d < dim; ++d) {
            base[d] = lang.inventory.centroids.at2(tok, d) + spk.voice[d];
        }
        for (int f = 0; f < dur; ++f) {
            emit(base.data(), spk.noise_sigma);
        }
    }

    numcore::Tensor out({static_cast<int>(frames.size()), dim});
    for (std::size_t r = 0; r < frames.size(); ++r) {
        for (int d = 0; d < dim; ++d) {
            out.at2(static_cast<int>(r), d) = frames[r][d];
        }
    }
    return out;
}

units::UnitSeq word_signature(const Language& lang, int word_id, int group,
                              const units::Codebook& learned) {
    if (word_id < 0 || word_id >= static_cast<int>(lang.words.size())) {
        throw UsageError("word_signature: word id out of range");
    }
    const units::UnitSeq variant = accent_variant(lang, lang.words[static_cast<std::size_t>(word_id)], group);
    const int dim = lang.inventory.dim();
    numcore::Tensor frames({static_cast<int>(variant.size()), dim});
    for (std::size_t i = 0; i < variant.size(); ++i) {
        for (int d = 0; d < dim; ++d) {
            double x = lang.inventory.centroids.at2(variant[i], d);
            if (group >= 0) {
                x += lang.group_offsets[static_cast<std::size_t>(group)][static_cast<std::size_t>(d)];
            }
            frames.at2(static_cast<int>(i), d) = x;
        }
    }
    return units::reduce(units::quantize(frames, learned)).units;
}

std::vector<int> inventory_to_learned(const Language& lang, int group,
                                      const units::Codebook& learned,
                                      bool require_injective) {
    const int dim = lang.inventory.dim();
    const int inv_size = lang.inventory.size();
    numcore::Tensor frames({inv_size, dim});
    for (int i = 0; i < inv_size; ++i) {
        for (int d = 0; d < dim; ++d) {
            double x = lang.inventory.centroids.at2(i, d);
            if (group >= 0) {
                x += lang.group_offsets[static_cast<std::size_t>(group)][static_cast<std::size_t>(d)];
            }
            frames.at2(i, d) = x;
        }
    }
    const units::UnitSeq mapped = units::quantize(frames, learned);
    if (require_injective) {
        std::set<int> seen;
        for (int u : mapped) {
            if (!seen.insert(u).second) {
                throw DataError("inventory_to_learned: learned codebook merges distinct inventory "
                                "units of language '" + lang.name + "' (group " +
                                std::to_string(group) + "); increase the codebook size");
            }
        }
    }
    return mapped;
}

nlohmann::json WorldConfig::to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"feature_dim", feature_dim},
                          {"inventory_size", inventory_size},
                          {"vocab_size", vocab_size},
                          {"word_len_min", word_len_min},
                          {"word_len_max", word_len_max},
                          {"sentence_len_min", sentence_len_min},
                          {"sentence_len_max", sentence_len_max},
                          {"speakers_per_lang", speakers_per_lang},
                          {"speaker_groups", speaker_groups},
                          {"inventory_radius", inventory_radius},
                          {"inventory_min_dist", inventory_min_dist},
                          {"group_offset_scale", group_offset_scale},
                          {"speaker_offset_scale", speaker_offset_scale},
                          {"accent_map_fraction", accent_map_fraction},
                          {"accent_confusion_prob", accent_confusion_prob},
                          {"duration_jitter", duration_jitter},
                          {"silence_rate", silence_rate},
                          {"silence_frames_min", silence_frames_min},
                          {"silence_frames_max", silence_frames_max},
                          {"silence_radius", silence_radius},
                          {"silence_jitter", silence_jitter},
                          {"noise_sigma", noise_sigma},
                          {"base_duration_min", base_duration_min},
                          {"base_duration_max", base_duration_max},
                          {"reorder", reorder}};
}

WorldConfig WorldConfig::from_json(const nlohmann::json& j) {
    WorldConfig c;
    c.seed = j.at("seed").get<std::uint64_t>();
    c.feature_dim = j.at("feature_dim").get<int>();
    c.inventory_size = j.at("inventory_size").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.word_len_min = j.at("word_len_min").get<int>();
    c.word_len_max = j.at("word_len_max").get<int>();
    c.sentence_len_min = j.at("sentence_len_min").get<int>();
    c.sentence_len_max = j.at("sentence_len_max").get<int>();
    c.speakers_per_lang = j.at("speakers_per_lang").get<int>();
    c.speaker_groups = j.at("speaker_groups").get<int>();
    c.inventory_radius = j.at("inventory_radius").get<double>();
    c.inventory_min_dist = j.at("inventory_min_dist").get<double>();
    c.group_offset_scale = j.at("group_offset_scale").get<double>();
    c.speaker_offset_scale = j.at("speaker_offset_scale").get<double>();
    c.accent_map_fraction = j.at("accent_map_fraction").get<double>();
    c.accent_confusion_prob = j.at("accent_confusion_prob").get<double>();
    c.duration_jitter = j.at("duration_jitter").get<double>();
    c.silence_rate = j.at("silence_rate").get<double>();
    c.silence_frames_min = j.at("silence_frames_min").get<int>();
    c.silence_frames_max = j.at("silence_frames_max").get<int>();
    c.silence_radius = j.at("silence_radius").get<double>();
    c.silence_jitter = j.at("silence_jitter").get<double>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.base_duration_min = j.at("base_duration_min").get<int>();
    c.base_duration_max = j.at("base_duration_max").get<int>();
    c.reorder = j.at("reorder").get<std::string>();
    return c;
}

namespace {

nlohmann::json tensor_to_json(const numcore::Tensor& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < t.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < t.cols(); ++c) {
            row.push_back(t.at2(r, c));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

numcore::Tensor tensor_from_json(const nlohmann::json& j) {
    const int rows = static_cast<int>(j.size());
    const int cols = rows > 0 ? static_cast<int>(j.at(0).size()) : 0;
    numcore::Tensor t({rows, cols});
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            t.at2(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return t;
}

nlohmann::json language_to_json(const Language& lang) {
    nlohmann::json j;
    j["name"] = lang.name;
    j["inventory"] = tensor_to_json(lang.inventory.centroids);
    j["base_durations"] = lang.base_durations;
    j["words"] = lang.words;
    j["group_offsets"] = lang.group_offsets;
    nlohmann::json maps = nlohmann::json::array();
    for (const auto& m : lang.group_accent_maps) {
        nlohmann::json jm = nlohmann::json::object();
        for (const auto& [k, v] : m) {
            jm[std::to_string(k)] = v;
        }
        maps.push_back(std::move(jm));
    }
    j["group_accent_maps"] = maps;
    j["silence_anchor"] = lang.silence_anchor;
    j["silence_frames_min"] = lang.silence_frames_min;
    j["silence_frames_max"] = lang.silence_frames_max;
    j["silence_jitter"] = lang.silence_jitter;
    nlohmann::json spks = nlohmann::json::array();
    for (const auto& s : lang.speakers) {
        spks.push_back(nlohmann::json{{"id", s.id},
                                      {"group", s.group},
                                      {"voice", s.voice},
                                      {"confusion_prob", s.confusion_prob},
                                      {"duration_jitter", s.duration_jitter},
                                      {"silence_rate", s.silence_rate},
                                      {"noise_sigma", s.noise_sigma}});
    }
    j["speakers"] = spks;
    return j;
}

Language language_from_json(const nlohmann::json& j) {
    Language lang;
    lang.name = j.at("name").get<std::string>();
    lang.inventory.centroids = tensor_from_json(j.at("inventory"));
    lang.base_durations = j.at("base_durations").get<std::vector<int>>();
    lang.words = j.at("words").get<std::vector<units::UnitSeq>>();
    lang.group_offsets = j.at("group_offsets").get<std::vector<std::vector<double>>>();
    for (const auto& jm : j.at("group_accent_maps")) {
        std::map<int, int> m;
        for (auto it = jm.begin(); it != jm.end(); ++it) {
            m[std::stoi(it.key())] = it.value().get<int>();
        }
        lang.group_accent_maps.push_back(std::move(m));
    }
    lang.silence_anchor = j.at("silence_anchor").get<std::vector<double>>();
    lang.silence_frames_min = j.at("silence_frames_min").get<int>();
    lang.silence_frames_max = j.at("silence_frames_max").get<int>();
    lang.silence_jitter = j.at("silence_jitter").get<double>();
    for (const auto& js : j.at("speakers")) {
        SpeakerProfile s;
        s.id = js.at("id").get<int>();
        s.group = js.at("group").get<int>();
        s.voice = js.at("voice").get<std::vector<double>>();
        s.confusion_prob = js.at("confusion_prob").get<double>();
        s.duration_jitter = js.at("duration_jitter").get<double>();
        s.silence_rate = js.at("silence_rate").get<double>();
        s.noise_sigma = js.at("noise_sigma").get<double>();
        lang.speakers.push_back(std::move(s));
    }
    return lang;
}

}  // namespace

nlohmann::json world_to_json(const World& world) {
    nlohmann::json j;
    j["config"] = world.config.to_json();
    j["languages"] = nlohmann::json::array();
    for (const auto& lang : world.langs) {
        j["languages"].push_back(language_to_json(lang));
    }
    j["translation"] = world.translation;
    return j;
}

World world_from_json(const nlohmann::json& j) {
    World world;
    world.config = WorldConfig::from_json(j.at("config"));
    for (const auto& jl : j.at("languages")) {
        world.langs.push_back(language_from_json(jl));
    }
    world.translation = j.at("translation").get<std::vector<int>>();
    return world;
}

}  // namespace ts2::synthworld
