// SPDX-License-Identifier: Apache-2.0

#include "ts2/pipeline/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iterator>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ts2/common/error.hpp"
#include "ts2/common/hash.hpp"
#include "ts2/common/io.hpp"
#include "ts2/common/parallel.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/evalkit/eval.hpp"
#include "ts2/normalizer/normalizer.hpp"
#include "ts2/numcore/checkpoint.hpp"
#include "ts2/s2ut/s2ut.hpp"
#include "ts2/synthworld/corpora.hpp"
#include "ts2/synthworld/world.hpp"
#include "ts2/units/kmeans.hpp"

namespace ts2::pipeline {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Stage keys. A stage hash covers the stage name, its parent stage hashes
// and the config fields the stage actually reads, so two configs share an
// artifact directory exactly when the stage would produce identical bytes.

struct StageKey {
    std::string name;
    std::string hash;

    std::string dir_name() const { return name + "-" + hash; }
};

StageKey make_key(const std::string& name, const std::vector<StageKey>& parents,
                  const json& block) {
    std::string payload = name;
    for (const StageKey& p : parents) {
        payload += "|" + p.hash;
    }
    payload += "|" + block.dump();
    return StageKey{name, hash_hex(fnv1a64(payload))};
}

StageKey key_gen_world(const ExperimentConfig& cfg) {
    return make_key("gen-world", {},
                    json{{"world", cfg.world.to_json()}, {"corpora", cfg.corpora.to_json()}});
}

StageKey key_fit_codebook(const ExperimentConfig& cfg) {
    return make_key("fit-codebook", {key_gen_world(cfg)},
                    json{{"seed", cfg.codebook.seed},
                         {"k", cfg.codebook.k},
                         {"pool_utterances", cfg.codebook.pool_utterances}});
}

StageKey key_quantize(const ExperimentConfig& cfg) {
    return make_key("quantize", {key_fit_codebook(cfg)}, json::object());
}

StageKey key_train_normalizer(const ExperimentConfig& cfg) {
    return make_key("train-normalizer", {key_quantize(cfg)}, cfg.to_json()["normalizer"]);
}

StageKey key_normalize(const ExperimentConfig& cfg) {
    return make_key("normalize", {key_train_normalizer(cfg)}, json::object());
}

std::vector<StageKey> s2ut_parents(const ExperimentConfig& cfg) {
    std::vector<StageKey> parents{key_quantize(cfg)};
    if (cfg.s2ut.target_kind == "norm") {
        parents.push_back(key_normalize(cfg));
    }
    return parents;
}

StageKey key_train_s2ut(const ExperimentConfig& cfg) {
    const json doc = cfg.to_json();
    return make_key("train-s2ut", s2ut_parents(cfg),
                    json{{"s2ut", doc["s2ut"]},
                         {"data",
                          {{"supervised_pairs", cfg.data.supervised_pairs},
                           {"use_mined", cfg.data.use_mined},
                           {"mined_threshold", cfg.data.mined_threshold}}}});
}

StageKey key_translate(const ExperimentConfig& cfg) {
    return make_key("translate", {key_train_s2ut(cfg)},
                    json{{"beam", cfg.eval.beam}, {"corpus", cfg.eval.corpus}});
}

StageKey key_evaluate(const ExperimentConfig& cfg) {
    return make_key("evaluate", {key_translate(cfg)}, cfg.to_json()["eval"]);
}

StageKey key_sweep_threshold(const ExperimentConfig& cfg) {
    const json doc = cfg.to_json();
    return make_key("sweep-threshold", s2ut_parents(cfg),
                    json{{"s2ut", doc["s2ut"]}, {"data", doc["data"]}, {"eval", doc["eval"]}});
}

StageKey key_reproduce_table2(const ExperimentConfig& cfg) {
    return make_key("reproduce-table2", {}, cfg.to_json());
}

StageKey key_reproduce_table6(const ExperimentConfig& cfg) {
    const json doc = cfg.to_json();
    return make_key("reproduce-table6", {},
                    json{{"world", doc["world"]},
                         {"corpora", doc["corpora"]},
                         {"codebook", doc["codebook"]},
                         {"normalizer", doc["normalizer"]}});
}

// ---------------------------------------------------------------------------
// Cache protocol. finalize_stage records the resolved config and a manifest
// of content hashes; stage_cached re-verifies every hash, so a corrupted or
// half-written directory is rebuilt instead of trusted.

void finalize_stage(const fs::path& dir, const std::string& stage, const ExperimentConfig& cfg) {
    io::write_text_file(dir / "resolved-config.json", cfg.to_json().dump(2) + "\n");
    std::vector<std::string> rels;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) {
            continue;
        }
        std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel != "manifest.json") {
            rels.push_back(std::move(rel));
        }
    }
    std::sort(rels.begin(), rels.end());
    json files = json::object();
    for (const std::string& rel : rels) {
        files[rel] = hash_hex(hash_file(dir / rel));
    }
    io::write_text_file(dir / "manifest.json",
                        json{{"stage", stage}, {"files", files}}.dump(2) + "\n");
}

template <typename Body>
fs::path run_stage(const RunContext& ctx, const StageKey& key, Body&& body) {
    const fs::path dir = ctx.out_root / key.dir_name();
    if (stage_cached(dir)) {
        return dir;
    }
    fs::remove_all(dir);
    fs::create_directories(dir);
    body(dir, key);
    finalize_stage(dir, key.name, ctx.cfg);
    return dir;
}

fs::path require_stage(const RunContext& ctx, const StageKey& key, const std::string& producer) {
    const fs::path dir = ctx.out_root / key.dir_name();
    if (!stage_cached(dir)) {
        throw MissingArtifactError("missing artifact " + dir.string() + "; run `ts2 " + producer +
                                   "` first");
    }
    return dir;
}

// ----------------------------------------------------------------- loaders

synthworld::World load_world(const fs::path& gen_dir) {
    return synthworld::world_from_json(json::parse(io::read_text_file(gen_dir / "world.json")));
}

struct UnitsTable {
    std::map<std::string, units::UnitSeq> frames;
    std::map<std::string, units::UnitSeq> reduced;
};

UnitsTable read_units_table(const fs::path& path) {
    UnitsTable table;
    for (const std::string& line : io::split(io::read_text_file(path), '\n')) {
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> cols = io::split(line, '\t');
        if (cols.size() != 3) {
            throw DataError("units table " + path.string() + ": expected 3 columns per row");
        }
        table.frames[cols[0]] = parse_units(cols[1]);
        table.reduced[cols[0]] = parse_units(cols[2]);
    }
    return table;
}

std::vector<const synthworld::UtteranceRow*> utterances_in(const synthworld::Corpora& corpora,
                                                           const std::string& split) {
    std::vector<const synthworld::UtteranceRow*> out;
    for (const synthworld::UtteranceRow& u : corpora.utterances) {
        if (u.split == split) {
            out.push_back(&u);
        }
    }
    return out;
}

std::vector<const synthworld::PairRow*> pairs_in(const synthworld::Corpora& corpora,
                                                 const std::string& split) {
    std::vector<const synthworld::PairRow*> out;
    for (const synthworld::PairRow& p : corpora.pairs) {
        if (p.split == split) {
            out.push_back(&p);
        }
    }
    return out;
}

int tier_index(const std::string& tier) {
    if (tier == "10min") {
        return 0;
    }
    if (tier == "1hr") {
        return 1;
    }
    return 2;
}

// ---------------------------------------------------------------------------
// Translation sample assembly shared by train-s2ut and the threshold sweep.

struct SampleSources {
    fs::path corpus_dir;
    const synthworld::Corpora* corpora = nullptr;
    const std::map<std::string, units::UnitSeq>* reduced = nullptr;
    const std::map<std::string, units::UnitSeq>* normalized = nullptr;  // null for orig targets
    const synthworld::World* world = nullptr;
    bool fusion = false;
};

std::vector<s2ut::S2utSample> build_samples(const SampleSources& src,
                                            const std::vector<const synthworld::PairRow*>& pairs,
                                            int* dropped) {
    std::vector<s2ut::S2utSample> out;
    out.reserve(pairs.size());
    for (const synthworld::PairRow* p : pairs) {
        const synthworld::UtteranceRow& srow = src.corpora->utterance(p->source_id);
        const synthworld::UtteranceRow& trow = src.corpora->utterance(p->target_id);
        s2ut::S2utSample s;
        s.target = src.normalized ? src.normalized->at(trow.id) : src.reduced->at(trow.id);
        if (s.target.empty()) {
            if (dropped) {
                ++*dropped;
            }
            continue;
        }
        s.aux_target = src.reduced->at(srow.id);
        s.features = synthworld::read_features(src.corpus_dir / srow.feature_path);
        if (src.fusion) {
            s.speaker = src.world->target().speakers[static_cast<std::size_t>(trow.speaker)].voice;
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<const synthworld::PairRow*> supervised_pairs(const synthworld::Corpora& corpora,
                                                         int cap) {
    std::vector<const synthworld::PairRow*> out = pairs_in(corpora, "s2st-train");
    if (cap > 0 && static_cast<int>(out.size()) > cap) {
        out.resize(static_cast<std::size_t>(cap));
    }
    return out;
}

std::vector<synthworld::UtteranceRow> eval_references(
    const synthworld::Corpora& corpora, const std::vector<const synthworld::PairRow*>& pairs) {
    std::vector<synthworld::UtteranceRow> refs;
    refs.reserve(pairs.size());
    for (const synthworld::PairRow* p : pairs) {
        refs.push_back(corpora.utterance(p->target_id));
    }
    return refs;
}

std::string format_score(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

bool stage_cached(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        return false;
    }
    const json manifest = json::parse(io::read_text_file(manifest_path), nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("files") ||
        !manifest["files"].is_object()) {
        return false;
    }
    for (const auto& [rel, expected] : manifest["files"].items()) {
        const fs::path p = dir / rel;
        if (!fs::exists(p) || hash_hex(hash_file(p)) != expected.get<std::string>()) {
            return false;
        }
    }
    return true;
}

std::string format_units(const units::UnitSeq& u) {
    std::string out;
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (i > 0) {
            out += ' ';
        }
        out += std::to_string(u[i]);
    }
    return out;
}

units::UnitSeq parse_units(const std::string& cell) {
    units::UnitSeq out;
    if (cell.empty()) {
        return out;
    }
    for (const std::string& tok : io::split(cell, ' ')) {
        out.push_back(std::stoi(tok));
    }
    return out;
}

std::map<std::string, units::UnitSeq> read_id_units(const fs::path& path) {
    std::map<std::string, units::UnitSeq> out;
    for (const std::string& line : io::split(io::read_text_file(path), '\n')) {
        if (line.empty()) {
            continue;
        }
        const std::vector<std::string> cols = io::split(line, '\t');
        if (cols.size() != 2) {
            throw DataError("unit map " + path.string() + ": expected 2 columns per row");
        }
        out[cols[0]] = parse_units(cols[1]);
    }
    return out;
}

fs::path run_gen_world(const RunContext& ctx) {
    return run_stage(ctx, key_gen_world(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const synthworld::World world = synthworld::build_world(ctx.cfg.world);
        synthworld::make_corpora(world, ctx.cfg.corpora, dir / "corpus");
        io::write_text_file(dir / "world.json", synthworld::world_to_json(world).dump() + "\n");
    });
}

fs::path run_fit_codebook(const RunContext& ctx) {
    return run_stage(ctx, key_fit_codebook(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");

        const auto fit_language = [&](const synthworld::Language& lang, const std::string& split) {
            std::vector<numcore::Tensor> mats;
            int total_rows = 0;
            for (const synthworld::UtteranceRow& u : corpora.utterances) {
                if (u.split != split || u.language != lang.name) {
                    continue;
                }
                mats.push_back(synthworld::read_features(gen / "corpus" / u.feature_path));
                total_rows += mats.back().extent(0);
                if (static_cast<int>(mats.size()) == ctx.cfg.codebook.pool_utterances) {
                    break;
                }
            }
            numcore::Tensor pool({total_rows, ctx.cfg.world.feature_dim});
            double* dst = pool.data();
            for (const numcore::Tensor& m : mats) {
                std::copy(m.data(), m.data() + m.numel(), dst);
                dst += m.numel();
            }
            const units::Codebook cb = units::kmeans_fit(
                pool, ctx.cfg.codebook.k, derive_seed(ctx.cfg.codebook.seed, lang.name));
            units::write_codebook(dir / (lang.name + ".codebook"), cb);
            return cb;
        };

        fit_language(world.source(), "s2st-train");
        const units::Codebook tgt_cb = fit_language(world.target(), "pretrain");
        // The reference accent must stay injective into the learned codebook
        // or normalization targets would collide; fail here, not mid-training.
        synthworld::inventory_to_learned(world.target(), -1, tgt_cb, true);
    });
}

fs::path run_quantize(const RunContext& ctx) {
    return run_stage(ctx, key_quantize(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path fit = require_stage(ctx, key_fit_codebook(ctx.cfg), "fit-codebook");
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const units::Codebook src_cb = units::read_codebook(fit / "src.codebook");
        const units::Codebook tgt_cb = units::read_codebook(fit / "tgt.codebook");

        const int n = static_cast<int>(corpora.utterances.size());
        std::vector<std::string> lines(static_cast<std::size_t>(n));
        parallel_for(n, ctx.workers, [&](int i) {
            const synthworld::UtteranceRow& u = corpora.utterances[static_cast<std::size_t>(i)];
            const units::Codebook& cb = u.language == "src" ? src_cb : tgt_cb;
            const units::UnitSeq frames =
                units::quantize(synthworld::read_features(gen / "corpus" / u.feature_path), cb);
            lines[static_cast<std::size_t>(i)] = u.id + "\t" + format_units(frames) + "\t" +
                                                 format_units(units::reduce(frames).units) + "\n";
        });
        std::string units_doc;
        for (const std::string& line : lines) {
            units_doc += line;
        }
        io::write_text_file(dir / "units.tsv", units_doc);

        const std::vector<int> to_learned =
            synthworld::inventory_to_learned(world.target(), -1, tgt_cb, true);
        std::string targets_doc;
        for (const synthworld::UtteranceRow& u : corpora.utterances) {
            if (u.language != "tgt") {
                continue;
            }
            units::UnitSeq mapped;
            mapped.reserve(u.content.size());
            for (int unit : u.content) {
                mapped.push_back(to_learned[static_cast<std::size_t>(unit)]);
            }
            targets_doc += u.id + "\t" + format_units(units::reduce(mapped).units) + "\n";
        }
        io::write_text_file(dir / "targets.tsv", targets_doc);
    });
}

fs::path run_train_normalizer(const RunContext& ctx) {
    return run_stage(ctx, key_train_normalizer(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path quant = require_stage(ctx, key_quantize(ctx.cfg), "quantize");
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const UnitsTable table = read_units_table(quant / "units.tsv");
        const std::map<std::string, units::UnitSeq> targets = read_id_units(quant / "targets.tsv");

        const auto sample_of = [&](const synthworld::UtteranceRow& u, bool with_target) {
            normalizer::NormSample s;
            s.features = synthworld::read_features(gen / "corpus" / u.feature_path);
            s.frame_units = table.frames.at(u.id);
            if (with_target) {
                s.target = targets.at(u.id);
            }
            return s;
        };

        const int count = ctx.cfg.corpora.norm_tiers[static_cast<std::size_t>(
            tier_index(ctx.cfg.normalizer.tier))];
        std::vector<normalizer::NormSample> train;
        for (const synthworld::UtteranceRow* u : utterances_in(corpora, "norm-train")) {
            if (static_cast<int>(train.size()) == count) {
                break;
            }
            train.push_back(sample_of(*u, true));
        }
        std::vector<normalizer::NormSample> dev;
        for (const synthworld::UtteranceRow* u : utterances_in(corpora, "norm-dev")) {
            dev.push_back(sample_of(*u, true));
        }
        std::vector<normalizer::NormSample> pool;
        for (const synthworld::UtteranceRow* u : utterances_in(corpora, "pretrain")) {
            pool.push_back(sample_of(*u, false));
        }

        normalizer::NormalizerModel model(ctx.cfg.normalizer.model);
        const normalizer::PretrainResult pre = normalizer::pretrain(model, pool, dev);
        const normalizer::FinetuneResult fin = normalizer::finetune(model, train, dev);
        numcore::save_checkpoint((dir / "checkpoint.ckpt").string(), model.store().state_dict());

        json curve = json::array();
        for (const auto& [update, uer] : fin.dev_curve) {
            curve.push_back(json::array({update, uer}));
        }
        const json metrics{{"tier", ctx.cfg.normalizer.tier},
                           {"train_utterances", static_cast<int>(train.size())},
                           {"pretrain_final_loss", pre.final_loss},
                           {"pretrain_dev_masked_accuracy", pre.dev_masked_accuracy},
                           {"best_dev_uer", fin.best_dev_uer},
                           {"best_update", fin.best_update},
                           {"infeasible_skipped", fin.infeasible_skipped},
                           {"dev_curve", curve}};
        io::write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
    });
}

fs::path run_normalize(const RunContext& ctx) {
    return run_stage(ctx, key_normalize(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path trained =
            require_stage(ctx, key_train_normalizer(ctx.cfg), "train-normalizer");
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");

        normalizer::NormalizerModel model(ctx.cfg.normalizer.model);
        model.store().load_state_dict(
            numcore::load_checkpoint((trained / "checkpoint.ckpt").string()));

        std::vector<const synthworld::UtteranceRow*> rows;
        for (const synthworld::UtteranceRow& u : corpora.utterances) {
            if (u.language == "tgt") {
                rows.push_back(&u);
            }
        }
        std::vector<std::string> lines(rows.size());
        parallel_for(static_cast<int>(rows.size()), ctx.workers, [&](int i) {
            const units::UnitSeq norm = model.normalize(
                synthworld::read_features(gen / "corpus" / rows[static_cast<std::size_t>(i)]->feature_path));
            lines[static_cast<std::size_t>(i)] =
                rows[static_cast<std::size_t>(i)]->id + "\t" + format_units(norm) + "\n";
        });
        std::string doc;
        for (const std::string& line : lines) {
            doc += line;
        }
        io::write_text_file(dir / "normalized.tsv", doc);
    });
}

fs::path run_train_s2ut(const RunContext& ctx) {
    return run_stage(ctx, key_train_s2ut(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const bool norm_kind = ctx.cfg.s2ut.target_kind == "norm";
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path quant = require_stage(ctx, key_quantize(ctx.cfg), "quantize");
        std::map<std::string, units::UnitSeq> normalized;
        if (norm_kind) {
            const fs::path normd = require_stage(ctx, key_normalize(ctx.cfg), "normalize");
            normalized = read_id_units(normd / "normalized.tsv");
        }
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const UnitsTable table = read_units_table(quant / "units.tsv");

        const SampleSources src{gen / "corpus", &corpora,      &table.reduced,
                                norm_kind ? &normalized : nullptr, &world,
                                ctx.cfg.s2ut.model.speaker_fusion};

        std::vector<const synthworld::PairRow*> train_pairs =
            supervised_pairs(corpora, ctx.cfg.data.supervised_pairs);
        int mined_used = 0;
        if (ctx.cfg.data.use_mined) {
            for (const synthworld::PairRow* p : pairs_in(corpora, "mined")) {
                if (p->score >= ctx.cfg.data.mined_threshold) {
                    train_pairs.push_back(p);
                    ++mined_used;
                }
            }
        }

        int dropped = 0;
        int dev_dropped = 0;
        const std::vector<s2ut::S2utSample> train = build_samples(src, train_pairs, &dropped);
        const std::vector<s2ut::S2utSample> dev =
            build_samples(src, pairs_in(corpora, "s2st-dev"), &dev_dropped);

        s2ut::S2utModel model(ctx.cfg.s2ut.model);
        const s2ut::TrainResult res = s2ut::train_s2ut(model, train, dev);
        numcore::save_checkpoint((dir / "checkpoint.ckpt").string(), model.store().state_dict());

        json curve = json::array();
        for (const auto& [update, bleu] : res.bleu_curve) {
            curve.push_back(json::array({update, bleu}));
        }
        const json metrics{{"target_kind", ctx.cfg.s2ut.target_kind},
                           {"train_samples", static_cast<int>(train.size())},
                           {"mined_pairs_used", mined_used},
                           {"dropped_empty_targets", dropped},
                           {"dev_samples", static_cast<int>(dev.size())},
                           {"dev_dropped_empty_targets", dev_dropped},
                           {"best_dev_bleu", res.best_dev_bleu},
                           {"best_update", res.best_update},
                           {"bleu_curve", curve}};
        io::write_text_file(dir / "metrics.json", metrics.dump(2) + "\n");
    });
}

fs::path run_translate(const RunContext& ctx) {
    return run_stage(ctx, key_translate(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path trained = require_stage(ctx, key_train_s2ut(ctx.cfg), "train-s2ut");
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");

        s2ut::S2utModel model(ctx.cfg.s2ut.model);
        model.store().load_state_dict(
            numcore::load_checkpoint((trained / "checkpoint.ckpt").string()));

        std::vector<double> speaker;
        if (ctx.cfg.s2ut.model.speaker_fusion) {
            speaker = world.target().speakers[0].voice;
        }
        const std::vector<const synthworld::PairRow*> pairs = pairs_in(corpora, ctx.cfg.eval.corpus);
        std::vector<std::string> lines(pairs.size());
        parallel_for(static_cast<int>(pairs.size()), ctx.workers, [&](int i) {
            const synthworld::PairRow& p = *pairs[static_cast<std::size_t>(i)];
            const s2ut::TranslateResult r = model.translate(
                synthworld::read_features(gen / "corpus" /
                                          corpora.utterance(p.source_id).feature_path),
                speaker, ctx.cfg.eval.beam);
            lines[static_cast<std::size_t>(i)] = p.target_id + "\t" + format_units(r.units) +
                                                 "\t" + (r.truncated ? "1" : "0") + "\t" +
                                                 format_score(r.score) + "\n";
        });
        std::string doc;
        for (const std::string& line : lines) {
            doc += line;
        }
        io::write_text_file(dir / "hyps.tsv", doc);
    });
}

fs::path run_evaluate(const RunContext& ctx) {
    return run_stage(ctx, key_evaluate(ctx.cfg), [&](const fs::path& dir, const StageKey& key) {
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path fit = require_stage(ctx, key_fit_codebook(ctx.cfg), "fit-codebook");
        const fs::path trans = require_stage(ctx, key_translate(ctx.cfg), "translate");
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const units::Codebook tgt_cb = units::read_codebook(fit / "tgt.codebook");

        std::vector<evalkit::SystemHyp> hyps;
        for (const std::string& line : io::split(io::read_text_file(trans / "hyps.tsv"), '\n')) {
            if (line.empty()) {
                continue;
            }
            const std::vector<std::string> cols = io::split(line, '\t');
            if (cols.size() != 4) {
                throw DataError("hypotheses " + (trans / "hyps.tsv").string() +
                                ": expected 4 columns per row");
            }
            hyps.push_back(evalkit::SystemHyp{cols[0], parse_units(cols[1])});
        }
        const std::vector<synthworld::UtteranceRow> refs =
            eval_references(corpora, pairs_in(corpora, ctx.cfg.eval.corpus));

        std::string system = "s2ut-" + ctx.cfg.s2ut.target_kind;
        if (ctx.cfg.s2ut.model.speaker_fusion) {
            system += "+spk";
        }
        const evalkit::EvalRow row = evalkit::evaluate_system(
            system, ctx.cfg.s2ut.target_kind, ctx.cfg.eval.corpus, hyps, refs, world.target(),
            tgt_cb, ctx.cfg.eval.compute_proxy);
        evalkit::EvalReport report;
        report.rows.push_back(row);
        report.config_fingerprint = key.hash;
        report.seeds.push_back(ctx.cfg.seed);
        evalkit::write_report(dir / "report.tsv", report);
    });
}

fs::path run_sweep_threshold(const RunContext& ctx) {
    return run_stage(ctx, key_sweep_threshold(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const bool norm_kind = ctx.cfg.s2ut.target_kind == "norm";
        const fs::path gen = require_stage(ctx, key_gen_world(ctx.cfg), "gen-world");
        const fs::path fit = require_stage(ctx, key_fit_codebook(ctx.cfg), "fit-codebook");
        const fs::path quant = require_stage(ctx, key_quantize(ctx.cfg), "quantize");
        std::map<std::string, units::UnitSeq> normalized;
        if (norm_kind) {
            const fs::path normd = require_stage(ctx, key_normalize(ctx.cfg), "normalize");
            normalized = read_id_units(normd / "normalized.tsv");
        }
        const synthworld::World world = load_world(gen);
        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const UnitsTable table = read_units_table(quant / "units.tsv");
        const units::Codebook tgt_cb = units::read_codebook(fit / "tgt.codebook");

        const SampleSources src{gen / "corpus", &corpora,      &table.reduced,
                                norm_kind ? &normalized : nullptr, &world,
                                ctx.cfg.s2ut.model.speaker_fusion};

        int dropped = 0;
        const std::vector<s2ut::S2utSample> sup_samples =
            build_samples(src, supervised_pairs(corpora, ctx.cfg.data.supervised_pairs), &dropped);
        const std::vector<s2ut::S2utSample> dev =
            build_samples(src, pairs_in(corpora, "s2st-dev"), &dropped);
        const std::vector<const synthworld::PairRow*> eval_pairs =
            pairs_in(corpora, ctx.cfg.eval.corpus);
        const std::vector<synthworld::UtteranceRow> refs = eval_references(corpora, eval_pairs);

        std::vector<double> speaker;
        if (ctx.cfg.s2ut.model.speaker_fusion) {
            speaker = world.target().speakers[0].voice;
        }

        std::vector<synthworld::PairRow> mined;
        for (const synthworld::PairRow* p : pairs_in(corpora, "mined")) {
            mined.push_back(*p);
        }
        const std::vector<double>& thresholds = ctx.cfg.data.sweep_thresholds;
        const int n = static_cast<int>(thresholds.size());

        // Trainings are independent, so they run under parallel_for (serial by
        // default); results land in per-threshold slots and the sweep points
        // are assembled afterwards in threshold order.
        std::vector<std::vector<const synthworld::PairRow*>> selections(
            static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            for (const synthworld::PairRow& row : mined) {
                if (row.score >= thresholds[static_cast<std::size_t>(i)]) {
                    selections[static_cast<std::size_t>(i)].push_back(&row);
                }
            }
        }
        std::vector<double> scores(static_cast<std::size_t>(n), 0.0);
        parallel_for(n, ctx.workers, [&](int i) {
            std::vector<s2ut::S2utSample> train = sup_samples;
            int mined_dropped = 0;
            std::vector<s2ut::S2utSample> extra =
                build_samples(src, selections[static_cast<std::size_t>(i)], &mined_dropped);
            train.insert(train.end(), std::make_move_iterator(extra.begin()),
                         std::make_move_iterator(extra.end()));
            s2ut::S2utModel model(ctx.cfg.s2ut.model);
            s2ut::train_s2ut(model, train, dev);
            std::vector<evalkit::SystemHyp> hyps;
            hyps.reserve(eval_pairs.size());
            for (const synthworld::PairRow* p : eval_pairs) {
                const s2ut::TranslateResult r = model.translate(
                    synthworld::read_features(gen / "corpus" /
                                              corpora.utterance(p->source_id).feature_path),
                    speaker, ctx.cfg.eval.beam);
                hyps.push_back(evalkit::SystemHyp{p->target_id, r.units});
            }
            scores[static_cast<std::size_t>(i)] =
                evalkit::evaluate_system("sweep", ctx.cfg.s2ut.target_kind, ctx.cfg.eval.corpus,
                                         hyps, refs, world.target(), tgt_cb, false)
                    .bleu;
        });

        std::size_t call = 0;
        const std::vector<evalkit::SweepPoint> points = evalkit::threshold_sweep(
            mined, thresholds, ctx.cfg.data.mined_threshold,
            [&](const std::vector<synthworld::PairRow>&) { return scores[call++]; });
        evalkit::write_sweep_points(dir / "sweep.tsv", points);
    });
}

fs::path run_reproduce_table2(const RunContext& ctx) {
    return run_stage(ctx, key_reproduce_table2(ctx.cfg), [&](const fs::path& dir,
                                                            const StageKey& key) {
        run_gen_world(ctx);
        run_fit_codebook(ctx);
        run_quantize(ctx);

        std::vector<evalkit::EvalRow> rows;
        const auto add_system = [&](const std::string& label, const std::string& kind,
                                    bool fusion, const std::string& tier) {
            RunContext variant = ctx;
            variant.cfg.s2ut.target_kind = kind;
            variant.cfg.s2ut.model.speaker_fusion = fusion;
            if (!tier.empty()) {
                variant.cfg.normalizer.tier = tier;
            }
            if (kind == "norm") {
                run_train_normalizer(variant);
                run_normalize(variant);
            }
            run_train_s2ut(variant);
            run_translate(variant);
            const fs::path evaluated = run_evaluate(variant);
            evalkit::EvalReport report = evalkit::read_report(evaluated / "report.tsv");
            evalkit::EvalRow row = report.rows.at(0);
            row.system = label;
            rows.push_back(row);
        };

        add_system("orig", "orig", false, "");
        add_system("orig+speaker", "orig", true, "");
        add_system("norm-10min", "norm", false, "10min");
        add_system("norm-1hr", "norm", false, "1hr");
        add_system("norm-10hr", "norm", false, "10hr");

        evalkit::EvalReport table;
        table.rows = rows;
        table.config_fingerprint = key.hash;
        table.seeds.push_back(ctx.cfg.seed);
        evalkit::write_report(dir / "table2.tsv", table);
    });
}

fs::path run_reproduce_table6(const RunContext& ctx) {
    return run_stage(ctx, key_reproduce_table6(ctx.cfg), [&](const fs::path& dir, const StageKey&) {
        const fs::path gen = run_gen_world(ctx);
        run_fit_codebook(ctx);
        const fs::path quant = run_quantize(ctx);
        run_train_normalizer(ctx);
        const fs::path normd = run_normalize(ctx);

        const synthworld::Corpora corpora = synthworld::load_corpora(gen / "corpus");
        const UnitsTable table = read_units_table(quant / "units.tsv");
        const std::map<std::string, units::UnitSeq> normalized =
            read_id_units(normd / "normalized.tsv");

        const std::vector<const synthworld::PairRow*> pair_rows = pairs_in(corpora, "uer");
        if (pair_rows.empty()) {
            throw DataError("reproduce-table6: the corpus has no uer pairs");
        }
        const auto mean_pair_uer = [&](const std::map<std::string, units::UnitSeq>& m) {
            double total = 0.0;
            for (const synthworld::PairRow* p : pair_rows) {
                const units::UnitSeq& hyp = m.at(p->source_id);
                const units::UnitSeq& ref = m.at(p->target_id);
                if (ref.empty()) {
                    total += hyp.empty() ? 0.0 : 100.0;
                } else {
                    total += units::uer(hyp, ref);
                }
            }
            return total / static_cast<double>(pair_rows.size());
        };

        const double orig_uer = mean_pair_uer(table.reduced);
        const double norm_uer = mean_pair_uer(normalized);
        const double ratio = orig_uer > 0.0 ? norm_uer / orig_uer : 0.0;

        char buf[128];
        std::string doc = "system\tmean_pair_uer\tpairs\n";
        std::snprintf(buf, sizeof buf, "orig-reduced\t%.4f\t%d\n", orig_uer,
                      static_cast<int>(pair_rows.size()));
        doc += buf;
        std::snprintf(buf, sizeof buf, "normalized\t%.4f\t%d\n", norm_uer,
                      static_cast<int>(pair_rows.size()));
        doc += buf;
        std::snprintf(buf, sizeof buf, "ratio\t%.4f\t-\n", ratio);
        doc += buf;
        io::write_text_file(dir / "table6.tsv", doc);
    });
}

}  // namespace ts2::pipeline
