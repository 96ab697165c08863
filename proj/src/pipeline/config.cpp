// SPDX-License-Identifier: Apache-2.0

#include "ts2/pipeline/config.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <string>
#include <utility>

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"
#include "ts2/common/rng.hpp"

namespace ts2::pipeline {

namespace {

// Reads one block of the config document, collecting a "path: problem" line
// per violation and tracking which keys were consumed so leftovers can be
// rejected. A null document means "block absent, keep every default".
class FieldReader {
  public:
    FieldReader(const nlohmann::json* doc, std::string prefix, std::vector<std::string>& errors)
        : doc_(doc), prefix_(std::move(prefix)), errors_(errors) {
        if (doc_ != nullptr && !doc_->is_object()) {
            fail("", "expected an object");
            doc_ = nullptr;
        }
    }

    bool integer(const char* key, int& out, long lo,
                 long hi = std::numeric_limits<long>::max()) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_number_integer()) {
            fail(key, "expected an integer");
            return false;
        }
        const long got = v->get<long>();
        if (got < lo || got > hi) {
            fail(key, range_message(lo, hi));
            return false;
        }
        out = static_cast<int>(got);
        return true;
    }

    bool unsigned64(const char* key, std::uint64_t& out) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long>() >= 0)) {
            fail(key, "expected a non-negative integer");
            return false;
        }
        out = v->get<std::uint64_t>();
        return true;
    }

    bool number(const char* key, double& out, double lo, double hi,
                bool lo_open = false, bool hi_open = false) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_number()) {
            fail(key, "expected a number");
            return false;
        }
        const double got = v->get<double>();
        const bool below = lo_open ? got <= lo : got < lo;
        const bool above = hi_open ? got >= hi : got > hi;
        if (below || above) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "must be in %c%g, %g%c", lo_open ? '(' : '[', lo, hi,
                          hi_open ? ')' : ']');
            fail(key, buf);
            return false;
        }
        out = got;
        return true;
    }

    bool boolean(const char* key, bool& out) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_boolean()) {
            fail(key, "expected true or false");
            return false;
        }
        out = v->get<bool>();
        return true;
    }

    bool text(const char* key, std::string& out, const std::vector<std::string>& allowed) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_string()) {
            fail(key, "expected a string");
            return false;
        }
        const std::string got = v->get<std::string>();
        if (!allowed.empty() &&
            std::find(allowed.begin(), allowed.end(), got) == allowed.end()) {
            std::string msg = "must be one of";
            for (const auto& a : allowed) {
                msg += " \"" + a + "\"";
            }
            fail(key, msg);
            return false;
        }
        out = got;
        return true;
    }

    bool int_list(const char* key, std::vector<int>& out) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_array()) {
            fail(key, "expected an array of integers");
            return false;
        }
        std::vector<int> got;
        for (const auto& e : *v) {
            if (!e.is_number_integer()) {
                fail(key, "expected an array of integers");
                return false;
            }
            got.push_back(e.get<int>());
        }
        out = std::move(got);
        return true;
    }

    bool double_list(const char* key, std::vector<double>& out) {
        const nlohmann::json* v = take(key);
        if (v == nullptr) {
            return false;
        }
        if (!v->is_array()) {
            fail(key, "expected an array of numbers");
            return false;
        }
        std::vector<double> got;
        for (const auto& e : *v) {
            if (!e.is_number()) {
                fail(key, "expected an array of numbers");
                return false;
            }
            got.push_back(e.get<double>());
        }
        out = std::move(got);
        return true;
    }

    // Marks a sub-block consumed and hands back its document (or null).
    const nlohmann::json* block(const char* key) { return take(key); }

    // Every key that was never consumed is unknown.
    void finish() {
        if (doc_ == nullptr) {
            return;
        }
        for (const auto& [key, value] : doc_->items()) {
            (void)value;
            if (consumed_.count(key) == 0) {
                fail(key.c_str(), "unknown key");
            }
        }
    }

    void fail(const std::string& key, const std::string& msg) {
        std::string path = prefix_;
        if (!key.empty()) {
            if (!path.empty()) {
                path += '.';
            }
            path += key;
        }
        if (path.empty()) {
            path = "config";
        }
        errors_.push_back(path + ": " + msg);
    }

  private:
    const nlohmann::json* take(const char* key) {
        if (doc_ == nullptr) {
            return nullptr;
        }
        consumed_.insert(key);
        const auto it = doc_->find(key);
        return it == doc_->end() ? nullptr : &*it;
    }

    static std::string range_message(long lo, long hi) {
        if (hi == std::numeric_limits<long>::max()) {
            return "must be >= " + std::to_string(lo);
        }
        return "must be between " + std::to_string(lo) + " and " + std::to_string(hi);
    }

    const nlohmann::json* doc_;
    std::string prefix_;
    std::vector<std::string>& errors_;
    std::set<std::string> consumed_;
};

void parse_world(const nlohmann::json* doc, synthworld::WorldConfig& w, std::uint64_t root_seed,
                 std::vector<std::string>& errors) {
    FieldReader r(doc, "world", errors);
    if (!r.unsigned64("seed", w.seed)) {
        w.seed = derive_seed(root_seed, "world");
    }
    r.integer("feature_dim", w.feature_dim, 2, 256);
    r.integer("inventory_size", w.inventory_size, 2, 4096);
    r.integer("vocab_size", w.vocab_size, 2, 65536);
    r.integer("word_len_min", w.word_len_min, 1);
    r.integer("word_len_max", w.word_len_max, 1);
    r.integer("sentence_len_min", w.sentence_len_min, 1);
    r.integer("sentence_len_max", w.sentence_len_max, 1);
    r.integer("speakers_per_lang", w.speakers_per_lang, 2, 1024);
    r.integer("speaker_groups", w.speaker_groups, 1, 64);
    r.number("inventory_radius", w.inventory_radius, 0.0, 1e6, true);
    r.number("inventory_min_dist", w.inventory_min_dist, 0.0, 1e6, true);
    r.number("group_offset_scale", w.group_offset_scale, 0.0, 1e6);
    r.number("speaker_offset_scale", w.speaker_offset_scale, 0.0, 1e6);
    r.number("accent_map_fraction", w.accent_map_fraction, 0.0, 1.0);
    r.number("accent_confusion_prob", w.accent_confusion_prob, 0.0, 1.0);
    r.number("duration_jitter", w.duration_jitter, 0.0, 1.0);
    r.number("silence_rate", w.silence_rate, 0.0, 1.0);
    r.integer("silence_frames_min", w.silence_frames_min, 1);
    r.integer("silence_frames_max", w.silence_frames_max, 1);
    r.number("silence_radius", w.silence_radius, 0.0, 1e6);
    r.number("silence_jitter", w.silence_jitter, 0.0, 1e6);
    r.number("noise_sigma", w.noise_sigma, 0.0, 1e6);
    r.integer("base_duration_min", w.base_duration_min, 1);
    r.integer("base_duration_max", w.base_duration_max, 1);
    r.text("reorder", w.reorder, {"none", "reverse", "rotate"});
    r.finish();

    if (w.word_len_min > w.word_len_max) {
        r.fail("word_len_min", "must not exceed word_len_max");
    }
    if (w.sentence_len_min > w.sentence_len_max) {
        r.fail("sentence_len_min", "must not exceed sentence_len_max");
    }
    if (w.silence_frames_min > w.silence_frames_max) {
        r.fail("silence_frames_min", "must not exceed silence_frames_max");
    }
    if (w.base_duration_min > w.base_duration_max) {
        r.fail("base_duration_min", "must not exceed base_duration_max");
    }
    if (w.speaker_groups > w.speakers_per_lang - 1) {
        r.fail("speaker_groups", "needs at least one non-reference speaker per group");
    }
}

void parse_corpora(const nlohmann::json* doc, synthworld::CorporaConfig& c,
                   std::uint64_t root_seed, std::vector<std::string>& errors) {
    FieldReader r(doc, "corpora", errors);
    if (!r.unsigned64("seed", c.seed)) {
        c.seed = derive_seed(root_seed, "corpora");
    }
    r.integer("s2st_train_pairs", c.s2st_train_pairs, 1);
    r.integer("s2st_dev_pairs", c.s2st_dev_pairs, 1);
    r.integer("s2st_test_pairs", c.s2st_test_pairs, 1);
    r.int_list("norm_tiers", c.norm_tiers);
    r.integer("norm_dev_utts", c.norm_dev_utts, 1);
    r.integer("pretrain_utts", c.pretrain_utts, 1);
    r.integer("uer_pairs", c.uer_pairs, 1);
    r.integer("mined_pairs", c.mined_pairs, 0);
    r.number("mined_misaligned_fraction", c.mined_misaligned_fraction, 0.0, 1.0);
    r.number("mined_aligned_mean", c.mined_aligned_mean, -1e6, 1e6);
    r.number("mined_misaligned_mean", c.mined_misaligned_mean, -1e6, 1e6);
    r.number("mined_score_sigma", c.mined_score_sigma, 0.0, 1e6, true);
    r.finish();

    if (c.norm_tiers.size() != 3) {
        r.fail("norm_tiers", "expected exactly three tier sizes");
    } else {
        for (std::size_t i = 0; i < c.norm_tiers.size(); ++i) {
            if (c.norm_tiers[i] < 1 ||
                (i > 0 && c.norm_tiers[i] <= c.norm_tiers[i - 1])) {
                r.fail("norm_tiers", "sizes must be positive and strictly ascending");
                break;
            }
        }
    }
}

void parse_codebook(const nlohmann::json* doc, CodebookBlock& b, std::uint64_t root_seed,
                    std::vector<std::string>& errors) {
    FieldReader r(doc, "codebook", errors);
    if (!r.unsigned64("seed", b.seed)) {
        b.seed = derive_seed(root_seed, "codebook");
    }
    r.integer("k", b.k, 2, 65536);
    r.integer("pool_utterances", b.pool_utterances, 1);
    r.finish();
}

void parse_normalizer(const nlohmann::json* doc, NormalizerBlock& b, std::uint64_t root_seed,
                      std::vector<std::string>& errors) {
    FieldReader r(doc, "normalizer", errors);
    normalizer::NormalizerConfig& m = b.model;
    r.text("tier", b.tier, {"10min", "1hr", "10hr"});
    if (!r.unsigned64("seed", m.seed)) {
        m.seed = derive_seed(root_seed, "normalizer");
    }
    r.integer("width", m.width, 1, 4096);
    r.integer("blocks", m.blocks, 1, 64);
    r.integer("heads", m.heads, 1, 64);
    r.integer("ff_hidden", m.ff_hidden, 1, 65536);
    r.integer("conv_kernel", m.conv_kernel, 1, 31);
    r.number("dropout", m.dropout, 0.0, 1.0, false, true);
    r.number("mask_rate", m.mask_rate, 0.0, 1.0, true, true);
    r.integer("mask_span", m.mask_span, 1, 64);
    r.integer("batch", m.batch, 1, 4096);
    r.integer("pretrain_updates", m.pretrain_updates, 0);
    r.number("pretrain_peak_lr", m.pretrain_peak_lr, 0.0, 10.0, true);
    r.integer("pretrain_warmup", m.pretrain_warmup, 0);
    r.number("pretrain_half_life", m.pretrain_half_life, 0.0, 1e9, true);
    r.integer("finetune_updates", m.finetune_updates, 1);
    r.integer("freeze_updates", m.freeze_updates, 0);
    r.integer("warmup", m.warmup, 0);
    r.number("peak_lr", m.peak_lr, 0.0, 10.0, true);
    r.number("half_life", m.half_life, 0.0, 1e9, true);
    r.number("clip_norm", m.clip_norm, 0.0, 1e9, true);
    r.integer("eval_interval", m.eval_interval, 1);
    r.finish();

    if (m.width % m.heads != 0) {
        r.fail("width", "must be divisible by heads");
    }
    if (m.conv_kernel % 2 == 0) {
        r.fail("conv_kernel", "must be odd");
    }
    if (m.freeze_updates > m.finetune_updates) {
        r.fail("freeze_updates", "must not exceed finetune_updates");
    }
}

void parse_s2ut(const nlohmann::json* doc, S2utBlock& b, std::uint64_t root_seed,
                std::vector<std::string>& errors) {
    FieldReader r(doc, "s2ut", errors);
    s2ut::S2utConfig& m = b.model;
    r.text("target_kind", b.target_kind, {"norm", "orig"});
    if (!r.unsigned64("seed", m.seed)) {
        m.seed = derive_seed(root_seed, "s2ut");
    }
    r.integer("width", m.width, 1, 4096);
    r.integer("enc_blocks", m.enc_blocks, 1, 64);
    r.integer("dec_blocks", m.dec_blocks, 1, 64);
    r.integer("aux_blocks", m.aux_blocks, 1, 64);
    r.integer("heads", m.heads, 1, 64);
    r.integer("ff_hidden", m.ff_hidden, 1, 65536);
    r.integer("conv_kernel", m.conv_kernel, 1, 31);
    r.integer("aux_attach", m.aux_attach, 1, 64);
    r.number("aux_weight", m.aux_weight, 0.0, 1e6);
    r.number("label_smoothing", m.label_smoothing, 0.0, 1.0, false, true);
    r.number("dropout", m.dropout, 0.0, 1.0, false, true);
    r.boolean("speaker_fusion", m.speaker_fusion);
    r.integer("batch", m.batch, 1, 4096);
    r.integer("updates", m.updates, 1);
    r.integer("warmup", m.warmup, 0);
    r.number("peak_lr", m.peak_lr, 0.0, 10.0, true);
    r.number("half_life", m.half_life, 0.0, 1e9, true);
    r.number("clip_norm", m.clip_norm, 0.0, 1e9, true);
    r.integer("eval_interval", m.eval_interval, 1);
    r.integer("beam", m.beam, 1, 1024);
    r.integer("max_len_factor", m.max_len_factor, 1, 1024);
    r.finish();

    if (m.width % m.heads != 0) {
        r.fail("width", "must be divisible by heads");
    }
    if (m.conv_kernel % 2 == 0) {
        r.fail("conv_kernel", "must be odd");
    }
    if (m.aux_attach > m.enc_blocks) {
        r.fail("aux_attach", "must not exceed enc_blocks");
    }
}

void parse_data(const nlohmann::json* doc, DataBlock& b, std::vector<std::string>& errors) {
    FieldReader r(doc, "data", errors);
    r.integer("supervised_pairs", b.supervised_pairs, 0);
    r.boolean("use_mined", b.use_mined);
    r.number("mined_threshold", b.mined_threshold, -1e6, 1e6);
    r.double_list("sweep_thresholds", b.sweep_thresholds);
    r.finish();

    if (b.sweep_thresholds.empty()) {
        r.fail("sweep_thresholds", "needs at least one threshold");
    }
    for (std::size_t i = 1; i < b.sweep_thresholds.size(); ++i) {
        if (b.sweep_thresholds[i] <= b.sweep_thresholds[i - 1]) {
            r.fail("sweep_thresholds", "must be strictly ascending");
            break;
        }
    }
}

void parse_eval(const nlohmann::json* doc, EvalBlock& b, std::vector<std::string>& errors) {
    FieldReader r(doc, "eval", errors);
    r.integer("beam", b.beam, 1, 1024);
    r.boolean("compute_proxy", b.compute_proxy);
    r.text("corpus", b.corpus, {"s2st-dev", "s2st-test"});
    r.finish();
}

}  // namespace

ExperimentConfig parse_config(const nlohmann::json& doc, std::vector<std::string>& errors) {
    ExperimentConfig cfg;
    if (!doc.is_object()) {
        errors.push_back("config: expected a JSON object");
        return cfg;
    }
    FieldReader top(&doc, "", errors);
    top.integer("version", cfg.version, 1, 1);
    top.unsigned64("seed", cfg.seed);
    const nlohmann::json* world = top.block("world");
    const nlohmann::json* corpora = top.block("corpora");
    const nlohmann::json* codebook = top.block("codebook");
    const nlohmann::json* normalizer_doc = top.block("normalizer");
    const nlohmann::json* s2ut_doc = top.block("s2ut");
    const nlohmann::json* data = top.block("data");
    const nlohmann::json* eval_doc = top.block("eval");
    top.finish();

    parse_world(world, cfg.world, cfg.seed, errors);
    parse_corpora(corpora, cfg.corpora, cfg.seed, errors);
    parse_codebook(codebook, cfg.codebook, cfg.seed, errors);
    parse_normalizer(normalizer_doc, cfg.normalizer, cfg.seed, errors);
    parse_s2ut(s2ut_doc, cfg.s2ut, cfg.seed, errors);
    parse_data(data, cfg.data, errors);
    parse_eval(eval_doc, cfg.eval, errors);

    // Fields fixed by other blocks rather than by the user.
    cfg.normalizer.model.feature_dim = cfg.world.feature_dim;
    cfg.normalizer.model.vocab = cfg.codebook.k;
    cfg.s2ut.model.feature_dim = cfg.world.feature_dim;
    cfg.s2ut.model.vocab = cfg.codebook.k;
    cfg.s2ut.model.aux_vocab = cfg.codebook.k;
    cfg.s2ut.model.speaker_dim = cfg.world.feature_dim;
    return cfg;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json doc;
    doc["version"] = version;
    doc["seed"] = seed;
    doc["world"] = world.to_json();
    doc["corpora"] = corpora.to_json();
    doc["codebook"] = {{"seed", codebook.seed},
                       {"k", codebook.k},
                       {"pool_utterances", codebook.pool_utterances}};
    const normalizer::NormalizerConfig& n = normalizer.model;
    doc["normalizer"] = {{"tier", normalizer.tier},
                         {"seed", n.seed},
                         {"width", n.width},
                         {"blocks", n.blocks},
                         {"heads", n.heads},
                         {"ff_hidden", n.ff_hidden},
                         {"conv_kernel", n.conv_kernel},
                         {"dropout", n.dropout},
                         {"mask_rate", n.mask_rate},
                         {"mask_span", n.mask_span},
                         {"batch", n.batch},
                         {"pretrain_updates", n.pretrain_updates},
                         {"pretrain_peak_lr", n.pretrain_peak_lr},
                         {"pretrain_warmup", n.pretrain_warmup},
                         {"pretrain_half_life", n.pretrain_half_life},
                         {"finetune_updates", n.finetune_updates},
                         {"freeze_updates", n.freeze_updates},
                         {"warmup", n.warmup},
                         {"peak_lr", n.peak_lr},
                         {"half_life", n.half_life},
                         {"clip_norm", n.clip_norm},
                         {"eval_interval", n.eval_interval}};
    const s2ut::S2utConfig& s = s2ut.model;
    doc["s2ut"] = {{"target_kind", s2ut.target_kind},
                   {"seed", s.seed},
                   {"width", s.width},
                   {"enc_blocks", s.enc_blocks},
                   {"dec_blocks", s.dec_blocks},
                   {"aux_blocks", s.aux_blocks},
                   {"heads", s.heads},
                   {"ff_hidden", s.ff_hidden},
                   {"conv_kernel", s.conv_kernel},
                   {"aux_attach", s.aux_attach},
                   {"aux_weight", s.aux_weight},
                   {"label_smoothing", s.label_smoothing},
                   {"dropout", s.dropout},
                   {"speaker_fusion", s.speaker_fusion},
                   {"batch", s.batch},
                   {"updates", s.updates},
                   {"warmup", s.warmup},
                   {"peak_lr", s.peak_lr},
                   {"half_life", s.half_life},
                   {"clip_norm", s.clip_norm},
                   {"eval_interval", s.eval_interval},
                   {"beam", s.beam},
                   {"max_len_factor", s.max_len_factor}};
    doc["data"] = {{"supervised_pairs", data.supervised_pairs},
                   {"use_mined", data.use_mined},
                   {"mined_threshold", data.mined_threshold},
                   {"sweep_thresholds", data.sweep_thresholds}};
    doc["eval"] = {{"beam", eval.beam},
                   {"compute_proxy", eval.compute_proxy},
                   {"corpus", eval.corpus}};
    return doc;
}

void apply_override(nlohmann::json& doc, const std::string& spec) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override \"" + spec + "\": expected key.path=value");
    }
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    nlohmann::json* node = &doc;
    std::size_t begin = 0;
    for (;;) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty()) {
            throw ConfigError("override \"" + spec + "\": empty path segment");
        }
        if (dot == std::string::npos) {
            nlohmann::json value = nlohmann::json::parse(raw, nullptr, false);
            if (value.is_discarded()) {
                value = raw;  // unquoted strings like tier=1hr
            }
            (*node)[key] = std::move(value);
            return;
        }
        nlohmann::json& next = (*node)[key];
        if (!next.is_object() && !next.is_null()) {
            throw ConfigError("override \"" + spec + "\": " + key + " is not an object");
        }
        if (next.is_null()) {
            next = nlohmann::json::object();
        }
        node = &next;
        begin = dot + 1;
    }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides,
                             const std::uint64_t* seed_override) {
    std::string text;
    try {
        text = io::read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("config: " + path.string() + " is not valid JSON");
    }
    if (seed_override != nullptr) {
        doc["seed"] = *seed_override;
    }
    for (const auto& spec : overrides) {
        apply_override(doc, spec);
    }
    std::vector<std::string> errors;
    ExperimentConfig cfg = parse_config(doc, errors);
    if (!errors.empty()) {
        std::string msg = "invalid config:";
        for (const auto& e : errors) {
            msg += "\n  " + e;
        }
        throw ConfigError(msg);
    }
    return cfg;
}

}  // namespace ts2::pipeline
