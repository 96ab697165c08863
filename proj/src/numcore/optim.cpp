// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/optim.hpp"

#include <cmath>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"

namespace ts2::numcore {

namespace {

void fill_init(Tensor& t, const std::vector<int>& shape, Init init, Rng& rng) {
    switch (init) {
        case Init::zeros:
            break;
        case Init::ones:
            t.fill(1.0);
            break;
        case Init::xavier_uniform: {
            int fan_in = 1, fan_out = 1;
            if (shape.size() >= 2) {
                fan_in = shape[shape.size() - 2];
                fan_out = shape[shape.size() - 1];
                // Leading dims (e.g. conv output channels) scale the fan.
                for (std::size_t i = 0; i + 2 < shape.size(); ++i) fan_out *= shape[i];
            } else if (shape.size() == 1) {
                fan_in = fan_out = shape[0];
            }
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
            break;
        }
        case Init::normal_002:
            for (int i = 0; i < t.numel(); ++i) t[i] = rng.gauss() * 0.02;
            break;
    }
}

}  // namespace

Var ParamStore::create(const std::string& name, const std::vector<int>& shape, Init init) {
    if (params_.count(name) != 0)
        throw UsageError("parameter already exists: " + name);
    Tensor value(shape);
    Rng rng(derive_seed(seed_, name));
    fill_init(value, shape, init, rng);
    Parameter p;
    p.name = name;
    p.var = leaf(std::move(value), /*requires_grad=*/true);
    auto [it, ok] = params_.emplace(name, std::move(p));
    (void)ok;
    return it->second.var;
}

Var ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw UsageError("unknown parameter: " + name);
    return it->second.var;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) p.var->zero_grad();
}

int ParamStore::set_frozen(const std::string& prefix, bool frozen) {
    int hit = 0;
    for (auto& [name, p] : params_) {
        if (name.rfind(prefix, 0) == 0) {
            p.frozen = frozen;
            ++hit;
        }
    }
    return hit;
}

std::vector<Parameter*> ParamStore::items() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& [name, p] : params_) out.push_back(&p);
    return out;
}

std::vector<const Parameter*> ParamStore::items() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const auto& [name, p] : params_) out.push_back(&p);
    return out;
}

long ParamStore::total_values() const {
    long n = 0;
    for (const auto& [name, p] : params_) n += p.var->value.numel();
    return n;
}

std::map<std::string, Tensor> ParamStore::state_dict() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, p] : params_) out.emplace(name, p.var->value);
    return out;
}

void ParamStore::load_state_dict(const std::map<std::string, Tensor>& state) {
    for (const auto& [name, value] : state) {
        auto it = params_.find(name);
        if (it == params_.end())
            throw DataError("checkpoint has unknown parameter: " + name);
        if (!it->second.var->value.same_shape(value))
            throw DataError("checkpoint shape mismatch for " + name + ": stored " +
                                    value.shape_str() + ", model " +
                                    it->second.var->value.shape_str());
        it->second.var->value = value;
    }
    for (const auto& [name, p] : params_) {
        if (state.count(name) == 0)
            throw DataError("checkpoint is missing parameter: " + name);
    }
}

double Adam::lr_at(long step) const {
    if (step < cfg_.warmup_steps)
        return cfg_.peak_lr * static_cast<double>(step + 1) / cfg_.warmup_steps;
    return cfg_.peak_lr * std::pow(cfg_.decay_per_step, static_cast<double>(step + 1 - cfg_.warmup_steps));
}

double Adam::step() {
    auto params = store_.items();
    bool any_grad = false;
    for (const Parameter* p : params) {
        if (!p->frozen && p->var->grad_accumulated) {
            any_grad = true;
            break;
        }
    }
    if (!any_grad)
        throw UsageError("optimizer step requested with no accumulated gradients");

    double grad_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
        double sq = 0.0;
        for (const Parameter* p : params) {
            if (p->frozen || !p->var->grad_accumulated) continue;
            const Tensor& g = p->var->grad;
            for (int i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
        }
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) grad_scale = cfg_.clip_norm / norm;
    }

    const double lr = lr_at(step_);
    for (Parameter* p : params) {
        if (p->frozen || !p->var->grad_accumulated) continue;
        Tensor& value = p->var->value;
        const Tensor& grad = p->var->grad;
        if (p->m.empty()) {
            p->m = Tensor(value.shape());
            p->v = Tensor(value.shape());
        }
        ++p->updates;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(p->updates));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(p->updates));
        for (int i = 0; i < value.numel(); ++i) {
            const double g = grad[i] * grad_scale;
            p->m[i] = cfg_.beta1 * p->m[i] + (1.0 - cfg_.beta1) * g;
            p->v[i] = cfg_.beta2 * p->v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = p->m[i] / bc1;
            const double vhat = p->v[i] / bc2;
            value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    ++step_;
    store_.zero_grads();
    return lr;
}

AdamConfig adam_config_halving(double peak_lr, int warmup_steps, double half_life_steps) {
    AdamConfig cfg;
    cfg.peak_lr = peak_lr;
    cfg.warmup_steps = warmup_steps;
    cfg.decay_per_step = std::pow(0.5, 1.0 / half_life_steps);
    return cfg;
}

}  // namespace ts2::numcore
