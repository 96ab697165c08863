// SPDX-License-Identifier: Apache-2.0
//
// Numeric substrate tests. Every differentiable op is checked against a
// central finite-difference oracle, composite graphs included, so the
// training code above this layer can trust its gradients.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <vector>

#include "ts2/common/error.hpp"
#include "ts2/common/rng.hpp"
#include "ts2/numcore/checkpoint.hpp"
#include "ts2/numcore/graph.hpp"
#include "ts2/numcore/kernels.hpp"
#include "ts2/numcore/ops.hpp"
#include "ts2/numcore/optim.hpp"
#include "ts2/numcore/tensor.hpp"
#include "ts2/numcore/transformer.hpp"

using namespace ts2;
using namespace ts2::numcore;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double scale = 1.0) {
    Tensor t(shape);
    for (int i = 0; i < t.numel(); ++i) t[i] = rng.gauss() * scale;
    return t;
}

// Central finite differences on every element of every leaf, compared with
// the reverse-mode gradient of the scalar loss produced by `build`.
void check_gradients(const std::vector<Var>& leaves, const std::function<Var()>& build,
                     double eps = 1e-5, double tol = 1e-4) {
    for (const Var& l : leaves) l->zero_grad();
    Var loss = build();
    backward(loss);
    for (const Var& l : leaves) {
        REQUIRE(l->requires_grad);
        REQUIRE(l->grad.same_shape(l->value));
        for (int i = 0; i < l->value.numel(); ++i) {
            const double saved = l->value[i];
            l->value[i] = saved + eps;
            const double up = build()->value[0];
            l->value[i] = saved - eps;
            const double down = build()->value[0];
            l->value[i] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = l->grad[i];
            const double denom = std::max({1.0, std::fabs(fd), std::fabs(ad)});
            INFO("leaf elem ", i, ": fd=", fd, " ad=", ad);
            CHECK(std::fabs(fd - ad) <= tol * denom);
        }
    }
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.shape_str() == "[2x3]");
    t.at2(1, 2) = 9.0;
    CHECK(t[5] == 9.0);
    CHECK(t.all_finite());
    t[0] = std::nan("");
    CHECK(!t.all_finite());

    Tensor a({2, 2}), b({3, 2});
    CHECK_THROWS_AS(require_shapes(a.same_shape(b), "probe", a, b), ConfigError);
    try {
        require_shapes(false, "probe", a, b);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2x2]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("rng streams are deterministic and order-independent") {
    Rng a(7), b(7);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    CHECK(derive_seed(1, "alpha") != derive_seed(1, "beta"));
    CHECK(derive_seed(1, "alpha") == derive_seed(1, "alpha"));
    CHECK(derive_seed(1, "alpha", 0) != derive_seed(1, "alpha", 1));

    // Moments of gauss(): loose sanity bounds.
    Rng g(123);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = g.gauss();
        sum += x;
        sq += x * x;
    }
    CHECK(std::fabs(sum / n) < 0.03);
    CHECK(std::fabs(sq / n - 1.0) < 0.05);

    // uniform_int covers its inclusive range.
    Rng u(5);
    bool seen_lo = false, seen_hi = false;
    for (int i = 0; i < 1000; ++i) {
        const int v = u.uniform_int(2, 4);
        CHECK(v >= 2);
        CHECK(v <= 4);
        seen_lo |= v == 2;
        seen_hi |= v == 4;
    }
    CHECK(seen_lo);
    CHECK(seen_hi);
}

TEST_CASE("matmul kernels agree with naive loops") {
    Rng rng(11);
    const int m = 3, k = 4, n = 5;
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);

    Tensor c1({m, n});
    kernels::mm_nn(a.data(), b.data(), c1.data(), m, k, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int kk = 0; kk < k; ++kk) acc += a.at2(i, kk) * b.at2(kk, j);
            CHECK(c1.at2(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }

    Tensor bt({n, k});
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < n; ++j) bt.at2(j, i) = b.at2(i, j);
    Tensor c2({m, n});
    kernels::mm_nt(a.data(), bt.data(), c2.data(), m, k, n);
    for (int i = 0; i < m * n; ++i) CHECK(c2[i] == doctest::Approx(c1[i]).epsilon(1e-12));

    Tensor at({k, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < k; ++j) at.at2(j, i) = a.at2(i, j);
    Tensor c3({m, n});
    kernels::mm_tn(at.data(), b.data(), c3.data(), m, k, n);
    for (int i = 0; i < m * n; ++i) CHECK(c3[i] == doctest::Approx(c1[i]).epsilon(1e-12));
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(42);
    Var a = leaf(random_tensor({2, 3}, rng), true);
    Var b = leaf(random_tensor({2, 3}, rng), true);

    check_gradients({a, b}, [&] { return sum(add(a, b)); });
    check_gradients({a, b}, [&] { return sum(sub(a, b)); });
    check_gradients({a, b}, [&] { return sum(mul(a, b)); });
    check_gradients({a}, [&] { return sum(scale(a, -2.5)); });
    check_gradients({a}, [&] { return mean(mul(a, a)); });
}

TEST_CASE("matmul family gradients match finite differences") {
    Rng rng(43);
    Var a = leaf(random_tensor({3, 4}, rng), true);
    Var b = leaf(random_tensor({4, 2}, rng), true);
    Var bt = leaf(random_tensor({2, 4}, rng), true);
    Var bias = leaf(random_tensor({2}, rng), true);
    Var w = leaf(random_tensor({4, 3}, rng), true);

    check_gradients({a, b}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
    check_gradients({a, bt}, [&] { return sum(mul(matmul_nt(a, bt), matmul_nt(a, bt))); });
    check_gradients({a, b, bias}, [&] { return sum(mul(affine(a, b, bias), affine(a, b, bias))); });
    check_gradients({a, w}, [&] { return sum(mul(affine(a, w, nullptr), affine(a, w, nullptr))); });
}

TEST_CASE("slice and concat gradients match finite differences") {
    Rng rng(44);
    Var x = leaf(random_tensor({3, 6}, rng), true);
    Var y = leaf(random_tensor({3, 2}, rng), true);

    check_gradients({x}, [&] { return sum(mul(slice_cols(x, 1, 4), slice_cols(x, 1, 4))); });
    check_gradients({x, y}, [&] {
        Var c = concat_cols({slice_cols(x, 0, 3), y, slice_cols(x, 3, 6)});
        return sum(mul(c, c));
    });
}

TEST_CASE("activation gradients match finite differences") {
    Rng rng(45);
    // Keep values away from the ReLU kink so central differences are valid.
    Tensor t = random_tensor({3, 4}, rng);
    for (int i = 0; i < t.numel(); ++i)
        if (std::fabs(t[i]) < 0.05) t[i] = 0.2;
    Var x = leaf(t, true);
    Var g = leaf(random_tensor({3, 4}, rng), true);

    check_gradients({x}, [&] { return sum(mul(relu(x), relu(x))); });
    check_gradients({g}, [&] { return sum(mul(glu_rows(g), glu_rows(g))); });
    check_gradients({x}, [&] { return sum(mul(row_softmax(x), row_softmax(x))); });
    check_gradients({x}, [&] { return sum(mul(log_row_softmax(x), log_row_softmax(x))); });
}

TEST_CASE("layer norm gradients match finite differences") {
    Rng rng(46);
    Var x = leaf(random_tensor({3, 5}, rng), true);
    Var gain = leaf(random_tensor({5}, rng, 0.3), true);
    Var bias = leaf(random_tensor({5}, rng, 0.3), true);
    for (int i = 0; i < 5; ++i) gain->value[i] += 1.0;

    check_gradients({x, gain, bias}, [&] {
        Var y = layer_norm_rows(x, gain, bias);
        return sum(mul(y, y));
    });
}

TEST_CASE("embedding gradients accumulate over repeated ids") {
    Rng rng(47);
    Var table = leaf(random_tensor({5, 3}, rng), true);
    const std::vector<int> ids = {1, 3, 1, 0, 1};

    check_gradients({table}, [&] {
        Var e = embedding_rows(table, ids);
        return sum(mul(e, e));
    });

    CHECK_THROWS_AS(embedding_rows(table, {5}), ConfigError);
    CHECK_THROWS_AS(embedding_rows(table, {-1}), ConfigError);
}

TEST_CASE("conv1d output lengths") {
    CHECK(conv1d_out_len(10, 3, 1, 0) == 8);
    CHECK(conv1d_out_len(10, 3, 1, 1) == 10);
    CHECK(conv1d_out_len(10, 4, 2, 1) == 5);
    CHECK(conv1d_out_len(2, 5, 1, 0) == 0);
    CHECK(conv1d_out_len(7, 3, 2, 1) == 4);
}

TEST_CASE("conv1d gradients match finite differences") {
    Rng rng(48);
    for (const auto& [stride, pad] : std::vector<std::pair<int, int>>{{1, 0}, {1, 1}, {2, 1}, {2, 2}}) {
        Var x = leaf(random_tensor({6, 2}, rng), true);
        Var w = leaf(random_tensor({3, 2, 3}, rng), true);
        Var b = leaf(random_tensor({3}, rng), true);
        check_gradients({x, w, b}, [&, s = stride, p = pad] {
            Var y = conv1d(x, w, b, s, p);
            return sum(mul(y, y));
        });
    }
    // Bias-free path.
    Var x = leaf(random_tensor({5, 2}, rng), true);
    Var w = leaf(random_tensor({2, 2, 3}, rng), true);
    check_gradients({x, w}, [&] { return sum(mul(conv1d(x, w, nullptr, 1, 1), conv1d(x, w, nullptr, 1, 1))); });
}

TEST_CASE("dropout semantics") {
    Rng data_rng(49);
    Var x = leaf(random_tensor({4, 8}, data_rng), true);

    Rng r0(99);
    Var same = dropout(x, 0.0, r0);
    CHECK(same.get() == x.get());  // p = 0 is the identity, no node added

    Rng r1(99), r2(99);
    Var d1 = dropout(x, 0.5, r1);
    Var d2 = dropout(x, 0.5, r2);
    int zeros = 0;
    for (int i = 0; i < d1->value.numel(); ++i) {
        CHECK(d1->value[i] == d2->value[i]);  // same stream, same mask
        if (d1->value[i] == 0.0) {
            ++zeros;
        } else {
            CHECK(d1->value[i] == doctest::Approx(x->value[i] * 2.0));
        }
    }
    CHECK(zeros > 0);
    CHECK(zeros < d1->value.numel());

    // Gradient flows only through kept elements, scaled like the forward.
    x->zero_grad();
    backward(sum(d1));
    for (int i = 0; i < x->value.numel(); ++i)
        CHECK(x->grad[i] == (d1->value[i] == 0.0 ? 0.0 : 2.0));
}

TEST_CASE("cross entropy with label smoothing") {
    Rng rng(50);
    Var logits = leaf(random_tensor({4, 6}, rng), true);
    const std::vector<int> targets = {2, 0, 5, 3};

    check_gradients({logits}, [&] { return cross_entropy_smooth_sum(logits, targets, 0.1); });
    check_gradients({logits}, [&] { return cross_entropy_smooth_sum(logits, targets, 0.0); });

    // smoothing = 0 must equal the negative log-softmax at the targets.
    Var loss = cross_entropy_smooth_sum(logits, targets, 0.0);
    Var lp = log_row_softmax(logits);
    double expect = 0.0;
    for (int r = 0; r < 4; ++r) expect -= lp->value.at2(r, targets[r]);
    CHECK(loss->value[0] == doctest::Approx(expect).epsilon(1e-10));

    // Uniform logits, smoothing or not: loss is T * log(V).
    Var flat = leaf(Tensor({2, 5}), true);
    Var l2 = cross_entropy_smooth_sum(flat, {1, 4}, 0.1);
    CHECK(l2->value[0] == doctest::Approx(2.0 * std::log(5.0)).epsilon(1e-10));
}

TEST_CASE("mse gradients match finite differences") {
    Rng rng(51);
    Var pred = leaf(random_tensor({3, 2}, rng), true);
    Tensor target = random_tensor({3, 2}, rng);
    check_gradients({pred}, [&] { return mse_sum(pred, target); });

    Var zero = leaf(target, true);
    CHECK(mse_sum(zero, target)->value[0] == doctest::Approx(0.0));
}

TEST_CASE("backward rejects non-scalar losses and accumulates across calls") {
    Rng rng(52);
    Var x = leaf(random_tensor({2, 2}, rng), true);
    CHECK_THROWS_AS(backward(add(x, x)), UsageError);

    Var loss = sum(mul(x, x));
    x->zero_grad();
    backward(loss);
    Tensor once = x->grad;
    backward(loss);
    for (int i = 0; i < once.numel(); ++i)
        CHECK(x->grad[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-12));

    // Seeded backward scales the contribution.
    x->zero_grad();
    backward(loss, 0.5);
    for (int i = 0; i < once.numel(); ++i)
        CHECK(x->grad[i] == doctest::Approx(0.5 * once[i]).epsilon(1e-12));
}

TEST_CASE("diamond-shaped graphs propagate through shared subexpressions") {
    Rng rng(53);
    Var x = leaf(random_tensor({2, 3}, rng), true);
    check_gradients({x}, [&] {
        Var shared = mul(x, x);
        return sum(add(scale(shared, 2.0), mul(shared, x)));
    });
}

TEST_CASE("attention and transformer block gradients match finite differences") {
    Rng rng(54);
    const int t = 3, c = 4, heads = 2, ff = 6;
    ParamStore store(77);
    AttentionParams ap;
    ap.heads = heads;
    ap.wq = store.create("a.wq", {c, c}, Init::xavier_uniform);
    ap.bq = store.create("a.bq", {c}, Init::zeros);
    ap.wk = store.create("a.wk", {c, c}, Init::xavier_uniform);
    ap.bk = store.create("a.bk", {c}, Init::zeros);
    ap.wv = store.create("a.wv", {c, c}, Init::xavier_uniform);
    ap.bv = store.create("a.bv", {c}, Init::zeros);
    ap.wo = store.create("a.wo", {c, c}, Init::xavier_uniform);
    ap.bo = store.create("a.bo", {c}, Init::zeros);

    Var x = leaf(random_tensor({t, c}, rng, 0.5), true);
    Var mem = leaf(random_tensor({4, c}, rng, 0.5), true);
    Tensor mask = causal_mask(t);

    std::vector<Var> leaves = {x, mem, ap.wq, ap.bq, ap.wk, ap.bk, ap.wv, ap.bv, ap.wo, ap.bo};
    check_gradients(leaves, [&] {
        Var y = attention(ap, x, mem);
        return sum(mul(y, y));
    });
    check_gradients({x, ap.wq, ap.wk, ap.wv, ap.wo}, [&] {
        Var y = attention(ap, x, x, &mask);
        return sum(mul(y, y));
    });

    EncoderBlockParams enc;
    enc.attn = ap;
    enc.ln_attn = {store.create("e.ln1.g", {c}, Init::ones), store.create("e.ln1.b", {c}, Init::zeros)};
    enc.ln_ff = {store.create("e.ln2.g", {c}, Init::ones), store.create("e.ln2.b", {c}, Init::zeros)};
    enc.ff.w1 = store.create("e.ff.w1", {c, ff}, Init::xavier_uniform);
    enc.ff.b1 = store.create("e.ff.b1", {ff}, Init::zeros);
    enc.ff.w2 = store.create("e.ff.w2", {ff, c}, Init::xavier_uniform);
    enc.ff.b2 = store.create("e.ff.b2", {c}, Init::zeros);

    std::vector<Var> enc_leaves = {x,          enc.ln_attn.gain, enc.ln_attn.bias, enc.ln_ff.gain,
                                   enc.ln_ff.bias, enc.ff.w1,    enc.ff.b1,        enc.ff.w2,
                                   enc.ff.b2,  ap.wq,            ap.wo};
    check_gradients(enc_leaves, [&] {
        Var y = encoder_block(enc, x);
        return sum(mul(y, y));
    });

    DecoderBlockParams dec;
    dec.self_attn = ap;
    dec.cross_attn = ap;
    dec.ln_self = enc.ln_attn;
    dec.ln_cross = {store.create("d.lnc.g", {c}, Init::ones), store.create("d.lnc.b", {c}, Init::zeros)};
    dec.ln_ff = enc.ln_ff;
    dec.ff = enc.ff;

    check_gradients({x, mem, ap.wq, ap.wv, dec.ln_cross.gain}, [&] {
        Var y = decoder_block(dec, x, mem, mask);
        return sum(mul(y, y));
    });
}

TEST_CASE("causal mask and position table shapes") {
    Tensor m = causal_mask(3);
    CHECK(m.at2(0, 0) == 0.0);
    CHECK(m.at2(0, 1) < -1e29);
    CHECK(m.at2(2, 1) == 0.0);
    CHECK(m.at2(1, 2) < -1e29);

    Tensor p = sinusoidal_positions(4, 6);
    CHECK(p.rows() == 4);
    CHECK(p.cols() == 6);
    for (int j = 0; j < 6; ++j)
        CHECK(p.at2(0, j) == doctest::Approx(j % 2 == 0 ? 0.0 : 1.0));
    CHECK(p.at2(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(p.at2(1, 1) == doctest::Approx(std::cos(1.0)));
    // Distinct positions get distinct encodings.
    bool differs = false;
    for (int j = 0; j < 6; ++j) differs |= std::fabs(p.at2(1, j) - p.at2(2, j)) > 1e-6;
    CHECK(differs);
}

TEST_CASE("plain-value helpers match the graph ops") {
    Rng rng(55);
    Tensor x = random_tensor({3, 4}, rng);
    Tensor w = random_tensor({4, 2}, rng);
    Tensor b = random_tensor({2}, rng);
    Tensor gain({4}, 1.0);
    Tensor bias = random_tensor({4}, rng, 0.1);

    Var vx = constant(x);
    Var vaff = affine(vx, constant(w), constant(b));
    Tensor aff = affine_value(x, w, b);
    for (int i = 0; i < aff.numel(); ++i)
        CHECK(aff[i] == doctest::Approx(vaff->value[i]).epsilon(1e-12));

    Var vln = layer_norm_rows(vx, constant(gain), constant(bias));
    Tensor ln = layer_norm_value(x, gain, bias);
    for (int i = 0; i < ln.numel(); ++i)
        CHECK(ln[i] == doctest::Approx(vln->value[i]).epsilon(1e-12));

    Var vsm = row_softmax(vx);
    Tensor sm = row_softmax_value(x);
    for (int i = 0; i < sm.numel(); ++i)
        CHECK(sm[i] == doctest::Approx(vsm->value[i]).epsilon(1e-12));

    Tensor rl = relu_value(x);
    Var vrl = relu(vx);
    for (int i = 0; i < rl.numel(); ++i) CHECK(rl[i] == vrl->value[i]);
}

TEST_CASE("param store init is independent of creation order") {
    ParamStore s1(123), s2(123);
    Var a1 = s1.create("alpha", {4, 3}, Init::xavier_uniform);
    Var b1 = s1.create("beta", {2, 2}, Init::normal_002);
    Var b2 = s2.create("beta", {2, 2}, Init::normal_002);
    Var a2 = s2.create("alpha", {4, 3}, Init::xavier_uniform);

    for (int i = 0; i < a1->value.numel(); ++i) CHECK(a1->value[i] == a2->value[i]);
    for (int i = 0; i < b1->value.numel(); ++i) CHECK(b1->value[i] == b2->value[i]);

    CHECK_THROWS_AS(s1.create("alpha", {1}, Init::zeros), UsageError);
    CHECK_THROWS_AS(s1.get("missing"), UsageError);
    CHECK(s1.count() == 2);
    CHECK(s1.total_values() == 16);

    // Different seeds give different draws.
    ParamStore s3(124);
    Var a3 = s3.create("alpha", {4, 3}, Init::xavier_uniform);
    bool same = true;
    for (int i = 0; i < a1->value.numel(); ++i) same &= a1->value[i] == a3->value[i];
    CHECK(!same);
}

TEST_CASE("adam requires a backward pass and follows the schedule") {
    ParamStore store(9);
    Var w = store.create("w", {1}, Init::zeros);
    AdamConfig cfg = adam_config_halving(0.1, 4, 100.0);
    Adam opt(store, cfg);

    CHECK_THROWS_AS(opt.step(), UsageError);

    CHECK(opt.lr_at(0) == doctest::Approx(0.1 / 4));
    CHECK(opt.lr_at(3) == doctest::Approx(0.1));
    CHECK(opt.lr_at(4) == doctest::Approx(0.1 * std::pow(0.5, 1.0 / 100.0)));
    CHECK(opt.lr_at(104) == doctest::Approx(0.1 * std::pow(0.5, 101.0 / 100.0)));

    // First step moves by ~lr in the gradient's direction (bias-corrected).
    backward(mse_sum(w, Tensor::scalar(3.0)));
    const double lr0 = opt.step();
    CHECK(lr0 == doctest::Approx(0.1 / 4));
    CHECK(w->value[0] == doctest::Approx(lr0).epsilon(1e-4));
    CHECK(!w->grad_accumulated);  // step clears gradients

    // Optimizing the quadratic converges to the target.
    for (int i = 0; i < 400; ++i) {
        backward(mse_sum(w, Tensor::scalar(3.0)));
        opt.step();
    }
    CHECK(w->value[0] == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("frozen parameters are skipped entirely") {
    ParamStore store(10);
    Var w = store.create("enc.w", {2}, Init::zeros);
    Var u = store.create("dec.u", {2}, Init::zeros);
    Adam opt(store, adam_config_halving(0.05, 1, 1000.0));

    CHECK(store.set_frozen("enc.", true) == 1);
    Tensor target({2}, 1.0);
    for (int i = 0; i < 10; ++i) {
        backward(add(mse_sum(w, target), mse_sum(u, target)));
        opt.step();
    }
    CHECK(w->value[0] == 0.0);
    CHECK(w->value[1] == 0.0);
    CHECK(u->value[0] > 0.1);

    // Thawing lets the parameter train with fresh bias correction.
    store.set_frozen("enc.", false);
    for (int i = 0; i < 200; ++i) {
        backward(add(mse_sum(w, target), mse_sum(u, target)));
        opt.step();
    }
    CHECK(w->value[0] == doctest::Approx(1.0).epsilon(0.05));

    auto items = store.items();
    REQUIRE(items.size() == 2);
    CHECK(items[0]->name == "dec.u");  // name-ordered iteration
    CHECK(items[1]->name == "enc.w");
    CHECK(items[1]->updates == 200);
}

TEST_CASE("checkpoint round-trips through f32") {
    Rng rng(60);
    std::map<std::string, Tensor> state;
    state.emplace("weights", random_tensor({3, 4}, rng));
    state.emplace("bias", random_tensor({4}, rng));
    state.emplace("table", random_tensor({2, 2, 2}, rng));

    const std::string path = "test_ckpt.bin";
    save_checkpoint(path, state);
    auto loaded = load_checkpoint(path);
    REQUIRE(loaded.size() == 3);
    for (const auto& [name, t] : state) {
        REQUIRE(loaded.count(name) == 1);
        const Tensor& l = loaded.at(name);
        REQUIRE(l.same_shape(t));
        for (int i = 0; i < t.numel(); ++i)
            CHECK(l[i] == static_cast<double>(static_cast<float>(t[i])));
    }

    // Saving an f32-quantized state reloads bit-identically.
    save_checkpoint(path, loaded);
    auto again = load_checkpoint(path);
    for (const auto& [name, t] : loaded)
        for (int i = 0; i < t.numel(); ++i) CHECK(again.at(name)[i] == t[i]);

    CHECK_THROWS_AS(load_checkpoint("no_such_file.bin"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects bad magic and unknown versions") {
    const std::string path = "test_bad_ckpt.bin";
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("TSCK", f);
        const unsigned char ver[4] = {9, 0, 0, 0};
        std::fwrite(ver, 1, 4, f);
        const unsigned char cnt[4] = {0, 0, 0, 0};
        std::fwrite(cnt, 1, 4, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("state dict load validates names and shapes") {
    ParamStore store(61);
    store.create("w", {2, 2}, Init::xavier_uniform);
    store.create("b", {2}, Init::zeros);

    auto state = store.state_dict();
    state.at("w")[0] = 42.0;
    store.load_state_dict(state);
    CHECK(store.get("w")->value[0] == 42.0);

    auto extra = state;
    extra.emplace("ghost", Tensor({1}));
    CHECK_THROWS_AS(store.load_state_dict(extra), DataError);

    auto wrong = state;
    wrong.erase("b");
    wrong.emplace("b", Tensor({3}));
    CHECK_THROWS_AS(store.load_state_dict(wrong), DataError);

    auto missing = state;
    missing.erase("b");
    CHECK_THROWS_AS(store.load_state_dict(missing), DataError);
}

TEST_CASE("training a tiny regression net end to end") {
    // y = sin(x) on [-2, 2]; a small MLP should fit it well, which exercises
    // ops, graph reuse, Adam, and the schedule together.
    ParamStore store(314);
    const int hidden = 16;
    Var w1 = store.create("w1", {1, hidden}, Init::xavier_uniform);
    Var b1 = store.create("b1", {hidden}, Init::zeros);
    Var w2 = store.create("w2", {hidden, 1}, Init::xavier_uniform);
    Var b2 = store.create("b2", {1}, Init::zeros);
    Adam opt(store, adam_config_halving(0.01, 20, 2000.0));

    Rng rng(271);
    std::vector<double> xs(64), ys(64);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = rng.uniform(-2.0, 2.0);
        ys[i] = std::sin(xs[i]);
    }

    double final_loss = 1e9;
    for (int step = 0; step < 600; ++step) {
        double total = 0.0;
        Tensor xin({static_cast<int>(xs.size()), 1});
        Tensor yt({static_cast<int>(xs.size()), 1});
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xin.at2(static_cast<int>(i), 0) = xs[i];
            yt.at2(static_cast<int>(i), 0) = ys[i];
        }
        Var pred = affine(relu(affine(constant(xin), w1, b1)), w2, b2);
        Var loss = mse_sum(pred, yt);
        total = loss->value[0];
        backward(loss, 1.0 / static_cast<double>(xs.size()));
        opt.step();
        final_loss = total / static_cast<double>(xs.size());
    }
    CHECK(final_loss < 0.01);
}

TEST_CASE("replace_rows and gather_rows gradients") {
    Rng rng(641);
    const Tensor base = random_tensor({6, 3}, rng);
    const Var vec = leaf(random_tensor({1, 3}, rng), true);
    const Var table = leaf(random_tensor({6, 3}, rng), true);
    const std::vector<int> rows = {1, 3, 3, 5};

    check_gradients({vec}, [&] {
        return sum(mul(replace_rows(base, rows, vec), replace_rows(base, rows, vec)));
    });
    check_gradients({table}, [&] {
        const Var g = gather_rows(table, {0, 2, 2, 4});
        return sum(mul(g, g));
    });

    // Value semantics: replaced rows carry the vector, others the base.
    const Var rep = replace_rows(base, rows, vec);
    for (int r = 0; r < 6; ++r) {
        const bool hit = r == 1 || r == 3 || r == 5;
        for (int c = 0; c < 3; ++c) {
            CHECK(rep->value.at2(r, c) == (hit ? vec->value[c] : base.at2(r, c)));
        }
    }
    CHECK_THROWS_AS(replace_rows(base, {9}, vec), ConfigError);
    CHECK_THROWS_AS(gather_rows(table, {-1}), ConfigError);
}
