// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/ops.hpp"

#include <algorithm>
#include <cmath>

#include "ts2/common/error.hpp"
#include "ts2/numcore/kernels.hpp"

namespace ts2::numcore {

using kernels::mm_nn;
using kernels::mm_nt;
using kernels::mm_tn;

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        if (p && p->requires_grad) {
            n->requires_grad = true;
            break;
        }
    }
    if (n->requires_grad) n->backward_fn = std::move(bwd);
    return n;
}

Var add(const Var& a, const Var& b) {
    require_shapes(a->value.same_shape(b->value), "add", a->value, b->value);
    Tensor out(a->value.shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) pb->accumulate(self.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_shapes(a->value.same_shape(b->value), "sub", a->value, b->value);
    Tensor out(a->value.shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int i = 0; i < g.numel(); ++i) g[i] -= self.grad[i];
            pb->grad_accumulated = true;
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_shapes(a->value.same_shape(b->value), "mul", a->value, b->value);
    Tensor out(a->value.shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    Node* pa = a.get();
    Node* pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb](Node& self) {
        const int m = self.grad.numel();
        if (pa->requires_grad) {
            Tensor& ga = pa->ensure_grad();
            for (int i = 0; i < m; ++i) ga[i] += self.grad[i] * pb->value[i];
            pa->grad_accumulated = true;
        }
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            for (int i = 0; i < m; ++i) gb[i] += self.grad[i] * pa->value[i];
            pb->grad_accumulated = true;
        }
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = a->value[i] * s;
    Node* pa = a.get();
    return make_op(std::move(out), {a}, [pa, s](Node& self) {
        Tensor& g = pa->ensure_grad();
        for (int i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * s;
        pa->grad_accumulated = true;
    });
}

Var sum(const Var& x) {
    double acc = 0.0;
    for (int i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    Node* px = x.get();
    return make_op(Tensor::scalar(acc), {x}, [px](Node& self) {
        const double g = self.grad[0];
        Tensor& gx = px->ensure_grad();
        for (int i = 0; i < gx.numel(); ++i) gx[i] += g;
        px->grad_accumulated = true;
    });
}

Var mean(const Var& x) {
    const int n = std::max(1, x->value.numel());
    return scale(sum(x), 1.0 / n);
}

Var matmul(const Var& a, const Var& b) {
    require_shapes(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.cols() == b->value.rows(),
                   "matmul", a->value, b->value);
    const int m = a->value.rows(), k = a->value.cols(), n = b->value.cols();
    Tensor out({m, n});
    mm_nn(a->value.data(), b->value.data(), out.data(), m, k, n);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad) {
            Tensor& ga = pa->ensure_grad();
            mm_nt(self.grad.data(), pb->value.data(), ga.data(), m, n, k);
            pa->grad_accumulated = true;
        }
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            mm_tn(pa->value.data(), self.grad.data(), gb.data(), k, m, n);
            pb->grad_accumulated = true;
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    require_shapes(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.cols() == b->value.cols(),
                   "matmul_nt", a->value, b->value);
    const int m = a->value.rows(), k = a->value.cols(), n = b->value.rows();
    Tensor out({m, n});
    mm_nt(a->value.data(), b->value.data(), out.data(), m, k, n);
    Node* pa = a.get();
    Node* pb = b.get();
    return make_op(std::move(out), {a, b}, [pa, pb, m, k, n](Node& self) {
        if (pa->requires_grad) {
            Tensor& ga = pa->ensure_grad();
            mm_nn(self.grad.data(), pb->value.data(), ga.data(), m, n, k);
            pa->grad_accumulated = true;
        }
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            mm_tn(self.grad.data(), pa->value.data(), gb.data(), n, m, k);
            pb->grad_accumulated = true;
        }
    });
}

Var add_bias_rows(const Var& x, const Var& b) {
    require_shapes(x->value.ndim() == 2 && b->value.numel() == x->value.cols(), "add_bias",
                   x->value, b->value);
    const int t = x->value.rows(), c = x->value.cols();
    Tensor out({t, c});
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < c; ++j) out.at2(r, j) = x->value.at2(r, j) + b->value[j];
    Node* px = x.get();
    Node* pb = b.get();
    return make_op(std::move(out), {x, b}, [px, pb, t, c](Node& self) {
        if (px->requires_grad) px->accumulate(self.grad);
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < c; ++j) gb[j] += self.grad.at2(r, j);
            pb->grad_accumulated = true;
        }
    });
}

Var affine(const Var& x, const Var& w, const Var& b) {
    Var y = matmul(x, w);
    return b ? add_bias_rows(y, b) : y;
}

Var slice_cols(const Var& x, int c0, int c1) {
    require(x->value.ndim() == 2 && c0 >= 0 && c1 <= x->value.cols() && c0 < c1,
            "slice_cols: bad range on " + x->value.shape_str());
    const int t = x->value.rows(), w = c1 - c0;
    Tensor out({t, w});
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < w; ++j) out.at2(r, j) = x->value.at2(r, c0 + j);
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, c0, t, w](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int r = 0; r < t; ++r)
            for (int j = 0; j < w; ++j) gx.at2(r, c0 + j) += self.grad.at2(r, j);
        px->grad_accumulated = true;
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: empty part list");
    const int t = parts[0]->value.rows();
    int c = 0;
    for (const auto& p : parts) {
        require(p->value.ndim() == 2 && p->value.rows() == t, "concat_cols: row mismatch");
        c += p->value.cols();
    }
    Tensor out({t, c});
    int off = 0;
    for (const auto& p : parts) {
        const int pc = p->value.cols();
        for (int r = 0; r < t; ++r)
            for (int j = 0; j < pc; ++j) out.at2(r, off + j) = p->value.at2(r, j);
        off += pc;
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_op(std::move(out), std::move(parents), [t](Node& self) {
        int off2 = 0;
        for (auto& pv : self.parents) {
            Node* p = pv.get();
            const int pc = p->value.cols();
            if (p->requires_grad) {
                Tensor& gp = p->ensure_grad();
                for (int r = 0; r < t; ++r)
                    for (int j = 0; j < pc; ++j) gp.at2(r, j) += self.grad.at2(r, off2 + j);
                p->grad_accumulated = true;
            }
            off2 += pc;
        }
    });
}

Var relu(const Var& x) {
    Tensor out(x->value.shape());
    const int n = out.numel();
    for (int i = 0; i < n; ++i) out[i] = x->value[i] > 0.0 ? x->value[i] : 0.0;
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int i = 0; i < gx.numel(); ++i)
            if (px->value[i] > 0.0) gx[i] += self.grad[i];
        px->grad_accumulated = true;
    });
}

Var glu_rows(const Var& x) {
    require(x->value.ndim() == 2 && x->value.cols() % 2 == 0,
            "glu: needs an even channel count, got " + x->value.shape_str());
    const int t = x->value.rows(), c = x->value.cols() / 2;
    Tensor out({t, c});
    Tensor sig({t, c});
    for (int r = 0; r < t; ++r) {
        for (int j = 0; j < c; ++j) {
            const double s = 1.0 / (1.0 + std::exp(-x->value.at2(r, c + j)));
            sig.at2(r, j) = s;
            out.at2(r, j) = x->value.at2(r, j) * s;
        }
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, sig = std::move(sig), t, c](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < c; ++j) {
                const double g = self.grad.at2(r, j);
                const double s = sig.at2(r, j);
                const double a = px->value.at2(r, j);
                gx.at2(r, j) += g * s;
                gx.at2(r, c + j) += g * a * s * (1.0 - s);
            }
        }
        px->grad_accumulated = true;
    });
}

Var row_softmax(const Var& x) {
    require(x->value.ndim() == 2, "softmax: expects 2-D input, got " + x->value.shape_str());
    const int t = x->value.rows(), c = x->value.cols();
    Tensor out({t, c});
    for (int r = 0; r < t; ++r) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, x->value.at2(r, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(x->value.at2(r, j) - mx);
            out.at2(r, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) out.at2(r, j) /= z;
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, t, c](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int r = 0; r < t; ++r) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += self.grad.at2(r, j) * self.value.at2(r, j);
            for (int j = 0; j < c; ++j)
                gx.at2(r, j) += self.value.at2(r, j) * (self.grad.at2(r, j) - dot);
        }
        px->grad_accumulated = true;
    });
}

Var log_row_softmax(const Var& x) {
    require(x->value.ndim() == 2, "log_softmax: expects 2-D input, got " + x->value.shape_str());
    const int t = x->value.rows(), c = x->value.cols();
    Tensor out({t, c});
    for (int r = 0; r < t; ++r) {
        double mx = -1e300;
        for (int j = 0; j < c; ++j) mx = std::max(mx, x->value.at2(r, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(x->value.at2(r, j) - mx);
        const double lz = mx + std::log(z);
        for (int j = 0; j < c; ++j) out.at2(r, j) = x->value.at2(r, j) - lz;
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, t, c](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int r = 0; r < t; ++r) {
            double gsum = 0.0;
            for (int j = 0; j < c; ++j) gsum += self.grad.at2(r, j);
            for (int j = 0; j < c; ++j)
                gx.at2(r, j) += self.grad.at2(r, j) - std::exp(self.value.at2(r, j)) * gsum;
        }
        px->grad_accumulated = true;
    });
}

Var layer_norm_rows(const Var& x, const Var& gain, const Var& bias, double eps) {
    require(x->value.ndim() == 2, "layer_norm: expects 2-D input, got " + x->value.shape_str());
    const int t = x->value.rows(), c = x->value.cols();
    require_shapes(gain->value.numel() == c && bias->value.numel() == c, "layer_norm", x->value,
                   gain->value);
    Tensor out({t, c});
    Tensor xhat({t, c});
    Tensor inv_std({t});
    for (int r = 0; r < t; ++r) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x->value.at2(r, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x->value.at2(r, j) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int j = 0; j < c; ++j) {
            const double xh = (x->value.at2(r, j) - mu) * is;
            xhat.at2(r, j) = xh;
            out.at2(r, j) = xh * gain->value[j] + bias->value[j];
        }
    }
    Node* px = x.get();
    Node* pg = gain.get();
    Node* pb = bias.get();
    return make_op(std::move(out), {x, gain, bias},
                   [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), t, c](Node& self) {
        if (pg->requires_grad) {
            Tensor& gg = pg->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < c; ++j) gg[j] += self.grad.at2(r, j) * xhat.at2(r, j);
            pg->grad_accumulated = true;
        }
        if (pb->requires_grad) {
            Tensor& gb = pb->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int j = 0; j < c; ++j) gb[j] += self.grad.at2(r, j);
            pb->grad_accumulated = true;
        }
        if (px->requires_grad) {
            Tensor& gx = px->ensure_grad();
            for (int r = 0; r < t; ++r) {
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    const double dxh = self.grad.at2(r, j) * pg->value[j];
                    m1 += dxh;
                    m2 += dxh * xhat.at2(r, j);
                }
                m1 /= c;
                m2 /= c;
                for (int j = 0; j < c; ++j) {
                    const double dxh = self.grad.at2(r, j) * pg->value[j];
                    gx.at2(r, j) += (dxh - m1 - xhat.at2(r, j) * m2) * inv_std[r];
                }
            }
            px->grad_accumulated = true;
        }
    });
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    require(table->value.ndim() == 2, "embedding: table must be 2-D, got " + table->value.shape_str());
    const int v = table->value.rows(), c = table->value.cols();
    const int t = static_cast<int>(ids.size());
    for (int id : ids)
        require(id >= 0 && id < v, "embedding: id out of range for table " + table->value.shape_str());
    Tensor out({t, c});
    for (int r = 0; r < t; ++r)
        for (int j = 0; j < c; ++j) out.at2(r, j) = table->value.at2(ids[r], j);
    Node* pt = table.get();
    return make_op(std::move(out), {table}, [pt, ids, t, c](Node& self) {
        Tensor& gt = pt->ensure_grad();
        for (int r = 0; r < t; ++r)
            for (int j = 0; j < c; ++j) gt.at2(ids[r], j) += self.grad.at2(r, j);
        pt->grad_accumulated = true;
    });
}

int conv1d_out_len(int t, int k, int stride, int pad) {
    const int span = t + 2 * pad - k;
    if (span < 0) return 0;
    return span / stride + 1;
}

Var conv1d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require(x->value.ndim() == 2 && w->value.ndim() == 3, "conv1d: x must be [T,Cin], w [Cout,Cin,K]");
    const int t = x->value.rows(), cin = x->value.cols();
    const int cout = w->value.extent(0), k = w->value.extent(2);
    require_shapes(w->value.extent(1) == cin, "conv1d", x->value, w->value);
    require(stride >= 1 && pad >= 0, "conv1d: bad stride/padding");
    const int tout = conv1d_out_len(t, k, stride, pad);
    Tensor out({tout, cout});
    const double* wd = w->value.data();
    for (int to = 0; to < tout; ++to) {
        const int t0 = to * stride - pad;
        for (int co = 0; co < cout; ++co) {
            double acc = b ? b->value[co] : 0.0;
            const double* wc = wd + static_cast<long>(co) * cin * k;
            for (int ci = 0; ci < cin; ++ci) {
                for (int kk = 0; kk < k; ++kk) {
                    const int ti = t0 + kk;
                    if (ti < 0 || ti >= t) continue;
                    acc += x->value.at2(ti, ci) * wc[ci * k + kk];
                }
            }
            out.at2(to, co) = acc;
        }
    }
    Node* px = x.get();
    Node* pw = w.get();
    Node* pb = b ? b.get() : nullptr;
    std::vector<Var> parents = b ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), std::move(parents),
                   [px, pw, pb, t, cin, cout, k, stride, pad, tout](Node& self) {
        const double* wd = pw->value.data();
        Tensor* gx = px->requires_grad ? &px->ensure_grad() : nullptr;
        Tensor* gw = pw->requires_grad ? &pw->ensure_grad() : nullptr;
        Tensor* gb = (pb && pb->requires_grad) ? &pb->ensure_grad() : nullptr;
        for (int to = 0; to < tout; ++to) {
            const int t0 = to * stride - pad;
            for (int co = 0; co < cout; ++co) {
                const double g = self.grad.at2(to, co);
                if (g == 0.0) continue;
                if (gb) (*gb)[co] += g;
                const double* wc = wd + static_cast<long>(co) * cin * k;
                double* gwc = gw ? gw->data() + static_cast<long>(co) * cin * k : nullptr;
                for (int ci = 0; ci < cin; ++ci) {
                    for (int kk = 0; kk < k; ++kk) {
                        const int ti = t0 + kk;
                        if (ti < 0 || ti >= t) continue;
                        if (gx) gx->at2(ti, ci) += g * wc[ci * k + kk];
                        if (gwc) gwc[ci * k + kk] += g * px->value.at2(ti, ci);
                    }
                }
            }
        }
        if (gx) px->grad_accumulated = true;
        if (gw) pw->grad_accumulated = true;
        if (gb) pb->grad_accumulated = true;
    });
}

Var dropout(const Var& x, double p, Rng& rng) {
    if (p <= 0.0) return x;
    require(p < 1.0, "dropout: probability must be < 1");
    const double keep = 1.0 - p;
    Tensor mask(x->value.shape());
    Tensor out(x->value.shape());
    for (int i = 0; i < out.numel(); ++i) {
        const double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        mask[i] = m;
        out[i] = x->value[i] * m;
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, mask = std::move(mask)](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (int i = 0; i < gx.numel(); ++i) gx[i] += self.grad[i] * mask[i];
        px->grad_accumulated = true;
    });
}

Var cross_entropy_smooth_sum(const Var& logits, const std::vector<int>& targets, double smoothing) {
    require(logits->value.ndim() == 2, "cross_entropy: logits must be 2-D");
    const int t = logits->value.rows(), v = logits->value.cols();
    require(static_cast<int>(targets.size()) == t,
            "cross_entropy: target count does not match logit rows");
    require(smoothing >= 0.0 && smoothing < 1.0, "cross_entropy: smoothing must be in [0,1)");
    for (int id : targets) require(id >= 0 && id < v, "cross_entropy: target id out of range");

    // Cache softmax probabilities for the backward pass.
    Tensor probs({t, v});
    double loss = 0.0;
    const double uni = smoothing / v;
    for (int r = 0; r < t; ++r) {
        double mx = -1e300;
        for (int j = 0; j < v; ++j) mx = std::max(mx, logits->value.at2(r, j));
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(logits->value.at2(r, j) - mx);
        const double lz = mx + std::log(z);
        double row_sum = 0.0;
        for (int j = 0; j < v; ++j) {
            probs.at2(r, j) = std::exp(logits->value.at2(r, j) - lz);
            row_sum += logits->value.at2(r, j);
        }
        loss += lz - (1.0 - smoothing) * logits->value.at2(r, targets[r]) - uni * row_sum;
    }
    Node* pl = logits.get();
    return make_op(Tensor::scalar(loss), {logits},
                   [pl, probs = std::move(probs), targets, smoothing, uni, t, v](Node& self) {
        const double g = self.grad[0];
        Tensor& gl = pl->ensure_grad();
        for (int r = 0; r < t; ++r) {
            for (int j = 0; j < v; ++j) {
                double q = uni;
                if (j == targets[r]) q += 1.0 - smoothing;
                gl.at2(r, j) += g * (probs.at2(r, j) - q);
            }
        }
        pl->grad_accumulated = true;
    });
}

Var mse_sum(const Var& pred, const Tensor& target) {
    require_shapes(pred->value.same_shape(target), "mse", pred->value, target);
    double loss = 0.0;
    for (int i = 0; i < target.numel(); ++i) {
        const double d = pred->value[i] - target[i];
        loss += d * d;
    }
    Node* pp = pred.get();
    return make_op(Tensor::scalar(loss), {pred}, [pp, target](Node& self) {
        const double g = self.grad[0];
        Tensor& gp = pp->ensure_grad();
        for (int i = 0; i < gp.numel(); ++i) gp[i] += g * 2.0 * (pp->value[i] - target[i]);
        pp->grad_accumulated = true;
    });
}

Var replace_rows(const Tensor& base, const std::vector<int>& rows, const Var& row_vec) {
    require(base.ndim() == 2, "replace_rows: base must be [T, C]");
    require(row_vec->value.ndim() == 2 && row_vec->value.rows() == 1 &&
                row_vec->value.cols() == base.cols(),
            "replace_rows: row vector must be [1, C]");
    const int c = base.cols();
    std::vector<int> unique_rows = rows;
    std::sort(unique_rows.begin(), unique_rows.end());
    unique_rows.erase(std::unique(unique_rows.begin(), unique_rows.end()), unique_rows.end());
    Tensor out = base;
    for (int r : unique_rows) {
        require(r >= 0 && r < base.rows(), "replace_rows: row index out of range");
        for (int j = 0; j < c; ++j) {
            out.at2(r, j) = row_vec->value[j];
        }
    }
    Node* pv = row_vec.get();
    return make_op(std::move(out), {row_vec}, [pv, unique_rows, c](Node& self) {
        Tensor& gv = pv->ensure_grad();
        for (int r : unique_rows) {
            for (int j = 0; j < c; ++j) {
                gv[j] += self.grad.at2(r, j);
            }
        }
        pv->grad_accumulated = true;
    });
}

Var gather_rows(const Var& x, const std::vector<int>& rows) {
    require(x->value.ndim() == 2, "gather_rows: input must be [T, C]");
    const int c = x->value.cols();
    Tensor out({static_cast<int>(rows.size()), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < x->value.rows(),
                "gather_rows: row index out of range");
        for (int j = 0; j < c; ++j) {
            out.at2(static_cast<int>(i), j) = x->value.at2(rows[i], j);
        }
    }
    Node* px = x.get();
    return make_op(std::move(out), {x}, [px, rows, c](Node& self) {
        Tensor& gx = px->ensure_grad();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (int j = 0; j < c; ++j) {
                gx.at2(rows[i], j) += self.grad.at2(static_cast<int>(i), j);
            }
        }
        px->grad_accumulated = true;
    });
}

}  // namespace ts2::numcore
