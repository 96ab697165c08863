// SPDX-License-Identifier: Apache-2.0

#include "ts2/ctc/ctc.hpp"

#include <cmath>
#include <limits>

#include "ts2/common/error.hpp"
#include "ts2/numcore/ops.hpp"

namespace ts2::ctc {

namespace {

constexpr double k_neg_inf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
    if (a == k_neg_inf) return b;
    if (b == k_neg_inf) return a;
    const double m = a > b ? a : b;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double lse3(double a, double b, double c) { return lse2(lse2(a, b), c); }

void validate_inputs(const numcore::Tensor& log_probs, const units::UnitSeq& target) {
    numcore::require(log_probs.ndim() == 2 && log_probs.cols() >= 2,
                     "ctc: log_probs must be [T, V+1], got " + log_probs.shape_str());
    const int v = log_probs.cols() - 1;
    for (int r = 0; r < log_probs.rows(); ++r) {
        double m = k_neg_inf;
        for (int j = 0; j <= v; ++j) m = std::max(m, log_probs.at2(r, j));
        double z = 0.0;
        for (int j = 0; j <= v; ++j) z += std::exp(log_probs.at2(r, j) - m);
        if (std::fabs(m + std::log(z)) > 1e-3)
            throw UsageError("ctc: log_probs row " + std::to_string(r) +
                             " is not a log-distribution");
    }
    for (int tok : target) {
        if (tok < 0 || tok >= v)
            throw UsageError("ctc: target token " + std::to_string(tok) +
                             " outside unit vocabulary of size " + std::to_string(v));
    }
}

}  // namespace

CtcResult ctc_loss(const numcore::Tensor& log_probs, const units::UnitSeq& target,
                   bool want_grad) {
    validate_inputs(log_probs, target);
    const int t_len = log_probs.rows();
    const int blank = log_probs.cols() - 1;
    const int l = static_cast<int>(target.size());
    const int s_len = 2 * l + 1;

    // Extended target: blank, y1, blank, y2, ..., yL, blank.
    std::vector<int> ext(static_cast<std::size_t>(s_len), blank);
    for (int i = 0; i < l; ++i) ext[static_cast<std::size_t>(2 * i + 1)] = target[i];

    auto lp = [&](int t, int s) { return log_probs.at2(t, ext[static_cast<std::size_t>(s)]); };
    auto skip_allowed = [&](int s) {
        return ext[static_cast<std::size_t>(s)] != blank && s >= 2 &&
               ext[static_cast<std::size_t>(s)] != ext[static_cast<std::size_t>(s - 2)];
    };

    CtcResult out;
    if (t_len == 0) {
        out.loss = l == 0 ? 0.0 : std::numeric_limits<double>::infinity();
        return out;
    }

    // Forward variable: alpha[t][s] includes the emission at t.
    std::vector<std::vector<double>> alpha(
        static_cast<std::size_t>(t_len), std::vector<double>(static_cast<std::size_t>(s_len), k_neg_inf));
    alpha[0][0] = lp(0, 0);
    if (s_len > 1) alpha[0][1] = lp(0, 1);
    for (int t = 1; t < t_len; ++t) {
        for (int s = 0; s < s_len; ++s) {
            double stay = alpha[t - 1][s];
            double step = s >= 1 ? alpha[t - 1][s - 1] : k_neg_inf;
            double skip = skip_allowed(s) ? alpha[t - 1][s - 2] : k_neg_inf;
            const double in = lse3(stay, step, skip);
            alpha[t][s] = in == k_neg_inf ? k_neg_inf : in + lp(t, s);
        }
    }

    const double log_p = s_len > 1 ? lse2(alpha[t_len - 1][s_len - 1], alpha[t_len - 1][s_len - 2])
                                   : alpha[t_len - 1][s_len - 1];
    if (log_p == k_neg_inf) {
        out.loss = std::numeric_limits<double>::infinity();
        return out;
    }
    out.loss = -log_p;
    if (!want_grad) return out;

    // Backward variable: beta[t][s] also includes the emission at t.
    std::vector<std::vector<double>> beta(
        static_cast<std::size_t>(t_len), std::vector<double>(static_cast<std::size_t>(s_len), k_neg_inf));
    beta[t_len - 1][s_len - 1] = lp(t_len - 1, s_len - 1);
    if (s_len > 1) beta[t_len - 1][s_len - 2] = lp(t_len - 1, s_len - 2);
    for (int t = t_len - 2; t >= 0; --t) {
        for (int s = s_len - 1; s >= 0; --s) {
            double stay = beta[t + 1][s];
            double step = s + 1 < s_len ? beta[t + 1][s + 1] : k_neg_inf;
            double skip = s + 2 < s_len && skip_allowed(s + 2) ? beta[t + 1][s + 2] : k_neg_inf;
            const double next = lse3(stay, step, skip);
            beta[t][s] = next == k_neg_inf ? k_neg_inf : next + lp(t, s);
        }
    }

    // dLoss/dlog_p(t, k) = -(1/P) * sum over extended states s labeled k of
    // alpha*beta/p(t,k); accumulate the logsumexp per (t, symbol).
    out.grad = numcore::Tensor(log_probs.shape());
    for (int t = 0; t < t_len; ++t) {
        std::vector<double> acc(static_cast<std::size_t>(blank + 1), k_neg_inf);
        for (int s = 0; s < s_len; ++s) {
            if (alpha[t][s] == k_neg_inf || beta[t][s] == k_neg_inf) continue;
            const int sym = ext[static_cast<std::size_t>(s)];
            acc[static_cast<std::size_t>(sym)] =
                lse2(acc[static_cast<std::size_t>(sym)], alpha[t][s] + beta[t][s] - lp(t, s));
        }
        for (int k = 0; k <= blank; ++k) {
            const double a = acc[static_cast<std::size_t>(k)];
            out.grad.at2(t, k) = a == k_neg_inf ? 0.0 : -std::exp(a - log_p);
        }
    }
    return out;
}

double ctc_brute_force(const numcore::Tensor& log_probs, const units::UnitSeq& target) {
    numcore::require(log_probs.ndim() == 2, "ctc_brute_force: log_probs must be 2-D");
    const int t_len = log_probs.rows();
    const int symbols = log_probs.cols();
    const int blank = symbols - 1;
    if (t_len > 8 || symbols - 1 > 5)
        throw UsageError("ctc_brute_force: instance too large (T <= 8, V <= 5)");

    double total = 0.0;
    std::vector<int> path(static_cast<std::size_t>(t_len), 0);
    for (;;) {
        // Collapse adjacent repeats, then drop blanks.
        units::UnitSeq collapsed;
        int prev = -1;
        for (int sym : path) {
            if (sym != prev && sym != blank) collapsed.push_back(sym);
            prev = sym;
        }
        if (collapsed == target) {
            double lp_path = 0.0;
            for (int t = 0; t < t_len; ++t) lp_path += log_probs.at2(t, path[static_cast<std::size_t>(t)]);
            total += std::exp(lp_path);
        }
        // Odometer increment over the (V+1)^T label space.
        int pos = t_len - 1;
        while (pos >= 0) {
            if (++path[static_cast<std::size_t>(pos)] <= blank) break;
            path[static_cast<std::size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return total;
}

units::UnitSeq best_path_decode(const numcore::Tensor& log_probs) {
    if (log_probs.empty()) return {};
    numcore::require(log_probs.ndim() == 2, "best_path_decode: log_probs must be 2-D");
    const int t_len = log_probs.rows();
    const int blank = log_probs.cols() - 1;
    units::UnitSeq out;
    int prev = -1;
    for (int t = 0; t < t_len; ++t) {
        int best = 0;
        for (int j = 1; j <= blank; ++j)
            if (log_probs.at2(t, j) > log_probs.at2(t, best)) best = j;
        if (best != prev && best != blank) out.push_back(best);
        prev = best;
    }
    return out;
}

numcore::Var ctc_loss_node(const numcore::Var& log_probs, const units::UnitSeq& target) {
    CtcResult res = ctc_loss(log_probs->value, target, /*want_grad=*/true);
    numcore::Node* parent = log_probs.get();
    return numcore::make_op(
        numcore::Tensor::scalar(res.loss), {log_probs},
        [parent, grad = std::move(res.grad)](numcore::Node& self) {
            if (grad.empty()) return;  // infeasible target: no gradient signal
            const double g = self.grad[0];
            numcore::Tensor& dst = parent->ensure_grad();
            for (int i = 0; i < dst.numel(); ++i) dst[i] += g * grad[i];
            parent->grad_accumulated = true;
        });
}

}  // namespace ts2::ctc
