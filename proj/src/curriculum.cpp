#include "rim/curriculum.hpp"

#include <algorithm>

#include "rim/common.hpp"

namespace rim {

Stage1Policy stage1_policy_from_string(const std::string& name) {
    if (name == "linear-relative") return Stage1Policy::linear_relative;
    if (name == "constant") return Stage1Policy::constant;
    if (name == "absolute") return Stage1Policy::absolute;
    fail("unknown stage-1 schedule policy '" + name + "'");
}

double stage1_lambda(int t, int t_total, double progress) {
    check(t >= 1 && t <= t_total, "stage1_lambda: readout index out of range");
    check(progress >= 0.0 && progress <= 1.0, "stage1_lambda: progress must be in [0, 1]");
    const double v = 1.0 - progress * static_cast<double>(t_total) / static_cast<double>(t);
    return std::max(0.0, v);
}

std::vector<double> stage2_alpha(int k_blocks, bool uniform) {
    check(k_blocks >= 1, "stage2_alpha: need at least one block");
    std::vector<double> out(static_cast<size_t>(k_blocks));
    if (uniform) {
        std::fill(out.begin(), out.end(), 1.0 / k_blocks);
        return out;
    }
    const double denom = 0.5 * k_blocks * (k_blocks + 1);
    for (int k = 1; k <= k_blocks; ++k) out[static_cast<size_t>(k - 1)] = k / denom;
    return out;
}

std::vector<double> stage1_weights(const SequenceLayout& layout, double progress,
                                   Stage1Policy policy, int t_max) {
    const int t_total = layout.n_readouts();
    check(t_total >= 1, "stage1_weights: layout has no readouts");
    std::vector<double> out(static_cast<size_t>(t_total));
    for (int t = 1; t <= t_total; ++t) {
        double w = 1.0;
        switch (policy) {
            case Stage1Policy::linear_relative: w = stage1_lambda(t, t_total, progress); break;
            case Stage1Policy::constant: w = 1.0; break;
            case Stage1Policy::absolute:
                check(t_max >= t_total, "stage1_weights: absolute policy needs t_max >= T");
                w = stage1_lambda(t, t_max, progress);
                break;
        }
        out[static_cast<size_t>(t - 1)] = w;
    }
    return out;
}

std::vector<CoconutStage> coconut_stage_plan(int max_stages, int thoughts_per_step,
                                             int epochs_per_stage, bool with_stage0) {
    check(max_stages >= 1, "coconut_stage_plan: need at least one stage");
    check(thoughts_per_step >= 0, "coconut_stage_plan: negative thought count");
    check(epochs_per_stage >= 1, "coconut_stage_plan: need at least one epoch per stage");
    std::vector<CoconutStage> plan;
    if (with_stage0) plan.push_back({0, epochs_per_stage, 0, 0});
    for (int j = 1; j <= max_stages; ++j) {
        plan.push_back({j, epochs_per_stage, j * thoughts_per_step, j});
    }
    return plan;
}

std::vector<double> stage2_weights(const SequenceLayout& layout, bool uniform) {
    const int k = layout.n_readouts();
    check(k >= 1, "stage2_weights: layout has no readouts");
    return stage2_alpha(k, uniform);
}

std::vector<double> single_span_weights() { return {1.0}; }

template <class S>
LossResult<S> weighted_readout_loss(const Mat<S>& logits, const std::vector<int>& slots,
                                    const SequenceLayout& layout,
                                    const std::vector<double>& readout_weights,
                                    TokenReduction reduction) {
    check(logits.cols() == static_cast<Eigen::Index>(slots.size()),
          "weighted_readout_loss: logits/slots mismatch");
    const int n_spans = layout.n_readouts();
    check(static_cast<int>(readout_weights.size()) == n_spans,
          "weighted_readout_loss: weights size != number of readouts");

    // token counts per span
    std::vector<int> span_tokens(static_cast<size_t>(n_spans), 0);
    for (int slot : slots) {
        const int t = layout.target_readout[slot];
        check(t >= 1 && t <= n_spans, "weighted_readout_loss: slot without readout index");
        span_tokens[static_cast<size_t>(t - 1)] += 1;
    }

    LossResult<S> result;
    result.dlogits.setZero(logits.rows(), logits.cols());
    std::vector<double> span_nll(static_cast<size_t>(n_spans), 0.0);

    for (size_t i = 0; i < slots.size(); ++i) {
        const int slot = slots[i];
        const int t = layout.target_readout[slot];
        const TokenId target = layout.targets[slot];
        check(target >= 0 && target < logits.rows(),
              "weighted_readout_loss: bad target at slot " + std::to_string(slot));
        const Vec<S> col = logits.col(static_cast<Eigen::Index>(i));
        const S nll = log_softmax_nll(col, target);
        span_nll[static_cast<size_t>(t - 1)] += static_cast<double>(nll);
        result.breakdown.sum_nll += static_cast<double>(nll);
        result.breakdown.n_tokens += 1;

        const double w = readout_weights[static_cast<size_t>(t - 1)];
        const double denom =
            reduction == TokenReduction::mean ? span_tokens[static_cast<size_t>(t - 1)] : 1.0;
        const S coeff = static_cast<S>(w / denom);
        // (softmax - onehot) * coeff; exactly zero when the span weight is zero
        Vec<S> p = softmax_vec(col);
        p(target) -= static_cast<S>(1);
        result.dlogits.col(static_cast<Eigen::Index>(i)) = p * coeff;
    }

    for (int t = 1; t <= n_spans; ++t) {
        const int n = span_tokens[static_cast<size_t>(t - 1)];
        if (n == 0) continue;
        ReadoutLoss rl;
        rl.readout = t;
        rl.weight = readout_weights[static_cast<size_t>(t - 1)];
        rl.mean_nll = span_nll[static_cast<size_t>(t - 1)] / n;
        rl.tokens = n;
        result.breakdown.per_readout.push_back(rl);
        const double reduced = reduction == TokenReduction::mean
                                   ? rl.mean_nll
                                   : span_nll[static_cast<size_t>(t - 1)];
        result.breakdown.total += rl.weight * reduced;
    }
    return result;
}

template LossResult<float> weighted_readout_loss<float>(const Mat<float>&,
                                                        const std::vector<int>&,
                                                        const SequenceLayout&,
                                                        const std::vector<double>&,
                                                        TokenReduction);
template LossResult<double> weighted_readout_loss<double>(const Mat<double>&,
                                                          const std::vector<int>&,
                                                          const SequenceLayout&,
                                                          const std::vector<double>&,
                                                          TokenReduction);

}  // namespace rim
