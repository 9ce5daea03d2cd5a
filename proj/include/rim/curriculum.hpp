#pragma once

// Supervision schedules and loss assembly.
//
// Stage 1 anneals per-readout weights with lambda_t(p) = max(0, 1 - p*T/t):
// every readout starts at weight 1, earlier readouts fade out first, and at
// the end of the stage (p = 1) even the final readout reaches 0.  Stage 2
// weights the K answer readouts with alpha_k = k / sum_j j (strictly
// increasing, summing to 1), or uniformly.
//
// Loss reduction: token-mean within a readout span, weighted sum across
// readouts per sample, mean across the batch (the trainer divides by batch
// size).  A sum-within-span variant is kept behind TokenReduction::sum.

#include <vector>

#include "rim/layout.hpp"
#include "rim/model.hpp"

namespace rim {

/// Annealing policies: linear_relative fades against the sample's own T
/// (default); absolute fades against a corpus-wide max T, which removes
/// supervision early for short samples (kept for the ablation); constant
/// skips annealing entirely.
enum class Stage1Policy { linear_relative, constant, absolute };
Stage1Policy stage1_policy_from_string(const std::string& name);

double stage1_lambda(int t, int t_total, double progress);
std::vector<double> stage2_alpha(int k_blocks, bool uniform = false);  // [0] = alpha_1

/// Per-readout weights for one layout (1-based readout index -> weights[t-1]).
/// t_max is the annealing horizon for the absolute policy (ignored otherwise).
std::vector<double> stage1_weights(const SequenceLayout& layout, double progress,
                                   Stage1Policy policy = Stage1Policy::linear_relative,
                                   int t_max = 0);
std::vector<double> stage2_weights(const SequenceLayout& layout, bool uniform = false);
std::vector<double> single_span_weights();  // SFT / coconut: one span, weight 1

/// Coconut curriculum: stage j replaces the first j reasoning steps with
/// j * thoughts_per_step continuous thoughts; stage 0 (optional) is plain
/// CoT training with no thoughts.
struct CoconutStage {
    int stage = 0;
    int epochs = 0;
    int n_thoughts = 0;        // injected positions per sample (j * c)
    int n_steps_replaced = 0;  // j (clamped per sample to its own T)
};
std::vector<CoconutStage> coconut_stage_plan(int max_stages, int thoughts_per_step,
                                             int epochs_per_stage, bool with_stage0);

enum class TokenReduction { mean, sum };

struct ReadoutLoss {
    int readout = 0;
    double weight = 0;
    double mean_nll = 0;
    int tokens = 0;
};

struct LossBreakdown {
    double total = 0;  // sum_t weight_t * reduced NLL of span t
    std::vector<ReadoutLoss> per_readout;
    double sum_nll = 0;  // unweighted, over all supervised tokens
    int n_tokens = 0;
};

template <class S>
struct LossResult {
    LossBreakdown breakdown;
    Mat<S> dlogits;  // d total / d logits, column-aligned with the input
};

/// logits columns must align with `slots` (the layout's supervised slots).
/// readout_weights[t-1] scales span t; spans with zero weight contribute
/// exactly zero loss and exactly zero gradient.
template <class S>
LossResult<S> weighted_readout_loss(const Mat<S>& logits, const std::vector<int>& slots,
                                    const SequenceLayout& layout,
                                    const std::vector<double>& readout_weights,
                                    TokenReduction reduction = TokenReduction::mean);

extern template LossResult<float> weighted_readout_loss<float>(
    const Mat<float>&, const std::vector<int>&, const SequenceLayout&,
    const std::vector<double>&, TokenReduction);
extern template LossResult<double> weighted_readout_loss<double>(
    const Mat<double>&, const std::vector<int>&, const SequenceLayout&,
    const std::vector<double>&, TokenReduction);

}  // namespace rim
