#pragma once

// Training loops: the SFT baselines, Stage 1 and Stage 2 of the memory-block
// curriculum, and the Coconut baseline with injected continuous thoughts.
//
// Batches run as per-sample teacher-forced sessions with gradients
// accumulated serially (scaled by 1/batch), so results are deterministic for
// a fixed seed and independent of any padding scheme.  The optimizer is
// AdamW (beta 0.9/0.999, eps 1e-8, decoupled decay on matrices only) under a
// linear-warmup-then-constant schedule.  Every optimizer step appends to
// metrics.csv; every diagnostics_every steps the latent-geometry diagnostics
// and per-readout loss breakdown are recorded; checkpoints are written at a
// configurable step cadence and at stage end.

#include <cstdint>
#include <string>
#include <vector>

#include "rim/corpus.hpp"
#include "rim/curriculum.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"
#include "rim/vocab.hpp"

namespace rim {

struct TrainConfig {
    double learning_rate = 1e-3;
    double warmup_fraction = 0.04;  // of the stage's total optimizer steps
    double weight_decay = 0.01;
    int batch_size = 128;
    int stage1_epochs = 6;
    int stage2_epochs = 2;
    double stage2_learning_rate = 0.0;  // 0 = 0.3 * learning_rate
    double stage2_dropout = 0.1;
    uint64_t seed = 0;
    bool embedding_partition = false;  // base-vocab embedding columns frozen at init
    int adapter_rank = 0;              // recorded; applied at model init

    int memory_m = 2;   // latent tokens per block
    int k_blocks = 8;   // stage-2 block count
    Stage1Policy stage1_policy = Stage1Policy::linear_relative;
    int stage1_t_max = 0;       // annealing horizon for the absolute policy
    bool stage2_uniform = false;
    TokenReduction token_reduction = TokenReduction::mean;
    MaskConfig mask;
    int coconut_hidden_layer = -1;  // layer fed back as the next thought; -1 = last

    int diagnostics_every = 100;  // optimizer steps
    int checkpoint_every = 0;     // optimizer steps; 0 = stage end only

    void validate() const;
    double stage2_lr() const {
        return stage2_learning_rate > 0 ? stage2_learning_rate : 0.3 * learning_rate;
    }
    std::string dump() const;  // sorted key = value lines
    uint64_t hash() const;
};

// ------------------------------------------------------------ optimizer ----

/// AdamW over the model's trainable tensors.  Decoupled weight decay applies
/// to matrices (cols > 1); bias/norm vectors are exempt.  Frozen leading
/// embedding columns are never touched.
class AdamW {
public:
    AdamW(Model<float>& model, double learning_rate, double weight_decay);

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }
    int64_t steps() const { return t_; }

    void step();   // consumes model grads (does not zero them)
    void reset();  // zero moments and the step count

    // exposed for the stage-switch contract tests
    const std::vector<Mat<float>>& first_moments() const { return m_; }
    const std::vector<Mat<float>>& second_moments() const { return v_; }

private:
    Model<float>& model_;
    double lr_;
    double wd_;
    int64_t t_ = 0;
    std::vector<Mat<float>> m_, v_;  // zero-sized for non-trainable tensors
};

/// Stage switch: optimizer moments and step count cleared (fresh warmup),
/// stage-2 learning rate and dropout applied; parameters untouched.
void switch_stage(AdamW& opt, Model<float>& model, const TrainConfig& cfg);

/// Linear warmup then constant: step s (1-based) below the span scales the
/// rate by s/span.  span = floor(warmup_fraction * total_steps).
double warmup_lr(double base_lr, int64_t step, int64_t warmup_span);

// ---------------------------------------------------------- diagnostics ----

struct DiagnosticsRecord {
    int64_t step = 0;
    double within_block_cosine = 0;  // mean pairwise cosine inside a block
    double adjacent_cosine = 0;      // consecutive latents along the stream
    double latent_norm = 0;          // mean Euclidean norm
    double effective_rank = 0;       // exp(entropy of normalized singular values)
    double train_perplexity = 0;     // exp(token-mean NLL), filled by the loop
};

/// latents: one (dim x n_latents) matrix per sample, columns in stream
/// order, grouped in blocks of m.  Samples with no latents are skipped.
DiagnosticsRecord compute_diagnostics(const std::vector<Mat<float>>& latents, int m);

// ---------------------------------------------------------------- loops ----

struct TrainReport {
    std::vector<std::string> checkpoints;  // paths in save order
    int64_t steps = 0;                     // optimizer steps run
    double final_loss = 0;                 // last batch's weighted loss
    double final_train_perplexity = 0;     // last batch's token perplexity
};

TrainReport train_sft(Model<float>& model, const Vocabulary& vocab,
                      const std::vector<Sample>& corpus, const TrainConfig& cfg,
                      bool with_cot, int epochs, const std::string& out_dir);

TrainReport train_stage1(Model<float>& model, const Vocabulary& vocab,
                         const std::vector<Sample>& corpus, const TrainConfig& cfg,
                         const std::string& out_dir);

/// Runs the stage switch against a fresh optimizer, then Stage 2 with K
/// fixed blocks.  Loading the Stage-1 checkpoint is the caller's job.
TrainReport train_stage2(Model<float>& model, const Vocabulary& vocab,
                         const std::vector<Sample>& corpus, const TrainConfig& cfg,
                         const std::string& out_dir);

TrainReport train_coconut(Model<float>& model, const Vocabulary& vocab,
                          const std::vector<Sample>& corpus, const TrainConfig& cfg,
                          const std::vector<CoconutStage>& plan, const std::string& out_dir);

}  // namespace rim
