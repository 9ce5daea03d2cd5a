#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rim/corpus.hpp"
#include "rim/layout.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"

namespace rim {

// ----------------------------------------------------------- matching ----

/// Trim whitespace and normalize decimal surface forms: strip trailing
/// fractional zeros and a bare trailing point, fold "-0" to "0".  Strings
/// that are not plain decimals are returned trimmed but otherwise intact.
std::string canonical_answer(const std::string& s);

/// Exact match after canonicalization; with `numeric` set, values that both
/// parse as numbers compare within `tol` instead.
bool answers_match(const std::string& got, const std::string& gold, bool numeric = false,
                   double tol = 1e-9);

// ------------------------------------------------------------- reports ----

enum class EvalMode { rim, sft, sft_cot, coconut };

EvalMode eval_mode_from_string(const std::string& name);
std::string eval_mode_name(EvalMode mode);

struct EvalConfig {
    int k_blocks = 8;   // memory blocks (rim)
    int memory_m = 2;   // latents per block (rim)
    MaskConfig mask;
    int decode_budget = 48;       // generated tokens per readout / direct answer
    int cot_decode_budget = 256;  // generated tokens when a trace precedes the answer
    int coconut_thoughts = 0;     // continuous thoughts at inference (coconut)
    int coconut_hidden_layer = -1;  // injection source layer; -1 = last
    bool numeric_match = false;
    uint64_t seed = 0;  // sampling draws (pass@k)
};

struct ReadoutResult {
    int sample_id = 0;
    std::vector<std::string> answers;  // decoded per block (size 1 outside rim)
    std::string gold;
    std::vector<bool> correct;
    int stream_forwards = 0;  // sequential (non-decode) forward passes
    int decode_steps = 0;     // greedily generated tokens, eos included
};

struct EvalCounters {
    long long stream_forwards = 0;
    long long decode_steps = 0;
    int per_sample_stream_min = 0;
    int per_sample_stream_max = 0;
};

struct EvalReport {
    double final_block_acc = 0.0;
    double best_block_acc = 0.0;  // max over a single fixed block index
    double any_block_acc = 0.0;
    std::vector<double> per_block_acc;
    double pass_at_k = -1.0;  // filled by pass_at_k runs only
    int best_block = 1;       // 1-based argmax of per_block_acc (earliest tie)
    int n_samples = 0;
};

struct EvalOutput {
    EvalReport report;
    std::vector<ReadoutResult> results;
    EvalCounters counters;
};

// ---------------------------------------------------------- protocols ----

/// Combined masked pass over question + K blocks (one stream forward per
/// sample), then each readout branch decoded greedily with the answer
/// prefix forced.  Budget exhaustion counts as incorrect.
EvalOutput evaluate_readouts(Model<float>& model, const Vocabulary& vocab,
                             const std::vector<Sample>& dataset, const EvalConfig& cfg);

/// Direct greedy decode from the question (trace + answer when with_cot).
EvalOutput evaluate_sft(Model<float>& model, const Vocabulary& vocab,
                        const std::vector<Sample>& dataset, const EvalConfig& cfg,
                        bool with_cot);

/// Question pass, `coconut_thoughts` sequential hidden-state injections,
/// then greedy decode of the continuation.
EvalOutput evaluate_coconut(Model<float>& model, const Vocabulary& vocab,
                            const std::vector<Sample>& dataset, const EvalConfig& cfg);

/// Mode dispatch over the three protocols above.
EvalOutput evaluate(Model<float>& model, const Vocabulary& vocab,
                    const std::vector<Sample>& dataset, const EvalConfig& cfg, EvalMode mode);

/// Per-sample greedy correctness on the decode stream used for model
/// selection: final-block readout for rim, the direct decode otherwise.
std::vector<uint8_t> greedy_flags(Model<float>& model, const Vocabulary& vocab,
                                  const std::vector<Sample>& dataset, const EvalConfig& cfg,
                                  EvalMode mode);

// ------------------------------------------------------------- pass@k ----

struct PassAtKResult {
    std::vector<double> rate_at;  // pass@j for j = 1..k over nested draws
    double rate = 0.0;            // pass@k
    int k = 0;
    double temperature = 1.0;
};

/// k temperature-sampled decodes per sample (final-block stream for rim);
/// a sample passes at j if any of its first j draws matches gold.
PassAtKResult pass_at_k(Model<float>& model, const Vocabulary& vocab,
                        const std::vector<Sample>& dataset, const EvalConfig& cfg,
                        EvalMode mode, int k = 8, double temperature = 1.0);

// --------------------------------------------------------- transitions ----

struct TransitionReport {
    // entry i describes block i+2 (transitions need a predecessor)
    std::vector<long long> to_correct;
    std::vector<long long> to_incorrect;
    std::vector<long long> net_cumulative;  // correct at block k minus correct at block 1
    int k_blocks = 0;
    int n_samples = 0;
};

TransitionReport answer_transitions(const std::vector<ReadoutResult>& results);

// -------------------------------------------------------------- sweeps ----

struct SweepCell {
    int memory_m = 0;
    int k_blocks = 0;
    double final_block_acc = 0.0;
    bool skipped = false;
    std::string note;
};

/// Final-block accuracy over the (M, K) grid; cells whose layouts exceed
/// the model's position budget are skipped with a note.
std::vector<SweepCell> budget_sweep(Model<float>& model, const Vocabulary& vocab,
                                    const std::vector<Sample>& dataset, const EvalConfig& cfg,
                                    const std::vector<int>& m_values,
                                    const std::vector<int>& k_values);

// ---------------------------------------------------------- selection ----

struct CheckpointSelection {
    std::vector<int> chosen;            // checkpoint index per repeat
    std::vector<double> repeat_acc;     // reporting-set accuracy per repeat
    double mean_acc = 0.0;
    double std_error = 0.0;
};

/// Per repeat, draw a seeded `split_size` subset of the selection pool,
/// pick the checkpoint with the highest greedy accuracy on it (earliest
/// wins ties), and score it on the reporting set.  The pool and reporting
/// set must be disjoint by question.
CheckpointSelection select_checkpoint(const std::vector<std::string>& checkpoint_paths,
                                      const Vocabulary& vocab,
                                      const std::vector<Sample>& selection_pool,
                                      const std::vector<Sample>& reporting_set,
                                      const EvalConfig& cfg, EvalMode mode, int repeats,
                                      int split_size, uint64_t seed);

// ----------------------------------------------------------------- csv ----

std::string eval_report_csv(const EvalReport& report);
std::string transitions_csv(const TransitionReport& report);
std::string sweep_csv(const std::vector<SweepCell>& cells);
std::string selection_csv(const CheckpointSelection& sel,
                          const std::vector<std::string>& checkpoint_paths);
std::string readouts_csv(const std::vector<ReadoutResult>& results);

}  // namespace rim
