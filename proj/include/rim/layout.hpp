#pragma once

// Sequence layouts: how questions, memory blocks and readout branches are
// arranged into one token buffer for training and inference.
//
// A memory block is [<b>, M x <m>, </b>].  The memory stream (question +
// blocks) takes contiguous logical positions; a readout branch after block t
// restarts at the position right after block t's end, so branches of
// different blocks reuse position ids.  That makes the combined
// teacher-forced pass position-identical to sequential inference, where
// branches are decoded one at a time and rolled back.
//
// Supervision bookkeeping: targets[i] is the token the *output* at buffer
// slot i should predict (-1 if unsupervised) and target_readout[i] names the
// readout index whose curriculum weight applies.

#include <cstdint>
#include <string>
#include <vector>

#include "rim/vocab.hpp"

namespace rim {

enum class SegmentKind : uint8_t { question, memory, readout };

struct SequenceLayout {
    std::vector<TokenId> tokens;       // inputs, buffer order
    std::vector<int> positions;        // logical position ids
    std::vector<SegmentKind> kind;     // per slot
    std::vector<int> seg_index;        // question: 0; memory block k; readout t
    std::vector<TokenId> targets;      // -1 where unsupervised
    std::vector<int> target_readout;   // readout weight index; -1 where unsupervised

    int n_question = 0;
    int n_blocks = 0;   // memory blocks (stage 1: T, stage 2: K, coconut: n thoughts)
    int memory_m = 0;   // latent tokens per block (0 when no blocks)

    int size() const { return static_cast<int>(tokens.size()); }
    int max_position() const;

    std::vector<int> block_slots(int k) const;          // buffer slots of memory block k
    std::vector<int> branch_slots(int t) const;         // buffer slots of readout branch t
    std::vector<int> supervised_slots() const;          // slots with targets
    int last_latent_slot(int k) const;                  // last <m> of block k
    int n_readouts() const;                             // max target_readout

    std::string dump(const Vocabulary& vocab) const;    // one line per slot, for debugging
};

/// Sample pre-tokenized into the pieces layouts are assembled from.
struct TokenizedSample {
    std::vector<TokenId> question;
    std::vector<std::vector<TokenId>> steps;         // step t: spaceless form (branch content)
    std::vector<std::vector<TokenId>> steps_spaced;  // " <<..." form (CoT surface)
    AnswerSegment answer;                            // includes trailing <eos>
};

struct Sample;
TokenizedSample tokenize_sample(const Vocabulary& vocab, const Sample& sample);

/// Stage 1: one block per reasoning step (T blocks); the branch after block
/// t teacher-forces step t+1, the branch after block T forces the answer
/// segment.  Step 1 is never a target.
SequenceLayout build_stage1_layout(const Vocabulary& vocab, const TokenizedSample& s, int m);

/// Stage 2: K blocks independent of T; every branch forces the answer.
SequenceLayout build_stage2_layout(const Vocabulary& vocab, const TokenizedSample& s, int k,
                                   int m);

/// Memory stream only (question + K blocks); branches are decoded at runtime.
SequenceLayout build_inference_layout(const Vocabulary& vocab,
                                      const std::vector<TokenId>& question, int k, int m);

/// Plain causal: question then (optionally the CoT steps and) the answer
/// segment, supervised from the first continuation token onward.
SequenceLayout build_sft_layout(const Vocabulary& vocab, const TokenizedSample& s,
                                bool with_cot);

/// Coconut-style: question, n_thoughts placeholder slots whose inputs are
/// injected hidden states, then the remaining steps (those not replaced by
/// thoughts) and the answer, supervised from the last thought onward.
SequenceLayout build_coconut_layout(const Vocabulary& vocab, const TokenizedSample& s,
                                    int n_thoughts, int n_steps_replaced);

}  // namespace rim
