#pragma once

// Block-causal attention mask over a SequenceLayout.
//
// Rules (query -> key):
//   question  : earlier question tokens only (causal prefix)
//   memory k  : all question tokens, all of blocks < k, and block k itself
//               causally (or fully, with block_bidirectional)
//   readout t : the question (if readout_sees_question), all of blocks <= t,
//               and its own branch causally
// The diagonal is always allowed; no query ever attends another branch's
// tokens, and no question/memory query attends any readout key.

#include <cstdint>
#include <string>
#include <vector>

#include "rim/layout.hpp"

namespace rim {

struct MaskConfig {
    bool block_bidirectional = false;   // <m> tokens see the whole own block
    bool readout_sees_question = true;  // branches may attend the question
};

class AttentionMask {
public:
    AttentionMask() = default;
    explicit AttentionMask(int n) : n_(n), allow_(static_cast<size_t>(n) * n, 0) {}

    int size() const { return n_; }
    bool at(int q, int k) const { return allow_[static_cast<size_t>(q) * n_ + k] != 0; }
    void set(int q, int k, bool v) { allow_[static_cast<size_t>(q) * n_ + k] = v ? 1 : 0; }

private:
    int n_ = 0;
    std::vector<uint8_t> allow_;
};

AttentionMask build_mask(const SequenceLayout& layout, const MaskConfig& config);

/// Independent re-derivation of the rule table, pair by pair; throws with
/// the first offending (query, key) if the mask disagrees.
void validate_mask(const AttentionMask& mask, const SequenceLayout& layout,
                   const MaskConfig& config);

/// Transitive closure of the attends-to relation (reflexive).  reach(q, k)
/// true iff information at k can flow into q through any chain of
/// attention edges.
AttentionMask reachability_closure(const AttentionMask& mask);

/// Throws if any readout branch is reachable from another branch or from a
/// question/memory slot (information leakage between alternative futures).
void check_no_branch_leakage(const AttentionMask& closure, const SequenceLayout& layout);

/// 'x'/'.' grid, queries as rows; matches the layout's buffer order.
std::string mask_to_text(const AttentionMask& mask);

/// Key set for one decoded branch token at runtime: buffer slots the token
/// may attend, given the branch it extends (block t) plus the already
/// emitted branch tokens.  `n_stream` is the memory-stream length.
std::vector<uint8_t> decode_key_allow(const SequenceLayout& stream_layout, int n_stream,
                                      int block, int n_branch_before, const MaskConfig& config);

}  // namespace rim
