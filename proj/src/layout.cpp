#include "rim/layout.hpp"

#include <algorithm>
#include <cstdio>

#include "rim/common.hpp"
#include "rim/corpus.hpp"

namespace rim {

int SequenceLayout::max_position() const {
    int best = -1;
    for (int p : positions) best = std::max(best, p);
    return best;
}

std::vector<int> SequenceLayout::block_slots(int k) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (kind[i] == SegmentKind::memory && seg_index[i] == k) out.push_back(i);
    }
    return out;
}

std::vector<int> SequenceLayout::branch_slots(int t) const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (kind[i] == SegmentKind::readout && seg_index[i] == t) out.push_back(i);
    }
    return out;
}

std::vector<int> SequenceLayout::supervised_slots() const {
    std::vector<int> out;
    for (int i = 0; i < size(); ++i) {
        if (targets[i] >= 0) out.push_back(i);
    }
    return out;
}

int SequenceLayout::last_latent_slot(int k) const {
    std::vector<int> slots = block_slots(k);
    check(!slots.empty(), "last_latent_slot: no such block " + std::to_string(k));
    // blocks are [<b>, <m>.., </b>]: the last latent sits before the closer;
    // a single-slot block (coconut thought) is its own latent
    return slots.size() >= 3 ? slots[slots.size() - 2] : slots.back();
}

int SequenceLayout::n_readouts() const {
    int best = 0;
    for (int r : target_readout) best = std::max(best, r);
    return best;
}

std::string SequenceLayout::dump(const Vocabulary& vocab) const {
    std::string out;
    char line[256];
    for (int i = 0; i < size(); ++i) {
        const char* k = kind[i] == SegmentKind::question ? "Q"
                        : kind[i] == SegmentKind::memory ? "M"
                                                         : "R";
        std::string tok = vocab.piece(tokens[i]);
        std::string tgt = targets[i] >= 0 ? vocab.piece(targets[i]) : "-";
        std::snprintf(line, sizeof(line), "%4d pos=%4d %s%-2d '%s' -> '%s' (r=%d)\n", i,
                      positions[i], k, seg_index[i], tok.c_str(), tgt.c_str(),
                      target_readout[i]);
        out += line;
    }
    return out;
}

namespace {

struct Builder {
    SequenceLayout layout;

    void push(TokenId token, int pos, SegmentKind kind, int idx, TokenId target = -1,
              int readout = -1) {
        layout.tokens.push_back(token);
        layout.positions.push_back(pos);
        layout.kind.push_back(kind);
        layout.seg_index.push_back(idx);
        layout.targets.push_back(target);
        layout.target_readout.push_back(readout);
    }

    void push_question(const std::vector<TokenId>& question) {
        check(!question.empty(), "layout: empty question");
        for (size_t i = 0; i < question.size(); ++i) {
            push(question[i], static_cast<int>(i), SegmentKind::question, 0);
        }
        layout.n_question = static_cast<int>(question.size());
    }

    /// One [<b>, m x <m>, </b>] block; returns the position after the block.
    int push_block(const Vocabulary& vocab, int block, int pos, int m) {
        push(vocab.special(SpecialToken::block_open), pos++, SegmentKind::memory, block);
        for (int i = 0; i < m; ++i) {
            push(vocab.special(SpecialToken::latent), pos++, SegmentKind::memory, block);
        }
        push(vocab.special(SpecialToken::block_close), pos++, SegmentKind::memory, block);
        return pos;
    }

    /// Teacher-forced branch after block t: inputs [<r>, content[:-1]],
    /// targets content, positions continuing from the block end.
    void push_branch(const Vocabulary& vocab, int t, int branch_pos,
                     const std::vector<TokenId>& content) {
        check(content.size() >= 1, "layout: empty branch content");
        for (size_t i = 0; i < content.size(); ++i) {
            TokenId input = i == 0 ? vocab.special(SpecialToken::readout) : content[i - 1];
            push(input, branch_pos + static_cast<int>(i), SegmentKind::readout, t, content[i],
                 t);
        }
    }
};

}  // namespace

TokenizedSample tokenize_sample(const Vocabulary& vocab, const Sample& sample) {
    TokenizedSample out;
    out.question = vocab.encode(sample.question);
    for (const std::string& step : sample.steps) {
        out.steps.push_back(vocab.encode(step));
        out.steps_spaced.push_back(vocab.encode(" " + step));
    }
    out.answer = answer_segment(vocab, sample.answer);
    return out;
}

SequenceLayout build_stage1_layout(const Vocabulary& vocab, const TokenizedSample& s, int m) {
    check(m >= 1, "stage1 layout: m must be >= 1");
    check(!s.steps.empty(), "stage1 layout: sample has no steps");
    const int t_steps = static_cast<int>(s.steps.size());

    Builder b;
    b.push_question(s.question);
    int pos = b.layout.n_question;
    for (int t = 1; t <= t_steps; ++t) {
        pos = b.push_block(vocab, t, pos, m);
        // branch after block t forces step t+1; after the last block, the answer
        const std::vector<TokenId>& content =
            t < t_steps ? s.steps[static_cast<size_t>(t)] : s.answer.tokens;
        b.push_branch(vocab, t, pos, content);
    }
    b.layout.n_blocks = t_steps;
    b.layout.memory_m = m;
    return b.layout;
}

SequenceLayout build_stage2_layout(const Vocabulary& vocab, const TokenizedSample& s, int k,
                                   int m) {
    check(k >= 1, "stage2 layout: k must be >= 1");
    check(m >= 1, "stage2 layout: m must be >= 1");

    Builder b;
    b.push_question(s.question);
    int pos = b.layout.n_question;
    for (int block = 1; block <= k; ++block) {
        pos = b.push_block(vocab, block, pos, m);
        b.push_branch(vocab, block, pos, s.answer.tokens);
    }
    b.layout.n_blocks = k;
    b.layout.memory_m = m;
    return b.layout;
}

SequenceLayout build_inference_layout(const Vocabulary& vocab,
                                      const std::vector<TokenId>& question, int k, int m) {
    check(k >= 1, "inference layout: k must be >= 1");
    check(m >= 1, "inference layout: m must be >= 1");

    Builder b;
    b.push_question(question);
    int pos = b.layout.n_question;
    for (int block = 1; block <= k; ++block) pos = b.push_block(vocab, block, pos, m);
    b.layout.n_blocks = k;
    b.layout.memory_m = m;
    return b.layout;
}

namespace {

std::vector<TokenId> continuation_content(const TokenizedSample& s, size_t first_step) {
    std::vector<TokenId> content;
    for (size_t i = first_step; i < s.steps_spaced.size(); ++i) {
        content.insert(content.end(), s.steps_spaced[i].begin(), s.steps_spaced[i].end());
    }
    content.insert(content.end(), s.answer.tokens.begin(), s.answer.tokens.end());
    return content;
}

/// Plain causal continuation: supervise from the last prefix slot onward.
void push_continuation(Builder& b, const std::vector<TokenId>& content, int pos, int seg_idx) {
    check(content.size() >= 2, "layout: continuation too short");
    // the slot before the continuation predicts content[0]
    check(!b.layout.tokens.empty(), "layout: continuation with no prefix");
    b.layout.targets.back() = content[0];
    b.layout.target_readout.back() = 1;
    for (size_t i = 0; i + 1 < content.size(); ++i) {
        b.push(content[i], pos + static_cast<int>(i), SegmentKind::readout, seg_idx,
               content[i + 1], 1);
    }
}

}  // namespace

SequenceLayout build_sft_layout(const Vocabulary& vocab, const TokenizedSample& s,
                                bool with_cot) {
    (void)vocab;
    Builder b;
    b.push_question(s.question);
    std::vector<TokenId> content =
        with_cot ? continuation_content(s, 0) : s.answer.tokens;
    push_continuation(b, content, b.layout.n_question, 1);
    b.layout.n_blocks = 0;
    b.layout.memory_m = 0;
    return b.layout;
}

SequenceLayout build_coconut_layout(const Vocabulary& vocab, const TokenizedSample& s,
                                    int n_thoughts, int n_steps_replaced) {
    check(n_thoughts >= 0, "coconut layout: negative thought count");
    check(n_steps_replaced >= 0 &&
              n_steps_replaced <= static_cast<int>(s.steps_spaced.size()),
          "coconut layout: bad replaced-step count");
    if (n_thoughts == 0) {
        check(n_steps_replaced == 0, "coconut layout: thoughts removed but none inserted");
        return build_sft_layout(vocab, s, true);
    }

    Builder b;
    b.push_question(s.question);
    int pos = b.layout.n_question;
    for (int i = 1; i <= n_thoughts; ++i) {
        // inputs at these slots are replaced by injected hidden states
        b.push(vocab.special(SpecialToken::thought), pos++, SegmentKind::memory, i);
    }
    std::vector<TokenId> content =
        continuation_content(s, static_cast<size_t>(n_steps_replaced));
    // continuation attends every thought: give it the last block index
    push_continuation(b, content, pos, n_thoughts);
    b.layout.n_blocks = n_thoughts;
    b.layout.memory_m = 1;
    return b.layout;
}

}  // namespace rim
