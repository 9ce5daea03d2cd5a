#include "rim/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unordered_set>

#include "rim/checkpoint.hpp"
#include "rim/vocab.hpp"

namespace rim {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool is_plain_decimal(const std::string& s) {
    size_t i = s.size() && s[0] == '-' ? 1 : 0;
    size_t digits = 0, points = 0;
    for (; i < s.size(); ++i) {
        if (s[i] == '.') {
            if (++points > 1) return false;
        } else if (s[i] >= '0' && s[i] <= '9') {
            ++digits;
        } else {
            return false;
        }
    }
    return digits > 0;
}

bool parse_number(const std::string& s, double* out) {
    if (s.empty()) return false;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) return false;
    *out = v;
    return true;
}

}  // namespace

std::string canonical_answer(const std::string& s) {
    std::string t = trim(s);
    if (!is_plain_decimal(t)) return t;
    if (t.find('.') != std::string::npos) {
        size_t last = t.find_last_not_of('0');
        t.erase(t[last] == '.' ? last : last + 1);
    }
    if (t == "-0") t = "0";
    return t;
}

bool answers_match(const std::string& got, const std::string& gold, bool numeric, double tol) {
    const std::string a = canonical_answer(got);
    const std::string b = canonical_answer(gold);
    if (a == b) return true;
    if (!numeric) return false;
    double x, y;
    if (!parse_number(a, &x) || !parse_number(b, &y)) return false;
    return std::abs(x - y) <= tol;
}

EvalMode eval_mode_from_string(const std::string& name) {
    if (name == "rim") return EvalMode::rim;
    if (name == "sft") return EvalMode::sft;
    if (name == "sft-cot") return EvalMode::sft_cot;
    if (name == "coconut") return EvalMode::coconut;
    fail("evaluation: unknown mode '" + name + "' (rim|sft|sft-cot|coconut)");
}

std::string eval_mode_name(EvalMode mode) {
    switch (mode) {
        case EvalMode::rim: return "rim";
        case EvalMode::sft: return "sft";
        case EvalMode::sft_cot: return "sft-cot";
        case EvalMode::coconut: return "coconut";
    }
    fail("evaluation: bad mode value");
}

// ---------------------------------------------------------------------------
// decode core
// ---------------------------------------------------------------------------

namespace {

struct Decode {
    std::vector<TokenId> generated;  // eos excluded
    int steps = 0;                   // tokens drawn, eos included
    bool hit_eos = false;
};

/// Greedy (rng == nullptr) or temperature-sampled continuation from
/// `from_slot`, appending decode slots from `next_pos` until eos or budget.
Decode decode_from(Session<float>& sess, const AllowFn& allow, int from_slot, int next_pos,
                   int budget, TokenId eos, double temperature, Rng* rng) {
    Decode out;
    int cur = from_slot;
    for (int i = 0; i < budget; ++i) {
        const Vec<float> logits = sess.logits(cur);
        const TokenId next = rng ? static_cast<TokenId>(sample_logit(logits, temperature, *rng))
                                 : static_cast<TokenId>(argmax_logit(logits));
        ++out.steps;
        if (next == eos) {
            out.hit_eos = true;
            break;
        }
        out.generated.push_back(next);
        if (i + 1 == budget) break;  // budget spent without eos
        sess.extend_tokens({next}, {next_pos++}, allow, ExtendKind::decode);
        cur = sess.size() - 1;
    }
    return out;
}

struct BranchDecode {
    std::string text;
    bool extracted = false;
    int steps = 0;
};

/// Positions run 0..max_positions-1; a decode whose budget would overrun is
/// clamped (exhaustion then reads as incorrect), but the forced slots up to
/// `next_pos` must fit outright.
int clamp_budget(int budget, int next_pos, int max_positions, const char* who) {
    check(next_pos <= max_positions, std::string(who) + ": position budget exceeded (need " +
                                         std::to_string(next_pos) + ", have " +
                                         std::to_string(max_positions) + ")");
    return std::min(budget, max_positions - next_pos + 1);
}

/// Decode readout branch `t` on a session holding exactly the memory stream:
/// force [<r> + answer prefix], generate the rest, extract the boxed answer.
BranchDecode decode_readout_branch(Session<float>& sess, const SequenceLayout& lay,
                                   const Vocabulary& vocab, const EvalConfig& cfg,
                                   int max_positions, int t, double temperature, Rng* rng) {
    const int n_stream = lay.size();
    const AllowFn allow = [&lay, &cfg, t, n_stream](int q, int k) {
        if (k >= n_stream) return k <= q;  // own emitted branch, causal
        if (lay.kind[k] == SegmentKind::question) return cfg.mask.readout_sees_question;
        return lay.seg_index[k] <= t;
    };

    const std::vector<TokenId> prefix = answer_prefix(vocab);
    std::vector<TokenId> inputs;
    inputs.push_back(vocab.special(SpecialToken::readout));
    inputs.insert(inputs.end(), prefix.begin(), prefix.end());
    const int pos0 = lay.positions[lay.block_slots(t).back()] + 1;
    const int next_pos = pos0 + static_cast<int>(inputs.size());
    const int budget = clamp_budget(cfg.decode_budget, next_pos, max_positions, "readout decode");
    std::vector<int> ipos(inputs.size());
    for (size_t i = 0; i < ipos.size(); ++i) ipos[i] = pos0 + static_cast<int>(i);
    sess.extend_tokens(inputs, ipos, allow, ExtendKind::decode);

    Decode d = decode_from(sess, allow, sess.size() - 1, next_pos, budget,
                           vocab.special(SpecialToken::eos), temperature, rng);

    std::vector<TokenId> emitted = prefix;
    emitted.insert(emitted.end(), d.generated.begin(), d.generated.end());
    BranchDecode out;
    out.steps = d.steps;
    out.extracted = extract_boxed(vocab, emitted, &out.text);
    return out;
}

AllowFn causal_allow() {
    return [](int q, int k) { return k <= q; };
}

AllowFn mask_allow(const AttentionMask& mask) {
    return [&mask](int q, int k) { return mask.at(q, k); };
}

EvalReport make_report(const std::vector<ReadoutResult>& results) {
    EvalReport rep;
    rep.n_samples = static_cast<int>(results.size());
    if (results.empty()) return rep;
    const int k = static_cast<int>(results[0].correct.size());
    rep.per_block_acc.assign(static_cast<size_t>(k), 0.0);
    int any = 0;
    for (const ReadoutResult& r : results) {
        check(static_cast<int>(r.correct.size()) == k, "evaluation: ragged block counts");
        bool hit = false;
        for (int b = 0; b < k; ++b) {
            rep.per_block_acc[static_cast<size_t>(b)] += r.correct[static_cast<size_t>(b)];
            hit |= r.correct[static_cast<size_t>(b)];
        }
        any += hit;
    }
    for (double& a : rep.per_block_acc) a /= rep.n_samples;
    rep.final_block_acc = rep.per_block_acc.back();
    rep.best_block = 1;
    for (int b = 0; b < k; ++b) {
        if (rep.per_block_acc[static_cast<size_t>(b)] > rep.per_block_acc[rep.best_block - 1]) {
            rep.best_block = b + 1;
        }
    }
    rep.best_block_acc = rep.per_block_acc[rep.best_block - 1];
    rep.any_block_acc = static_cast<double>(any) / rep.n_samples;
    return rep;
}

void fold_counters(EvalCounters& c, const ReadoutResult& r, bool first) {
    c.stream_forwards += r.stream_forwards;
    c.decode_steps += r.decode_steps;
    if (first) {
        c.per_sample_stream_min = c.per_sample_stream_max = r.stream_forwards;
    } else {
        c.per_sample_stream_min = std::min(c.per_sample_stream_min, r.stream_forwards);
        c.per_sample_stream_max = std::max(c.per_sample_stream_max, r.stream_forwards);
    }
}

void check_stream_fits(const Model<float>& model, const SequenceLayout& lay,
                       const std::string& who) {
    check(lay.max_position() < model.config.max_positions,
          who + ": position budget exceeded (stream needs " +
              std::to_string(lay.max_position() + 1) + " positions, have " +
              std::to_string(model.config.max_positions) + ")");
}

/// Question pass plus `n_thoughts` single-slot hidden-state injections.
/// Returns the position of the next (decoded) slot.
int prepare_coconut_stream(Session<float>& sess, Model<float>& model,
                           const std::vector<TokenId>& question, int n_thoughts,
                           int inject_layer) {
    std::vector<int> qpos(question.size());
    for (size_t i = 0; i < qpos.size(); ++i) qpos[i] = static_cast<int>(i);
    sess.extend_tokens(question, qpos, causal_allow());
    int pos = static_cast<int>(question.size());
    for (int i = 0; i < n_thoughts; ++i) {
        const int src = sess.size() - 1;
        Mat<float> inj(model.config.dim, 1);
        inj.col(0) = sess.hidden(inject_layer, src);
        sess.extend_embeddings(inj, {pos++}, {{src, inject_layer}}, causal_allow());
    }
    return pos;
}

}  // namespace

// ---------------------------------------------------------------------------
// protocols
// ---------------------------------------------------------------------------

EvalOutput evaluate_readouts(Model<float>& model, const Vocabulary& vocab,
                             const std::vector<Sample>& dataset, const EvalConfig& cfg) {
    check(cfg.k_blocks >= 1, "evaluation: k_blocks must be >= 1");
    check(cfg.memory_m >= 1, "evaluation: memory_m must be >= 1");
    EvalOutput out;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        const TokenizedSample tok = tokenize_sample(vocab, s);
        const SequenceLayout lay =
            build_inference_layout(vocab, tok.question, cfg.k_blocks, cfg.memory_m);
        check_stream_fits(model, lay, "evaluate_readouts");
        const AttentionMask mask = build_mask(lay, cfg.mask);

        Session<float> sess(model, false);
        sess.extend_tokens(lay.tokens, lay.positions, mask_allow(mask));
        const int base = sess.size();

        ReadoutResult r;
        r.sample_id = static_cast<int>(i);
        r.gold = s.answer;
        r.stream_forwards = 1;
        for (int t = 1; t <= cfg.k_blocks; ++t) {
            BranchDecode d = decode_readout_branch(sess, lay, vocab, cfg,
                                                   model.config.max_positions, t, 0.0, nullptr);
            r.answers.push_back(d.extracted ? d.text : "");
            r.correct.push_back(d.extracted &&
                                answers_match(d.text, s.answer, cfg.numeric_match));
            r.decode_steps += d.steps;
            sess.truncate(base);
        }
        fold_counters(out.counters, r, i == 0);
        out.results.push_back(std::move(r));
    }
    out.report = make_report(out.results);
    return out;
}

EvalOutput evaluate_sft(Model<float>& model, const Vocabulary& vocab,
                        const std::vector<Sample>& dataset, const EvalConfig& cfg,
                        bool with_cot) {
    EvalOutput out;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        const std::vector<TokenId> question = vocab.encode(s.question);
        const int next_pos = static_cast<int>(question.size());
        const int budget = clamp_budget(with_cot ? cfg.cot_decode_budget : cfg.decode_budget,
                                        next_pos, model.config.max_positions, "evaluate_sft");
        Session<float> sess(model, false);
        std::vector<int> qpos(question.size());
        for (size_t p = 0; p < qpos.size(); ++p) qpos[p] = static_cast<int>(p);
        sess.extend_tokens(question, qpos, causal_allow());

        Decode d = decode_from(sess, causal_allow(), sess.size() - 1, next_pos, budget,
                               vocab.special(SpecialToken::eos), 0.0, nullptr);
        std::string text;
        const bool ok = extract_boxed(vocab, d.generated, &text);

        ReadoutResult r;
        r.sample_id = static_cast<int>(i);
        r.gold = s.answer;
        r.answers.push_back(ok ? text : "");
        r.correct.push_back(ok && answers_match(text, s.answer, cfg.numeric_match));
        r.stream_forwards = 1;
        r.decode_steps = d.steps;
        fold_counters(out.counters, r, i == 0);
        out.results.push_back(std::move(r));
    }
    out.report = make_report(out.results);
    return out;
}

EvalOutput evaluate_coconut(Model<float>& model, const Vocabulary& vocab,
                            const std::vector<Sample>& dataset, const EvalConfig& cfg) {
    check(cfg.coconut_thoughts >= 0, "evaluation: negative thought count");
    const int inject_layer =
        cfg.coconut_hidden_layer < 0 ? model.config.n_layers : cfg.coconut_hidden_layer;
    check(inject_layer >= 0 && inject_layer <= model.config.n_layers,
          "evaluation: coconut_hidden_layer out of range");
    EvalOutput out;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        const std::vector<TokenId> question = vocab.encode(s.question);
        const int next_pos = static_cast<int>(question.size()) + cfg.coconut_thoughts;
        const int budget = clamp_budget(cfg.cot_decode_budget, next_pos,
                                        model.config.max_positions, "evaluate_coconut");
        Session<float> sess(model, false);
        const int pos =
            prepare_coconut_stream(sess, model, question, cfg.coconut_thoughts, inject_layer);

        Decode d = decode_from(sess, causal_allow(), sess.size() - 1, pos, budget,
                               vocab.special(SpecialToken::eos), 0.0, nullptr);
        std::string text;
        const bool ok = extract_boxed(vocab, d.generated, &text);

        ReadoutResult r;
        r.sample_id = static_cast<int>(i);
        r.gold = s.answer;
        r.answers.push_back(ok ? text : "");
        r.correct.push_back(ok && answers_match(text, s.answer, cfg.numeric_match));
        r.stream_forwards = 1 + cfg.coconut_thoughts;
        r.decode_steps = d.steps;
        fold_counters(out.counters, r, i == 0);
        out.results.push_back(std::move(r));
    }
    out.report = make_report(out.results);
    return out;
}

EvalOutput evaluate(Model<float>& model, const Vocabulary& vocab,
                    const std::vector<Sample>& dataset, const EvalConfig& cfg, EvalMode mode) {
    switch (mode) {
        case EvalMode::rim: return evaluate_readouts(model, vocab, dataset, cfg);
        case EvalMode::sft: return evaluate_sft(model, vocab, dataset, cfg, false);
        case EvalMode::sft_cot: return evaluate_sft(model, vocab, dataset, cfg, true);
        case EvalMode::coconut: return evaluate_coconut(model, vocab, dataset, cfg);
    }
    fail("evaluation: bad mode value");
}

std::vector<uint8_t> greedy_flags(Model<float>& model, const Vocabulary& vocab,
                                  const std::vector<Sample>& dataset, const EvalConfig& cfg,
                                  EvalMode mode) {
    std::vector<uint8_t> flags;
    flags.reserve(dataset.size());
    if (mode != EvalMode::rim) {
        EvalOutput out = evaluate(model, vocab, dataset, cfg, mode);
        for (const ReadoutResult& r : out.results) flags.push_back(r.correct[0] ? 1 : 0);
        return flags;
    }
    // final-block readout only: one stream pass + one branch per sample
    for (const Sample& s : dataset) {
        const TokenizedSample tok = tokenize_sample(vocab, s);
        const SequenceLayout lay =
            build_inference_layout(vocab, tok.question, cfg.k_blocks, cfg.memory_m);
        check_stream_fits(model, lay, "greedy_flags");
        const AttentionMask mask = build_mask(lay, cfg.mask);
        Session<float> sess(model, false);
        sess.extend_tokens(lay.tokens, lay.positions, mask_allow(mask));
        BranchDecode d = decode_readout_branch(sess, lay, vocab, cfg,
                                               model.config.max_positions, cfg.k_blocks, 0.0,
                                               nullptr);
        flags.push_back(d.extracted && answers_match(d.text, s.answer, cfg.numeric_match) ? 1
                                                                                          : 0);
    }
    return flags;
}

// ---------------------------------------------------------------------------
// pass@k
// ---------------------------------------------------------------------------

PassAtKResult pass_at_k(Model<float>& model, const Vocabulary& vocab,
                        const std::vector<Sample>& dataset, const EvalConfig& cfg,
                        EvalMode mode, int k, double temperature) {
    check(k >= 1, "pass_at_k: k must be >= 1");
    check(temperature > 0.0, "pass_at_k: temperature must be positive");
    PassAtKResult out;
    out.k = k;
    out.temperature = temperature;
    out.rate_at.assign(static_cast<size_t>(k), 0.0);
    if (dataset.empty()) return out;

    const int inject_layer =
        cfg.coconut_hidden_layer < 0 ? model.config.n_layers : cfg.coconut_hidden_layer;
    for (size_t i = 0; i < dataset.size(); ++i) {
        const Sample& s = dataset[i];
        Rng rng(derive_seed(cfg.seed, 0xA5500000ull + i));
        bool hit = false;

        if (mode == EvalMode::rim) {
            const TokenizedSample tok = tokenize_sample(vocab, s);
            const SequenceLayout lay =
                build_inference_layout(vocab, tok.question, cfg.k_blocks, cfg.memory_m);
            check_stream_fits(model, lay, "pass_at_k");
            const AttentionMask mask = build_mask(lay, cfg.mask);
            Session<float> sess(model, false);
            sess.extend_tokens(lay.tokens, lay.positions, mask_allow(mask));
            const int base = sess.size();
            for (int j = 0; j < k; ++j) {
                BranchDecode d =
                    decode_readout_branch(sess, lay, vocab, cfg, model.config.max_positions,
                                          cfg.k_blocks, temperature, &rng);
                hit |= d.extracted && answers_match(d.text, s.answer, cfg.numeric_match);
                sess.truncate(base);
                out.rate_at[static_cast<size_t>(j)] += hit;
            }
        } else {
            const std::vector<TokenId> question = vocab.encode(s.question);
            const bool traced = mode != EvalMode::sft;
            const int thoughts = mode == EvalMode::coconut ? cfg.coconut_thoughts : 0;
            const int budget =
                clamp_budget(traced ? cfg.cot_decode_budget : cfg.decode_budget,
                             static_cast<int>(question.size()) + thoughts,
                             model.config.max_positions, "pass_at_k");
            Session<float> sess(model, false);
            int pos;
            if (mode == EvalMode::coconut) {
                pos = prepare_coconut_stream(sess, model, question, cfg.coconut_thoughts,
                                             inject_layer);
            } else {
                std::vector<int> qpos(question.size());
                for (size_t p = 0; p < qpos.size(); ++p) qpos[p] = static_cast<int>(p);
                sess.extend_tokens(question, qpos, causal_allow());
                pos = static_cast<int>(question.size());
            }
            const int base = sess.size();
            for (int j = 0; j < k; ++j) {
                Decode d = decode_from(sess, causal_allow(), sess.size() - 1, pos, budget,
                                       vocab.special(SpecialToken::eos), temperature, &rng);
                std::string text;
                hit |= extract_boxed(vocab, d.generated, &text) &&
                       answers_match(text, s.answer, cfg.numeric_match);
                sess.truncate(base);
                out.rate_at[static_cast<size_t>(j)] += hit;
            }
        }
    }
    for (double& r : out.rate_at) r /= static_cast<double>(dataset.size());
    out.rate = out.rate_at.back();
    return out;
}

// ---------------------------------------------------------------------------
// transitions
// ---------------------------------------------------------------------------

TransitionReport answer_transitions(const std::vector<ReadoutResult>& results) {
    check(!results.empty(), "answer_transitions: no results");
    const int k = static_cast<int>(results[0].correct.size());
    check(k >= 2, "answer_transitions: need at least two blocks");

    TransitionReport rep;
    rep.k_blocks = k;
    rep.n_samples = static_cast<int>(results.size());
    rep.to_correct.assign(static_cast<size_t>(k - 1), 0);
    rep.to_incorrect.assign(static_cast<size_t>(k - 1), 0);
    for (const ReadoutResult& r : results) {
        check(static_cast<int>(r.correct.size()) == k, "answer_transitions: ragged results");
        for (int b = 1; b < k; ++b) {
            const bool prev = r.correct[static_cast<size_t>(b - 1)];
            const bool cur = r.correct[static_cast<size_t>(b)];
            if (!prev && cur) ++rep.to_correct[static_cast<size_t>(b - 1)];
            if (prev && !cur) ++rep.to_incorrect[static_cast<size_t>(b - 1)];
        }
    }
    long long net = 0;
    for (int b = 0; b + 1 < k; ++b) {
        net += rep.to_correct[static_cast<size_t>(b)] - rep.to_incorrect[static_cast<size_t>(b)];
        rep.net_cumulative.push_back(net);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// sweeps
// ---------------------------------------------------------------------------

std::vector<SweepCell> budget_sweep(Model<float>& model, const Vocabulary& vocab,
                                    const std::vector<Sample>& dataset, const EvalConfig& cfg,
                                    const std::vector<int>& m_values,
                                    const std::vector<int>& k_values) {
    check(!m_values.empty() && !k_values.empty(), "budget_sweep: empty grid");
    int max_question = 0;
    for (const Sample& s : dataset) {
        max_question = std::max(max_question, static_cast<int>(vocab.encode(s.question).size()));
    }
    const int prefix = 1 + static_cast<int>(answer_prefix(vocab).size());

    std::vector<SweepCell> cells;
    for (int m : m_values) {
        for (int k : k_values) {
            check(m >= 1 && k >= 1, "budget_sweep: grid values must be >= 1");
            SweepCell cell;
            cell.memory_m = m;
            cell.k_blocks = k;
            const int needed = max_question + k * (m + 2) + prefix + cfg.decode_budget;
            if (needed > model.config.max_positions) {
                cell.skipped = true;
                cell.note = "position budget exceeded (need " + std::to_string(needed) +
                            ", have " + std::to_string(model.config.max_positions) + ")";
            } else {
                EvalConfig c = cfg;
                c.memory_m = m;
                c.k_blocks = k;
                const std::vector<uint8_t> flags =
                    greedy_flags(model, vocab, dataset, c, EvalMode::rim);
                long long hits = 0;
                for (uint8_t f : flags) hits += f;
                cell.final_block_acc =
                    dataset.empty() ? 0.0 : static_cast<double>(hits) / dataset.size();
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

// ---------------------------------------------------------------------------
// checkpoint selection
// ---------------------------------------------------------------------------

CheckpointSelection select_checkpoint(const std::vector<std::string>& checkpoint_paths,
                                      const Vocabulary& vocab,
                                      const std::vector<Sample>& selection_pool,
                                      const std::vector<Sample>& reporting_set,
                                      const EvalConfig& cfg, EvalMode mode, int repeats,
                                      int split_size, uint64_t seed) {
    check(!checkpoint_paths.empty(), "select_checkpoint: no checkpoints");
    check(repeats >= 1, "select_checkpoint: repeats must be >= 1");
    check(split_size >= 1 && split_size <= static_cast<int>(selection_pool.size()),
          "select_checkpoint: split size out of range");
    check(!reporting_set.empty(), "select_checkpoint: empty reporting set");

    std::unordered_set<std::string> reporting_questions;
    for (const Sample& s : reporting_set) reporting_questions.insert(s.question);
    for (const Sample& s : selection_pool) {
        check(!reporting_questions.count(s.question),
              "select_checkpoint: selection split overlaps the reporting set");
    }

    // score every checkpoint once per sample; repeats then only reindex
    const size_t n_ckpt = checkpoint_paths.size();
    std::vector<std::vector<uint8_t>> pool_flags(n_ckpt);
    std::vector<double> reporting_acc(n_ckpt, 0.0);
    for (size_t c = 0; c < n_ckpt; ++c) {
        Model<float> model = load_checkpoint<float>(checkpoint_paths[c]);
        pool_flags[c] = greedy_flags(model, vocab, selection_pool, cfg, mode);
        const std::vector<uint8_t> rep = greedy_flags(model, vocab, reporting_set, cfg, mode);
        long long hits = 0;
        for (uint8_t f : rep) hits += f;
        reporting_acc[c] = static_cast<double>(hits) / reporting_set.size();
    }

    CheckpointSelection sel;
    const int n_pool = static_cast<int>(selection_pool.size());
    for (int r = 0; r < repeats; ++r) {
        Rng rng(derive_seed(seed, 0x5E1Ec70ull + static_cast<uint64_t>(r)));
        std::vector<int> idx(static_cast<size_t>(n_pool));
        for (int i = 0; i < n_pool; ++i) idx[static_cast<size_t>(i)] = i;
        for (int i = 0; i < split_size; ++i) {
            const int j = static_cast<int>(rng.uniform_int(i, n_pool - 1));
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
        }
        int best = 0;
        double best_acc = -1.0;
        for (size_t c = 0; c < n_ckpt; ++c) {
            long long hits = 0;
            for (int i = 0; i < split_size; ++i) {
                hits += pool_flags[c][static_cast<size_t>(idx[static_cast<size_t>(i)])];
            }
            const double acc = static_cast<double>(hits) / split_size;
            if (acc > best_acc) {
                best_acc = acc;
                best = static_cast<int>(c);
            }
        }
        sel.chosen.push_back(best);
        sel.repeat_acc.push_back(reporting_acc[static_cast<size_t>(best)]);
    }

    double sum = 0.0;
    for (double a : sel.repeat_acc) sum += a;
    sel.mean_acc = sum / repeats;
    if (repeats > 1) {
        double ss = 0.0;
        for (double a : sel.repeat_acc) ss += (a - sel.mean_acc) * (a - sel.mean_acc);
        sel.std_error = std::sqrt(ss / (repeats - 1)) / std::sqrt(static_cast<double>(repeats));
    }
    return sel;
}

// ---------------------------------------------------------------------------
// csv
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string eval_report_csv(const EvalReport& report) {
    std::string out = "metric,value\n";
    out += "final_block_acc," + fmt(report.final_block_acc) + "\n";
    out += "best_block_acc," + fmt(report.best_block_acc) + "\n";
    out += "any_block_acc," + fmt(report.any_block_acc) + "\n";
    out += "best_block," + std::to_string(report.best_block) + "\n";
    out += "n_samples," + std::to_string(report.n_samples) + "\n";
    if (report.pass_at_k >= 0.0) out += "pass_at_k," + fmt(report.pass_at_k) + "\n";
    for (size_t b = 0; b < report.per_block_acc.size(); ++b) {
        out += "per_block_acc_" + std::to_string(b + 1) + "," + fmt(report.per_block_acc[b]) +
               "\n";
    }
    return out;
}

std::string transitions_csv(const TransitionReport& report) {
    std::string out = "block,to_correct,to_incorrect,net_cumulative\n";
    for (size_t i = 0; i < report.to_correct.size(); ++i) {
        out += std::to_string(i + 2) + "," + std::to_string(report.to_correct[i]) + "," +
               std::to_string(report.to_incorrect[i]) + "," +
               std::to_string(report.net_cumulative[i]) + "\n";
    }
    return out;
}

std::string sweep_csv(const std::vector<SweepCell>& cells) {
    std::string out = "memory_m,k_blocks,final_block_acc,skipped,note\n";
    for (const SweepCell& c : cells) {
        out += std::to_string(c.memory_m) + "," + std::to_string(c.k_blocks) + "," +
               (c.skipped ? "" : fmt(c.final_block_acc)) + "," + (c.skipped ? "1" : "0") + "," +
               c.note + "\n";
    }
    return out;
}

std::string selection_csv(const CheckpointSelection& sel,
                          const std::vector<std::string>& checkpoint_paths) {
    std::string out = "repeat,chosen_index,chosen_checkpoint,reporting_acc\n";
    for (size_t r = 0; r < sel.chosen.size(); ++r) {
        const size_t c = static_cast<size_t>(sel.chosen[r]);
        out += std::to_string(r) + "," + std::to_string(sel.chosen[r]) + "," +
               checkpoint_paths[c] + "," + fmt(sel.repeat_acc[r]) + "\n";
    }
    out += "mean,,," + fmt(sel.mean_acc) + "\n";
    out += "std_error,,," + fmt(sel.std_error) + "\n";
    return out;
}

std::string readouts_csv(const std::vector<ReadoutResult>& results) {
    std::string out = "sample_id,block,answer,gold,correct,stream_forwards,decode_steps\n";
    for (const ReadoutResult& r : results) {
        for (size_t b = 0; b < r.answers.size(); ++b) {
            out += std::to_string(r.sample_id) + "," + std::to_string(b + 1) + "," +
                   r.answers[b] + "," + r.gold + "," + (r.correct[b] ? "1" : "0") + "," +
                   std::to_string(r.stream_forwards) + "," + std::to_string(r.decode_steps) +
                   "\n";
        }
    }
    return out;
}

}  // namespace rim
