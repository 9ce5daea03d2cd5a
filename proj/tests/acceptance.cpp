// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// fail.
//
// Criteria 1-4 are self-contained (mask properties, combined-vs-sequential
// logit equivalence, finite-difference gradients, schedule laws).  Criteria
// 5-10 read the desk-scale artifacts produced by scripts/accept_runs.sh:
// corpus, checkpoints and diagnostics under runs/accept (override the
// location with RIM_ACCEPT_DIR).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rim/analysis.hpp"
#include "rim/checkpoint.hpp"
#include "rim/corpus.hpp"
#include "rim/curriculum.hpp"
#include "rim/evaluation.hpp"
#include "rim/layout.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"
#include "rim/vocab.hpp"

#include "helpers.hpp"

namespace fs = std::filesystem;
using namespace rim;

namespace {

struct Gate {
    int failed = 0;
    void line(int n, bool ok, const std::string& detail) {
        std::printf("%s criterion %2d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed;
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 3) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string pp(double delta) {  // signed percentage points
    char buf[48];
    std::snprintf(buf, sizeof buf, "%+.1f", delta * 100.0);
    return buf;
}

// ---------------------------------------------------------- criterion 1 ----

void criterion_mask_soundness(Gate& g) {
    const auto t0 = Clock::now();
    try {
        rimtest::World w(13, 77);
        Rng rng(0xACC1);
        int clean = 0;
        for (int i = 0; i < 100; ++i) {
            const int t = static_cast<int>(rng.uniform_int(1, 13));
            const int m = static_cast<int>(rng.uniform_int(1, 4));
            MaskConfig mc;
            mc.block_bidirectional = rng.uniform_int(0, 1) == 1;
            mc.readout_sees_question = rng.uniform_int(0, 1) == 1;
            const TokenizedSample tok = tokenize_sample(w.vocab, w.sample_with_steps(t));
            const SequenceLayout lay =
                (i % 2 == 0) ? build_stage1_layout(w.vocab, tok, m)
                             : build_stage2_layout(w.vocab, tok,
                                                   static_cast<int>(rng.uniform_int(1, 13)), m);
            const AttentionMask mask = build_mask(lay, mc);
            validate_mask(mask, lay, mc);
            check_no_branch_leakage(reachability_closure(mask), lay);
            ++clean;
        }
        const double el = seconds_since(t0);
        g.line(1, clean == 100 && el < 60.0,
               "mask soundness: " + std::to_string(clean) + "/100 fuzzed layouts clean, " +
                   num(el, 1) + " s");
    } catch (const std::exception& e) {
        g.line(1, false, std::string("mask soundness: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 2 ----

template <class S>
double combined_vs_isolated(Model<S>& model, const SequenceLayout& lay,
                            const AttentionMask& mask) {
    Session<S> combined(model, false);
    combined.extend_tokens(lay.tokens, lay.positions, rimtest::mask_fn(mask));
    double worst = 0.0;
    for (int t = 1; t <= lay.n_readouts(); ++t) {
        // the sequential pass for readout t: question, blocks <= t, branch t
        std::vector<int> keep;
        for (int j = 0; j < lay.size(); ++j) {
            const SegmentKind kind = lay.kind[j];
            if (kind == SegmentKind::question ||
                (kind == SegmentKind::memory && lay.seg_index[j] <= t) ||
                (kind == SegmentKind::readout && lay.seg_index[j] == t)) {
                keep.push_back(j);
            }
        }
        std::vector<int> sub_of(lay.size(), -1);
        std::vector<TokenId> toks;
        std::vector<int> poss;
        for (size_t s = 0; s < keep.size(); ++s) {
            sub_of[keep[s]] = static_cast<int>(s);
            toks.push_back(lay.tokens[keep[s]]);
            poss.push_back(lay.positions[keep[s]]);
        }
        Session<S> iso(model, false);
        iso.extend_tokens(toks, poss,
                          [&](int q, int k) { return mask.at(keep[q], keep[k]); });
        for (int slot : lay.branch_slots(t)) {
            const Vec<S> a = combined.logits(slot);
            const Vec<S> b = iso.logits(sub_of[slot]);
            worst = std::max(worst, static_cast<double>((a - b).cwiseAbs().maxCoeff()));
        }
    }
    return worst;
}

void criterion_single_forward(Gate& g) {
    const auto t0 = Clock::now();
    try {
        rimtest::World w(5, 99);
        Rng rng(0xACC2);
        double worst_f = 0.0, worst_d = 0.0;
        for (int rep = 0; rep < 20; ++rep) {
            const int dims[] = {16, 24, 32};
            const int dim = dims[rng.uniform_int(0, 2)];
            const int layers = static_cast<int>(rng.uniform_int(1, 3));
            const int heads = rng.uniform_int(0, 1) == 0 ? 2 : 4;
            Model<float> model =
                Model<float>::init(w.tiny_config(dim, layers, heads), derive_seed(0xE0, rep));
            Model<double> dmodel = model.cast<double>();

            const int t = static_cast<int>(rng.uniform_int(1, 5));
            const int m = static_cast<int>(rng.uniform_int(1, 3));
            MaskConfig mc;
            mc.block_bidirectional = rng.uniform_int(0, 1) == 1;
            mc.readout_sees_question = rng.uniform_int(0, 1) == 1;
            const TokenizedSample tok = tokenize_sample(w.vocab, w.sample_with_steps(t));
            const SequenceLayout lay =
                (rep % 2 == 0) ? build_stage1_layout(w.vocab, tok, m)
                               : build_stage2_layout(w.vocab, tok,
                                                     static_cast<int>(rng.uniform_int(1, 6)), m);
            const AttentionMask mask = build_mask(lay, mc);
            worst_f = std::max(worst_f, combined_vs_isolated(model, lay, mask));
            worst_d = std::max(worst_d, combined_vs_isolated(dmodel, lay, mask));
        }
        const double el = seconds_since(t0);
        g.line(2, worst_f < 1e-5 && worst_d < 1e-10 && el < 120.0,
               "single-forward equivalence: 20 models, max |diff| float " + num(worst_f, 8) +
                   ", double " + num(worst_d, 13) + ", " + num(el, 1) + " s");
    } catch (const std::exception& e) {
        g.line(2, false, std::string("single-forward equivalence: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 3 ----

double fd_max_rel_err(Model<double>& model, const std::function<double(bool)>& pass,
                      int n_coords, uint64_t seed) {
    model.zero_grads();
    pass(true);
    std::vector<Mat<double>> grads;
    grads.reserve(model.tensors.size());
    for (const auto& t : model.tensors) grads.push_back(t.grad);

    Rng rng(seed);
    double worst = 0.0;
    for (int c = 0; c < n_coords; ++c) {
        const int ti = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(model.tensors.size()) - 1));
        Tensor<double>& ten = model.tensors[ti];
        const int r = static_cast<int>(rng.uniform_int(0, ten.value.rows() - 1));
        const int col = static_cast<int>(rng.uniform_int(0, ten.value.cols() - 1));
        const double theta = ten.value(r, col);
        const double h = 1e-5 * std::max(1.0, std::abs(theta));
        ten.value(r, col) = theta + h;
        const double lp = pass(false);
        ten.value(r, col) = theta - h;
        const double lm = pass(false);
        ten.value(r, col) = theta;
        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = grads[ti](r, col);
        worst = std::max(worst, std::abs(analytic - numeric) /
                                    (std::max(std::abs(analytic), std::abs(numeric)) + 1e-3));
    }
    return worst;
}

void criterion_gradients(Gate& g) {
    const auto t0 = Clock::now();
    try {
        rimtest::World w(4, 101);
        Model<double> model =
            Model<float>::init(w.tiny_config(16, 2, 2), derive_seed(0xE1, 0)).cast<double>();

        const auto span_pass = [&](const SequenceLayout& lay, const AttentionMask& mask,
                                   const std::vector<double>& wts) {
            return [&model, &lay, &mask, wts](bool grad) {
                Session<double> sess(model, true);
                sess.extend_tokens(lay.tokens, lay.positions, rimtest::mask_fn(mask));
                const std::vector<int> slots = lay.supervised_slots();
                LossResult<double> res = weighted_readout_loss(sess.logits(slots), slots, lay, wts);
                if (grad) sess.backward(slots, res.dlogits);
                return res.breakdown.total;
            };
        };

        const MaskConfig mc;
        const TokenizedSample tok = tokenize_sample(w.vocab, w.sample_with_steps(3));

        const SequenceLayout lay1 = build_stage1_layout(w.vocab, tok, 2);
        const AttentionMask mask1 = build_mask(lay1, mc);
        const double err1 = fd_max_rel_err(model, span_pass(lay1, mask1, stage1_weights(lay1, 0.25)),
                                           100, 0x3A1);

        const SequenceLayout lay2 = build_stage2_layout(w.vocab, tok, 4, 2);
        const AttentionMask mask2 = build_mask(lay2, mc);
        const double err2 = fd_max_rel_err(model, span_pass(lay2, mask2, stage2_weights(lay2)),
                                           100, 0x3A2);

        const double el = seconds_since(t0);
        g.line(3, err1 < 1e-4 && err2 < 1e-4 && el < 300.0,
               "gradient check: 200 params, max rel err stage 1 " + num(err1, 8) + ", stage 2 " +
                   num(err2, 8) + ", " + num(el, 1) + " s");
    } catch (const std::exception& e) {
        g.line(3, false, std::string("gradient check: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 4 ----

void criterion_schedule_laws(Gate& g) {
    try {
        std::vector<std::string> bad;

        for (int t_total = 1; t_total <= 13 && bad.empty(); ++t_total) {
            for (int t = 1; t <= t_total; ++t) {
                if (stage1_lambda(t, t_total, 0.0) != 1.0) bad.push_back("lambda_t(0) != 1");
                if (t == t_total && stage1_lambda(t, t_total, 1.0) != 0.0)
                    bad.push_back("lambda_T(1) != 0");
                double prev = 2.0;
                for (int j = 0; j <= 20; ++j) {
                    const double l = stage1_lambda(t, t_total, j / 20.0);
                    if (l > prev) bad.push_back("lambda not monotone in progress");
                    prev = l;
                }
            }
            for (int j = 0; j <= 20; ++j) {
                for (int t = 1; t < t_total; ++t) {
                    if (stage1_lambda(t, t_total, j / 20.0) >
                        stage1_lambda(t + 1, t_total, j / 20.0)) {
                        bad.push_back("lambda_t > lambda_t' for t < t'");
                    }
                }
            }
        }

        for (int k = 1; k <= 16 && bad.empty(); ++k) {
            const std::vector<double> a = stage2_alpha(k);
            double sum = 0.0;
            for (size_t i = 0; i < a.size(); ++i) {
                sum += a[i];
                if (i > 0 && a[i] <= a[i - 1]) bad.push_back("alpha not strictly increasing");
            }
            if (std::abs(sum - 1.0) > 1e-12) bad.push_back("alpha sum off by > 1e-12");
        }

        // zero-weight spans: exactly zero loss, logit gradient, and parameter
        // gradient
        rimtest::World w(4, 103);
        Model<double> model =
            Model<float>::init(w.tiny_config(16, 2, 2), derive_seed(0xE2, 0)).cast<double>();
        const TokenizedSample tok = tokenize_sample(w.vocab, w.sample_with_steps(3));
        const SequenceLayout lay = build_stage1_layout(w.vocab, tok, 2);
        const AttentionMask mask = build_mask(lay, MaskConfig{});
        const std::vector<int> slots = lay.supervised_slots();

        {
            Session<double> sess(model, true);
            sess.extend_tokens(lay.tokens, lay.positions, rimtest::mask_fn(mask));
            const std::vector<double> wts = stage1_weights(lay, 1.0);  // all spans annealed out
            for (double v : wts) {
                if (v != 0.0) bad.push_back("stage1_weights(1.0) not all zero");
            }
            LossResult<double> res = weighted_readout_loss(sess.logits(slots), slots, lay, wts);
            if (res.breakdown.total != 0.0) bad.push_back("zero-weight loss not exactly 0");
            if (res.dlogits.cwiseAbs().maxCoeff() != 0.0)
                bad.push_back("zero-weight dlogits not exactly 0");
            model.zero_grads();
            sess.backward(slots, res.dlogits);
            for (const auto& t : model.tensors) {
                if (t.grad.size() > 0 && t.grad.cwiseAbs().maxCoeff() != 0.0)
                    bad.push_back("zero-weight parameter grad not exactly 0");
            }
        }
        {
            // partially annealed: zero-weight spans' logit columns exactly zero
            Session<double> sess(model, true);
            sess.extend_tokens(lay.tokens, lay.positions, rimtest::mask_fn(mask));
            const std::vector<double> wts = stage1_weights(lay, 0.9);  // T=3: only span 3 alive
            LossResult<double> res = weighted_readout_loss(sess.logits(slots), slots, lay, wts);
            bool live_seen = false;
            for (size_t i = 0; i < slots.size(); ++i) {
                const int t = lay.target_readout[slots[i]];
                const double colmax = res.dlogits.col(i).cwiseAbs().maxCoeff();
                if (wts[t - 1] == 0.0 && colmax != 0.0)
                    bad.push_back("zero-weight span column has gradient");
                if (wts[t - 1] > 0.0 && colmax > 0.0) live_seen = true;
            }
            if (!live_seen) bad.push_back("no live span in partial anneal check");
        }

        g.line(4, bad.empty(),
               bad.empty() ? "schedule laws: lambda/alpha laws hold, zero-weight spans have "
                             "exactly zero gradient"
                           : "schedule laws: " + bad.front());
    } catch (const std::exception& e) {
        g.line(4, false, std::string("schedule laws: ") + e.what());
    }
}

// -------------------------------------------------------- desk artifacts ----

struct Desk {
    std::string dir;
    bool loaded = false;
    std::string why;

    Vocabulary vocab;
    std::vector<Sample> heldout;

    std::optional<Model<float>> rim2_21, rim1_21, coconut_21, cot_21;
    std::optional<EvalOutput> rim_out[3];  // stage-2 evals, seeds 21/22/23
    std::optional<EvalOutput> cot21_out;   // sft-cot seed 21, full held-out
};

std::string require_file(const Desk& d, const std::string& rel) {
    const std::string path = d.dir + "/" + rel;
    check(fs::exists(path), "missing artifact: " + path);
    return path;
}

Model<float> load_desk_model(const Desk& d, const std::string& rel) {
    Model<float> m = load_checkpoint<float>(require_file(d, rel));
    check(m.config.vocab_size == d.vocab.size(), rel + ": vocab size mismatch");
    return m;
}

Desk& desk() {
    static Desk d;
    static bool tried = false;
    if (tried) return d;
    tried = true;
    try {
        const char* env = std::getenv("RIM_ACCEPT_DIR");
        d.dir = env ? env : std::string(RIM_SOURCE_DIR) + "/runs/accept";
        d.vocab = Vocabulary::from_json(read_text_file(require_file(d, "corpus/vocab.json")));
        d.heldout = read_jsonl(require_file(d, "corpus/heldout.jsonl"));
        check(d.heldout.size() == 1000, "held-out split is not 1k samples");
        d.loaded = true;
    } catch (const std::exception& e) {
        d.why = e.what();
    }
    return d;
}

Model<float>& rim2_21() {
    Desk& d = desk();
    if (!d.rim2_21) d.rim2_21 = load_desk_model(d, "rim2-21/ckpt-stage2-final.rim");
    return *d.rim2_21;
}

const EvalOutput& rim21_out() {
    Desk& d = desk();
    if (!d.rim_out[0]) {
        EvalConfig ec;
        d.rim_out[0] = evaluate(rim2_21(), d.vocab, d.heldout, ec, EvalMode::rim);
    }
    return *d.rim_out[0];
}

// ---------------------------------------------------------- criterion 5 ----

void criterion_desk_replication(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);
        const std::string seeds[3] = {"21", "22", "23"};
        EvalConfig ec;  // K=8, M=2 defaults match the training recipe

        double rim_final = 0.0, rim_any = 0.0, sft_final = 0.0, cot_final = 0.0;
        bool any_ge_final = true;
        for (int i = 0; i < 3; ++i) {
            Model<float> m2 = load_desk_model(d, "rim2-" + seeds[i] + "/ckpt-stage2-final.rim");
            d.rim_out[i] = evaluate(m2, d.vocab, d.heldout, ec, EvalMode::rim);
            if (i == 0) d.rim2_21 = std::move(m2);
            const EvalReport& r = d.rim_out[i]->report;
            rim_final += r.final_block_acc;
            rim_any += r.any_block_acc;
            any_ge_final = any_ge_final && r.any_block_acc >= r.final_block_acc;

            Model<float> ms = load_desk_model(d, "sft-" + seeds[i] + "/ckpt-sft-final.rim");
            sft_final += evaluate(ms, d.vocab, d.heldout, ec, EvalMode::sft).report.final_block_acc;

            Model<float> mc = load_desk_model(d, "sftcot-" + seeds[i] + "/ckpt-sft-cot-final.rim");
            EvalOutput cot = evaluate(mc, d.vocab, d.heldout, ec, EvalMode::sft_cot);
            cot_final += cot.report.final_block_acc;
            if (i == 0) {
                d.cot21_out = std::move(cot);
                d.cot_21 = std::move(mc);
            }
        }
        rim_final /= 3.0;
        rim_any /= 3.0;
        sft_final /= 3.0;
        cot_final /= 3.0;

        const bool ok = rim_final >= sft_final + 0.05 && any_ge_final &&
                        rim_any >= cot_final - 0.10;
        g.line(5, ok,
               "desk replication (3 seeds, 1k held-out): rim final " + num(rim_final) + " vs sft " +
                   num(sft_final) + " (" + pp(rim_final - sft_final) + " pp); any " + num(rim_any) +
                   " vs cot " + num(cot_final) + " (" + pp(rim_any - cot_final) + " pp); " +
                   (any_ge_final ? "any>=final on every run" : "any<final on some run"));
    } catch (const std::exception& e) {
        g.line(5, false, std::string("desk replication: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 6 ----

void criterion_stage2_robustness(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);
        EvalConfig ec;

        const std::vector<SweepCell> s2 =
            budget_sweep(rim2_21(), d.vocab, d.heldout, ec, {2}, {4, 6, 8, 10, 12});
        double at8 = -1.0;
        for (const SweepCell& c : s2) {
            check(!c.skipped, "stage-2 sweep cell skipped: " + c.note);
            if (c.k_blocks == 8) at8 = c.final_block_acc;
        }
        double band = 0.0;
        for (const SweepCell& c : s2) band = std::max(band, std::abs(c.final_block_acc - at8));

        if (!d.rim1_21) d.rim1_21 = load_desk_model(d, "rim1-21/ckpt-stage1-final.rim");
        const std::vector<SweepCell> s1 =
            budget_sweep(*d.rim1_21, d.vocab, d.heldout, ec, {2}, {2, 4, 6, 8, 10, 12});
        double best1 = 0.0, at12 = 0.0;
        for (const SweepCell& c : s1) {
            check(!c.skipped, "stage-1 sweep cell skipped: " + c.note);
            best1 = std::max(best1, c.final_block_acc);
            if (c.k_blocks == 12) at12 = c.final_block_acc;
        }

        const bool ok = band <= 0.05 && (best1 - at12) > 0.05;
        g.line(6, ok,
               "stage-2 robustness: K in {4..12} band " + pp(band) + " pp around K=8 (" + num(at8) +
                   "); stage-1-only best " + num(best1) + " vs K=12 " + num(at12) + " (" +
                   pp(best1 - at12) + " pp)");
    } catch (const std::exception& e) {
        g.line(6, false, std::string("stage-2 robustness: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 7 ----

void criterion_transition_accounting(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);
        int evals = 0;
        long long mismatches = 0;
        for (int i = 0; i < 3; ++i) {
            if (!d.rim_out[i]) {
                if (i == 0) rim21_out();
                else continue;
            }
            const std::vector<ReadoutResult>& results = d.rim_out[i]->results;
            const TransitionReport tr = answer_transitions(results);
            std::vector<long long> correct_at(tr.k_blocks, 0);
            for (const ReadoutResult& r : results) {
                for (int b = 0; b < tr.k_blocks; ++b) correct_at[b] += r.correct[b] ? 1 : 0;
            }
            for (size_t j = 0; j < tr.net_cumulative.size(); ++j) {
                if (tr.net_cumulative[j] != correct_at[j + 1] - correct_at[0]) ++mismatches;
            }
            ++evals;
        }
        check(evals > 0, "no stage-2 evaluations available");
        g.line(7, mismatches == 0,
               "transition accounting: net cumulative == acc_k - acc_1 at every block on " +
                   std::to_string(evals) + " evaluation(s), " + std::to_string(mismatches) +
                   " mismatches");
    } catch (const std::exception& e) {
        g.line(7, false, std::string("transition accounting: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 8 ----

void criterion_probe_selection(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);
        const EvalOutput& out = rim21_out();

        CaptureConfig cap;  // penultimate layer, K=8, M=2
        const RepresentationDump dump =
            capture_representations(rim2_21(), d.vocab, d.heldout, cap);

        std::vector<uint8_t> labels(static_cast<size_t>(dump.vectors.cols()), 0);
        for (int s = 0; s < dump.n_samples(); ++s) {
            for (int b = 1; b <= dump.k_blocks; ++b) {
                labels[dump.col(s, b)] = out.results[s].correct[b - 1] ? 1 : 0;
            }
        }

        ProbeSplit split;
        {
            std::vector<int> order(dump.n_samples());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            Rng rng(derive_seed(8, 0xACC8));
            for (size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int64_t>(i) - 1)]);
            }
            split.train.assign(order.begin(), order.begin() + 600);
            split.held_out.assign(order.begin() + 600, order.end());
        }

        ProbeFitConfig pf;
        pf.skip_single_class = true;
        const ProbeModel probes = fit_probes(dump, labels, split, pf);

        int defined = 0;
        double min_auroc = 1.0;
        for (int b = 0; b < probes.k_blocks; ++b) {
            if (probes.fitted[b] && probes.held_out_auroc[b] >= 0.0) {
                ++defined;
                min_auroc = std::min(min_auroc, probes.held_out_auroc[b]);
            }
        }
        check(defined > 0, "no block had a defined held-out AUROC");

        // probe-guided answer selection vs the final block, held-out
        // recoverable subset only
        long long recoverable = 0, probe_hits = 0, final_hits = 0;
        for (int s : split.held_out) {
            const ReadoutResult& r = out.results[s];
            if (std::none_of(r.correct.begin(), r.correct.end(), [](bool c) { return c; }))
                continue;
            ++recoverable;
            Mat<float> reps(dump.dim, dump.k_blocks);
            for (int b = 1; b <= dump.k_blocks; ++b) {
                reps.col(b - 1) = dump.vectors.col(dump.col(s, b));
            }
            const AnswerSelection sel = probe_select_answer(probes, reps, r.answers);
            probe_hits += r.correct[sel.block - 1] ? 1 : 0;
            final_hits += r.correct.back() ? 1 : 0;
        }
        check(recoverable > 0, "recoverable subset is empty");

        const bool ok = min_auroc > 0.6 && probe_hits >= final_hits;
        g.line(8, ok,
               "probe selection: min AUROC " + num(min_auroc) + " over " +
                   std::to_string(defined) + " block(s); recoverable subset " +
                   std::to_string(recoverable) + ": probe-selected " + std::to_string(probe_hits) +
                   " vs final-block " + std::to_string(final_hits));
    } catch (const std::exception& e) {
        g.line(8, false, std::string("probe selection: ") + e.what());
    }
}

// ---------------------------------------------------------- criterion 9 ----

void criterion_representation_structure(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);

        // same init path as training: desk-scale config, run seed 21
        ModelConfig mc;
        mc.vocab_size = d.vocab.size();
        mc.dim = 128;
        mc.n_layers = 4;
        mc.n_heads = 4;
        mc.ff_dim = 512;
        mc.max_positions = 512;
        Model<float> init = Model<float>::init(mc, derive_seed(21, 0xD0DE1ull));

        const std::vector<Sample> subset(d.heldout.begin(), d.heldout.begin() + 256);
        CaptureConfig cap;
        const double norm_init = mean_delta_norm(capture_representations(init, d.vocab, subset, cap));
        const double norm_end =
            mean_delta_norm(capture_representations(rim2_21(), d.vocab, subset, cap));
        const double ratio = norm_end / std::max(norm_init, 1e-12);

        // effective rank across stage-1 diagnostics records
        const std::string diag = require_file(d, "rim1-21/diagnostics.csv");
        double first_rank = -1.0, last_rank = -1.0;
        {
            std::istringstream in(read_text_file(diag));
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty() || line[0] == '#' || starts_with(line, "stage,")) continue;
                std::vector<std::string> cols;
                std::istringstream row(line);
                std::string cell;
                while (std::getline(row, cell, ',')) cols.push_back(cell);
                check(cols.size() >= 6, "diagnostics row too short: " + line);
                const double rank = std::stod(cols[5]);
                if (first_rank < 0.0) first_rank = rank;
                last_rank = rank;
            }
        }
        check(first_rank >= 0.0, "no diagnostics records in " + diag);

        const bool ok = ratio > 3.0 && last_rank > first_rank;
        g.line(9, ok,
               "representation structure: first-to-final delta norm " + num(norm_end, 2) + " vs " +
                   num(norm_init, 2) + " at init (x" + num(ratio, 1) + "); stage-1 effective rank " +
                   num(first_rank, 2) + " -> " + num(last_rank, 2));
    } catch (const std::exception& e) {
        g.line(9, false, std::string("representation structure: ") + e.what());
    }
}

// --------------------------------------------------------- criterion 10 ----

void criterion_forward_counts(Gate& g) {
    try {
        Desk& d = desk();
        check(d.loaded, d.why);
        const std::vector<Sample> subset(d.heldout.begin(), d.heldout.begin() + 100);
        std::vector<std::string> bad;

        for (int k : {4, 12}) {
            EvalConfig ec;
            ec.k_blocks = k;
            const EvalOutput out = evaluate(rim2_21(), d.vocab, subset, ec, EvalMode::rim);
            for (const ReadoutResult& r : out.results) {
                if (r.stream_forwards != 1) bad.push_back("rim stream != 1 at K=" + std::to_string(k));
            }
            if (out.counters.per_sample_stream_min != 1 || out.counters.per_sample_stream_max != 1)
                bad.push_back("rim per-sample stream counters != 1 at K=" + std::to_string(k));
        }

        {
            Desk& dd = desk();
            if (!dd.coconut_21)
                dd.coconut_21 = load_desk_model(dd, "coconut-21/ckpt-coconut-s3-final.rim");
            EvalConfig ec;
            ec.coconut_thoughts = 6;
            const EvalOutput out = evaluate(*dd.coconut_21, d.vocab, subset, ec, EvalMode::coconut);
            for (const ReadoutResult& r : out.results) {
                if (r.stream_forwards != 1 + ec.coconut_thoughts)
                    bad.push_back("coconut stream != 1 + thoughts");
            }
        }

        long long checked = 0;
        {
            if (!d.cot21_out) {
                if (!d.cot_21) d.cot_21 = load_desk_model(d, "sftcot-21/ckpt-sft-cot-final.rim");
                EvalConfig ec;
                d.cot21_out = evaluate(*d.cot_21, d.vocab, d.heldout, ec, EvalMode::sft_cot);
            }
            const std::vector<ReadoutResult>& results = d.cot21_out->results;
            for (size_t i = 0; i < results.size(); ++i) {
                const TokenizedSample tok = tokenize_sample(d.vocab, d.heldout[i]);
                long long trace = 0;
                for (const auto& step : tok.steps_spaced) trace += static_cast<long long>(step.size());
                if (results[i].decode_steps < trace)
                    bad.push_back("sft-cot decode steps below trace length at sample " +
                                  std::to_string(i));
                ++checked;
            }
        }

        g.line(10, bad.empty(),
               bad.empty() ? "forward counts: rim streams 1 at K=4 and K=12; coconut 7 = 1 + 6 "
                             "thoughts; sft-cot decode >= trace length on " +
                                 std::to_string(checked) + " samples"
                           : "forward counts: " + bad.front());
    } catch (const std::exception& e) {
        g.line(10, false, std::string("forward counts: ") + e.what());
    }
}

}  // namespace

int main() {
    Gate g;
    criterion_mask_soundness(g);
    criterion_single_forward(g);
    criterion_gradients(g);
    criterion_schedule_laws(g);
    criterion_desk_replication(g);
    criterion_stage2_robustness(g);
    criterion_transition_accounting(g);
    criterion_probe_selection(g);
    criterion_representation_structure(g);
    criterion_forward_counts(g);
    if (g.failed == 0) {
        std::printf("acceptance: all 10 criteria passed\n");
    } else {
        std::printf("acceptance: %d criterion(s) failed\n", g.failed);
    }
    return g.failed == 0 ? 0 : 1;
}
