#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "rim/checkpoint.hpp"
#include "rim/evaluation.hpp"
#include "rim/trainer.hpp"

using namespace rim;
using rimtest::World;
namespace fs = std::filesystem;

namespace {

/// 10 unique-question samples memorized by a stage-1+2 model, an SFT w/ CoT
/// model, and an untrained control; trained once, shared by the test cases.
struct EvalFixture {
    World w{2, 2024};
    std::vector<Sample> corpus;
    ModelConfig mc;
    Model<float> rim_model;
    Model<float> cot_model;
    Model<float> fresh;
    EvalConfig ec;
    std::string dir = "/tmp/rim_test_eval_fixture";
    std::string good_ckpt = dir + "/good.rim";
    std::string bad_ckpt = dir + "/bad.rim";

    EvalFixture() {
        std::unordered_set<std::string> seen;
        for (const Sample& s : w.samples) {
            if (seen.insert(s.question).second) corpus.push_back(s);
            if (corpus.size() == 10) break;
        }
        REQUIRE(corpus.size() == 10);

        mc = w.tiny_config(32, 2, 2);
        mc.ff_dim = 128;
        rim_model = Model<float>::init(mc, 1);
        cot_model = Model<float>::init(mc, 1);
        fresh = Model<float>::init(mc, 2);

        TrainConfig tc;
        tc.learning_rate = 3e-3;
        tc.batch_size = 10;
        tc.seed = 5;
        tc.stage1_epochs = 400;
        tc.stage2_epochs = 250;
        tc.k_blocks = 3;
        tc.diagnostics_every = 1000;
        fs::remove_all(dir);
        train_stage1(rim_model, w.vocab, corpus, tc, dir + "/rim");
        train_stage2(rim_model, w.vocab, corpus, tc, dir + "/rim");
        train_sft(cot_model, w.vocab, corpus, tc, /*with_cot=*/true, 400, dir + "/cot");

        ec.k_blocks = 3;
        ec.memory_m = 2;
        save_checkpoint(good_ckpt, rim_model);
        save_checkpoint(bad_ckpt, fresh);
    }
};

EvalFixture& fx() {
    static EvalFixture f;
    return f;
}

}  // namespace

TEST_CASE("answer canonicalization and matching") {
    CHECK(canonical_answer("  42 ") == "42");
    CHECK(canonical_answer("3.50") == "3.5");
    CHECK(canonical_answer("3.00") == "3");
    CHECK(canonical_answer("-0.00") == "0");
    CHECK(canonical_answer("-7.25") == "-7.25");
    CHECK(canonical_answer("12.") == "12");  // bare trailing point dropped
    CHECK(canonical_answer("abc ") == "abc");
    CHECK(answers_match("3.50", "3.5"));
    CHECK(!answers_match("3.51", "3.5"));
    CHECK(answers_match("3.5000001", "3.5", /*numeric=*/true, 1e-3));
    CHECK(!answers_match("3.51", "3.5", /*numeric=*/true, 1e-3));
    CHECK(eval_mode_from_string("sft-cot") == EvalMode::sft_cot);
    CHECK(eval_mode_name(EvalMode::coconut) == "coconut");
    CHECK_THROWS_AS(eval_mode_from_string("other"), Error);
}

TEST_CASE("memorizing model reaches accuracy 1.0 on its corpus") {
    EvalFixture& f = fx();
    EvalOutput out = evaluate_readouts(f.rim_model, f.w.vocab, f.corpus, f.ec);
    CHECK(out.report.n_samples == 10);
    CHECK(out.report.final_block_acc == 1.0);
    CHECK(out.report.best_block_acc == 1.0);
    CHECK(out.report.any_block_acc == 1.0);
    REQUIRE(out.report.per_block_acc.size() == 3);

    // one combined stream pass per sample, independent of K
    CHECK(out.counters.per_sample_stream_min == 1);
    CHECK(out.counters.per_sample_stream_max == 1);
    CHECK(out.counters.stream_forwards == 10);

    // decoded strings match gold exactly
    for (const ReadoutResult& r : out.results) {
        CHECK(r.answers.size() == 3);
        CHECK(answers_match(r.answers.back(), r.gold));
    }
}

TEST_CASE("accuracy ordering holds on an untrained model too") {
    EvalFixture& f = fx();
    EvalConfig ec = f.ec;
    ec.decode_budget = 16;  // keep the rambling short
    EvalOutput out = evaluate_readouts(f.fresh, f.w.vocab, f.corpus, ec);
    CHECK(out.report.final_block_acc <= out.report.best_block_acc);
    CHECK(out.report.best_block_acc <= out.report.any_block_acc);
    CHECK(out.report.any_block_acc <= 1.0);
    CHECK(out.counters.per_sample_stream_max == 1);
}

TEST_CASE("decode budget exhaustion is recorded as incorrect") {
    EvalFixture& f = fx();
    EvalConfig ec = f.ec;
    ec.decode_budget = 2;  // no room for digits + closing brace
    EvalOutput out = evaluate_readouts(f.rim_model, f.w.vocab, f.corpus, ec);
    CHECK(out.report.any_block_acc == 0.0);
}

TEST_CASE("sft with cot decodes the full trace then the answer") {
    EvalFixture& f = fx();
    EvalOutput out = evaluate_sft(f.cot_model, f.w.vocab, f.corpus, f.ec, /*with_cot=*/true);
    CHECK(out.report.final_block_acc == 1.0);
    CHECK(out.report.per_block_acc.size() == 1);
    for (size_t i = 0; i < f.corpus.size(); ++i) {
        const TokenizedSample tok = tokenize_sample(f.w.vocab, f.corpus[i]);
        int trace = 0;
        for (const auto& st : tok.steps_spaced) trace += static_cast<int>(st.size());
        CHECK(out.results[i].decode_steps >= trace);
        CHECK(out.results[i].stream_forwards == 1);
    }
}

TEST_CASE("coconut evaluation counts one forward per injected thought") {
    EvalFixture& f = fx();
    EvalConfig ec = f.ec;
    ec.coconut_thoughts = 4;
    ec.cot_decode_budget = 8;  // untrained model: cap the rambling
    EvalOutput out = evaluate_coconut(f.fresh, f.w.vocab, f.corpus, ec);
    CHECK(out.counters.per_sample_stream_min == 5);
    CHECK(out.counters.per_sample_stream_max == 5);
    CHECK(out.report.per_block_acc.size() == 1);
}

TEST_CASE("pass@k is monotone in k and matches greedy at low temperature") {
    EvalFixture& f = fx();
    EvalConfig ec = f.ec;
    ec.seed = 99;

    PassAtKResult pk = pass_at_k(f.rim_model, f.w.vocab, f.corpus, ec, EvalMode::rim, 4, 1.0);
    REQUIRE(pk.rate_at.size() == 4);
    for (size_t j = 1; j < pk.rate_at.size(); ++j) CHECK(pk.rate_at[j] >= pk.rate_at[j - 1]);
    CHECK(pk.rate == pk.rate_at.back());

    const std::vector<uint8_t> flags =
        greedy_flags(f.rim_model, f.w.vocab, f.corpus, ec, EvalMode::rim);
    double greedy = 0;
    for (uint8_t v : flags) greedy += v;
    greedy /= static_cast<double>(flags.size());
    PassAtKResult cold =
        pass_at_k(f.rim_model, f.w.vocab, f.corpus, ec, EvalMode::rim, 1, 1e-6);
    CHECK(cold.rate == doctest::Approx(greedy));

    // direct-decode stream
    PassAtKResult ps =
        pass_at_k(f.cot_model, f.w.vocab, f.corpus, ec, EvalMode::sft_cot, 2, 1e-6);
    CHECK(ps.rate == 1.0);
}

TEST_CASE("answer transitions: hand counts and telescoping") {
    auto mk = [](int id, std::vector<bool> flags) {
        ReadoutResult r;
        r.sample_id = id;
        r.gold = "1";
        r.correct = std::move(flags);
        r.answers.assign(r.correct.size(), "");
        return r;
    };

    // flags [0,1,1]: block 2 gains one, block 3 is quiet
    TransitionReport rep = answer_transitions({mk(0, {false, true, true})});
    REQUIRE(rep.to_correct.size() == 2);
    CHECK(rep.to_correct[0] == 1);
    CHECK(rep.to_incorrect[0] == 0);
    CHECK(rep.to_correct[1] == 0);
    CHECK(rep.to_incorrect[1] == 0);
    CHECK(rep.net_cumulative[1] == 1);

    // constant flags: all zero
    rep = answer_transitions({mk(0, {true, true, true}), mk(1, {false, false, false})});
    for (size_t i = 0; i < rep.to_correct.size(); ++i) {
        CHECK(rep.to_correct[i] == 0);
        CHECK(rep.to_incorrect[i] == 0);
        CHECK(rep.net_cumulative[i] == 0);
    }

    // telescoping identity on mixed flags
    std::vector<ReadoutResult> rs = {mk(0, {false, true, false}), mk(1, {true, false, true}),
                                     mk(2, {false, false, true}), mk(3, {true, true, true})};
    rep = answer_transitions(rs);
    long long at_first = 0, at_last = 0;
    for (const ReadoutResult& r : rs) {
        at_first += r.correct.front();
        at_last += r.correct.back();
    }
    CHECK(rep.net_cumulative.back() == at_last - at_first);

    // the identity also holds on real model output
    EvalFixture& f = fx();
    EvalConfig ec = f.ec;
    ec.decode_budget = 16;
    EvalOutput out = evaluate_readouts(f.fresh, f.w.vocab, f.corpus, ec);
    TransitionReport tr = answer_transitions(out.results);
    long long c1 = 0, ck = 0;
    for (const ReadoutResult& r : out.results) {
        c1 += r.correct.front();
        ck += r.correct.back();
    }
    CHECK(tr.net_cumulative.back() == ck - c1);

    CHECK_THROWS_AS(answer_transitions({mk(0, {true})}), Error);  // needs K >= 2
}

TEST_CASE("budget sweep matches point evaluation and skips oversize cells") {
    EvalFixture& f = fx();
    std::vector<SweepCell> cells =
        budget_sweep(f.rim_model, f.w.vocab, f.corpus, f.ec, {2}, {1, 3, 40});
    REQUIRE(cells.size() == 3);

    EvalOutput point = evaluate_readouts(f.rim_model, f.w.vocab, f.corpus, f.ec);
    const SweepCell& trained = cells[1];
    CHECK(trained.memory_m == 2);
    CHECK(trained.k_blocks == 3);
    CHECK(!trained.skipped);
    CHECK(trained.final_block_acc == doctest::Approx(point.report.final_block_acc));

    CHECK(!cells[0].skipped);
    CHECK(cells[2].skipped);  // K=40 blows the 192-position budget
    CHECK(cells[2].note.find("position budget") != std::string::npos);

    CHECK_THROWS_AS(budget_sweep(f.rim_model, f.w.vocab, f.corpus, f.ec, {}, {1}), Error);
}

TEST_CASE("checkpoint selection picks the better model on every split") {
    EvalFixture& f = fx();
    std::vector<Sample> pool(f.corpus.begin(), f.corpus.begin() + 6);
    std::vector<Sample> reporting(f.corpus.begin() + 6, f.corpus.end());

    CheckpointSelection sel =
        select_checkpoint({f.bad_ckpt, f.good_ckpt}, f.w.vocab, pool, reporting, f.ec,
                          EvalMode::rim, /*repeats=*/4, /*split_size=*/4, /*seed=*/3);
    REQUIRE(sel.chosen.size() == 4);
    for (int c : sel.chosen) CHECK(c == 1);
    CHECK(sel.mean_acc == 1.0);
    CHECK(sel.std_error == 0.0);

    // single checkpoint: trivially selected
    CheckpointSelection solo = select_checkpoint({f.good_ckpt}, f.w.vocab, pool, reporting,
                                                 f.ec, EvalMode::rim, 2, 3, 3);
    for (int c : solo.chosen) CHECK(c == 0);

    // overlapping splits are an error
    CHECK_THROWS_AS(select_checkpoint({f.good_ckpt}, f.w.vocab, pool, pool, f.ec,
                                      EvalMode::rim, 1, 2, 3),
                    Error);
}

TEST_CASE("evaluation csv emitters") {
    EvalReport rep;
    rep.final_block_acc = 0.5;
    rep.best_block_acc = 0.75;
    rep.any_block_acc = 0.75;
    rep.per_block_acc = {0.25, 0.75, 0.5};
    rep.best_block = 2;
    rep.n_samples = 4;
    const std::string csv = eval_report_csv(rep);
    CHECK(csv.find("final_block_acc,0.5\n") != std::string::npos);
    CHECK(csv.find("per_block_acc_2,0.75\n") != std::string::npos);
    CHECK(csv.find("pass_at_k") == std::string::npos);  // unset: omitted

    TransitionReport tr;
    tr.k_blocks = 3;
    tr.n_samples = 1;
    tr.to_correct = {1, 0};
    tr.to_incorrect = {0, 0};
    tr.net_cumulative = {1, 1};
    CHECK(transitions_csv(tr) ==
          "block,to_correct,to_incorrect,net_cumulative\n2,1,0,1\n3,0,0,1\n");

    SweepCell cell;
    cell.memory_m = 2;
    cell.k_blocks = 40;
    cell.skipped = true;
    cell.note = "position budget exceeded";
    CHECK(sweep_csv({cell}).find("2,40,,1,position budget exceeded") != std::string::npos);
}
