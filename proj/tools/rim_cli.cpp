// Command-line front end: corpus generation, the training variants, the
// evaluation protocols and the representation-analysis tools.
//
// Every command resolves its settings through a RunConfig: declared
// defaults, then an optional --config file, then repeated --set key=value
// overrides.  The resolved config (with its hash and seed) is written next
// to the command's outputs, and every CSV the CLI emits starts with
//   # config_hash = 0x<hash>
//   # seed = <seed>
// so artifacts can always be matched to the settings that produced them.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "rim/analysis.hpp"
#include "rim/checkpoint.hpp"
#include "rim/common.hpp"
#include "rim/corpus.hpp"
#include "rim/curriculum.hpp"
#include "rim/evaluation.hpp"
#include "rim/layout.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"
#include "rim/runconfig.hpp"
#include "rim/trainer.hpp"
#include "rim/vocab.hpp"

namespace fs = std::filesystem;

namespace rim {
namespace {

// ------------------------------------------------------------ plumbing ----

struct KeyArgs {
    std::string config_file;
    std::vector<std::string> sets;
    bool show_keys = false;
};

void attach_key_options(CLI::App* cmd, KeyArgs& args) {
    cmd->add_option("--config", args.config_file, "key = value file applied over the defaults");
    cmd->add_option("--set", args.sets, "override one key (key=value); repeatable")
        ->allow_extra_args(false);
    cmd->add_flag("--keys", args.show_keys, "list this command's keys and defaults, then exit");
}

/// defaults -> config file -> --set overrides; --keys short-circuits.
void resolve(RunConfig& rc, const KeyArgs& args) {
    if (args.show_keys) {
        std::cout << rc.help_text();
        std::exit(0);
    }
    if (!args.config_file.empty()) rc.load_file(args.config_file);
    std::vector<std::pair<std::string, std::string>> kv;
    kv.reserve(args.sets.size());
    for (const std::string& s : args.sets) kv.push_back(parse_key_value(s));
    rc.apply_overrides(kv);
}

std::string header_for(const RunConfig& rc) {
    return "# config_hash = 0x" + hex64(rc.hash()) + "\n# seed = " + rc.get("seed") + "\n";
}

/// config.txt in the run directory: header plus the sorted key = value dump.
void write_run_config(const RunConfig& rc, const std::string& dir) {
    fs::create_directories(dir);
    write_text_file(dir + "/config.txt", header_for(rc) + rc.dump());
}

std::string fixed(double v, int digits = 4) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

// ------------------------------------------------------- list parsing ----

std::vector<std::string> split_commas(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    for (const std::string& piece : split_commas(text)) {
        try {
            size_t used = 0;
            int v = std::stoi(piece, &used);
            check(used == piece.size(), "");
            out.push_back(v);
        } catch (const std::exception&) {
            fail("cli: bad integer '" + piece + "' in " + what);
        }
    }
    check(!out.empty(), "cli: empty list for " + what);
    return out;
}

/// "1:0.30,2:0.30,..." -> step-count distribution pairs.
std::vector<std::pair<int, double>> parse_step_dist(const std::string& text) {
    std::vector<std::pair<int, double>> out;
    for (const std::string& piece : split_commas(text)) {
        size_t colon = piece.find(':');
        check(colon != std::string::npos, "cli: step_dist entries look like t:p, got '" + piece + "'");
        try {
            out.emplace_back(std::stoi(piece.substr(0, colon)), std::stod(piece.substr(colon + 1)));
        } catch (const std::exception&) {
            fail("cli: bad step_dist entry '" + piece + "'");
        }
    }
    check(!out.empty(), "cli: step_dist is empty");
    return out;
}

std::vector<Op> parse_operators(const std::string& text) {
    std::vector<Op> ops;
    for (char c : text) ops.push_back(op_from_char(c));
    check(!ops.empty(), "cli: operator set is empty");
    return ops;
}

// ------------------------------------------------------------- loading ----

std::vector<Sample> load_samples(const std::string& path, int64_t limit) {
    check(fs::exists(path), "cli: corpus file not found: " + path);
    std::vector<Sample> samples = read_jsonl(path);
    check(!samples.empty(), "cli: corpus is empty: " + path);
    if (limit > 0 && limit < static_cast<int64_t>(samples.size()))
        samples.resize(static_cast<size_t>(limit));
    return samples;
}

/// Empty key falls back to vocab.json beside the corpus file.
std::string vocab_path_for(const RunConfig& rc, const std::string& corpus_path) {
    std::string p = rc.get("vocab");
    if (p.empty()) p = (fs::path(corpus_path).parent_path() / "vocab.json").string();
    return p;
}

Vocabulary load_vocab(const std::string& path) {
    check(fs::exists(path), "cli: vocabulary not found: " + path +
                                " (gen-corpus and train write one as vocab.json)");
    return Vocabulary::from_json(read_text_file(path));
}

Model<float> load_model(const std::string& path, const Vocabulary& vocab) {
    check(!path.empty(), "cli: checkpoint=<path> is required");
    check(fs::exists(path), "cli: checkpoint not found: " + path);
    Model<float> model = load_checkpoint<float>(path);
    check(model.config.vocab_size == vocab.size(),
          "cli: checkpoint vocab size " + std::to_string(model.config.vocab_size) +
              " does not match the vocabulary (" + std::to_string(vocab.size()) +
              " pieces); pass the vocab.json saved with the training run");
    return model;
}

// ------------------------------------------------------- shared keys ----

void declare_mask_keys(RunConfig& rc) {
    rc.declare("block_bidirectional", "false",
               "latent tokens attend bidirectionally inside their own block");
    rc.declare("readout_sees_question", "true", "readout branches may attend the question");
}

MaskConfig mask_from(const RunConfig& rc) {
    MaskConfig m;
    m.block_bidirectional = rc.get_bool("block_bidirectional");
    m.readout_sees_question = rc.get_bool("readout_sees_question");
    return m;
}

void declare_eval_keys(RunConfig& rc) {
    rc.declare("k_blocks", "8", "memory blocks at inference");
    rc.declare("memory_m", "2", "latent tokens per block");
    rc.declare("decode_budget", "48", "generated tokens per readout / direct answer");
    rc.declare("cot_decode_budget", "256", "generated tokens when a trace precedes the answer");
    rc.declare("coconut_thoughts", "0", "continuous thoughts injected at inference");
    rc.declare("coconut_hidden_layer", "-1", "thought source layer; -1 = last");
    rc.declare("numeric_match", "false", "compare answers numerically instead of by string");
    declare_mask_keys(rc);
}

EvalConfig eval_config_from(const RunConfig& rc) {
    EvalConfig ec;
    ec.k_blocks = static_cast<int>(rc.get_int("k_blocks"));
    ec.memory_m = static_cast<int>(rc.get_int("memory_m"));
    ec.mask = mask_from(rc);
    ec.decode_budget = static_cast<int>(rc.get_int("decode_budget"));
    ec.cot_decode_budget = static_cast<int>(rc.get_int("cot_decode_budget"));
    ec.coconut_thoughts = static_cast<int>(rc.get_int("coconut_thoughts"));
    ec.coconut_hidden_layer = static_cast<int>(rc.get_int("coconut_hidden_layer"));
    ec.numeric_match = rc.get_bool("numeric_match");
    ec.seed = static_cast<uint64_t>(rc.get_int("seed"));
    return ec;
}

void declare_model_keys(RunConfig& rc) {
    rc.declare("dim", "128", "residual width");
    rc.declare("n_layers", "4", "transformer layers");
    rc.declare("n_heads", "4", "attention heads");
    rc.declare("ff_dim", "512", "mlp hidden width");
    rc.declare("max_positions", "512", "position-embedding table size");
    rc.declare("dropout", "0.0", "dropout on attention/mlp outputs (training)");
    rc.declare("adapter_rank", "0", "low-rank adapter width on projections; 0 = off");
    rc.declare("embedding_partition", "false", "freeze base-vocab embedding columns at init");
}

ModelConfig model_config_from(const RunConfig& rc, const Vocabulary& vocab) {
    ModelConfig mc;
    mc.vocab_size = vocab.size();
    mc.dim = static_cast<int>(rc.get_int("dim"));
    mc.n_layers = static_cast<int>(rc.get_int("n_layers"));
    mc.n_heads = static_cast<int>(rc.get_int("n_heads"));
    mc.ff_dim = static_cast<int>(rc.get_int("ff_dim"));
    mc.max_positions = static_cast<int>(rc.get_int("max_positions"));
    mc.dropout = rc.get_double("dropout");
    mc.adapter_rank = static_cast<int>(rc.get_int("adapter_rank"));
    if (rc.get_bool("embedding_partition")) mc.frozen_base_embeddings = vocab.base_size();
    mc.validate();
    return mc;
}

void declare_train_keys(RunConfig& rc) {
    rc.declare("learning_rate", "0.001", "base learning rate");
    rc.declare("warmup_fraction", "0.04", "linear warmup, fraction of the stage's steps");
    rc.declare("weight_decay", "0.01", "decoupled decay on matrices");
    rc.declare("batch_size", "128", "samples per optimizer step");
    rc.declare("stage1_epochs", "6", "rim stage-1 epochs");
    rc.declare("stage2_epochs", "2", "rim stage-2 epochs");
    rc.declare("stage2_learning_rate", "0", "stage-2 rate; 0 = 0.3 * learning_rate");
    rc.declare("stage2_dropout", "0.1", "dropout applied at the stage switch");
    rc.declare("memory_m", "2", "latent tokens per block");
    rc.declare("k_blocks", "8", "stage-2 block count");
    rc.declare("stage1_policy", "linear-relative",
               "stage-1 annealing: linear-relative|constant|absolute");
    rc.declare("stage1_t_max", "0", "annealing horizon for the absolute policy");
    rc.declare("stage2_uniform", "false", "uniform stage-2 readout weights");
    rc.declare("token_reduction", "mean", "per-readout token loss reduction: mean|sum");
    rc.declare("coconut_hidden_layer", "-1", "coconut thought source layer; -1 = last");
    rc.declare("diagnostics_every", "100", "optimizer steps between diagnostics rows");
    rc.declare("checkpoint_every", "0", "checkpoint cadence in steps; 0 = stage end only");
    rc.declare("seed", "0", "training seed");
    declare_mask_keys(rc);
}

TrainConfig train_config_from(const RunConfig& rc) {
    TrainConfig tc;
    tc.learning_rate = rc.get_double("learning_rate");
    tc.warmup_fraction = rc.get_double("warmup_fraction");
    tc.weight_decay = rc.get_double("weight_decay");
    tc.batch_size = static_cast<int>(rc.get_int("batch_size"));
    tc.stage1_epochs = static_cast<int>(rc.get_int("stage1_epochs"));
    tc.stage2_epochs = static_cast<int>(rc.get_int("stage2_epochs"));
    tc.stage2_learning_rate = rc.get_double("stage2_learning_rate");
    tc.stage2_dropout = rc.get_double("stage2_dropout");
    tc.seed = static_cast<uint64_t>(rc.get_int("seed"));
    tc.embedding_partition = rc.get_bool("embedding_partition");
    tc.adapter_rank = static_cast<int>(rc.get_int("adapter_rank"));
    tc.memory_m = static_cast<int>(rc.get_int("memory_m"));
    tc.k_blocks = static_cast<int>(rc.get_int("k_blocks"));
    tc.stage1_policy = stage1_policy_from_string(rc.get("stage1_policy"));
    tc.stage1_t_max = static_cast<int>(rc.get_int("stage1_t_max"));
    tc.stage2_uniform = rc.get_bool("stage2_uniform");
    const std::string red = rc.get("token_reduction");
    if (red == "mean") {
        tc.token_reduction = TokenReduction::mean;
    } else if (red == "sum") {
        tc.token_reduction = TokenReduction::sum;
    } else {
        fail("cli: token_reduction must be mean or sum, got '" + red + "'");
    }
    tc.mask = mask_from(rc);
    tc.coconut_hidden_layer = static_cast<int>(rc.get_int("coconut_hidden_layer"));
    tc.diagnostics_every = static_cast<int>(rc.get_int("diagnostics_every"));
    tc.checkpoint_every = static_cast<int>(rc.get_int("checkpoint_every"));
    tc.validate();
    return tc;
}

// ---------------------------------------------------------- gen-corpus ----

int cmd_gen_corpus(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("out", "runs/corpus", "output directory");
    rc.declare("n", "50000", "training samples");
    rc.declare("holdout", "1000", "held-out evaluation samples");
    rc.declare("selection", "1000", "checkpoint-selection pool samples");
    rc.declare("seed", "0", "generation seed");
    rc.declare("step_dist", "1:0.30,2:0.30,3:0.25,4:0.15", "step-count distribution t:p,...");
    rc.declare("operand_min", "2", "fresh operand minimum");
    rc.declare("operand_max", "99", "fresh operand maximum");
    rc.declare("operators", "+-*/", "operator set");
    rc.declare("max_abs_value", "1000000", "resample steps whose result magnitude exceeds this");
    rc.declare("unique_questions", "true", "deduplicate questions across all splits");
    resolve(rc, args);

    CorpusSpec spec;
    spec.step_distribution = parse_step_dist(rc.get("step_dist"));
    spec.operand_min = rc.get_int("operand_min");
    spec.operand_max = rc.get_int("operand_max");
    spec.operators = parse_operators(rc.get("operators"));
    spec.max_abs_value = rc.get_int("max_abs_value");

    const uint64_t seed = static_cast<uint64_t>(rc.get_int("seed"));
    const size_t n_train = static_cast<size_t>(rc.get_int("n"));
    const size_t n_hold = static_cast<size_t>(rc.get_int("holdout"));
    const size_t n_sel = static_cast<size_t>(rc.get_int("selection"));
    const size_t total = n_train + n_hold + n_sel;
    check(n_train > 0, "gen-corpus: n must be positive");

    std::vector<Sample> train, hold, sel;
    train.reserve(n_train);
    hold.reserve(n_hold);
    sel.reserve(n_sel);
    if (rc.get_bool("unique_questions")) {
        // Rejection keeps the splits disjoint by question, so held-out
        // accuracy cannot be memorization.  The attempt cap only trips when
        // the question space is too small for the requested counts.
        std::set<std::string> seen;
        const uint64_t max_attempts = 64 + 20 * static_cast<uint64_t>(total);
        uint64_t index = 0;
        while (train.size() + hold.size() + sel.size() < total) {
            check(index < max_attempts,
                  "gen-corpus: could not draw " + std::to_string(total) +
                      " unique questions; shrink the splits or widen the operand range");
            Sample s = generate_sample(spec, seed, index++);
            if (!seen.insert(s.question).second) continue;
            if (train.size() < n_train) {
                train.push_back(std::move(s));
            } else if (hold.size() < n_hold) {
                hold.push_back(std::move(s));
            } else {
                sel.push_back(std::move(s));
            }
        }
    } else {
        std::vector<Sample> all = generate_corpus(spec, seed, total);
        auto mid1 = all.begin() + static_cast<std::ptrdiff_t>(n_train);
        auto mid2 = mid1 + static_cast<std::ptrdiff_t>(n_hold);
        train.assign(std::make_move_iterator(all.begin()), std::make_move_iterator(mid1));
        hold.assign(std::make_move_iterator(mid1), std::make_move_iterator(mid2));
        sel.assign(std::make_move_iterator(mid2), std::make_move_iterator(all.end()));
    }

    const std::string out = rc.get("out");
    fs::create_directories(out);
    write_corpus(out + "/train.jsonl", train, spec, seed);
    if (!hold.empty()) write_corpus(out + "/heldout.jsonl", hold, spec, seed);
    if (!sel.empty()) write_corpus(out + "/selection.jsonl", sel, spec, seed);

    // one vocabulary over every split, so downstream encodes never miss a piece
    std::vector<Sample> everything = train;
    everything.insert(everything.end(), hold.begin(), hold.end());
    everything.insert(everything.end(), sel.begin(), sel.end());
    Vocabulary vocab = Vocabulary::build(everything);
    write_text_file(out + "/vocab.json", vocab.to_json());
    write_run_config(rc, out);

    std::cout << "wrote " << train.size() << " train, " << hold.size() << " heldout, "
              << sel.size() << " selection samples; vocabulary " << vocab.size()
              << " pieces -> " << out << "\n";
    return 0;
}

// --------------------------------------------------------------- train ----

int cmd_train(const std::string& variant, const KeyArgs& args) {
    check(variant == "sft" || variant == "rim-stage1" || variant == "rim-stage2" ||
              variant == "coconut",
          "cli: unknown training variant '" + variant + "' (sft|rim-stage1|rim-stage2|coconut)");
    RunConfig rc;
    rc.declare("variant", variant, "training recipe (fixed by the subcommand)");
    rc.declare("corpus", "runs/corpus/train.jsonl", "training samples (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/" + variant, "run directory");
    rc.declare("init", "", "checkpoint to start from");
    rc.declare("from_scratch", "false", "allow rim-stage2 without an init checkpoint");
    rc.declare("limit", "0", "cap on corpus samples; 0 = all");
    rc.declare("with_cot", "false", "sft: supervise the reasoning trace before the answer");
    rc.declare("epochs", "6", "sft epochs over the corpus");
    rc.declare("coconut_stages", "3", "coconut: curriculum stages after stage 0");
    rc.declare("coconut_thoughts_per_step", "2", "coconut: thoughts replacing one step");
    rc.declare("coconut_epochs_per_stage", "2", "coconut: epochs per curriculum stage");
    rc.declare("coconut_stage0", "true", "coconut: start with a plain CoT stage");
    declare_model_keys(rc);
    declare_train_keys(rc);
    resolve(rc, args);
    rc.set("variant", variant);  // not overridable; the subcommand is the recipe

    const std::string corpus_path = rc.get("corpus");
    std::vector<Sample> samples = load_samples(corpus_path, rc.get_int("limit"));
    const std::string vocab_path = vocab_path_for(rc, corpus_path);
    Vocabulary vocab = fs::exists(vocab_path) ? load_vocab(vocab_path) : Vocabulary::build(samples);
    if (!fs::exists(vocab_path))
        std::cout << "note: " << vocab_path << " not found, building the vocabulary from "
                  << corpus_path << "\n";

    TrainConfig tc = train_config_from(rc);
    const std::string init = rc.get("init");
    if (variant == "rim-stage2") {
        check(!init.empty() || rc.get_bool("from_scratch"),
              "train rim-stage2: no stage-1 checkpoint; pass init=<checkpoint> or set "
              "from_scratch=true");
    }
    Model<float> model = init.empty()
                             ? Model<float>::init(model_config_from(rc, vocab),
                                                  derive_seed(tc.seed, 0xD0DE1ull))
                             : load_model(init, vocab);

    const std::string out = rc.get("out");
    write_run_config(rc, out);
    write_text_file(out + "/vocab.json", vocab.to_json());

    TrainReport rep;
    if (variant == "sft") {
        rep = train_sft(model, vocab, samples, tc, rc.get_bool("with_cot"),
                        static_cast<int>(rc.get_int("epochs")), out);
    } else if (variant == "rim-stage1") {
        rep = train_stage1(model, vocab, samples, tc, out);
    } else if (variant == "rim-stage2") {
        rep = train_stage2(model, vocab, samples, tc, out);
    } else {
        std::vector<CoconutStage> plan = coconut_stage_plan(
            static_cast<int>(rc.get_int("coconut_stages")),
            static_cast<int>(rc.get_int("coconut_thoughts_per_step")),
            static_cast<int>(rc.get_int("coconut_epochs_per_stage")), rc.get_bool("coconut_stage0"));
        rep = train_coconut(model, vocab, samples, tc, plan, out);
    }

    std::cout << variant << ": " << rep.steps << " steps, final loss " << fixed(rep.final_loss)
              << ", train perplexity " << fixed(rep.final_train_perplexity) << "\n";
    for (const std::string& p : rep.checkpoints) std::cout << "  checkpoint " << p << "\n";
    return 0;
}

// ---------------------------------------------------------------- eval ----

int cmd_eval(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "evaluation samples (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/eval", "output directory");
    rc.declare("mode", "rim", "decoding protocol: rim|sft|sft-cot|coconut");
    rc.declare("limit", "0", "cap on samples; 0 = all");
    rc.declare("pass_k", "0", "also estimate pass@k with this many draws; 0 = off");
    rc.declare("temperature", "1.0", "pass@k sampling temperature");
    rc.declare("seed", "0", "pass@k sampling seed");
    declare_eval_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);
    const EvalMode mode = eval_mode_from_string(rc.get("mode"));
    const EvalConfig ec = eval_config_from(rc);

    EvalOutput out = evaluate(model, vocab, samples, ec, mode);
    const int pass_k = static_cast<int>(rc.get_int("pass_k"));
    PassAtKResult pk;
    if (pass_k > 0) {
        pk = pass_at_k(model, vocab, samples, ec, mode, pass_k, rc.get_double("temperature"));
        out.report.pass_at_k = pk.rate;
    }

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    const std::string hdr = header_for(rc);
    std::string report = eval_report_csv(out.report);
    report += "stream_forwards," + std::to_string(out.counters.stream_forwards) + "\n";
    report += "decode_steps," + std::to_string(out.counters.decode_steps) + "\n";
    report += "per_sample_stream_min," + std::to_string(out.counters.per_sample_stream_min) + "\n";
    report += "per_sample_stream_max," + std::to_string(out.counters.per_sample_stream_max) + "\n";
    if (pass_k > 0) {
        for (int j = 1; j <= pk.k; ++j)
            report += "pass_at_" + std::to_string(j) + "," +
                      fixed(pk.rate_at[static_cast<size_t>(j - 1)], 6) + "\n";
    }
    write_text_file(dir + "/eval_report.csv", hdr + report);
    write_text_file(dir + "/readouts.csv", hdr + readouts_csv(out.results));
    write_run_config(rc, dir);

    std::cout << eval_mode_name(mode) << " on " << out.report.n_samples
              << " samples: final_block_acc " << fixed(out.report.final_block_acc)
              << ", best_block_acc " << fixed(out.report.best_block_acc) << " (block "
              << out.report.best_block << "), any_block_acc " << fixed(out.report.any_block_acc)
              << "\n";
    std::cout << "counters: stream_forwards " << out.counters.stream_forwards
              << " (per sample " << out.counters.per_sample_stream_min << ".."
              << out.counters.per_sample_stream_max << "), decode_steps "
              << out.counters.decode_steps << "\n";
    if (pass_k > 0)
        std::cout << "pass@" << pk.k << " = " << fixed(pk.rate) << " at temperature "
                  << rc.get("temperature") << "\n";
    return 0;
}

// --------------------------------------------------------------- sweep ----

int cmd_sweep(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "evaluation samples (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/sweep", "output directory");
    rc.declare("limit", "0", "cap on samples; 0 = all");
    rc.declare("m_values", "1,2,4", "latent-count grid");
    rc.declare("k_values", "2,4,6,8,10,12", "block-count grid");
    rc.declare("seed", "0", "recorded only; the sweep decodes greedily");
    declare_eval_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);
    const EvalConfig ec = eval_config_from(rc);

    std::vector<SweepCell> cells =
        budget_sweep(model, vocab, samples, ec, parse_int_list(rc.get("m_values"), "m_values"),
                     parse_int_list(rc.get("k_values"), "k_values"));

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    write_text_file(dir + "/sweep.csv", header_for(rc) + sweep_csv(cells));
    write_run_config(rc, dir);

    for (const SweepCell& c : cells) {
        std::cout << "M=" << c.memory_m << " K=" << c.k_blocks << "  "
                  << (c.skipped ? "skipped: " + c.note : "final_block_acc " + fixed(c.final_block_acc))
                  << "\n";
    }
    return 0;
}

// --------------------------------------------------------- transitions ----

int cmd_transitions(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "evaluation samples (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/transitions", "output directory");
    rc.declare("limit", "0", "cap on samples; 0 = all");
    rc.declare("seed", "0", "recorded only; transitions decode greedily");
    declare_eval_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);

    EvalOutput out = evaluate_readouts(model, vocab, samples, eval_config_from(rc));
    TransitionReport tr = answer_transitions(out.results);

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    const std::string hdr = header_for(rc);
    write_text_file(dir + "/transitions.csv", hdr + transitions_csv(tr));
    write_text_file(dir + "/readouts.csv", hdr + readouts_csv(out.results));
    write_run_config(rc, dir);

    for (size_t i = 0; i < tr.to_correct.size(); ++i) {
        std::cout << "block " << i + 2 << ": +" << tr.to_correct[i] << " -" << tr.to_incorrect[i]
                  << "  net since block 1: " << tr.net_cumulative[i] << "\n";
    }
    std::cout << "final_block_acc " << fixed(out.report.final_block_acc) << " over "
              << tr.n_samples << " samples\n";
    return 0;
}

// --------------------------------------------------- select-checkpoint ----

int cmd_select_checkpoint(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoints", "", "comma-separated checkpoint paths (required)");
    rc.declare("selection_corpus", "runs/corpus/selection.jsonl", "selection pool (jsonl)");
    rc.declare("reporting_corpus", "runs/corpus/heldout.jsonl", "reporting set (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the selection pool");
    rc.declare("out", "runs/select", "output directory");
    rc.declare("mode", "rim", "decoding protocol: rim|sft|sft-cot|coconut");
    rc.declare("repeats", "5", "independent selection repeats");
    rc.declare("split_size", "256", "selection subset drawn per repeat");
    rc.declare("selection_limit", "0", "cap on the selection pool; 0 = all");
    rc.declare("reporting_limit", "0", "cap on the reporting set; 0 = all");
    rc.declare("seed", "0", "subset-draw seed");
    declare_eval_keys(rc);
    resolve(rc, args);

    std::vector<std::string> paths = split_commas(rc.get("checkpoints"));
    check(!paths.empty(), "select-checkpoint: checkpoints=<a,b,...> is required");
    std::vector<Sample> pool =
        load_samples(rc.get("selection_corpus"), rc.get_int("selection_limit"));
    std::vector<Sample> reporting =
        load_samples(rc.get("reporting_corpus"), rc.get_int("reporting_limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("selection_corpus")));
    for (const std::string& p : paths)
        check(fs::exists(p), "select-checkpoint: checkpoint not found: " + p);

    CheckpointSelection sel = select_checkpoint(
        paths, vocab, pool, reporting, eval_config_from(rc), eval_mode_from_string(rc.get("mode")),
        static_cast<int>(rc.get_int("repeats")), static_cast<int>(rc.get_int("split_size")),
        static_cast<uint64_t>(rc.get_int("seed")));

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    write_text_file(dir + "/selection.csv", header_for(rc) + selection_csv(sel, paths));
    write_run_config(rc, dir);

    for (size_t r = 0; r < sel.chosen.size(); ++r) {
        std::cout << "repeat " << r << ": chose " << paths[static_cast<size_t>(sel.chosen[r])]
                  << ", reporting acc " << fixed(sel.repeat_acc[r]) << "\n";
    }
    std::cout << "reporting accuracy " << fixed(sel.mean_acc) << " +/- " << fixed(sel.std_error)
              << " over " << sel.chosen.size() << " repeats\n";
    return 0;
}

// ------------------------------------------------------------- capture ----

int cmd_capture(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "samples to capture (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/capture", "output directory (dump.bin inside)");
    rc.declare("layer", "-1", "residual layer to read; -1 = penultimate");
    rc.declare("k_blocks", "8", "memory blocks");
    rc.declare("memory_m", "2", "latent tokens per block");
    rc.declare("limit", "0", "cap on samples; 0 = all");
    rc.declare("id", "", "checkpoint id recorded in the dump; default: checkpoint stem");
    rc.declare("seed", "0", "recorded only; capture is deterministic");
    declare_mask_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);

    CaptureConfig cc;
    cc.layer = static_cast<int>(rc.get_int("layer"));
    cc.k_blocks = static_cast<int>(rc.get_int("k_blocks"));
    cc.memory_m = static_cast<int>(rc.get_int("memory_m"));
    cc.mask = mask_from(rc);
    cc.checkpoint_id = rc.get("id").empty() ? fs::path(rc.get("checkpoint")).stem().string()
                                            : rc.get("id");

    RepresentationDump dump = capture_representations(model, vocab, samples, cc);
    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    save_dump(dir + "/dump.bin", dump);
    write_run_config(rc, dir);

    std::cout << "captured layer " << dump.layer << " of '" << dump.checkpoint_id << "': "
              << dump.dim << " x " << dump.vectors.cols() << " (" << dump.n_samples()
              << " samples x " << dump.k_blocks << " blocks) -> " << dir << "/dump.bin\n";
    return 0;
}

// ----------------------------------------------------------------- pca ----

int cmd_pca(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("dumps", "", "comma-separated representation dumps (required)");
    rc.declare("out", "runs/pca", "output directory");
    rc.declare("components", "2", "basis size");
    rc.declare("seed", "0", "recorded only; the decomposition is deterministic");
    resolve(rc, args);

    std::vector<std::string> paths = split_commas(rc.get("dumps"));
    check(!paths.empty(), "pca: dumps=<a,b,...> is required");
    std::vector<RepresentationDump> dumps;
    dumps.reserve(paths.size());
    for (const std::string& p : paths) {
        check(fs::exists(p), "pca: dump not found: " + p);
        dumps.push_back(load_dump(p));
    }

    PcaBasis basis = pca_shared_basis(dumps, static_cast<int>(rc.get_int("components")));
    std::vector<Mat<double>> projections;
    projections.reserve(dumps.size());
    for (const RepresentationDump& d : dumps) projections.push_back(pca_project(basis, d));

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    std::string hdr = header_for(rc);
    hdr += "# explained_ratio =";
    for (double r : basis.explained_ratio) hdr += " " + fixed(r, 6);
    hdr += "\n# explained_total = " + fixed(basis.explained_total(), 6) +
           "\n# truncated = " + std::string(basis.truncated ? "1" : "0") + "\n";
    write_text_file(dir + "/projections.csv", hdr + projections_csv(dumps, projections));

    // first-to-final deltas, projected without re-centering (differences)
    std::string dcsv = "checkpoint,sample_id";
    for (int c = 1; c <= basis.n_components(); ++c) dcsv += ",d" + std::to_string(c);
    dcsv += "\n";
    std::string scsv =
        "checkpoint,mean_delta_norm,extreme_a,extreme_b,extreme_separation,extreme_cosine\n";
    for (const RepresentationDump& d : dumps) {
        if (d.k_blocks < 2) continue;
        Mat<float> deltas = first_to_final_delta(d);
        Mat<double> pd = pca_project_vectors(basis, deltas, false);
        for (int s = 0; s < d.n_samples(); ++s) {
            dcsv += d.checkpoint_id + "," + std::to_string(d.sample_ids[static_cast<size_t>(s)]);
            for (int c = 0; c < basis.n_components(); ++c) dcsv += "," + fixed(pd(c, s), 6);
            dcsv += "\n";
        }
        ExtremePair ep = extreme_pair_cosine(basis, deltas);
        scsv += d.checkpoint_id + "," + fixed(mean_delta_norm(d), 6) + "," +
                std::to_string(d.sample_ids[static_cast<size_t>(ep.a)]) + "," +
                std::to_string(d.sample_ids[static_cast<size_t>(ep.b)]) + "," +
                fixed(ep.separation, 6) + "," + fixed(ep.cosine, 6) + "\n";
        std::cout << d.checkpoint_id << ": mean first-to-final delta norm "
                  << fixed(mean_delta_norm(d)) << ", extreme-pair cosine " << fixed(ep.cosine)
                  << "\n";
    }
    write_text_file(dir + "/deltas.csv", hdr + dcsv);
    write_text_file(dir + "/pca_summary.csv", hdr + scsv);
    write_run_config(rc, dir);

    std::cout << "shared basis: " << basis.n_components() << " components, explained "
              << fixed(basis.explained_total()) << (basis.truncated ? " (rank-truncated)" : "")
              << "\n";
    return 0;
}

// --------------------------------------------------------------- probe ----

int cmd_probe(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "probe samples (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/probe", "output directory");
    rc.declare("layer", "-1", "residual layer to read; -1 = penultimate");
    rc.declare("limit", "0", "cap on samples; 0 = all");
    rc.declare("train_size", "256", "samples fitted on; the rest are held out");
    rc.declare("l2_grid", "0.001,0.01,0.1,1", "probe L2 strengths tried");
    rc.declare("iterations", "800", "optimizer iterations per probe fit");
    rc.declare("probe_learning_rate", "0.05", "probe optimizer step size");
    rc.declare("skip_single_class", "true", "skip blocks whose labels are single-class");
    rc.declare("seed", "0", "train/held-out split seed");
    declare_eval_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);
    const EvalConfig ec = eval_config_from(rc);

    CaptureConfig cc;
    cc.layer = static_cast<int>(rc.get_int("layer"));
    cc.k_blocks = ec.k_blocks;
    cc.memory_m = ec.memory_m;
    cc.mask = ec.mask;
    cc.checkpoint_id = fs::path(rc.get("checkpoint")).stem().string();
    RepresentationDump dump = capture_representations(model, vocab, samples, cc);

    // labels: whether the readout after each (sample, block) was correct
    EvalOutput eval = evaluate_readouts(model, vocab, samples, ec);
    const int n = dump.n_samples();
    const int K = dump.k_blocks;
    std::vector<uint8_t> labels(static_cast<size_t>(n) * static_cast<size_t>(K), 0);
    for (int s = 0; s < n; ++s)
        for (int b = 1; b <= K; ++b)
            labels[static_cast<size_t>(dump.col(s, b))] =
                eval.results[static_cast<size_t>(s)].correct[static_cast<size_t>(b - 1)] ? 1 : 0;

    const int train_size = static_cast<int>(rc.get_int("train_size"));
    check(train_size >= 2 && train_size < n,
          "probe: train_size must be in [2, n_samples); have " + std::to_string(n) + " samples");
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(derive_seed(static_cast<uint64_t>(rc.get_int("seed")), 0x5B117ull));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[static_cast<size_t>(i)],
                  order[static_cast<size_t>(rng.uniform_int(0, i))]);
    ProbeSplit split;
    split.train.assign(order.begin(), order.begin() + train_size);
    split.held_out.assign(order.begin() + train_size, order.end());

    ProbeFitConfig pc;
    std::vector<std::string> grid = split_commas(rc.get("l2_grid"));
    check(!grid.empty(), "probe: l2_grid is empty");
    pc.l2_grid.clear();
    for (const std::string& g : grid) pc.l2_grid.push_back(std::stod(g));
    pc.iterations = static_cast<int>(rc.get_int("iterations"));
    pc.learning_rate = rc.get_double("probe_learning_rate");
    pc.skip_single_class = rc.get_bool("skip_single_class");
    ProbeModel probes = fit_probes(dump, labels, split, pc);

    // probe-guided answer selection on the held-out samples
    int sel_correct = 0, final_correct = 0, n_rec = 0, sel_rec = 0, final_rec = 0;
    std::string sel_csv = "sample_id,chosen_block,confidence,answer,correct,final_correct,any_correct\n";
    for (int s : split.held_out) {
        const ReadoutResult& r = eval.results[static_cast<size_t>(s)];
        Mat<float> reps = dump.vectors.middleCols(dump.col(s, 1), K);
        AnswerSelection pick = probe_select_answer(probes, reps, r.answers);
        const bool ok = answers_match(pick.answer, r.gold, ec.numeric_match);
        const bool fin = r.correct[static_cast<size_t>(K - 1)];
        const bool any = std::find(r.correct.begin(), r.correct.end(), true) != r.correct.end();
        sel_correct += ok;
        final_correct += fin;
        if (any) {
            ++n_rec;
            sel_rec += ok;
            final_rec += fin;
        }
        sel_csv += std::to_string(r.sample_id) + "," + std::to_string(pick.block) + "," +
                   fixed(pick.confidence, 6) + "," + pick.answer + "," + (ok ? "1" : "0") + "," +
                   (fin ? "1" : "0") + "," + (any ? "1" : "0") + "\n";
    }

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    const std::string hdr = header_for(rc);
    write_text_file(dir + "/probe.csv", hdr + probe_csv(probes));
    write_text_file(dir + "/probe_selection.csv", hdr + sel_csv);
    write_run_config(rc, dir);

    for (int b = 1; b <= K; ++b) {
        const size_t bi = static_cast<size_t>(b - 1);
        auto metric = [](double v) { return v >= 0 ? fixed(v) : std::string("n/a"); };
        std::cout << "block " << b << ": "
                  << (probes.fitted[bi]
                          ? "auroc " + metric(probes.held_out_auroc[bi]) + ", auprc " +
                                metric(probes.held_out_auprc[bi]) + ", l2 " +
                                fixed(probes.chosen_l2[bi], 3)
                          : "skipped (single-class labels)")
                  << "\n";
    }
    const double nh = static_cast<double>(split.held_out.size());
    std::cout << "held-out answer selection: probe-guided " << fixed(sel_correct / nh)
              << " vs final-block " << fixed(final_correct / nh) << " (" << split.held_out.size()
              << " samples)\n";
    if (n_rec > 0) {
        std::cout << "recoverable subset (" << n_rec << "): probe-guided "
                  << fixed(static_cast<double>(sel_rec) / n_rec) << " vs final-block "
                  << fixed(static_cast<double>(final_rec) / n_rec) << "\n";
    }
    return 0;
}

// ------------------------------------------------------------ diagnose ----

int cmd_diagnose(const KeyArgs& args) {
    RunConfig rc;
    rc.declare("checkpoint", "", "model checkpoint (required)");
    rc.declare("corpus", "runs/corpus/heldout.jsonl", "samples to diagnose on (jsonl)");
    rc.declare("vocab", "", "vocabulary json; default: vocab.json beside the corpus");
    rc.declare("out", "runs/diagnose", "output directory");
    rc.declare("k_blocks", "8", "memory blocks");
    rc.declare("memory_m", "2", "latent tokens per block");
    rc.declare("limit", "64", "cap on samples; 0 = all");
    rc.declare("seed", "0", "recorded only; the pass is deterministic");
    declare_mask_keys(rc);
    resolve(rc, args);

    std::vector<Sample> samples = load_samples(rc.get("corpus"), rc.get_int("limit"));
    Vocabulary vocab = load_vocab(vocab_path_for(rc, rc.get("corpus")));
    Model<float> model = load_model(rc.get("checkpoint"), vocab);
    const int K = static_cast<int>(rc.get_int("k_blocks"));
    const int m = static_cast<int>(rc.get_int("memory_m"));
    const MaskConfig mcfg = mask_from(rc);
    const TokenId mtok = vocab.special(SpecialToken::latent);

    // final-layer latent states over the inference stream, as during training
    std::vector<Mat<float>> latents;
    latents.reserve(samples.size());
    for (const Sample& s : samples) {
        TokenizedSample ts = tokenize_sample(vocab, s);
        SequenceLayout lay = build_inference_layout(vocab, ts.question, K, m);
        AttentionMask mask = build_mask(lay, mcfg);
        Session<float> sess(model, false);
        sess.extend_tokens(lay.tokens, lay.positions,
                           [&](int q, int k) { return mask.at(q, k); });
        std::vector<int> slots;
        for (int i = 0; i < lay.size(); ++i)
            if (lay.tokens[static_cast<size_t>(i)] == mtok) slots.push_back(i);
        Mat<float> L(model.config.dim, static_cast<Eigen::Index>(slots.size()));
        for (size_t j = 0; j < slots.size(); ++j)
            L.col(static_cast<Eigen::Index>(j)) = sess.hidden(model.config.n_layers, slots[j]);
        latents.push_back(std::move(L));
    }
    DiagnosticsRecord d = compute_diagnostics(latents, m);

    const std::string dir = rc.get("out");
    fs::create_directories(dir);
    std::string csv = "metric,value\n";
    csv += "within_block_cosine," + fixed(d.within_block_cosine, 6) + "\n";
    csv += "adjacent_cosine," + fixed(d.adjacent_cosine, 6) + "\n";
    csv += "latent_norm," + fixed(d.latent_norm, 6) + "\n";
    csv += "effective_rank," + fixed(d.effective_rank, 6) + "\n";
    csv += "n_samples," + std::to_string(samples.size()) + "\n";
    write_text_file(dir + "/diagnose.csv", header_for(rc) + csv);
    write_run_config(rc, dir);

    std::cout << "latent geometry over " << samples.size() << " samples (K=" << K << ", M=" << m
              << "):\n";
    std::cout << "  within_block_cosine " << fixed(d.within_block_cosine) << "\n";
    std::cout << "  adjacent_cosine     " << fixed(d.adjacent_cosine) << "\n";
    std::cout << "  latent_norm         " << fixed(d.latent_norm) << "\n";
    std::cout << "  effective_rank      " << fixed(d.effective_rank) << "\n";
    return 0;
}

}  // namespace
}  // namespace rim

int main(int argc, char** argv) {
    CLI::App app{"memory-block latent reasoning: corpus, training, evaluation, analysis"};
    app.require_subcommand(1);

    rim::KeyArgs ka_gen, ka_train, ka_eval, ka_sweep, ka_trans, ka_select, ka_capture, ka_pca,
        ka_probe, ka_diag;
    std::string train_variant;
    std::function<int()> run;

    auto* gen = app.add_subcommand("gen-corpus", "generate the arithmetic corpus splits");
    rim::attach_key_options(gen, ka_gen);
    gen->callback([&] { run = [&] { return rim::cmd_gen_corpus(ka_gen); }; });

    auto* train = app.add_subcommand("train", "train a model (sft|rim-stage1|rim-stage2|coconut)");
    train->add_option("variant", train_variant, "training recipe")->required();
    rim::attach_key_options(train, ka_train);
    train->callback([&] { run = [&] { return rim::cmd_train(train_variant, ka_train); }; });

    auto* ev = app.add_subcommand("eval", "run an evaluation protocol over a corpus");
    rim::attach_key_options(ev, ka_eval);
    ev->callback([&] { run = [&] { return rim::cmd_eval(ka_eval); }; });

    auto* sweep = app.add_subcommand("sweep", "final-block accuracy over the (M, K) grid");
    rim::attach_key_options(sweep, ka_sweep);
    sweep->callback([&] { run = [&] { return rim::cmd_sweep(ka_sweep); }; });

    auto* trans = app.add_subcommand("transitions", "answer changes across memory blocks");
    rim::attach_key_options(trans, ka_trans);
    trans->callback([&] { run = [&] { return rim::cmd_transitions(ka_trans); }; });

    auto* select = app.add_subcommand("select-checkpoint",
                                      "pick checkpoints on selection subsets, score on reporting");
    rim::attach_key_options(select, ka_select);
    select->callback([&] { run = [&] { return rim::cmd_select_checkpoint(ka_select); }; });

    auto* capture = app.add_subcommand("capture", "dump per-block latent representations");
    rim::attach_key_options(capture, ka_capture);
    capture->callback([&] { run = [&] { return rim::cmd_capture(ka_capture); }; });

    auto* pca = app.add_subcommand("pca", "shared-basis projections and first-to-final deltas");
    rim::attach_key_options(pca, ka_pca);
    pca->callback([&] { run = [&] { return rim::cmd_pca(ka_pca); }; });

    auto* probe = app.add_subcommand("probe", "correctness probes and probe-guided selection");
    rim::attach_key_options(probe, ka_probe);
    probe->callback([&] { run = [&] { return rim::cmd_probe(ka_probe); }; });

    auto* diag = app.add_subcommand("diagnose", "latent-geometry diagnostics of a checkpoint");
    rim::attach_key_options(diag, ka_diag);
    diag->callback([&] { run = [&] { return rim::cmd_diagnose(ka_diag); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    try {
        return run();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
