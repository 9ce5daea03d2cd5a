// Python surface over the core: corpus generation, tokenization, model
// lifecycle, the training loops, evaluation protocols and representation
// analysis.  Matrices cross the boundary as numpy arrays (Eigen converters);
// long-running calls release the GIL.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rim/analysis.hpp"
#include "rim/checkpoint.hpp"
#include "rim/common.hpp"
#include "rim/corpus.hpp"
#include "rim/curriculum.hpp"
#include "rim/evaluation.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"
#include "rim/trainer.hpp"
#include "rim/vocab.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace rim;

using ModelF = Model<float>;

PYBIND11_MODULE(_core, m) {
    m.doc() = "memory-block latent reasoning core";

    py::register_exception<Error>(m, "RimError");

    // ------------------------------------------------------------ corpus
    py::enum_<Op>(m, "Op")
        .value("add", Op::add)
        .value("sub", Op::sub)
        .value("mul", Op::mul)
        .value("divide", Op::divide);

    py::class_<Sample>(m, "Sample")
        .def(py::init<>())
        .def_readwrite("question", &Sample::question)
        .def_readwrite("steps", &Sample::steps)
        .def_readwrite("answer", &Sample::answer)
        .def("__repr__", [](const Sample& s) {
            return "Sample(question=" + s.question + ", answer=" + s.answer + ")";
        });

    py::class_<CorpusSpec>(m, "CorpusSpec")
        .def(py::init<>())
        .def_readwrite("step_distribution", &CorpusSpec::step_distribution)
        .def_readwrite("operand_min", &CorpusSpec::operand_min)
        .def_readwrite("operand_max", &CorpusSpec::operand_max)
        .def_readwrite("operators", &CorpusSpec::operators)
        .def_readwrite("max_abs_value", &CorpusSpec::max_abs_value)
        .def_readwrite("max_retries", &CorpusSpec::max_retries);

    m.def("generate_sample", &generate_sample, "spec"_a, "seed"_a, "index"_a);
    m.def("generate_corpus", &generate_corpus, "spec"_a, "seed"_a, "count"_a,
          py::call_guard<py::gil_scoped_release>());
    m.def("verify_sample", &verify_sample, "sample"_a);
    m.def("write_jsonl", &write_jsonl, "path"_a, "samples"_a);
    m.def("read_jsonl", &read_jsonl, "path"_a);
    m.def("write_corpus", &write_corpus, "path"_a, "samples"_a, "spec"_a, "seed"_a);

    // ------------------------------------------------------------- vocab
    py::class_<Vocabulary>(m, "Vocabulary")
        .def_static("build", &Vocabulary::build, "samples"_a)
        .def_static("split_pieces", &Vocabulary::split_pieces, "text"_a)
        .def("encode", &Vocabulary::encode, "text"_a)
        .def("decode", &Vocabulary::decode, "ids"_a)
        .def("size", &Vocabulary::size)
        .def("base_size", &Vocabulary::base_size)
        .def("to_json", &Vocabulary::to_json)
        .def_static("from_json", &Vocabulary::from_json, "text"_a);

    // ------------------------------------------------------------- model
    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("vocab_size", &ModelConfig::vocab_size)
        .def_readwrite("dim", &ModelConfig::dim)
        .def_readwrite("n_layers", &ModelConfig::n_layers)
        .def_readwrite("n_heads", &ModelConfig::n_heads)
        .def_readwrite("ff_dim", &ModelConfig::ff_dim)
        .def_readwrite("max_positions", &ModelConfig::max_positions)
        .def_readwrite("dropout", &ModelConfig::dropout)
        .def_readwrite("frozen_base_embeddings", &ModelConfig::frozen_base_embeddings)
        .def_readwrite("adapter_rank", &ModelConfig::adapter_rank);

    py::class_<ModelF>(m, "Model")
        .def_static("init", &ModelF::init, "config"_a, "seed"_a = 0)
        .def_readonly("config", &ModelF::config)
        .def("n_params", &ModelF::n_params)
        .def("n_trainable_params", &ModelF::n_trainable_params);

    m.def(
        "save_checkpoint",
        [](const std::string& path, const ModelF& model, const CheckpointMeta& meta) {
            save_checkpoint<float>(path, model, meta);
        },
        "path"_a, "model"_a, "meta"_a = CheckpointMeta{});
    m.def(
        "load_checkpoint",
        [](const std::string& path) {
            CheckpointMeta meta;
            ModelF model = load_checkpoint<float>(path, &meta);
            return py::make_tuple(std::move(model), meta);
        },
        "path"_a, "returns (model, metadata)");
    m.def("read_checkpoint_meta", &read_checkpoint_meta, "path"_a);

    // ---------------------------------------------------------- training
    py::class_<MaskConfig>(m, "MaskConfig")
        .def(py::init<>())
        .def_readwrite("block_bidirectional", &MaskConfig::block_bidirectional)
        .def_readwrite("readout_sees_question", &MaskConfig::readout_sees_question);

    py::enum_<Stage1Policy>(m, "Stage1Policy")
        .value("linear_relative", Stage1Policy::linear_relative)
        .value("constant", Stage1Policy::constant)
        .value("absolute", Stage1Policy::absolute);

    py::enum_<TokenReduction>(m, "TokenReduction")
        .value("mean", TokenReduction::mean)
        .value("sum", TokenReduction::sum);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("warmup_fraction", &TrainConfig::warmup_fraction)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("stage1_epochs", &TrainConfig::stage1_epochs)
        .def_readwrite("stage2_epochs", &TrainConfig::stage2_epochs)
        .def_readwrite("stage2_learning_rate", &TrainConfig::stage2_learning_rate)
        .def_readwrite("stage2_dropout", &TrainConfig::stage2_dropout)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("embedding_partition", &TrainConfig::embedding_partition)
        .def_readwrite("adapter_rank", &TrainConfig::adapter_rank)
        .def_readwrite("memory_m", &TrainConfig::memory_m)
        .def_readwrite("k_blocks", &TrainConfig::k_blocks)
        .def_readwrite("stage1_policy", &TrainConfig::stage1_policy)
        .def_readwrite("stage1_t_max", &TrainConfig::stage1_t_max)
        .def_readwrite("stage2_uniform", &TrainConfig::stage2_uniform)
        .def_readwrite("token_reduction", &TrainConfig::token_reduction)
        .def_readwrite("mask", &TrainConfig::mask)
        .def_readwrite("coconut_hidden_layer", &TrainConfig::coconut_hidden_layer)
        .def_readwrite("diagnostics_every", &TrainConfig::diagnostics_every)
        .def_readwrite("checkpoint_every", &TrainConfig::checkpoint_every)
        .def("stage2_lr", &TrainConfig::stage2_lr)
        .def("validate", &TrainConfig::validate);

    py::class_<CoconutStage>(m, "CoconutStage")
        .def(py::init<>())
        .def_readwrite("stage", &CoconutStage::stage)
        .def_readwrite("epochs", &CoconutStage::epochs)
        .def_readwrite("n_thoughts", &CoconutStage::n_thoughts)
        .def_readwrite("n_steps_replaced", &CoconutStage::n_steps_replaced);
    m.def("coconut_stage_plan", &coconut_stage_plan, "max_stages"_a, "thoughts_per_step"_a,
          "epochs_per_stage"_a, "with_stage0"_a);

    py::class_<TrainReport>(m, "TrainReport")
        .def_readonly("checkpoints", &TrainReport::checkpoints)
        .def_readonly("steps", &TrainReport::steps)
        .def_readonly("final_loss", &TrainReport::final_loss)
        .def_readonly("final_train_perplexity", &TrainReport::final_train_perplexity);

    m.def("train_sft", &train_sft, "model"_a, "vocab"_a, "corpus"_a, "config"_a, "with_cot"_a,
          "epochs"_a, "out_dir"_a, py::call_guard<py::gil_scoped_release>());
    m.def("train_stage1", &train_stage1, "model"_a, "vocab"_a, "corpus"_a, "config"_a,
          "out_dir"_a, py::call_guard<py::gil_scoped_release>());
    m.def("train_stage2", &train_stage2, "model"_a, "vocab"_a, "corpus"_a, "config"_a,
          "out_dir"_a, py::call_guard<py::gil_scoped_release>());
    m.def("train_coconut", &train_coconut, "model"_a, "vocab"_a, "corpus"_a, "config"_a,
          "plan"_a, "out_dir"_a, py::call_guard<py::gil_scoped_release>());

    py::class_<DiagnosticsRecord>(m, "DiagnosticsRecord")
        .def_readonly("step", &DiagnosticsRecord::step)
        .def_readonly("within_block_cosine", &DiagnosticsRecord::within_block_cosine)
        .def_readonly("adjacent_cosine", &DiagnosticsRecord::adjacent_cosine)
        .def_readonly("latent_norm", &DiagnosticsRecord::latent_norm)
        .def_readonly("effective_rank", &DiagnosticsRecord::effective_rank)
        .def_readonly("train_perplexity", &DiagnosticsRecord::train_perplexity);
    m.def(
        "compute_diagnostics",
        [](const std::vector<Mat<float>>& latents, int memory_m) {
            return compute_diagnostics(latents, memory_m);
        },
        "latents"_a, "memory_m"_a);

    // -------------------------------------------------------- evaluation
    m.def("canonical_answer", &canonical_answer, "text"_a);
    m.def("answers_match", &answers_match, "got"_a, "gold"_a, "numeric"_a = false,
          "tol"_a = 1e-9);

    py::enum_<EvalMode>(m, "EvalMode")
        .value("rim", EvalMode::rim)
        .value("sft", EvalMode::sft)
        .value("sft_cot", EvalMode::sft_cot)
        .value("coconut", EvalMode::coconut);

    py::class_<EvalConfig>(m, "EvalConfig")
        .def(py::init<>())
        .def_readwrite("k_blocks", &EvalConfig::k_blocks)
        .def_readwrite("memory_m", &EvalConfig::memory_m)
        .def_readwrite("mask", &EvalConfig::mask)
        .def_readwrite("decode_budget", &EvalConfig::decode_budget)
        .def_readwrite("cot_decode_budget", &EvalConfig::cot_decode_budget)
        .def_readwrite("coconut_thoughts", &EvalConfig::coconut_thoughts)
        .def_readwrite("coconut_hidden_layer", &EvalConfig::coconut_hidden_layer)
        .def_readwrite("numeric_match", &EvalConfig::numeric_match)
        .def_readwrite("seed", &EvalConfig::seed);

    py::class_<ReadoutResult>(m, "ReadoutResult")
        .def_readonly("sample_id", &ReadoutResult::sample_id)
        .def_readonly("answers", &ReadoutResult::answers)
        .def_readonly("gold", &ReadoutResult::gold)
        .def_readonly("correct", &ReadoutResult::correct)
        .def_readonly("stream_forwards", &ReadoutResult::stream_forwards)
        .def_readonly("decode_steps", &ReadoutResult::decode_steps);

    py::class_<EvalCounters>(m, "EvalCounters")
        .def_readonly("stream_forwards", &EvalCounters::stream_forwards)
        .def_readonly("decode_steps", &EvalCounters::decode_steps)
        .def_readonly("per_sample_stream_min", &EvalCounters::per_sample_stream_min)
        .def_readonly("per_sample_stream_max", &EvalCounters::per_sample_stream_max);

    py::class_<EvalReport>(m, "EvalReport")
        .def_readonly("final_block_acc", &EvalReport::final_block_acc)
        .def_readonly("best_block_acc", &EvalReport::best_block_acc)
        .def_readonly("any_block_acc", &EvalReport::any_block_acc)
        .def_readonly("per_block_acc", &EvalReport::per_block_acc)
        .def_readonly("pass_at_k", &EvalReport::pass_at_k)
        .def_readonly("best_block", &EvalReport::best_block)
        .def_readonly("n_samples", &EvalReport::n_samples);

    py::class_<EvalOutput>(m, "EvalOutput")
        .def_readonly("report", &EvalOutput::report)
        .def_readonly("results", &EvalOutput::results)
        .def_readonly("counters", &EvalOutput::counters);

    m.def("evaluate", &evaluate, "model"_a, "vocab"_a, "dataset"_a, "config"_a, "mode"_a,
          py::call_guard<py::gil_scoped_release>());
    m.def("evaluate_readouts", &evaluate_readouts, "model"_a, "vocab"_a, "dataset"_a,
          "config"_a, py::call_guard<py::gil_scoped_release>());

    py::class_<PassAtKResult>(m, "PassAtKResult")
        .def_readonly("rate_at", &PassAtKResult::rate_at)
        .def_readonly("rate", &PassAtKResult::rate)
        .def_readonly("k", &PassAtKResult::k)
        .def_readonly("temperature", &PassAtKResult::temperature);
    m.def("pass_at_k", &pass_at_k, "model"_a, "vocab"_a, "dataset"_a, "config"_a, "mode"_a,
          "k"_a = 8, "temperature"_a = 1.0, py::call_guard<py::gil_scoped_release>());

    py::class_<TransitionReport>(m, "TransitionReport")
        .def_readonly("to_correct", &TransitionReport::to_correct)
        .def_readonly("to_incorrect", &TransitionReport::to_incorrect)
        .def_readonly("net_cumulative", &TransitionReport::net_cumulative)
        .def_readonly("k_blocks", &TransitionReport::k_blocks)
        .def_readonly("n_samples", &TransitionReport::n_samples);
    m.def("answer_transitions", &answer_transitions, "results"_a);

    py::class_<SweepCell>(m, "SweepCell")
        .def_readonly("memory_m", &SweepCell::memory_m)
        .def_readonly("k_blocks", &SweepCell::k_blocks)
        .def_readonly("final_block_acc", &SweepCell::final_block_acc)
        .def_readonly("skipped", &SweepCell::skipped)
        .def_readonly("note", &SweepCell::note);
    m.def("budget_sweep", &budget_sweep, "model"_a, "vocab"_a, "dataset"_a, "config"_a,
          "m_values"_a, "k_values"_a, py::call_guard<py::gil_scoped_release>());

    py::class_<CheckpointSelection>(m, "CheckpointSelection")
        .def_readonly("chosen", &CheckpointSelection::chosen)
        .def_readonly("repeat_acc", &CheckpointSelection::repeat_acc)
        .def_readonly("mean_acc", &CheckpointSelection::mean_acc)
        .def_readonly("std_error", &CheckpointSelection::std_error);
    m.def("select_checkpoint", &select_checkpoint, "checkpoint_paths"_a, "vocab"_a,
          "selection_pool"_a, "reporting_set"_a, "config"_a, "mode"_a, "repeats"_a,
          "split_size"_a, "seed"_a, py::call_guard<py::gil_scoped_release>());

    // ---------------------------------------------------------- analysis
    py::class_<RepresentationDump>(m, "RepresentationDump")
        .def(py::init<>())
        .def_readwrite("checkpoint_id", &RepresentationDump::checkpoint_id)
        .def_readwrite("layer", &RepresentationDump::layer)
        .def_readwrite("dim", &RepresentationDump::dim)
        .def_readwrite("k_blocks", &RepresentationDump::k_blocks)
        .def_readwrite("sample_ids", &RepresentationDump::sample_ids)
        .def_readwrite("vectors", &RepresentationDump::vectors)
        .def("n_samples", &RepresentationDump::n_samples)
        .def("col", &RepresentationDump::col, "sample"_a, "block"_a)
        .def("vector_at", &RepresentationDump::vector_at, "sample"_a, "block"_a);

    py::class_<CaptureConfig>(m, "CaptureConfig")
        .def(py::init<>())
        .def_readwrite("layer", &CaptureConfig::layer)
        .def_readwrite("k_blocks", &CaptureConfig::k_blocks)
        .def_readwrite("memory_m", &CaptureConfig::memory_m)
        .def_readwrite("mask", &CaptureConfig::mask)
        .def_readwrite("checkpoint_id", &CaptureConfig::checkpoint_id);

    m.def("capture_representations", &capture_representations, "model"_a, "vocab"_a,
          "dataset"_a, "config"_a, py::call_guard<py::gil_scoped_release>());
    m.def("save_dump", &save_dump, "path"_a, "dump"_a);
    m.def("load_dump", &load_dump, "path"_a);

    py::class_<PcaBasis>(m, "PcaBasis")
        .def_readonly("mean", &PcaBasis::mean)
        .def_readonly("components", &PcaBasis::components)
        .def_readonly("explained_ratio", &PcaBasis::explained_ratio)
        .def_readonly("truncated", &PcaBasis::truncated)
        .def("n_components", &PcaBasis::n_components)
        .def("explained_total", &PcaBasis::explained_total);
    m.def("pca_shared_basis", &pca_shared_basis, "dumps"_a, "n_components"_a = 2);
    m.def("pca_project", &pca_project, "basis"_a, "dump"_a);
    m.def("pca_project_vectors", &pca_project_vectors, "basis"_a, "vectors"_a, "center"_a);
    m.def("first_to_final_delta", &first_to_final_delta, "dump"_a);
    m.def("mean_delta_norm", &mean_delta_norm, "dump"_a);

    py::class_<ExtremePair>(m, "ExtremePair")
        .def_readonly("a", &ExtremePair::a)
        .def_readonly("b", &ExtremePair::b)
        .def_readonly("separation", &ExtremePair::separation)
        .def_readonly("cosine", &ExtremePair::cosine);
    m.def("extreme_pair_cosine", &extreme_pair_cosine, "basis"_a, "deltas"_a);

    py::class_<ProbeSplit>(m, "ProbeSplit")
        .def(py::init<>())
        .def_readwrite("train", &ProbeSplit::train)
        .def_readwrite("held_out", &ProbeSplit::held_out);

    py::class_<ProbeFitConfig>(m, "ProbeFitConfig")
        .def(py::init<>())
        .def_readwrite("l2_grid", &ProbeFitConfig::l2_grid)
        .def_readwrite("iterations", &ProbeFitConfig::iterations)
        .def_readwrite("learning_rate", &ProbeFitConfig::learning_rate)
        .def_readwrite("skip_single_class", &ProbeFitConfig::skip_single_class);

    py::class_<ProbeModel>(m, "ProbeModel")
        .def_readonly("dim", &ProbeModel::dim)
        .def_readonly("k_blocks", &ProbeModel::k_blocks)
        .def_readonly("layer", &ProbeModel::layer)
        .def_readonly("weights", &ProbeModel::weights)
        .def_readonly("bias", &ProbeModel::bias)
        .def_readonly("cal_a", &ProbeModel::cal_a)
        .def_readonly("cal_b", &ProbeModel::cal_b)
        .def_readonly("chosen_l2", &ProbeModel::chosen_l2)
        .def_readonly("train_prior", &ProbeModel::train_prior)
        .def_readonly("fitted", &ProbeModel::fitted)
        .def_readonly("held_out_auroc", &ProbeModel::held_out_auroc)
        .def_readonly("held_out_auprc", &ProbeModel::held_out_auprc);
    m.def("fit_probes", &fit_probes, "dump"_a, "labels"_a, "split"_a,
          "config"_a = ProbeFitConfig{}, py::call_guard<py::gil_scoped_release>());
    m.def("probe_predict", &probe_predict, "probes"_a, "block"_a, "representation"_a);

    py::class_<AnswerSelection>(m, "AnswerSelection")
        .def_readonly("answer", &AnswerSelection::answer)
        .def_readonly("confidence", &AnswerSelection::confidence)
        .def_readonly("block", &AnswerSelection::block);
    m.def("probe_select_answer", &probe_select_answer, "probes"_a, "representations"_a,
          "answers"_a);
    m.def("noisy_or", &noisy_or, "probabilities"_a);
    m.def("auroc_auprc", &auroc_auprc, "scores"_a, "labels"_a);
}
