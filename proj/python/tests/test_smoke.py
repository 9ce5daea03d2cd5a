import numpy as np

import rim


def make_corpus(n=8, seed=11):
    spec = rim.CorpusSpec()
    spec.step_distribution = [(1, 0.5), (2, 0.5)]
    spec.operators = [rim.Op.add, rim.Op.sub]
    return spec, rim.generate_corpus(spec, seed, n)


def tiny_model_config(vocab, dim=32):
    mc = rim.ModelConfig()
    mc.vocab_size = vocab.size()
    mc.dim = dim
    mc.n_layers = 2
    mc.n_heads = 2
    mc.ff_dim = 4 * dim
    mc.max_positions = 192
    return mc


def test_corpus_roundtrip(tmp_path):
    spec, samples = make_corpus()
    for s in samples:
        rim.verify_sample(s)
    path = str(tmp_path / "c.jsonl")
    rim.write_jsonl(path, samples)
    back = rim.read_jsonl(path)
    assert [s.question for s in back] == [s.question for s in samples]
    # sample i is a pure function of (spec, seed, i)
    assert rim.generate_sample(spec, 11, 3).question == samples[3].question


def test_vocab_roundtrip():
    _, samples = make_corpus()
    vocab = rim.Vocabulary.build(samples)
    text = samples[0].question
    assert vocab.decode(vocab.encode(text)) == text
    again = rim.Vocabulary.from_json(vocab.to_json())
    assert again.encode(text) == vocab.encode(text)
    assert again.size() == vocab.size()


def test_train_eval_checkpoint(tmp_path):
    _, samples = make_corpus(n=6, seed=2024)
    vocab = rim.Vocabulary.build(samples)
    model = rim.Model.init(tiny_model_config(vocab), seed=7)
    tc = rim.TrainConfig()
    tc.learning_rate = 3e-3
    tc.batch_size = 6
    tc.seed = 7
    tc.diagnostics_every = 1000
    report = rim.train_sft(model, vocab, samples, tc, with_cot=False, epochs=300,
                           out_dir=str(tmp_path / "run"))
    assert report.steps == 300

    ec = rim.EvalConfig()
    out = rim.evaluate(model, vocab, samples, ec, rim.EvalMode.sft)
    assert out.report.final_block_acc == 1.0  # memorizes six samples
    assert out.counters.per_sample_stream_min == 1
    assert out.counters.per_sample_stream_max == 1

    path = str(tmp_path / "m.rim")
    rim.save_checkpoint(path, model, {"stage": "sft"})
    loaded, meta = rim.load_checkpoint(path)
    assert meta["stage"] == "sft"
    again = rim.evaluate(loaded, vocab, samples, ec, rim.EvalMode.sft)
    assert again.report.final_block_acc == 1.0


def test_capture_and_pca_numpy():
    _, samples = make_corpus(n=5, seed=4)
    vocab = rim.Vocabulary.build(samples)
    model = rim.Model.init(tiny_model_config(vocab, dim=16), seed=3)
    cc = rim.CaptureConfig()
    cc.k_blocks = 3
    cc.memory_m = 2
    cc.checkpoint_id = "init"
    dump = rim.capture_representations(model, vocab, samples, cc)

    v = np.asarray(dump.vectors)
    assert v.shape == (16, 5 * 3)
    assert np.isfinite(v).all()
    assert dump.col(1, 1) == 3  # sample-major, block-minor column order

    basis = rim.pca_shared_basis([dump], 2)
    comps = np.asarray(basis.components)
    assert np.allclose(comps.T @ comps, np.eye(basis.n_components()), atol=1e-8)
    assert rim.mean_delta_norm(dump) > 0.0
