#include "rim/trainer.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numeric>

#include "rim/checkpoint.hpp"
#include "rim/layout.hpp"

namespace rim {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
    check(learning_rate > 0, "train: learning_rate must be > 0");
    check(stage2_learning_rate >= 0, "train: stage2_learning_rate must be >= 0");
    check(warmup_fraction >= 0 && warmup_fraction < 1, "train: warmup_fraction not in [0, 1)");
    check(weight_decay >= 0, "train: weight_decay must be >= 0");
    check(batch_size >= 1, "train: batch_size must be >= 1");
    check(stage1_epochs >= 1 && stage2_epochs >= 1, "train: epochs must be >= 1");
    check(stage2_dropout >= 0 && stage2_dropout < 1, "train: stage2_dropout not in [0, 1)");
    check(memory_m >= 1, "train: memory_m must be >= 1");
    check(k_blocks >= 1, "train: k_blocks must be >= 1");
    check(adapter_rank >= 0, "train: adapter_rank must be >= 0");
    check(diagnostics_every >= 1, "train: diagnostics_every must be >= 1");
    check(checkpoint_every >= 0, "train: checkpoint_every must be >= 0");
}

std::string TrainConfig::dump() const {
    auto num = [](double v) {
        char b[40];
        std::snprintf(b, sizeof b, "%.17g", v);
        return std::string(b);
    };
    auto policy = [this] {
        switch (stage1_policy) {
            case Stage1Policy::linear_relative: return "linear-relative";
            case Stage1Policy::constant: return "constant";
            case Stage1Policy::absolute: return "absolute";
        }
        return "?";
    };
    // alphabetical, one key = value per line (mirrors RunConfig::dump)
    std::string out;
    out += "adapter_rank = " + std::to_string(adapter_rank) + "\n";
    out += "batch_size = " + std::to_string(batch_size) + "\n";
    out += "checkpoint_every = " + std::to_string(checkpoint_every) + "\n";
    out += "coconut_hidden_layer = " + std::to_string(coconut_hidden_layer) + "\n";
    out += "diagnostics_every = " + std::to_string(diagnostics_every) + "\n";
    out += "embedding_partition = " + std::string(embedding_partition ? "true" : "false") + "\n";
    out += "k_blocks = " + std::to_string(k_blocks) + "\n";
    out += "learning_rate = " + num(learning_rate) + "\n";
    out += "mask.block_bidirectional = " +
           std::string(mask.block_bidirectional ? "true" : "false") + "\n";
    out += "mask.readout_sees_question = " +
           std::string(mask.readout_sees_question ? "true" : "false") + "\n";
    out += "memory_m = " + std::to_string(memory_m) + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "stage1_epochs = " + std::to_string(stage1_epochs) + "\n";
    out += "stage1_policy = " + std::string(policy()) + "\n";
    out += "stage1_t_max = " + std::to_string(stage1_t_max) + "\n";
    out += "stage2_dropout = " + num(stage2_dropout) + "\n";
    out += "stage2_epochs = " + std::to_string(stage2_epochs) + "\n";
    out += "stage2_learning_rate = " + num(stage2_learning_rate) + "\n";
    out += "stage2_uniform = " + std::string(stage2_uniform ? "true" : "false") + "\n";
    out += "token_reduction = " +
           std::string(token_reduction == TokenReduction::mean ? "mean" : "sum") + "\n";
    out += "warmup_fraction = " + num(warmup_fraction) + "\n";
    out += "weight_decay = " + num(weight_decay) + "\n";
    return out;
}

uint64_t TrainConfig::hash() const { return fnv1a(dump()); }

// ------------------------------------------------------------ optimizer ----

AdamW::AdamW(Model<float>& model, double learning_rate, double weight_decay)
    : model_(model), lr_(learning_rate), wd_(weight_decay) {
    m_.resize(model.tensors.size());
    v_.resize(model.tensors.size());
    for (size_t i = 0; i < model.tensors.size(); ++i) {
        const Tensor<float>& t = model.tensors[i];
        if (!t.trainable) continue;
        m_[i].setZero(t.value.rows(), t.value.cols());
        v_[i].setZero(t.value.rows(), t.value.cols());
    }
}

void AdamW::step() {
    ++t_;
    const float bc1 = static_cast<float>(1.0 - std::pow(0.9, static_cast<double>(t_)));
    const float bc2 = static_cast<float>(1.0 - std::pow(0.999, static_cast<double>(t_)));
    const float lr = static_cast<float>(lr_);
    for (size_t i = 0; i < model_.tensors.size(); ++i) {
        Tensor<float>& t = model_.tensors[i];
        if (!t.trainable) continue;
        const Eigen::Index c0 = t.frozen_cols;
        const Eigen::Index nc = t.value.cols() - c0;
        if (nc <= 0) continue;
        auto g = t.grad.middleCols(c0, nc).array();
        m_[i].middleCols(c0, nc).array() = 0.9f * m_[i].middleCols(c0, nc).array() + 0.1f * g;
        v_[i].middleCols(c0, nc).array() =
            0.999f * v_[i].middleCols(c0, nc).array() + 0.001f * g.square();
        if (wd_ > 0 && t.value.cols() > 1) {  // decay matrices, not bias/norm vectors
            t.value.middleCols(c0, nc) *= 1.0f - lr * static_cast<float>(wd_);
        }
        t.value.middleCols(c0, nc).array() -=
            lr * (m_[i].middleCols(c0, nc).array() / bc1) /
            ((v_[i].middleCols(c0, nc).array() / bc2).sqrt() + 1e-8f);
    }
}

void AdamW::reset() {
    t_ = 0;
    for (auto& m : m_) m.setZero();
    for (auto& v : v_) v.setZero();
}

void switch_stage(AdamW& opt, Model<float>& model, const TrainConfig& cfg) {
    opt.reset();
    opt.set_lr(cfg.stage2_lr());
    model.config.dropout = cfg.stage2_dropout;
}

double warmup_lr(double base_lr, int64_t step, int64_t warmup_span) {
    if (warmup_span <= 0 || step >= warmup_span) return base_lr;
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_span);
}

// ---------------------------------------------------------- diagnostics ----

namespace {

double safe_cosine(const Vec<float>& a, const Vec<float>& b) {
    const double na = a.cast<double>().norm();
    const double nb = b.cast<double>().norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    const double c = a.cast<double>().dot(b.cast<double>()) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double effective_rank_of(const Mat<float>& latents) {
    Eigen::JacobiSVD<Mat<float>> svd(latents);
    const auto& sv = svd.singularValues();
    double total = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) total += sv(i);
    if (total <= 0.0) return 1.0;
    double entropy = 0.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        const double p = sv(i) / total;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    return std::max(1.0, std::exp(entropy));
}

}  // namespace

DiagnosticsRecord compute_diagnostics(const std::vector<Mat<float>>& latents, int m) {
    check(m >= 1, "diagnostics: block size must be >= 1");
    DiagnosticsRecord rec;
    double wb_sum = 0, adj_sum = 0, norm_sum = 0, er_sum = 0;
    int64_t wb_n = 0, adj_n = 0, norm_n = 0, er_n = 0;
    for (const Mat<float>& L : latents) {
        const int n = static_cast<int>(L.cols());
        if (n == 0) continue;
        for (int i = 0; i < n; ++i) norm_sum += L.col(i).cast<double>().norm();
        norm_n += n;
        if (m >= 2) {
            for (int b = 0; b + m <= n; b += m) {
                double s = 0;
                int pairs = 0;
                for (int i = 0; i < m; ++i)
                    for (int j = i + 1; j < m; ++j, ++pairs) s += safe_cosine(L.col(b + i), L.col(b + j));
                wb_sum += s / pairs;
                ++wb_n;
            }
        }
        for (int i = 0; i + 1 < n; ++i) adj_sum += safe_cosine(L.col(i), L.col(i + 1));
        adj_n += n - 1;
        er_sum += effective_rank_of(L);
        ++er_n;
    }
    if (wb_n) rec.within_block_cosine = wb_sum / static_cast<double>(wb_n);
    if (adj_n) rec.adjacent_cosine = adj_sum / static_cast<double>(adj_n);
    if (norm_n) rec.latent_norm = norm_sum / static_cast<double>(norm_n);
    rec.effective_rank = er_n ? er_sum / static_cast<double>(er_n) : 1.0;
    return rec;
}

// ---------------------------------------------------------------- engine ----

namespace {

void shuffle_indices(std::vector<int>& v, Rng rng) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(rng.uniform_int(0, i))]);
    }
}

/// Final-layer hidden states of the latent-carrying slots (<m> tokens, or
/// injected thoughts), columns in stream order.
Mat<float> latent_matrix(const Session<float>& sess, const SequenceLayout& lay,
                         const Vocabulary& vocab, int n_layers, int dim) {
    const TokenId mtok = vocab.special(SpecialToken::latent);
    const TokenId ttok = vocab.special(SpecialToken::thought);
    std::vector<int> slots;
    for (int i = 0; i < lay.size(); ++i) {
        if (lay.kind[i] == SegmentKind::memory && (lay.tokens[i] == mtok || lay.tokens[i] == ttok))
            slots.push_back(i);
    }
    Mat<float> out(dim, static_cast<Eigen::Index>(slots.size()));
    for (size_t j = 0; j < slots.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = sess.hidden(n_layers, slots[j]);
    return out;
}

// Forward/backward for one sample: accumulate grads scaled by inv_batch,
// return the loss breakdown, optionally fill the latent matrix.
using SampleFn = std::function<LossBreakdown(const Sample&, const TokenizedSample&,
                                             double inv_batch, double progress,
                                             uint64_t dropout_seed, Mat<float>* latents)>;

struct Engine {
    Model<float>& model;
    const Vocabulary& vocab;
    const TrainConfig& cfg;
    std::string out_dir;
    AdamW opt;
    TrainReport report;

    std::ofstream metrics_csv, diagnostics_csv, readouts_csv;
    uint64_t sample_counter = 0;  // global across stages; drives dropout streams
    int64_t epoch_counter = 0;    // global across stages; drives shuffles
    std::vector<double> recent_losses;

    Engine(Model<float>& model_in, const Vocabulary& vocab_in, const TrainConfig& cfg_in,
           const std::string& out_dir_in)
        : model(model_in), vocab(vocab_in), cfg(cfg_in), out_dir(out_dir_in),
          opt(model_in, cfg_in.learning_rate, cfg_in.weight_decay) {
        cfg.validate();
        fs::create_directories(out_dir);
        open_csv(metrics_csv, "metrics.csv", "stage,step,epoch,lr,loss,train_ppl");
        open_csv(diagnostics_csv, "diagnostics.csv",
                 "stage,step,within_block_cosine,adjacent_cosine,latent_norm,effective_rank,"
                 "train_ppl");
        open_csv(readouts_csv, "readouts.csv", "stage,step,readout,weight,mean_nll,tokens");
    }

    void open_csv(std::ofstream& f, const std::string& name, const std::string& header) {
        const std::string path = out_dir + "/" + name;
        const bool fresh = !fs::exists(path);
        f.open(path, std::ios::app);
        check(f.good(), "train: cannot open " + path);
        f << std::setprecision(10);
        if (fresh) f << "# config_hash = 0x" << hex64(cfg.hash()) << "\n" << header << "\n";
    }

    void save(const std::string& stage, int64_t step, const std::string& suffix) {
        const std::string path = out_dir + "/ckpt-" + stage + "-" + suffix + ".rim";
        save_checkpoint(path, model,
                        {{"stage", stage},
                         {"step", std::to_string(step)},
                         {"config_hash", "0x" + hex64(cfg.hash())}});
        report.checkpoints.push_back(path);
    }

    static std::string step_tag(int64_t step) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(step));
        return buf;
    }

    [[noreturn]] void abort_non_finite(const std::string& stage, int64_t step, double loss) {
        std::string text = "non-finite training loss\n";
        text += "stage = " + stage + "\n";
        text += "step = " + std::to_string(step) + "\n";
        text += "loss = " + std::to_string(loss) + "\n";
        text += "recent batch losses:\n";
        for (double l : recent_losses) text += "  " + std::to_string(l) + "\n";
        text += "tensors (|value|max, |grad|max):\n";
        for (const auto& t : model.tensors) {
            const float vmax = t.value.size() ? t.value.cwiseAbs().maxCoeff() : 0.0f;
            const float gmax = t.grad.size() ? t.grad.cwiseAbs().maxCoeff() : 0.0f;
            char line[160];
            std::snprintf(line, sizeof line, "  %-24s %.6e %.6e\n", t.name.c_str(),
                          static_cast<double>(vmax), static_cast<double>(gmax));
            text += line;
        }
        const std::string path = out_dir + "/abort_dump.txt";
        write_text_file(path, text);
        fail("non-finite loss at " + stage + " step " + std::to_string(step) +
             " (diagnostics: " + path + ")");
    }

    // One stage: `epochs` deterministic passes over the corpus, one optimizer
    // step per batch.  `latents_m` > 0 turns on latent-geometry diagnostics
    // with that block size.
    void run_stage(const std::string& stage, const std::vector<Sample>& corpus, int epochs,
                   double base_lr, int latents_m, const SampleFn& fn) {
        check(!corpus.empty(), "train: empty corpus");
        check(epochs >= 1, "train: epochs must be >= 1");
        std::vector<TokenizedSample> toks;
        toks.reserve(corpus.size());
        for (const auto& s : corpus) toks.push_back(tokenize_sample(vocab, s));

        const int64_t n = static_cast<int64_t>(corpus.size());
        const int64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
        const int64_t total_steps = per_epoch * epochs;
        const int64_t warmup_span =
            static_cast<int64_t>(cfg.warmup_fraction * static_cast<double>(total_steps));

        std::vector<int> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);

        int64_t step = 0;  // completed optimizer steps in this stage
        for (int epoch = 0; epoch < epochs; ++epoch, ++epoch_counter) {
            shuffle_indices(order, Rng(derive_seed(cfg.seed, 0x9100 + static_cast<uint64_t>(
                                                                         epoch_counter))));
            for (int64_t b0 = 0; b0 < n; b0 += cfg.batch_size) {
                const int64_t bsz = std::min<int64_t>(cfg.batch_size, n - b0);
                const double progress =
                    total_steps > 1
                        ? static_cast<double>(step) / static_cast<double>(total_steps - 1)
                        : 1.0;
                const bool want_diag =
                    (step + 1) % cfg.diagnostics_every == 0 || step + 1 == total_steps;

                model.zero_grads();
                double loss_sum = 0, nll_sum = 0;
                int64_t tok_sum = 0;
                std::vector<Mat<float>> latents;
                struct RoAcc {
                    double weight_sum = 0, nll_tok_sum = 0;
                    int64_t tokens = 0, n = 0;
                };
                std::map<int, RoAcc> per_readout;

                for (int64_t i = 0; i < bsz; ++i) {
                    const int idx = order[static_cast<size_t>(b0 + i)];
                    const uint64_t dseed = derive_seed(cfg.seed ^ 0xd2a9f00dull, sample_counter++);
                    Mat<float> lat;
                    Mat<float>* lat_ptr = (want_diag && latents_m > 0) ? &lat : nullptr;
                    LossBreakdown bd =
                        fn(corpus[static_cast<size_t>(idx)], toks[static_cast<size_t>(idx)],
                           1.0 / static_cast<double>(bsz), progress, dseed, lat_ptr);
                    loss_sum += bd.total;
                    nll_sum += bd.sum_nll;
                    tok_sum += bd.n_tokens;
                    if (want_diag) {
                        for (const ReadoutLoss& rl : bd.per_readout) {
                            RoAcc& acc = per_readout[rl.readout];
                            acc.weight_sum += rl.weight;
                            acc.nll_tok_sum += rl.mean_nll * rl.tokens;
                            acc.tokens += rl.tokens;
                            acc.n += 1;
                        }
                        if (lat_ptr && lat.size() > 0) latents.push_back(std::move(lat));
                    }
                }

                const double loss = loss_sum / static_cast<double>(bsz);
                const double ppl = std::exp(nll_sum / static_cast<double>(std::max<int64_t>(1, tok_sum)));
                if (!std::isfinite(loss)) abort_non_finite(stage, step, loss);
                recent_losses.push_back(loss);
                if (recent_losses.size() > 64) recent_losses.erase(recent_losses.begin());

                const double lr = warmup_lr(base_lr, step + 1, warmup_span);
                opt.set_lr(lr);
                opt.step();
                ++step;

                metrics_csv << stage << ',' << step << ',' << epoch << ',' << lr << ',' << loss
                            << ',' << ppl << '\n';
                if (want_diag) {
                    DiagnosticsRecord rec = compute_diagnostics(latents, std::max(1, latents_m));
                    rec.step = step;
                    rec.train_perplexity = ppl;
                    diagnostics_csv << stage << ',' << step << ',' << rec.within_block_cosine
                                    << ',' << rec.adjacent_cosine << ',' << rec.latent_norm << ','
                                    << rec.effective_rank << ',' << ppl << '\n';
                    for (const auto& [t, acc] : per_readout) {
                        readouts_csv << stage << ',' << step << ',' << t << ','
                                     << acc.weight_sum / static_cast<double>(acc.n) << ','
                                     << acc.nll_tok_sum / static_cast<double>(std::max<int64_t>(1, acc.tokens))
                                     << ',' << acc.tokens << '\n';
                    }
                }
                if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
                    save(stage, step, step_tag(step));
                }
                report.steps += 1;
                report.final_loss = loss;
                report.final_train_perplexity = ppl;
            }
        }
        save(stage, step, "final");
        metrics_csv.flush();
        diagnostics_csv.flush();
        readouts_csv.flush();
    }
};

AllowFn allow_of(const AttentionMask& mask) {
    return [&mask](int q, int k) { return mask.at(q, k); };
}

// Teacher-forced single-extend pass shared by SFT / Stage 1 / Stage 2.
LossBreakdown run_flat_sample(Model<float>& model, const SequenceLayout& lay,
                              const AttentionMask& mask, const std::vector<double>& weights,
                              TokenReduction reduction, double inv_batch, uint64_t dropout_seed,
                              const Vocabulary& vocab, Mat<float>* latents) {
    Session<float> sess(model, /*training=*/true, dropout_seed);
    sess.extend_tokens(lay.tokens, lay.positions, allow_of(mask));
    const std::vector<int> slots = lay.supervised_slots();
    LossResult<float> res =
        weighted_readout_loss(sess.logits(slots), slots, lay, weights, reduction);
    Mat<float> dl = res.dlogits * static_cast<float>(inv_batch);
    sess.backward(slots, dl);
    if (latents)
        *latents = latent_matrix(sess, lay, vocab, model.config.n_layers, model.config.dim);
    return res.breakdown;
}

}  // namespace

// ----------------------------------------------------------------- loops ----

TrainReport train_sft(Model<float>& model, const Vocabulary& vocab,
                      const std::vector<Sample>& corpus, const TrainConfig& cfg, bool with_cot,
                      int epochs, const std::string& out_dir) {
    Engine eng(model, vocab, cfg, out_dir);
    auto fn = [&](const Sample&, const TokenizedSample& tok, double inv_batch, double,
                  uint64_t dseed, Mat<float>* latents) {
        SequenceLayout lay = build_sft_layout(vocab, tok, with_cot);
        AttentionMask mask = build_mask(lay, cfg.mask);
        return run_flat_sample(model, lay, mask, single_span_weights(), cfg.token_reduction,
                               inv_batch, dseed, vocab, latents);
    };
    eng.run_stage(with_cot ? "sft-cot" : "sft", corpus, epochs, cfg.learning_rate, 0, fn);
    return eng.report;
}

TrainReport train_stage1(Model<float>& model, const Vocabulary& vocab,
                         const std::vector<Sample>& corpus, const TrainConfig& cfg,
                         const std::string& out_dir) {
    Engine eng(model, vocab, cfg, out_dir);
    int t_max = cfg.stage1_t_max;
    if (cfg.stage1_policy == Stage1Policy::absolute && t_max == 0) {
        for (const auto& s : corpus) t_max = std::max(t_max, static_cast<int>(s.steps.size()));
    }
    auto fn = [&](const Sample&, const TokenizedSample& tok, double inv_batch, double progress,
                  uint64_t dseed, Mat<float>* latents) {
        SequenceLayout lay = build_stage1_layout(vocab, tok, cfg.memory_m);
        AttentionMask mask = build_mask(lay, cfg.mask);
        const std::vector<double> weights =
            stage1_weights(lay, progress, cfg.stage1_policy, t_max);
        return run_flat_sample(model, lay, mask, weights, cfg.token_reduction, inv_batch, dseed,
                               vocab, latents);
    };
    eng.run_stage("stage1", corpus, cfg.stage1_epochs, cfg.learning_rate, cfg.memory_m, fn);
    return eng.report;
}

TrainReport train_stage2(Model<float>& model, const Vocabulary& vocab,
                         const std::vector<Sample>& corpus, const TrainConfig& cfg,
                         const std::string& out_dir) {
    Engine eng(model, vocab, cfg, out_dir);
    switch_stage(eng.opt, model, cfg);  // fresh moments, stage-2 rate and dropout
    auto fn = [&](const Sample&, const TokenizedSample& tok, double inv_batch, double,
                  uint64_t dseed, Mat<float>* latents) {
        SequenceLayout lay = build_stage2_layout(vocab, tok, cfg.k_blocks, cfg.memory_m);
        AttentionMask mask = build_mask(lay, cfg.mask);
        const std::vector<double> weights = stage2_weights(lay, cfg.stage2_uniform);
        return run_flat_sample(model, lay, mask, weights, cfg.token_reduction, inv_batch, dseed,
                               vocab, latents);
    };
    eng.run_stage("stage2", corpus, cfg.stage2_epochs, cfg.stage2_lr(), cfg.memory_m, fn);
    return eng.report;
}

TrainReport train_coconut(Model<float>& model, const Vocabulary& vocab,
                          const std::vector<Sample>& corpus, const TrainConfig& cfg,
                          const std::vector<CoconutStage>& plan, const std::string& out_dir) {
    check(!plan.empty(), "train: empty coconut plan");
    Engine eng(model, vocab, cfg, out_dir);
    const int inject_layer =
        cfg.coconut_hidden_layer < 0 ? model.config.n_layers : cfg.coconut_hidden_layer;
    check(inject_layer >= 0 && inject_layer <= model.config.n_layers,
          "train: coconut_hidden_layer out of range");

    for (const CoconutStage& st : plan) {
        eng.opt.reset();  // fresh optimizer per curriculum stage, matching the recipe
        const int c = st.n_steps_replaced > 0 ? st.n_thoughts / st.n_steps_replaced : 0;
        auto fn = [&](const Sample&, const TokenizedSample& tok, double inv_batch, double,
                      uint64_t dseed, Mat<float>* latents) {
            const int t_steps = static_cast<int>(tok.steps.size());
            const int js = std::min(st.n_steps_replaced, t_steps);
            const int n_th = js * c;
            SequenceLayout lay = build_coconut_layout(vocab, tok, n_th, js);
            AttentionMask mask = build_mask(lay, MaskConfig{});  // plain causal here
            Session<float> sess(model, true, dseed);
            const int q = lay.n_question;
            if (n_th == 0) {
                // no injected thoughts: plain supervised pass, bit-identical to sft
                sess.extend_tokens(lay.tokens, lay.positions, allow_of(mask));
            } else {
                sess.extend_tokens({lay.tokens.begin(), lay.tokens.begin() + q},
                                   {lay.positions.begin(), lay.positions.begin() + q},
                                   allow_of(mask));
                for (int i = 0; i < n_th; ++i) {
                    const int src = q + i - 1;  // previous slot; last question slot for i = 0
                    Mat<float> inj(model.config.dim, 1);
                    inj.col(0) = sess.hidden(inject_layer, src);
                    sess.extend_embeddings(inj, {lay.positions[q + i]}, {{src, inject_layer}},
                                           allow_of(mask));
                }
                sess.extend_tokens({lay.tokens.begin() + q + n_th, lay.tokens.end()},
                                   {lay.positions.begin() + q + n_th, lay.positions.end()},
                                   allow_of(mask));
            }
            const std::vector<int> slots = lay.supervised_slots();
            LossResult<float> res = weighted_readout_loss(sess.logits(slots), slots, lay,
                                                          single_span_weights(),
                                                          cfg.token_reduction);
            Mat<float> dl = res.dlogits * static_cast<float>(inv_batch);
            sess.backward(slots, dl);
            if (latents)
                *latents =
                    latent_matrix(sess, lay, vocab, model.config.n_layers, model.config.dim);
            return res.breakdown;
        };
        eng.run_stage("coconut-s" + std::to_string(st.stage), corpus, st.epochs,
                      cfg.learning_rate, st.n_thoughts > 0 ? c : 0, fn);
    }
    return eng.report;
}

}  // namespace rim
