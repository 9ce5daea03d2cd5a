#include "rim/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "rim/evaluation.hpp"
#include "rim/layout.hpp"
#include "rim/vocab.hpp"

namespace rim {

// ---------------------------------------------------------------------------
// capture
// ---------------------------------------------------------------------------

int RepresentationDump::col(int sample, int block) const {
    check(sample >= 0 && sample < n_samples(), "dump: sample index out of range");
    check(block >= 1 && block <= k_blocks, "dump: block index out of range");
    return sample * k_blocks + block - 1;
}

Vec<float> RepresentationDump::vector_at(int sample, int block) const {
    return vectors.col(col(sample, block));
}

RepresentationDump capture_representations(Model<float>& model, const Vocabulary& vocab,
                                           const std::vector<Sample>& dataset,
                                           const CaptureConfig& cfg) {
    check(cfg.k_blocks >= 1 && cfg.memory_m >= 1, "capture: bad block geometry");
    const int layer = cfg.layer < 0 ? model.config.n_layers - 1 : cfg.layer;
    check(layer >= 0 && layer <= model.config.n_layers, "capture: layer out of range");

    RepresentationDump dump;
    dump.checkpoint_id = cfg.checkpoint_id;
    dump.layer = layer;
    dump.dim = model.config.dim;
    dump.k_blocks = cfg.k_blocks;
    dump.vectors.resize(model.config.dim,
                        static_cast<Eigen::Index>(dataset.size()) * cfg.k_blocks);

    for (size_t i = 0; i < dataset.size(); ++i) {
        const TokenizedSample tok = tokenize_sample(vocab, dataset[i]);
        const SequenceLayout lay =
            build_inference_layout(vocab, tok.question, cfg.k_blocks, cfg.memory_m);
        check(lay.max_position() < model.config.max_positions,
              "capture: position budget exceeded");
        const AttentionMask mask = build_mask(lay, cfg.mask);
        Session<float> sess(model, false);
        sess.extend_tokens(lay.tokens, lay.positions,
                           [&mask](int q, int k) { return mask.at(q, k); });
        dump.sample_ids.push_back(static_cast<int>(i));
        for (int b = 1; b <= cfg.k_blocks; ++b) {
            dump.vectors.col(dump.col(static_cast<int>(i), b)) =
                sess.hidden(layer, lay.last_latent_slot(b));
        }
    }
    return dump;
}

namespace {

constexpr char kDumpMagic[8] = {'R', 'I', 'M', 'D', 'U', 'M', 'P', '\0'};

void wr(std::ofstream& f, const void* p, size_t n) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void rd(std::ifstream& f, void* p, size_t n) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    check(f.good(), "dump: truncated file");
}

void wr_i32(std::ofstream& f, int32_t v) { wr(f, &v, 4); }

int32_t rd_i32(std::ifstream& f) {
    int32_t v;
    rd(f, &v, 4);
    return v;
}

}  // namespace

void save_dump(const std::string& path, const RepresentationDump& dump) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    check(f.good(), "dump: cannot open " + path);
    wr(f, kDumpMagic, 8);
    wr_i32(f, 1);  // version
    wr_i32(f, static_cast<int32_t>(dump.checkpoint_id.size()));
    wr(f, dump.checkpoint_id.data(), dump.checkpoint_id.size());
    wr_i32(f, dump.layer);
    wr_i32(f, dump.dim);
    wr_i32(f, dump.k_blocks);
    wr_i32(f, dump.n_samples());
    for (int id : dump.sample_ids) wr_i32(f, id);
    wr(f, dump.vectors.data(), sizeof(float) * static_cast<size_t>(dump.vectors.size()));
    check(f.good(), "dump: write failed for " + path);
}

RepresentationDump load_dump(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    check(f.good(), "dump: cannot open " + path);
    char magic[8];
    rd(f, magic, 8);
    check(std::equal(magic, magic + 8, kDumpMagic), "dump: bad magic in " + path);
    check(rd_i32(f) == 1, "dump: unsupported version in " + path);

    RepresentationDump dump;
    const int32_t id_len = rd_i32(f);
    check(id_len >= 0 && id_len < 4096, "dump: bad id length");
    dump.checkpoint_id.resize(static_cast<size_t>(id_len));
    if (id_len) rd(f, dump.checkpoint_id.data(), static_cast<size_t>(id_len));
    dump.layer = rd_i32(f);
    dump.dim = rd_i32(f);
    dump.k_blocks = rd_i32(f);
    const int32_t n = rd_i32(f);
    check(dump.dim > 0 && dump.k_blocks > 0 && n >= 0, "dump: bad geometry");
    dump.sample_ids.resize(static_cast<size_t>(n));
    for (int32_t i = 0; i < n; ++i) dump.sample_ids[static_cast<size_t>(i)] = rd_i32(f);
    dump.vectors.resize(dump.dim, static_cast<Eigen::Index>(n) * dump.k_blocks);
    rd(f, dump.vectors.data(), sizeof(float) * static_cast<size_t>(dump.vectors.size()));
    return dump;
}

// ---------------------------------------------------------------------------
// pca
// ---------------------------------------------------------------------------

double PcaBasis::explained_total() const {
    return std::accumulate(explained_ratio.begin(), explained_ratio.end(), 0.0);
}

PcaBasis pca_shared_basis(const std::vector<RepresentationDump>& dumps, int n_components) {
    check(n_components >= 1, "pca: need at least one component");
    check(!dumps.empty(), "pca: no dumps");
    const int dim = dumps[0].dim;
    Eigen::Index total = 0;
    for (const RepresentationDump& d : dumps) {
        check(d.dim == dim, "pca: dumps disagree on dimension");
        total += d.vectors.cols();
    }
    check(total >= 2, "pca: need at least two vectors");

    Mat<double> x(dim, total);
    Eigen::Index at = 0;
    for (const RepresentationDump& d : dumps) {
        x.middleCols(at, d.vectors.cols()) = d.vectors.cast<double>();
        at += d.vectors.cols();
    }

    PcaBasis basis;
    basis.mean = x.rowwise().mean();
    x.colwise() -= basis.mean;
    const Mat<double> cov = x * x.transpose() / static_cast<double>(total - 1);
    Eigen::SelfAdjointEigenSolver<Mat<double>> eig(cov);
    check(eig.info() == Eigen::Success, "pca: eigendecomposition failed");

    // eigenvalues ascend; harvest from the back, dropping numerical zeros
    const Vec<double>& lam = eig.eigenvalues();
    double total_var = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) total_var += std::max(lam(i), 0.0);
    const double floor = std::max(lam(lam.size() - 1), 0.0) * 1e-12;

    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = lam.size() - 1;
         i >= 0 && static_cast<int>(keep.size()) < n_components; --i) {
        if (lam(i) <= floor || lam(i) <= 0.0) break;
        keep.push_back(i);
    }
    basis.truncated = static_cast<int>(keep.size()) < n_components;
    basis.components.resize(dim, static_cast<Eigen::Index>(keep.size()));
    for (size_t c = 0; c < keep.size(); ++c) {
        basis.components.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(keep[c]);
        basis.explained_ratio.push_back(total_var > 0.0 ? lam(keep[c]) / total_var : 0.0);
    }
    return basis;
}

Mat<double> pca_project_vectors(const PcaBasis& basis, const Mat<float>& vectors, bool center) {
    check(vectors.rows() == basis.mean.size(), "pca: vector dimension mismatch");
    Mat<double> x = vectors.cast<double>();
    if (center) x.colwise() -= basis.mean;
    return basis.components.transpose() * x;
}

Mat<double> pca_project(const PcaBasis& basis, const RepresentationDump& dump) {
    return pca_project_vectors(basis, dump.vectors, /*center=*/true);
}

// ---------------------------------------------------------------------------
// deltas
// ---------------------------------------------------------------------------

Mat<float> first_to_final_delta(const RepresentationDump& dump) {
    check(dump.k_blocks >= 2, "delta: need at least two blocks");
    Mat<float> out(dump.dim, dump.n_samples());
    for (int s = 0; s < dump.n_samples(); ++s) {
        out.col(s) = dump.vector_at(s, dump.k_blocks) - dump.vector_at(s, 1);
    }
    return out;
}

double mean_delta_norm(const RepresentationDump& dump) {
    const Mat<float> d = first_to_final_delta(dump);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < d.cols(); ++c) sum += d.col(c).norm();
    return d.cols() ? sum / static_cast<double>(d.cols()) : 0.0;
}

ExtremePair extreme_pair_cosine(const PcaBasis& basis, const Mat<float>& deltas) {
    check(deltas.cols() >= 2, "extreme pair: need at least two deltas");
    const Mat<double> proj = pca_project_vectors(basis, deltas, /*center=*/false);
    ExtremePair best;
    for (Eigen::Index i = 0; i < proj.cols(); ++i) {
        for (Eigen::Index j = i + 1; j < proj.cols(); ++j) {
            const double d = (proj.col(i) - proj.col(j)).norm();
            if (d > best.separation) {
                best.separation = d;
                best.a = static_cast<int>(i);
                best.b = static_cast<int>(j);
            }
        }
    }
    const double na = deltas.col(best.a).norm();
    const double nb = deltas.col(best.b).norm();
    best.cosine = na > 0.0 && nb > 0.0
                      ? deltas.col(best.a).cast<double>().dot(deltas.col(best.b).cast<double>()) /
                            (na * nb)
                      : 0.0;
    return best;
}

// ---------------------------------------------------------------------------
// probes
// ---------------------------------------------------------------------------

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double bce(double p, int y) {
    const double eps = 1e-12;
    return y ? -std::log(p + eps) : -std::log(1.0 - p + eps);
}

/// Full-batch adam on logistic loss + 0.5 * l2 * |w|^2 (bias exempt).
/// Convex objective, zero init; deterministic.
void fit_logistic(const Mat<double>& x, const std::vector<uint8_t>& y, double l2, int iters,
                  double lr, Vec<double>* w_out, double* b_out) {
    const Eigen::Index dim = x.rows();
    const Eigen::Index n = x.cols();
    Vec<double> w = Vec<double>::Zero(dim), mw = w, vw = w;
    double b = 0.0, mb = 0.0, vb = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int it = 1; it <= iters; ++it) {
        Vec<double> gw = l2 * w;
        double gb = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double r = sigmoid(w.dot(x.col(i)) + b) - (y[static_cast<size_t>(i)] ? 1 : 0);
            gw += x.col(i) * (r / static_cast<double>(n));
            gb += r / static_cast<double>(n);
        }
        mw = b1 * mw + (1 - b1) * gw;
        vw = (b2 * vw.array() + (1 - b2) * gw.array().square()).matrix();
        mb = b1 * mb + (1 - b1) * gb;
        vb = b2 * vb + (1 - b2) * gb * gb;
        const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
        w -= lr * ((mw / c1).array() / ((vw / c2).array().sqrt() + eps)).matrix();
        b -= lr * (mb / c1) / (std::sqrt(vb / c2) + eps);
    }
    *w_out = w;
    *b_out = b;
}

double heldout_nll(const Mat<double>& x, const std::vector<uint8_t>& y, const Vec<double>& w,
                   double b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.cols(); ++i) {
        s += bce(sigmoid(w.dot(x.col(i)) + b), y[static_cast<size_t>(i)]);
    }
    return s / static_cast<double>(x.cols());
}

/// Platt recalibration p = sigmoid(a*z + b) fitted on held-out logits, with
/// a light ridge toward the identity to keep one-class splits bounded.
void fit_platt(const std::vector<double>& z, const std::vector<uint8_t>& y, double* a_out,
               double* b_out) {
    double a = 1.0, b = 0.0, ma = 0, va = 0, mb = 0, vb = 0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8, ridge = 1e-4, lr = 0.05;
    const double n = static_cast<double>(z.size());
    for (int it = 1; it <= 400; ++it) {
        double ga = ridge * (a - 1.0), gb = ridge * b;
        for (size_t i = 0; i < z.size(); ++i) {
            const double r = sigmoid(a * z[i] + b) - (y[i] ? 1 : 0);
            ga += r * z[i] / n;
            gb += r / n;
        }
        ma = b1 * ma + (1 - b1) * ga;
        va = b2 * va + (1 - b2) * ga * ga;
        mb = b1 * mb + (1 - b1) * gb;
        vb = b2 * vb + (1 - b2) * gb * gb;
        const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
        a -= lr * (ma / c1) / (std::sqrt(va / c2) + eps);
        b -= lr * (mb / c1) / (std::sqrt(vb / c2) + eps);
    }
    *a_out = a;
    *b_out = b;
}

bool both_classes(const std::vector<uint8_t>& y) {
    bool pos = false, neg = false;
    for (uint8_t v : y) (v ? pos : neg) = true;
    return pos && neg;
}

}  // namespace

ProbeModel fit_probes(const RepresentationDump& dump, const std::vector<uint8_t>& labels,
                      const ProbeSplit& split, const ProbeFitConfig& cfg) {
    check(static_cast<Eigen::Index>(labels.size()) == dump.vectors.cols(),
          "fit_probes: one label per dump column required");
    check(!split.train.empty() && !split.held_out.empty(), "fit_probes: empty split");
    check(!cfg.l2_grid.empty(), "fit_probes: empty l2 grid");
    for (int i : split.train) {
        check(i >= 0 && i < dump.n_samples(), "fit_probes: train index out of range");
        check(std::find(split.held_out.begin(), split.held_out.end(), i) ==
                  split.held_out.end(),
              "fit_probes: train and held-out splits overlap");
    }
    for (int i : split.held_out) {
        check(i >= 0 && i < dump.n_samples(), "fit_probes: held-out index out of range");
    }

    ProbeModel pm;
    pm.dim = dump.dim;
    pm.k_blocks = dump.k_blocks;
    pm.layer = dump.layer;
    pm.weights = Mat<double>::Zero(dump.dim, dump.k_blocks);
    pm.bias = Vec<double>::Zero(dump.k_blocks);
    pm.cal_a.assign(static_cast<size_t>(dump.k_blocks), 1.0);
    pm.cal_b.assign(static_cast<size_t>(dump.k_blocks), 0.0);
    pm.chosen_l2.assign(static_cast<size_t>(dump.k_blocks), 0.0);
    pm.train_prior.assign(static_cast<size_t>(dump.k_blocks), 0.0);
    pm.fitted.assign(static_cast<size_t>(dump.k_blocks), 0);
    pm.held_out_auroc.assign(static_cast<size_t>(dump.k_blocks), -1.0);
    pm.held_out_auprc.assign(static_cast<size_t>(dump.k_blocks), -1.0);

    for (int blk = 1; blk <= dump.k_blocks; ++blk) {
        const size_t bi = static_cast<size_t>(blk - 1);
        Mat<double> xtr(dump.dim, static_cast<Eigen::Index>(split.train.size()));
        std::vector<uint8_t> ytr;
        for (size_t i = 0; i < split.train.size(); ++i) {
            xtr.col(static_cast<Eigen::Index>(i)) =
                dump.vector_at(split.train[i], blk).cast<double>();
            ytr.push_back(labels[static_cast<size_t>(dump.col(split.train[i], blk))]);
        }
        Mat<double> xho(dump.dim, static_cast<Eigen::Index>(split.held_out.size()));
        std::vector<uint8_t> yho;
        for (size_t i = 0; i < split.held_out.size(); ++i) {
            xho.col(static_cast<Eigen::Index>(i)) =
                dump.vector_at(split.held_out[i], blk).cast<double>();
            yho.push_back(labels[static_cast<size_t>(dump.col(split.held_out[i], blk))]);
        }

        double pos = 0;
        for (uint8_t v : ytr) pos += v;
        pm.train_prior[bi] = pos / static_cast<double>(ytr.size());
        if (!both_classes(ytr)) {
            check(cfg.skip_single_class,
                  "fit_probes: block " + std::to_string(blk) +
                      " training split has a single class");
            continue;  // unfitted; predictions fall back to the prior
        }

        Vec<double> best_w;
        double best_b = 0.0, best_nll = 0.0, best_l2 = 0.0;
        for (size_t gi = 0; gi < cfg.l2_grid.size(); ++gi) {
            Vec<double> w;
            double b;
            fit_logistic(xtr, ytr, cfg.l2_grid[gi], cfg.iterations, cfg.learning_rate, &w, &b);
            const double nll = heldout_nll(xho, yho, w, b);
            if (gi == 0 || nll < best_nll) {
                best_nll = nll;
                best_w = w;
                best_b = b;
                best_l2 = cfg.l2_grid[gi];
            }
        }
        pm.weights.col(blk - 1) = best_w;
        pm.bias(blk - 1) = best_b;
        pm.chosen_l2[bi] = best_l2;
        pm.fitted[bi] = 1;

        std::vector<double> zho;
        for (Eigen::Index i = 0; i < xho.cols(); ++i) zho.push_back(best_w.dot(xho.col(i)) + best_b);
        fit_platt(zho, yho, &pm.cal_a[bi], &pm.cal_b[bi]);

        if (both_classes(yho)) {
            std::vector<double> scores;
            for (size_t i = 0; i < zho.size(); ++i) {
                scores.push_back(sigmoid(pm.cal_a[bi] * zho[i] + pm.cal_b[bi]));
            }
            const auto [roc, prc] = auroc_auprc(scores, yho);
            pm.held_out_auroc[bi] = roc;
            pm.held_out_auprc[bi] = prc;
        }
    }
    return pm;
}

double probe_predict(const ProbeModel& probes, int block, const Vec<float>& representation) {
    check(block >= 1 && block <= probes.k_blocks, "probe_predict: block out of range");
    check(representation.size() == probes.dim, "probe_predict: dimension mismatch");
    const size_t bi = static_cast<size_t>(block - 1);
    if (!probes.fitted[bi]) return probes.train_prior[bi];
    const double z =
        probes.weights.col(block - 1).dot(representation.cast<double>()) + probes.bias(block - 1);
    return sigmoid(probes.cal_a[bi] * z + probes.cal_b[bi]);
}

// ---------------------------------------------------------------------------
// selection
// ---------------------------------------------------------------------------

double noisy_or(const std::vector<double>& probabilities) {
    double miss = 1.0;
    for (double p : probabilities) {
        check(p >= 0.0 && p <= 1.0, "noisy_or: probability out of range");
        miss *= 1.0 - p;
    }
    return 1.0 - miss;
}

AnswerSelection probe_select_answer(const ProbeModel& probes, const Mat<float>& representations,
                                    const std::vector<std::string>& answers) {
    check(static_cast<int>(answers.size()) == probes.k_blocks,
          "probe_select_answer: one answer per block required");
    check(representations.cols() == probes.k_blocks &&
              representations.rows() == probes.dim,
          "probe_select_answer: representation shape mismatch");

    struct Group {
        std::string answer;
        std::vector<double> probs;
        int first_block;
    };
    std::vector<Group> groups;  // in earliest-block order
    for (int blk = 1; blk <= probes.k_blocks; ++blk) {
        const double p = probe_predict(probes, blk, representations.col(blk - 1));
        const std::string key = canonical_answer(answers[static_cast<size_t>(blk - 1)]);
        auto it = std::find_if(groups.begin(), groups.end(),
                               [&key](const Group& g) { return g.answer == key; });
        if (it == groups.end()) {
            groups.push_back({key, {p}, blk});
        } else {
            it->probs.push_back(p);
        }
    }

    AnswerSelection sel;
    double best = -1.0;
    for (const Group& g : groups) {
        const double conf = noisy_or(g.probs);
        if (conf > best) {  // strict: earlier groups win ties
            best = conf;
            sel.answer = g.answer;
            sel.confidence = conf;
            sel.block = g.first_block;
        }
    }
    return sel;
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

std::pair<double, double> auroc_auprc(const std::vector<double>& scores,
                                      const std::vector<uint8_t>& labels) {
    check(scores.size() == labels.size() && !scores.empty(), "auroc: size mismatch");
    check(both_classes(labels), "auroc: both classes required");
    const size_t n = scores.size();
    double n_pos = 0;
    for (uint8_t y : labels) n_pos += y;
    const double n_neg = static_cast<double>(n) - n_pos;

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });

    // AUROC: Mann-Whitney U with midpoint ranks over tied scores
    double rank_sum_pos = 0.0;
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (size_t k = i; k < j; ++k) {
            if (labels[order[k]]) rank_sum_pos += avg_rank;
        }
        i = j;
    }
    const double auroc = (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg);

    // AUPRC: step integration over descending scores, tied groups atomic
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, auprc = 0.0;
    for (size_t i = n; i > 0;) {
        size_t j = i;
        while (j > 0 && scores[order[j - 1]] == scores[order[i - 1]]) --j;
        for (size_t k = j; k < i; ++k) {
            if (labels[order[k]]) tp += 1.0;
            else fp += 1.0;
        }
        const double recall = tp / n_pos;
        const double precision = tp + fp > 0.0 ? tp / (tp + fp) : 1.0;
        auprc += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return {auroc, auprc};
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

std::string projections_csv(const std::vector<RepresentationDump>& dumps,
                            const std::vector<Mat<double>>& projections) {
    check(dumps.size() == projections.size(), "projections_csv: size mismatch");
    int max_c = 0;
    for (const Mat<double>& p : projections) max_c = std::max(max_c, static_cast<int>(p.rows()));
    std::string out = "checkpoint,layer,sample_id,block";
    for (int c = 1; c <= max_c; ++c) out += ",c" + std::to_string(c);
    out += "\n";
    for (size_t d = 0; d < dumps.size(); ++d) {
        const RepresentationDump& dump = dumps[d];
        check(projections[d].cols() == dump.vectors.cols(), "projections_csv: column mismatch");
        for (int s = 0; s < dump.n_samples(); ++s) {
            for (int b = 1; b <= dump.k_blocks; ++b) {
                out += dump.checkpoint_id + "," + std::to_string(dump.layer) + "," +
                       std::to_string(dump.sample_ids[static_cast<size_t>(s)]) + "," +
                       std::to_string(b);
                for (int c = 0; c < max_c; ++c) {
                    out += ",";
                    if (c < projections[d].rows()) {
                        out += fmt(projections[d](c, dump.col(s, b)));
                    }
                }
                out += "\n";
            }
        }
    }
    return out;
}

std::string probe_csv(const ProbeModel& probes) {
    std::string out = "block,fitted,l2,train_prior,cal_a,cal_b,auroc,auprc\n";
    for (int b = 1; b <= probes.k_blocks; ++b) {
        const size_t bi = static_cast<size_t>(b - 1);
        out += std::to_string(b) + "," + (probes.fitted[bi] ? "1" : "0") + "," +
               fmt(probes.chosen_l2[bi]) + "," + fmt(probes.train_prior[bi]) + "," +
               fmt(probes.cal_a[bi]) + "," + fmt(probes.cal_b[bi]) + "," +
               (probes.held_out_auroc[bi] >= 0 ? fmt(probes.held_out_auroc[bi]) : "") + "," +
               (probes.held_out_auprc[bi] >= 0 ? fmt(probes.held_out_auprc[bi]) : "") + "\n";
    }
    return out;
}

}  // namespace rim
