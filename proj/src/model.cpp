#include "rim/model.hpp"

#include <cmath>
#include <limits>

#include "json.hpp"

namespace rim {

namespace {

constexpr double kLnEps = 1e-5;

enum class Init { normal, zeros, ones };

template <class S>
void init_tensor(Tensor<S>& t, Init kind, uint64_t seed) {
    if (kind == Init::zeros) {
        t.value.setZero();
        return;
    }
    if (kind == Init::ones) {
        t.value.setOnes();
        return;
    }
    Rng rng(seed);
    for (Eigen::Index c = 0; c < t.value.cols(); ++c) {
        for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
            t.value(r, c) = static_cast<S>(rng.normal() * 0.02);
        }
    }
}

template <class S>
S gelu(S x) {
    return static_cast<S>(0.5) * x * (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
}

template <class S>
S gelu_grad(S x) {
    const S cdf = static_cast<S>(0.5) * (static_cast<S>(1) + std::erf(x * static_cast<S>(M_SQRT1_2)));
    const S pdf = std::exp(static_cast<S>(-0.5) * x * x) *
                  static_cast<S>(0.3989422804014326779399460599343);
    return cdf + x * pdf;
}

// d loss / d x for one column given stored stats; accumulates dg, db
template <class S>
void ln_backward_col(const Eigen::Ref<const Vec<S>>& x, S mean, S rstd, const Vec<S>& g,
                     const Eigen::Ref<const Vec<S>>& dy, Mat<S>& dg, Mat<S>& db,
                     Eigen::Ref<Vec<S>> dx_out) {
    Vec<S> xhat = ((x.array() - mean) * rstd).matrix();
    dg.col(0) += (dy.array() * xhat.array()).matrix();
    db.col(0) += dy;
    Vec<S> dxhat = (dy.array() * g.array()).matrix();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat.array() * xhat.array()).mean();
    dx_out += (rstd * (dxhat.array() - m1 - xhat.array() * m2)).matrix();
}

}  // namespace

// ---------------------------------------------------------------- config ----

void ModelConfig::validate() const {
    check(vocab_size > 0, "model config: vocab_size must be positive");
    check(dim > 0 && n_heads > 0 && dim % n_heads == 0,
          "model config: dim must be divisible by n_heads");
    check(n_layers > 0, "model config: n_layers must be positive");
    check(ff_dim > 0, "model config: ff_dim must be positive");
    check(max_positions > 0, "model config: max_positions must be positive");
    check(dropout >= 0.0 && dropout < 1.0, "model config: dropout must be in [0, 1)");
    check(frozen_base_embeddings >= 0 && frozen_base_embeddings <= vocab_size,
          "model config: frozen_base_embeddings out of range");
    check(adapter_rank >= 0, "model config: adapter_rank must be >= 0");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j = {{"vocab_size", vocab_size},
                        {"dim", dim},
                        {"n_layers", n_layers},
                        {"n_heads", n_heads},
                        {"ff_dim", ff_dim},
                        {"max_positions", max_positions},
                        {"dropout", dropout},
                        {"frozen_base_embeddings", frozen_base_embeddings},
                        {"adapter_rank", adapter_rank}};
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dim = j.at("dim").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.frozen_base_embeddings = j.value("frozen_base_embeddings", 0);
    c.adapter_rank = j.value("adapter_rank", 0);
    return c;
}

// ----------------------------------------------------------------- model ----

template <class S>
Model<S> Model<S>::init(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Model<S> m;
    m.config = config;
    const int d = config.dim;
    const int ff = config.ff_dim;
    const int v = config.vocab_size;

    std::vector<Init> kinds;
    auto add = [&m, &kinds](const std::string& name, int rows, int cols, Init kind) {
        Tensor<S> t;
        t.name = name;
        t.value.setZero(rows, cols);
        t.grad.setZero(rows, cols);
        kinds.push_back(kind);
        m.tensors.push_back(std::move(t));
    };

    add("tok_emb", d, v, Init::normal);
    add("pos_emb", d, config.max_positions, Init::normal);
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string p = "l" + std::to_string(l) + ".";
        add(p + "ln1.g", d, 1, Init::ones);
        add(p + "ln1.b", d, 1, Init::zeros);
        add(p + "attn.wq", d, d, Init::normal);
        add(p + "attn.bq", d, 1, Init::zeros);
        add(p + "attn.wk", d, d, Init::normal);
        add(p + "attn.bk", d, 1, Init::zeros);
        add(p + "attn.wv", d, d, Init::normal);
        add(p + "attn.bv", d, 1, Init::zeros);
        add(p + "attn.wo", d, d, Init::normal);
        add(p + "attn.bo", d, 1, Init::zeros);
        add(p + "ln2.g", d, 1, Init::ones);
        add(p + "ln2.b", d, 1, Init::zeros);
        add(p + "mlp.w1", ff, d, Init::normal);
        add(p + "mlp.b1", ff, 1, Init::zeros);
        add(p + "mlp.w2", d, ff, Init::normal);
        add(p + "mlp.b2", d, 1, Init::zeros);
    }
    add("lnf.g", d, 1, Init::ones);
    add("lnf.b", d, 1, Init::zeros);
    add("head.w", v, d, Init::normal);
    add("head.b", v, 1, Init::zeros);
    if (config.adapter_rank > 0) {
        const int r = config.adapter_rank;
        for (int l = 0; l < config.n_layers; ++l) {
            const std::string p = "l" + std::to_string(l) + ".";
            for (const char* base : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
                add(p + base + ".a", r, d, Init::normal);
                add(p + base + ".b", d, r, Init::zeros);  // zero so the delta starts at 0
            }
            add(p + "mlp.w1.a", r, d, Init::normal);
            add(p + "mlp.w1.b", ff, r, Init::zeros);
            add(p + "mlp.w2.a", r, ff, Init::normal);
            add(p + "mlp.w2.b", d, r, Init::zeros);
        }
    }

    // the registry order defines the init stream: tensor i draws from its own
    // derived seed, so adding config options later keeps earlier draws stable
    for (size_t i = 0; i < m.tensors.size(); ++i) {
        init_tensor(m.tensors[i], kinds[i], derive_seed(seed, i));
    }
    apply_training_partition(m);
    return m;
}

template <class S>
Tensor<S>& Model<S>::tensor(const std::string& name) {
    for (auto& t : tensors) {
        if (t.name == name) return t;
    }
    fail("model: no tensor named '" + name + "'");
}

template <class S>
const Tensor<S>& Model<S>::tensor(const std::string& name) const {
    return const_cast<Model<S>*>(this)->tensor(name);
}

template <class S>
void Model<S>::zero_grads() {
    for (auto& t : tensors) t.grad.setZero();
}

template <class S>
size_t Model<S>::n_params() const {
    size_t n = 0;
    for (const auto& t : tensors) n += static_cast<size_t>(t.value.size());
    return n;
}

template <class S>
size_t Model<S>::n_trainable_params() const {
    size_t n = 0;
    for (const auto& t : tensors) {
        if (!t.trainable) continue;
        n += static_cast<size_t>(t.value.size()) -
             static_cast<size_t>(t.frozen_cols) * t.value.rows();
    }
    return n;
}

template <class S>
template <class T>
Model<T> Model<S>::cast() const {
    Model<T> out;
    out.config = config;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
        Tensor<T> c;
        c.name = t.name;
        c.value = t.value.template cast<T>();
        c.grad.setZero(t.value.rows(), t.value.cols());
        c.trainable = t.trainable;
        c.frozen_cols = t.frozen_cols;
        out.tensors.push_back(std::move(c));
    }
    return out;
}

template <class S>
void apply_training_partition(Model<S>& model) {
    if (model.config.adapter_rank > 0) {
        for (int l = 0; l < model.config.n_layers; ++l) {
            const std::string p = "l" + std::to_string(l) + ".";
            for (const char* base :
                 {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.w1", "mlp.w2"}) {
                model.tensor(p + base).trainable = false;
            }
        }
    }
    model.tensor("tok_emb").frozen_cols = model.config.frozen_base_embeddings;
}

// --------------------------------------------------------------- session ----

namespace {

// raw views of one layer's parameters (and optional adapters)
template <class S>
struct LayerRefs {
    const Mat<S>*ln1g, *ln1b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    const Mat<S>*ln2g, *ln2b, *w1, *b1, *w2, *b2;
    const Mat<S>*wq_a = nullptr, *wq_b = nullptr, *wk_a = nullptr, *wk_b = nullptr;
    const Mat<S>*wv_a = nullptr, *wv_b = nullptr, *wo_a = nullptr, *wo_b = nullptr;
    const Mat<S>*w1_a = nullptr, *w1_b = nullptr, *w2_a = nullptr, *w2_b = nullptr;
};

template <class S>
LayerRefs<S> layer_refs(const Model<S>& m, int l) {
    LayerRefs<S> r;
    const int base = m.layer_base(l);
    auto v = [&m](int i) { return &m.tensors[static_cast<size_t>(i)].value; };
    r.ln1g = v(base + 0); r.ln1b = v(base + 1);
    r.wq = v(base + 2);  r.bq = v(base + 3);
    r.wk = v(base + 4);  r.bk = v(base + 5);
    r.wv = v(base + 6);  r.bv = v(base + 7);
    r.wo = v(base + 8);  r.bo = v(base + 9);
    r.ln2g = v(base + 10); r.ln2b = v(base + 11);
    r.w1 = v(base + 12); r.b1 = v(base + 13);
    r.w2 = v(base + 14); r.b2 = v(base + 15);
    if (m.config.adapter_rank > 0) {
        // adapters live after the base registry: 12 tensors per layer
        const int abase = 2 + m.config.n_layers * 16 + 4 + l * 12;
        r.wq_a = v(abase + 0);  r.wq_b = v(abase + 1);
        r.wk_a = v(abase + 2);  r.wk_b = v(abase + 3);
        r.wv_a = v(abase + 4);  r.wv_b = v(abase + 5);
        r.wo_a = v(abase + 6);  r.wo_b = v(abase + 7);
        r.w1_a = v(abase + 8);  r.w1_b = v(abase + 9);
        r.w2_a = v(abase + 10); r.w2_b = v(abase + 11);
    }
    return r;
}

template <class S>
Mat<S> project(const Mat<S>& w, const Mat<S>& b, const Mat<S>* a_lo, const Mat<S>* b_lo,
               const Mat<S>& x) {
    Mat<S> y = (w * x).colwise() + Vec<S>(b.col(0));
    if (a_lo) y.noalias() += (*b_lo) * ((*a_lo) * x);
    return y;
}

template <class S>
void grow_mat(Mat<S>& m, int rows, int cap) {
    if (m.rows() != rows || m.cols() < cap) {
        Mat<S> next(rows, cap);
        next.setZero();
        if (m.size() > 0 && m.rows() == rows) next.leftCols(m.cols()) = m;
        m.swap(next);
    }
}

template <class S>
void grow_vec(Vec<S>& v, int cap) {
    if (v.size() < cap) {
        Vec<S> next(cap);
        next.setZero();
        if (v.size() > 0) next.head(v.size()) = v;
        v.swap(next);
    }
}

}  // namespace

template <class S>
Session<S>::Session(Model<S>& model, bool training, uint64_t dropout_seed)
    : model_(model), training_(training), drop_rng_(dropout_seed) {
    model_.config.validate();
    acts_.resize(static_cast<size_t>(model_.config.n_layers));
}

template <class S>
void Session<S>::grow(int add) {
    const int need = n_ + add;
    int cap = static_cast<int>(x0_.cols());
    if (cap >= need) return;
    cap = std::max(need, std::max(16, cap * 2));
    const int d = model_.config.dim;
    const int ff = model_.config.ff_dim;
    grow_mat(injected_, d, cap);
    grow_mat(x0_, d, cap);
    grow_mat(x_final_, d, cap);
    for (auto& a : acts_) {
        grow_mat(a.x_in, d, cap);
        grow_vec(a.ln1_mean, cap);
        grow_vec(a.ln1_rstd, cap);
        grow_mat(a.q, d, cap);
        grow_mat(a.k, d, cap);
        grow_mat(a.v, d, cap);
        grow_mat(a.att_concat, d, cap);
        if (training_ && model_.config.dropout > 0.0) {
            grow_mat(a.att_drop, d, cap);
            grow_mat(a.mlp_drop, d, cap);
        }
        grow_vec(a.ln2_mean, cap);
        grow_vec(a.ln2_rstd, cap);
        grow_mat(a.x_mid, d, cap);
        grow_mat(a.f1, ff, cap);
        grow_mat(a.g, ff, cap);
    }
}

template <class S>
void Session<S>::extend_tokens(const std::vector<TokenId>& tokens,
                               const std::vector<int>& positions, const AllowFn& allow,
                               ExtendKind kind) {
    check(!backward_done_, "session: extend after backward");
    check(tokens.size() == positions.size(), "session: tokens/positions size mismatch");
    check(!tokens.empty(), "session: empty extend");
    const int begin = n_;
    grow(static_cast<int>(tokens.size()));
    for (size_t i = 0; i < tokens.size(); ++i) {
        TokenId id = tokens[i];
        int pos = positions[i];
        check(id >= 0 && id < model_.config.vocab_size, "session: token id out of range");
        check(pos >= 0 && pos < model_.config.max_positions,
              "session: position " + std::to_string(pos) + " exceeds max_positions");
        tokens_.push_back(id);
        positions_.push_back(pos);
        injected_.col(n_).setZero();
        ++n_;
    }
    extents_.push_back({begin, n_, {}});
    if (kind == ExtendKind::stream) ++n_stream_extends_; else n_decode_steps_ += n_ - begin;
    run_forward(begin, allow);
}

template <class S>
void Session<S>::extend_embeddings(const Mat<S>& inputs, const std::vector<int>& positions,
                                   const std::vector<std::pair<int, int>>& sources,
                                   const AllowFn& allow, ExtendKind kind) {
    check(!backward_done_, "session: extend after backward");
    check(inputs.rows() == model_.config.dim, "session: injected dim mismatch");
    check(inputs.cols() == static_cast<Eigen::Index>(positions.size()),
          "session: injected cols/positions mismatch");
    check(sources.size() == positions.size(), "session: sources size mismatch");
    check(!positions.empty(), "session: empty extend");
    const int begin = n_;
    grow(static_cast<int>(positions.size()));
    for (size_t i = 0; i < positions.size(); ++i) {
        int pos = positions[i];
        check(pos >= 0 && pos < model_.config.max_positions,
              "session: position exceeds max_positions");
        check(sources[i].first < begin, "session: injection source must precede the extend");
        check(sources[i].second >= -1 && sources[i].second <= model_.config.n_layers,
              "session: injection layer out of range");
        tokens_.push_back(-1);
        positions_.push_back(pos);
        injected_.col(n_) = inputs.col(static_cast<Eigen::Index>(i));
        ++n_;
    }
    extents_.push_back({begin, n_, sources});
    if (kind == ExtendKind::stream) ++n_stream_extends_; else n_decode_steps_ += n_ - begin;
    run_forward(begin, allow);
}

template <class S>
void Session<S>::run_forward(int begin, const AllowFn& allow) {
    const ModelConfig& cfg = model_.config;
    const int end = n_;
    const int n_new = end - begin;
    const int d = cfg.dim;
    const int hd = cfg.head_dim();
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    const S neg_inf = -std::numeric_limits<S>::infinity();

    // record the permission rows for decode bookkeeping / assertions
    for (int q = begin; q < end; ++q) {
        std::vector<uint8_t> row(static_cast<size_t>(end));
        for (int k = 0; k < end; ++k) row[static_cast<size_t>(k)] = allow(q, k) ? 1 : 0;
        check(row[static_cast<size_t>(q)], "session: mask must allow the diagonal");
        allow_rows_.push_back(std::move(row));
    }

    const Mat<S>& tok_emb = model_.tensors[0].value;
    const Mat<S>& pos_emb = model_.tensors[1].value;
    for (int j = begin; j < end; ++j) {
        Vec<S> e = tokens_[static_cast<size_t>(j)] >= 0
                       ? Vec<S>(tok_emb.col(tokens_[static_cast<size_t>(j)]))
                       : Vec<S>(injected_.col(j));
        x0_.col(j) = e + pos_emb.col(positions_[static_cast<size_t>(j)]);
    }

    Mat<S> x = x0_.middleCols(begin, n_new);
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerActs& a = acts_[static_cast<size_t>(l)];
        LayerRefs<S> w = layer_refs(model_, l);
        a.x_in.middleCols(begin, n_new) = x;

        Mat<S> norm1(d, n_new);
        {
            // ln over the new columns only; stats buffers are session-global
            Mat<S>& xin = a.x_in;
            for (int j = begin; j < end; ++j) {
                const S m = xin.col(j).mean();
                Vec<S> dv = xin.col(j).array() - m;
                const S var = dv.squaredNorm() / static_cast<S>(d);
                const S r = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
                a.ln1_mean(j) = m;
                a.ln1_rstd(j) = r;
                norm1.col(j - begin) =
                    (dv.array() * r * w.ln1g->col(0).array() + w.ln1b->col(0).array()).matrix();
            }
        }
        a.q.middleCols(begin, n_new) = project(*w.wq, *w.bq, w.wq_a, w.wq_b, norm1);
        a.k.middleCols(begin, n_new) = project(*w.wk, *w.bk, w.wk_a, w.wk_b, norm1);
        a.v.middleCols(begin, n_new) = project(*w.wv, *w.bv, w.wv_a, w.wv_b, norm1);

        std::vector<Mat<S>> head_probs(static_cast<size_t>(cfg.n_heads));
        Mat<S> concat(d, n_new);
        for (int h = 0; h < cfg.n_heads; ++h) {
            auto qh = a.q.block(h * hd, begin, hd, n_new);
            auto kh = a.k.block(h * hd, 0, hd, end);
            auto vh = a.v.block(h * hd, 0, hd, end);
            Mat<S> scores(end, n_new);  // keys x queries
            scores.noalias() = kh.transpose() * qh;
            scores *= scale;
            for (int jq = 0; jq < n_new; ++jq) {
                const auto& row = allow_rows_[static_cast<size_t>(begin + jq)];
                for (int jk = 0; jk < end; ++jk) {
                    if (!row[static_cast<size_t>(jk)]) scores(jk, jq) = neg_inf;
                }
                // stable softmax over the key axis
                S mx = scores.col(jq).maxCoeff();
                Vec<S> e = (scores.col(jq).array() - mx).exp();
                scores.col(jq) = e / e.sum();
            }
            concat.middleRows(h * hd, hd).noalias() = vh * scores;
            head_probs[static_cast<size_t>(h)] = std::move(scores);
        }
        a.probs.push_back(std::move(head_probs));
        a.att_concat.middleCols(begin, n_new) = concat;

        Mat<S> att = project(*w.wo, *w.bo, w.wo_a, w.wo_b, concat);
        if (training_ && cfg.dropout > 0.0) {
            const S keep = static_cast<S>(1.0 / (1.0 - cfg.dropout));
            for (int j = 0; j < n_new; ++j) {
                for (int r = 0; r < d; ++r) {
                    a.att_drop(r, begin + j) = drop_rng_.uniform() >= cfg.dropout ? keep : S(0);
                }
            }
            att.array() *= a.att_drop.middleCols(begin, n_new).array();
        }
        Mat<S> x_mid = x + att;
        a.x_mid.middleCols(begin, n_new) = x_mid;

        Mat<S> norm2(d, n_new);
        for (int j = begin; j < end; ++j) {
            const S m = a.x_mid.col(j).mean();
            Vec<S> dv = a.x_mid.col(j).array() - m;
            const S var = dv.squaredNorm() / static_cast<S>(d);
            const S r = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
            a.ln2_mean(j) = m;
            a.ln2_rstd(j) = r;
            norm2.col(j - begin) =
                (dv.array() * r * w.ln2g->col(0).array() + w.ln2b->col(0).array()).matrix();
        }
        Mat<S> f1 = project(*w.w1, *w.b1, w.w1_a, w.w1_b, norm2);
        a.f1.middleCols(begin, n_new) = f1;
        Mat<S> g = f1.unaryExpr([](S t) { return gelu(t); });
        a.g.middleCols(begin, n_new) = g;
        Mat<S> f2 = project(*w.w2, *w.b2, w.w2_a, w.w2_b, g);
        if (training_ && cfg.dropout > 0.0) {
            const S keep = static_cast<S>(1.0 / (1.0 - cfg.dropout));
            for (int j = 0; j < n_new; ++j) {
                for (int r = 0; r < d; ++r) {
                    a.mlp_drop(r, begin + j) = drop_rng_.uniform() >= cfg.dropout ? keep : S(0);
                }
            }
            f2.array() *= a.mlp_drop.middleCols(begin, n_new).array();
        }
        x = x_mid + f2;
    }
    x_final_.middleCols(begin, n_new) = x;
}

template <class S>
void Session<S>::truncate(int keep) {
    check(keep >= 0 && keep <= n_, "session: bad truncate length");
    check(!backward_done_, "session: truncate after backward");
    while (!extents_.empty() && extents_.back().begin >= keep) {
        check(extents_.back().begin >= keep, "session: truncate inside an extend");
        extents_.pop_back();
        for (auto& a : acts_) a.probs.pop_back();
    }
    check(extents_.empty() ? keep == 0 : extents_.back().end == keep,
          "session: truncate must land on an extend boundary");
    tokens_.resize(static_cast<size_t>(keep));
    positions_.resize(static_cast<size_t>(keep));
    allow_rows_.resize(static_cast<size_t>(keep));
    n_ = keep;
}

template <class S>
Vec<S> Session<S>::hidden(int layer, int slot) const {
    check(slot >= 0 && slot < n_, "session: hidden slot out of range");
    check(layer >= 0 && layer <= model_.config.n_layers, "session: hidden layer out of range");
    if (layer == 0) return x0_.col(slot);
    if (layer == model_.config.n_layers) return x_final_.col(slot);
    return acts_[static_cast<size_t>(layer)].x_in.col(slot);
}

template <class S>
Vec<S> Session<S>::logits(int slot) const {
    return logits(std::vector<int>{slot}).col(0);
}

template <class S>
Mat<S> Session<S>::logits(const std::vector<int>& slots) const {
    const ModelConfig& cfg = model_.config;
    const Mat<S>& lnf_g = model_.tensor("lnf.g").value;
    const Mat<S>& lnf_b = model_.tensor("lnf.b").value;
    const Mat<S>& head_w = model_.tensor("head.w").value;
    const Mat<S>& head_b = model_.tensor("head.b").value;
    Mat<S> h(cfg.dim, static_cast<Eigen::Index>(slots.size()));
    for (size_t i = 0; i < slots.size(); ++i) {
        int slot = slots[i];
        check(slot >= 0 && slot < n_, "session: logits slot out of range");
        const auto x = x_final_.col(slot);
        const S m = x.mean();
        Vec<S> dv = x.array() - m;
        const S var = dv.squaredNorm() / static_cast<S>(cfg.dim);
        const S r = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
        h.col(static_cast<Eigen::Index>(i)) =
            (dv.array() * r * lnf_g.col(0).array() + lnf_b.col(0).array()).matrix();
    }
    Mat<S> out = (head_w * h).colwise() + Vec<S>(head_b.col(0));
    return out;
}

template <class S>
void Session<S>::backward(const std::vector<int>& slots, const Mat<S>& dlogits) {
    check(training_, "session: backward on an inference session");
    check(!backward_done_, "session: backward may run only once");
    check(dlogits.cols() == static_cast<Eigen::Index>(slots.size()),
          "session: dlogits/slots mismatch");
    backward_done_ = true;

    const ModelConfig& cfg = model_.config;
    const int d = cfg.dim;
    const int hd = cfg.head_dim();
    const int heads = cfg.n_heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));

    // per-layer residual-stream gradient buffers; dr[l] = dLoss/dR[l]
    std::vector<Mat<S>> dr(static_cast<size_t>(cfg.n_layers) + 1);
    for (auto& m : dr) m.setZero(d, n_);

    // head + final norm: direct per-slot path, applied up front
    {
        Tensor<S>& lnf_g = model_.tensor("lnf.g");
        Tensor<S>& lnf_b = model_.tensor("lnf.b");
        Tensor<S>& head_w = model_.tensor("head.w");
        Tensor<S>& head_b = model_.tensor("head.b");
        for (size_t i = 0; i < slots.size(); ++i) {
            const int slot = slots[i];
            check(slot >= 0 && slot < n_, "session: backward slot out of range");
            const auto x = x_final_.col(slot);
            const S m = x.mean();
            Vec<S> dv = x.array() - m;
            const S var = dv.squaredNorm() / static_cast<S>(d);
            const S r = static_cast<S>(1) / std::sqrt(var + static_cast<S>(kLnEps));
            Vec<S> hcol = (dv.array() * r * lnf_g.value.col(0).array() +
                           lnf_b.value.col(0).array()).matrix();
            const auto dl = dlogits.col(static_cast<Eigen::Index>(i));
            head_w.grad.noalias() += dl * hcol.transpose();
            head_b.grad.col(0) += dl;
            Vec<S> dh = head_w.value.transpose() * dl;
            ln_backward_col<S>(x, m, r, Vec<S>(lnf_g.value.col(0)), dh, lnf_g.grad, lnf_b.grad,
                               dr[static_cast<size_t>(cfg.n_layers)].col(slot));
        }
    }

    Tensor<S>& tok_emb = model_.tensors[0];
    Tensor<S>& pos_emb = model_.tensors[1];

    for (size_t ei = extents_.size(); ei-- > 0;) {
        const Extent& ext = extents_[ei];
        const int begin = ext.begin, end = ext.end;
        const int n_new = end - begin;

        for (int l = cfg.n_layers - 1; l >= 0; --l) {
            LayerActs& a = acts_[static_cast<size_t>(l)];
            LayerRefs<S> w = layer_refs(model_, l);
            const int base = model_.layer_base(l);
            auto gr = [this](int i) -> Mat<S>& { return model_.tensors[static_cast<size_t>(i)].grad; };
            Mat<S>& g_ln1g = gr(base + 0); Mat<S>& g_ln1b = gr(base + 1);
            Mat<S>& g_wq = gr(base + 2);   Mat<S>& g_bq = gr(base + 3);
            Mat<S>& g_wk = gr(base + 4);   Mat<S>& g_bk = gr(base + 5);
            Mat<S>& g_wv = gr(base + 6);   Mat<S>& g_bv = gr(base + 7);
            Mat<S>& g_wo = gr(base + 8);   Mat<S>& g_bo = gr(base + 9);
            Mat<S>& g_ln2g = gr(base + 10); Mat<S>& g_ln2b = gr(base + 11);
            Mat<S>& g_w1 = gr(base + 12);  Mat<S>& g_b1 = gr(base + 13);
            Mat<S>& g_w2 = gr(base + 14);  Mat<S>& g_b2 = gr(base + 15);

            Mat<S> dxout = dr[static_cast<size_t>(l) + 1].middleCols(begin, n_new);

            // ---- mlp path ----
            Mat<S> df2 = dxout;
            if (a.mlp_drop.size() > 0) {
                df2.array() *= a.mlp_drop.middleCols(begin, n_new).array();
            }
            const auto g_cols = a.g.middleCols(begin, n_new);
            g_w2.noalias() += df2 * g_cols.transpose();
            g_b2.col(0) += df2.rowwise().sum();
            Mat<S> dg = w.w2->transpose() * df2;

            // recompute norm2 from stored stats for the adapter/weight grads
            Mat<S> norm2(d, n_new);
            for (int j = begin; j < end; ++j) {
                norm2.col(j - begin) = ((a.x_mid.col(j).array() - a.ln2_mean(j)) * a.ln2_rstd(j) *
                                            w.ln2g->col(0).array() +
                                        w.ln2b->col(0).array()).matrix();
            }
            if (w.w2_a) {
                Tensor<S>& t_a = model_.tensor("l" + std::to_string(l) + ".mlp.w2.a");
                Tensor<S>& t_b = model_.tensor("l" + std::to_string(l) + ".mlp.w2.b");
                Mat<S> mid = (*w.w2_a) * g_cols;                     // r x n
                t_b.grad.noalias() += df2 * mid.transpose();
                Mat<S> dmid = w.w2_b->transpose() * df2;             // r x n
                t_a.grad.noalias() += dmid * g_cols.transpose();
                dg.noalias() += w.w2_a->transpose() * dmid;
            }
            Mat<S> df1 = dg.array() *
                         a.f1.middleCols(begin, n_new).unaryExpr([](S t) { return gelu_grad(t); }).array();
            g_w1.noalias() += df1 * norm2.transpose();
            g_b1.col(0) += df1.rowwise().sum();
            Mat<S> dnorm2 = w.w1->transpose() * df1;
            if (w.w1_a) {
                Tensor<S>& t_a = model_.tensor("l" + std::to_string(l) + ".mlp.w1.a");
                Tensor<S>& t_b = model_.tensor("l" + std::to_string(l) + ".mlp.w1.b");
                Mat<S> mid = (*w.w1_a) * norm2;
                t_b.grad.noalias() += df1 * mid.transpose();
                Mat<S> dmid = w.w1_b->transpose() * df1;
                t_a.grad.noalias() += dmid * norm2.transpose();
                dnorm2.noalias() += w.w1_a->transpose() * dmid;
            }
            // ln2 backward into dxmid; residual adds dxout
            Mat<S> dxmid = dxout;
            for (int j = 0; j < n_new; ++j) {
                ln_backward_col<S>(a.x_mid.col(begin + j), a.ln2_mean(begin + j),
                                   a.ln2_rstd(begin + j), Vec<S>(w.ln2g->col(0)),
                                   dnorm2.col(j), g_ln2g, g_ln2b, dxmid.col(j));
            }

            // ---- attention path ----
            Mat<S> datt = dxmid;
            if (a.att_drop.size() > 0) {
                datt.array() *= a.att_drop.middleCols(begin, n_new).array();
            }
            const auto concat_cols = a.att_concat.middleCols(begin, n_new);
            g_wo.noalias() += datt * concat_cols.transpose();
            g_bo.col(0) += datt.rowwise().sum();
            Mat<S> dconcat = w.wo->transpose() * datt;
            if (w.wo_a) {
                Tensor<S>& t_a = model_.tensor("l" + std::to_string(l) + ".attn.wo.a");
                Tensor<S>& t_b = model_.tensor("l" + std::to_string(l) + ".attn.wo.b");
                Mat<S> mid = (*w.wo_a) * concat_cols;
                t_b.grad.noalias() += datt * mid.transpose();
                Mat<S> dmid = w.wo_b->transpose() * datt;
                t_a.grad.noalias() += dmid * concat_cols.transpose();
                dconcat.noalias() += w.wo_a->transpose() * dmid;
            }

            Mat<S> dq_seg(d, n_new);
            Mat<S> dk_all(d, end);
            Mat<S> dv_all(d, end);
            dq_seg.setZero();
            dk_all.setZero();
            dv_all.setZero();
            const auto& probs = a.probs[ei];
            for (int h = 0; h < heads; ++h) {
                const Mat<S>& p = probs[static_cast<size_t>(h)];  // keys x queries
                auto kh = a.k.block(h * hd, 0, hd, end);
                auto vh = a.v.block(h * hd, 0, hd, end);
                auto qh = a.q.block(h * hd, begin, hd, n_new);
                auto do_h = dconcat.middleRows(h * hd, hd);
                dv_all.middleRows(h * hd, hd).noalias() += do_h * p.transpose();
                Mat<S> dp = vh.transpose() * do_h;  // keys x queries
                Mat<S> ds(end, n_new);
                for (int j = 0; j < n_new; ++j) {
                    const auto pc = p.col(j);
                    const auto dpc = dp.col(j);
                    const S dot = (pc.array() * dpc.array()).sum();
                    ds.col(j) = (pc.array() * (dpc.array() - dot)).matrix();
                }
                ds *= scale;
                dq_seg.middleRows(h * hd, hd).noalias() += kh * ds;
                dk_all.middleRows(h * hd, hd).noalias() += qh * ds.transpose();
            }

            // recompute norm1 over the full key horizon (queries are a suffix)
            Mat<S> norm1(d, end);
            for (int j = 0; j < end; ++j) {
                norm1.col(j) = ((a.x_in.col(j).array() - a.ln1_mean(j)) * a.ln1_rstd(j) *
                                    w.ln1g->col(0).array() +
                                w.ln1b->col(0).array()).matrix();
            }
            const auto norm1_seg = norm1.middleCols(begin, n_new);

            g_wq.noalias() += dq_seg * norm1_seg.transpose();
            g_bq.col(0) += dq_seg.rowwise().sum();
            g_wk.noalias() += dk_all * norm1.transpose();
            g_bk.col(0) += dk_all.rowwise().sum();
            g_wv.noalias() += dv_all * norm1.transpose();
            g_bv.col(0) += dv_all.rowwise().sum();

            Mat<S> dnorm_all(d, end);
            dnorm_all.noalias() = w.wk->transpose() * dk_all;
            dnorm_all.noalias() += w.wv->transpose() * dv_all;
            dnorm_all.middleCols(begin, n_new).noalias() += w.wq->transpose() * dq_seg;
            if (w.wq_a) {
                auto lp = [&](const char* nm) -> Tensor<S>& {
                    return model_.tensor("l" + std::to_string(l) + nm);
                };
                {  // q adapter: queries only
                    Mat<S> mid = (*w.wq_a) * norm1_seg;
                    lp(".attn.wq.b").grad.noalias() += dq_seg * mid.transpose();
                    Mat<S> dmid = w.wq_b->transpose() * dq_seg;
                    lp(".attn.wq.a").grad.noalias() += dmid * norm1_seg.transpose();
                    dnorm_all.middleCols(begin, n_new).noalias() += w.wq_a->transpose() * dmid;
                }
                {  // k adapter
                    Mat<S> mid = (*w.wk_a) * norm1;
                    lp(".attn.wk.b").grad.noalias() += dk_all * mid.transpose();
                    Mat<S> dmid = w.wk_b->transpose() * dk_all;
                    lp(".attn.wk.a").grad.noalias() += dmid * norm1.transpose();
                    dnorm_all.noalias() += w.wk_a->transpose() * dmid;
                }
                {  // v adapter
                    Mat<S> mid = (*w.wv_a) * norm1;
                    lp(".attn.wv.b").grad.noalias() += dv_all * mid.transpose();
                    Mat<S> dmid = w.wv_b->transpose() * dv_all;
                    lp(".attn.wv.a").grad.noalias() += dmid * norm1.transpose();
                    dnorm_all.noalias() += w.wv_a->transpose() * dmid;
                }
            }

            // ln1 backward over the horizon; residual path for the segment
            Mat<S>& dr_l = dr[static_cast<size_t>(l)];
            for (int j = 0; j < end; ++j) {
                ln_backward_col<S>(a.x_in.col(j), a.ln1_mean(j), a.ln1_rstd(j),
                                   Vec<S>(w.ln1g->col(0)), dnorm_all.col(j), g_ln1g, g_ln1b,
                                   dr_l.col(j));
            }
            dr_l.middleCols(begin, n_new) += dxmid;
        }

        // embedding / injection routing for this extent
        for (int j = begin; j < end; ++j) {
            const auto dx0 = dr[0].col(j);
            pos_emb.grad.col(positions_[static_cast<size_t>(j)]) += dx0;
            const TokenId id = tokens_[static_cast<size_t>(j)];
            if (id >= 0) {
                tok_emb.grad.col(id) += dx0;
            } else {
                const auto& src = ext.sources[static_cast<size_t>(j - begin)];
                if (src.first >= 0) {
                    const int layer = src.second < 0 ? cfg.n_layers : src.second;
                    dr[static_cast<size_t>(layer)].col(src.first) += dx0;
                }
            }
        }
    }
}

// --------------------------------------------------------------- decode ----

template <class S>
int argmax_logit(const Vec<S>& logits) {
    check(logits.size() > 0, "argmax_logit: empty");
    int best = 0;
    for (int i = 1; i < logits.size(); ++i) {
        if (logits(i) > logits(best)) best = i;  // strict: first max wins ties
    }
    return best;
}

template <class S>
Vec<S> softmax_vec(const Vec<S>& logits) {
    const S mx = logits.maxCoeff();
    Vec<S> e = (logits.array() - mx).exp();
    return e / e.sum();
}

template <class S>
S log_softmax_nll(const Vec<S>& logits, int target) {
    check(target >= 0 && target < logits.size(), "log_softmax_nll: target out of range");
    const S mx = logits.maxCoeff();
    const S lse = std::log((logits.array() - mx).exp().sum()) + mx;
    return lse - logits(target);
}

template <class S>
int sample_logit(const Vec<S>& logits, double temperature, Rng& rng) {
    check(temperature > 0.0, "sample_logit: temperature must be positive");
    Vec<S> scaled = logits / static_cast<S>(temperature);
    Vec<S> p = softmax_vec(scaled);
    const double x = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        acc += static_cast<double>(p(i));
        if (x < acc) return i;
    }
    return static_cast<int>(p.size()) - 1;
}

// ------------------------------------------------------- instantiations ----

template struct Model<float>;
template struct Model<double>;
template class Session<float>;
template class Session<double>;
template void apply_training_partition<float>(Model<float>&);
template void apply_training_partition<double>(Model<double>&);
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template int argmax_logit<float>(const Vec<float>&);
template int argmax_logit<double>(const Vec<double>&);
template Vec<float> softmax_vec<float>(const Vec<float>&);
template Vec<double> softmax_vec<double>(const Vec<double>&);
template float log_softmax_nll<float>(const Vec<float>&, int);
template double log_softmax_nll<double>(const Vec<double>&, int);
template int sample_logit<float>(const Vec<float>&, double, Rng&);
template int sample_logit<double>(const Vec<double>&, double, Rng&);

}  // namespace rim
