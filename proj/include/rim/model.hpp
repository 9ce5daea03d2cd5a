#pragma once

// Decoder-only transformer with arbitrary (non-causal) attention masks,
// manual backprop, and incremental sessions.
//
// Design notes:
//  - Everything is templated on the scalar so the same code runs in float
//    (training) and double (finite-difference gradient checks).
//  - Activations are column-per-slot Eigen matrices; parameters live in a
//    flat named registry so the optimizer, checkpoints and gradient checks
//    can walk them uniformly.
//  - A Session owns one sequence: it can be extended with token inputs or
//    with injected embeddings (continuous thoughts), rolled back (decode
//    branches), and backpropagated through the full extension history,
//    including gradients that flow across extensions through attention and
//    through injected inputs.

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rim/common.hpp"
#include "rim/vocab.hpp"

namespace rim {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct ModelConfig {
    int vocab_size = 0;
    int dim = 128;
    int n_layers = 4;
    int n_heads = 4;
    int ff_dim = 512;
    int max_positions = 512;
    double dropout = 0.0;         // on attention and mlp outputs, training only
    int frozen_base_embeddings = 0;  // freeze this many leading embedding columns
    int adapter_rank = 0;            // low-rank deltas on projections; 0 = off

    int head_dim() const { return dim / n_heads; }
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    void validate() const;
};

template <class S>
struct Tensor {
    std::string name;
    Mat<S> value;
    Mat<S> grad;
    bool trainable = true;
    int frozen_cols = 0;  // leading columns the optimizer must not update
};

template <class S>
struct Model {
    ModelConfig config;
    std::vector<Tensor<S>> tensors;

    static Model init(const ModelConfig& config, uint64_t seed);

    Tensor<S>& tensor(const std::string& name);
    const Tensor<S>& tensor(const std::string& name) const;
    void zero_grads();
    size_t n_params() const;
    size_t n_trainable_params() const;

    // registry layout helpers (indices are stable for a given config)
    int layer_base(int layer) const { return 2 + layer * 16; }

    /// Deep-copy into another scalar type (float <-> double).
    template <class T>
    Model<T> cast() const;
};

/// Applies adapter/partition choices to an initialized model: with rank > 0
/// the base projections freeze and low-rank pairs unfreeze; with
/// frozen_base_embeddings > 0 the leading embedding columns stop updating.
template <class S>
void apply_training_partition(Model<S>& model);

// ------------------------------------------------------------- session ----

/// Per-slot attention permission: may query slot q attend key slot k.
using AllowFn = std::function<bool(int q, int k)>;

enum class ExtendKind { stream, decode };

template <class S>
class Session {
public:
    Session(Model<S>& model, bool training, uint64_t dropout_seed = 0);

    /// Append token-input slots.  `allow` is consulted for q in the new
    /// range and k in [0, new_end); it must permit q == k.
    void extend_tokens(const std::vector<TokenId>& tokens, const std::vector<int>& positions,
                       const AllowFn& allow, ExtendKind kind = ExtendKind::stream);

    /// Append slots whose inputs are vectors rather than token embeddings
    /// (position embeddings still apply).  sources[i] = (slot, layer) marks
    /// where column i's vector was read from, so backward can route into it;
    /// slot -1 means external input (gradient dropped).
    void extend_embeddings(const Mat<S>& inputs, const std::vector<int>& positions,
                           const std::vector<std::pair<int, int>>& sources,
                           const AllowFn& allow, ExtendKind kind = ExtendKind::stream);

    int size() const { return n_; }
    void truncate(int keep);  // roll back to the first `keep` slots

    /// Residual-stream output of layer `layer` (1..n_layers) at a slot;
    /// layer 0 is the embedding sum.
    Vec<S> hidden(int layer, int slot) const;

    Vec<S> logits(int slot) const;
    Mat<S> logits(const std::vector<int>& slots) const;

    /// Accumulate parameter gradients (into model.tensors[i].grad) from
    /// d loss / d logits at the given slots.  Valid once per session, after
    /// all extends; training mode only.
    void backward(const std::vector<int>& slots, const Mat<S>& dlogits);

    int stream_extends() const { return n_stream_extends_; }
    int decode_steps() const { return n_decode_steps_; }

private:
    struct LayerActs {
        Mat<S> x_in;                   // residual input R[l]
        Vec<S> ln1_mean, ln1_rstd;
        Mat<S> q, k, v;                // projections (dim x n)
        // attention weights per extend, per head: n_keys x n_queries
        std::vector<std::vector<Mat<S>>> probs;
        Mat<S> att_concat;             // pre-Wo head outputs
        Mat<S> att_drop;               // dropout multipliers (empty when off)
        Vec<S> ln2_mean, ln2_rstd;
        Mat<S> x_mid;                  // residual after attention R'[l]
        Mat<S> f1, g;                  // mlp pre-activation / activation
        Mat<S> mlp_drop;
    };
    struct Extent {
        int begin = 0, end = 0;
        std::vector<std::pair<int, int>> sources;  // injected (slot, layer); empty if tokens
    };

    void run_forward(int begin, const AllowFn& allow);
    void grow(int add);

    Model<S>& model_;
    bool training_ = false;
    Rng drop_rng_;
    int n_ = 0;

    std::vector<TokenId> tokens_;   // -1 at injected slots
    std::vector<int> positions_;
    Mat<S> injected_;               // raw injected vectors (dim x n; zero cols at token slots)
    Mat<S> x0_;                     // embedding sum
    std::vector<LayerActs> acts_;
    Mat<S> x_final_;                // R[n_layers]
    std::vector<std::vector<uint8_t>> allow_rows_;  // per slot, length = key horizon
    std::vector<Extent> extents_;

    int n_stream_extends_ = 0;
    int n_decode_steps_ = 0;
    bool backward_done_ = false;
};

// --------------------------------------------------------------- decode ----

template <class S>
int argmax_logit(const Vec<S>& logits);  // lowest index wins ties

/// Multinomial draw from logits with temperature (softmax then inverse cdf
/// on one uniform from `rng`).
template <class S>
int sample_logit(const Vec<S>& logits, double temperature, Rng& rng);

// softmax cross-entropy helpers shared by losses and decoding
template <class S>
S log_softmax_nll(const Vec<S>& logits, int target);  // -log p(target)

template <class S>
Vec<S> softmax_vec(const Vec<S>& logits);

extern template struct Model<float>;
extern template struct Model<double>;
extern template class Session<float>;
extern template class Session<double>;

}  // namespace rim
