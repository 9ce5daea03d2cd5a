#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rim/corpus.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"

namespace rim {

// ------------------------------------------------------------- capture ----

/// Hidden states at the last <m> slot of each memory block, one vector per
/// (sample, block), column s * k_blocks + (block - 1).
struct RepresentationDump {
    std::string checkpoint_id;
    int layer = 0;
    int dim = 0;
    int k_blocks = 0;
    std::vector<int> sample_ids;
    Mat<float> vectors;  // dim x (n_samples * k_blocks)

    int n_samples() const { return static_cast<int>(sample_ids.size()); }
    int col(int sample, int block) const;  // block is 1-based
    Vec<float> vector_at(int sample, int block) const;
};

struct CaptureConfig {
    int layer = -1;  // residual layer to read; -1 = penultimate
    int k_blocks = 8;
    int memory_m = 2;
    MaskConfig mask;
    std::string checkpoint_id;
};

/// One masked forward per sample over the inference layout (no decoding).
RepresentationDump capture_representations(Model<float>& model, const Vocabulary& vocab,
                                           const std::vector<Sample>& dataset,
                                           const CaptureConfig& cfg);

void save_dump(const std::string& path, const RepresentationDump& dump);
RepresentationDump load_dump(const std::string& path);

// ----------------------------------------------------------------- pca ----

struct PcaBasis {
    Vec<double> mean;                      // dim
    Mat<double> components;                // dim x c, orthonormal columns
    std::vector<double> explained_ratio;   // per component, fraction of total variance
    bool truncated = false;                // rank-deficient data trimmed the basis

    int n_components() const { return static_cast<int>(components.cols()); }
    double explained_total() const;
};

/// One basis over the union of all dumps: mean-centered, top components of
/// the covariance spectrum.  Rank-deficient data yields fewer components
/// (flagged), never degenerate directions.
PcaBasis pca_shared_basis(const std::vector<RepresentationDump>& dumps, int n_components = 2);

/// Coordinates of a dump's vectors in the shared basis (c x columns).
Mat<double> pca_project(const PcaBasis& basis, const RepresentationDump& dump);

/// Project raw vectors (columns); `center` subtracts the basis mean first.
/// Deltas are differences, so they project without centering.
Mat<double> pca_project_vectors(const PcaBasis& basis, const Mat<float>& vectors, bool center);

// -------------------------------------------------------------- deltas ----

/// v_K - v_1 per sample, in the original representation space.
Mat<float> first_to_final_delta(const RepresentationDump& dump);

double mean_delta_norm(const RepresentationDump& dump);

struct ExtremePair {
    int a = 0, b = 0;   // sample indices (positions in the dump)
    double separation = 0.0;  // projected distance
    double cosine = 0.0;      // original-space cosine of the two deltas
};

/// The two samples whose projected deltas are farthest apart, and the
/// cosine of their original-space deltas.
ExtremePair extreme_pair_cosine(const PcaBasis& basis, const Mat<float>& deltas);

// -------------------------------------------------------------- probes ----

struct ProbeSplit {
    std::vector<int> train;     // sample indices into the dump
    std::vector<int> held_out;  // disjoint from train
};

struct ProbeFitConfig {
    std::vector<double> l2_grid = {1e-3, 1e-2, 1e-1, 1.0};
    int iterations = 800;       // per fit, full-batch adam
    double learning_rate = 0.05;
    bool skip_single_class = false;  // mark such blocks unfitted instead of erroring
};

/// Per-block logistic probes over block representations: L2 strength chosen
/// by held-out NLL from a fixed grid, then Platt-style recalibration on the
/// held-out split.
struct ProbeModel {
    int dim = 0;
    int k_blocks = 0;
    int layer = 0;
    Mat<double> weights;          // dim x K
    Vec<double> bias;             // K
    std::vector<double> cal_a, cal_b;     // calibrated p = sigmoid(a*z + b)
    std::vector<double> chosen_l2;
    std::vector<double> train_prior;      // positive rate in the training split
    std::vector<uint8_t> fitted;          // 0 when skipped (single-class)
    std::vector<double> held_out_auroc;   // -1 when undefined
    std::vector<double> held_out_auprc;
};

/// `labels[col]` marks the readout after that (sample, block) correct, in
/// dump column order.
ProbeModel fit_probes(const RepresentationDump& dump, const std::vector<uint8_t>& labels,
                      const ProbeSplit& split, const ProbeFitConfig& cfg = {});

/// Calibrated correctness probability for one block representation.
/// Unfitted blocks fall back to their training prior.
double probe_predict(const ProbeModel& probes, int block, const Vec<float>& representation);

// ---------------------------------------------------------- selection ----

struct AnswerSelection {
    std::string answer;
    double confidence = 0.0;
    int block = 0;  // earliest block of the winning group, 1-based
};

/// Group blocks by equivalent decoded answer; group confidence is noisy-OR
/// of member probabilities; argmax group wins, earliest block breaks ties.
AnswerSelection probe_select_answer(const ProbeModel& probes, const Mat<float>& representations,
                                    const std::vector<std::string>& answers);

double noisy_or(const std::vector<double>& probabilities);

// ------------------------------------------------------------- metrics ----

/// AUROC by rank statistic (tie midpoints); AUPRC by precision-recall step
/// integration with tied scores handled as one group.  Both classes required.
std::pair<double, double> auroc_auprc(const std::vector<double>& scores,
                                      const std::vector<uint8_t>& labels);

// ----------------------------------------------------------------- csv ----

std::string projections_csv(const std::vector<RepresentationDump>& dumps,
                            const std::vector<Mat<double>>& projections);
std::string probe_csv(const ProbeModel& probes);

}  // namespace rim
