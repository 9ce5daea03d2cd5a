#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "rim/analysis.hpp"

using namespace rim;
using rimtest::World;
namespace fs = std::filesystem;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

RepresentationDump make_dump(int dim, int n, int k, const std::string& id = "d") {
    RepresentationDump d;
    d.checkpoint_id = id;
    d.layer = 1;
    d.dim = dim;
    d.k_blocks = k;
    d.sample_ids.resize(static_cast<size_t>(n));
    std::iota(d.sample_ids.begin(), d.sample_ids.end(), 0);
    d.vectors = Mat<float>::Zero(dim, static_cast<Eigen::Index>(n) * k);
    return d;
}

/// Identity probe in one dimension: probe_predict(p) == sigmoid(rep).
ProbeModel identity_probe(int k) {
    ProbeModel pm;
    pm.dim = 1;
    pm.k_blocks = k;
    pm.weights = Mat<double>::Ones(1, k);
    pm.bias = Vec<double>::Zero(k);
    pm.cal_a.assign(static_cast<size_t>(k), 1.0);
    pm.cal_b.assign(static_cast<size_t>(k), 0.0);
    pm.chosen_l2.assign(static_cast<size_t>(k), 0.0);
    pm.train_prior.assign(static_cast<size_t>(k), 0.5);
    pm.fitted.assign(static_cast<size_t>(k), 1);
    pm.held_out_auroc.assign(static_cast<size_t>(k), -1.0);
    pm.held_out_auprc.assign(static_cast<size_t>(k), -1.0);
    return pm;
}

}  // namespace

TEST_CASE("capture: one vector per sample and block, deterministic, layer-sensitive") {
    World w(2);
    std::vector<Sample> data(w.samples.begin(), w.samples.begin() + 6);
    Model<float> model = Model<float>::init(w.tiny_config(), 77);

    CaptureConfig cc;
    cc.k_blocks = 3;
    cc.memory_m = 2;
    cc.checkpoint_id = "ckpt-a";
    RepresentationDump dump = capture_representations(model, w.vocab, data, cc);
    CHECK(dump.layer == model.config.n_layers - 1);  // default: penultimate
    CHECK(dump.dim == model.config.dim);
    CHECK(dump.n_samples() == 6);
    CHECK(dump.vectors.cols() == 6 * 3);

    RepresentationDump again = capture_representations(model, w.vocab, data, cc);
    CHECK((again.vectors.array() == dump.vectors.array()).all());

    CaptureConfig last = cc;
    last.layer = model.config.n_layers;
    RepresentationDump other = capture_representations(model, w.vocab, data, last);
    CHECK((other.vectors - dump.vectors).cwiseAbs().maxCoeff() > 1e-4);

    CaptureConfig bad = cc;
    bad.layer = model.config.n_layers + 1;
    CHECK_THROWS_AS(capture_representations(model, w.vocab, data, bad), Error);
}

TEST_CASE("dump container round-trips bitwise and rejects garbage") {
    RepresentationDump d = make_dump(5, 4, 2, "stage2-final");
    Rng rng(3);
    for (Eigen::Index i = 0; i < d.vectors.size(); ++i) {
        d.vectors.data()[i] = static_cast<float>(rng.normal());
    }
    const std::string path = "/tmp/rim_test_dump.bin";
    save_dump(path, d);
    RepresentationDump r = load_dump(path);
    CHECK(r.checkpoint_id == "stage2-final");
    CHECK(r.layer == d.layer);
    CHECK(r.k_blocks == 2);
    CHECK(r.sample_ids == d.sample_ids);
    CHECK((r.vectors.array() == d.vectors.array()).all());

    save_dump(path, d);
    const std::string bytes_a = read_text_file(path);
    save_dump(path, d);
    CHECK(read_text_file(path) == bytes_a);  // deterministic bytes

    write_text_file(path, "not a dump at all");
    CHECK_THROWS_AS(load_dump(path), Error);
    CHECK_THROWS_AS(load_dump("/tmp/rim_test_dump_missing.bin"), Error);
    fs::remove(path);
}

TEST_CASE("pca recovers an exact 2-d affine subspace") {
    const int dim = 8, n = 50;
    RepresentationDump d = make_dump(dim, n, 1);
    Vec<float> u = Vec<float>::Zero(dim), v = Vec<float>::Zero(dim), m0(dim);
    u(1) = 1.0f;
    v(4) = 1.0f;
    m0.setConstant(0.5f);
    Rng rng(9);
    for (int i = 0; i < n; ++i) {
        d.vectors.col(i) = m0 + static_cast<float>(rng.normal()) * u +
                           static_cast<float>(3.0 * rng.normal()) * v;
    }

    PcaBasis basis = pca_shared_basis({d}, 2);
    CHECK(basis.n_components() == 2);
    CHECK(!basis.truncated);
    CHECK(basis.explained_total() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(basis.explained_ratio[0] >= basis.explained_ratio[1]);

    // orthonormal basis: Gram matrix is the identity
    Mat<double> gram = basis.components.transpose() * basis.components;
    CHECK((gram - Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

    // exact reconstruction from two coordinates
    Mat<double> coords = pca_project(basis, d);
    Mat<double> recon = basis.components * coords;
    recon.colwise() += basis.mean;
    CHECK((recon - d.vectors.cast<double>()).cwiseAbs().maxCoeff() < 1e-6);

    // identical vectors project identically
    CHECK((coords.col(0) - coords.col(0)).norm() == 0.0);
    RepresentationDump twin = d;
    twin.vectors.col(1) = twin.vectors.col(0);
    Mat<double> tc = pca_project(basis, twin);
    CHECK((tc.col(0) - tc.col(1)).norm() == 0.0);
}

TEST_CASE("pca explained variance of isotropic data is about 2/d") {
    const int dim = 16, n = 10000;
    RepresentationDump d = make_dump(dim, n, 1);
    Rng rng(42);
    for (Eigen::Index i = 0; i < d.vectors.size(); ++i) {
        d.vectors.data()[i] = static_cast<float>(rng.normal());
    }
    PcaBasis basis = pca_shared_basis({d}, 2);
    CHECK(basis.explained_total() == doctest::Approx(2.0 / dim).epsilon(0.2));
}

TEST_CASE("pca trims rank-deficient data with a warning flag") {
    RepresentationDump d = make_dump(6, 20, 1);
    Rng rng(5);
    for (int i = 0; i < 20; ++i) d.vectors(2, i) = static_cast<float>(rng.normal());
    PcaBasis basis = pca_shared_basis({d}, 2);  // data lies on one axis
    CHECK(basis.n_components() == 1);
    CHECK(basis.truncated);

    RepresentationDump constant = make_dump(6, 3, 1);
    PcaBasis none = pca_shared_basis({constant}, 2);  // zero variance
    CHECK(none.n_components() == 0);
    CHECK(none.truncated);
}

TEST_CASE("first-to-final deltas") {
    RepresentationDump d = make_dump(4, 3, 3);
    Rng rng(7);
    for (Eigen::Index i = 0; i < d.vectors.size(); ++i) {
        d.vectors.data()[i] = static_cast<float>(rng.normal());
    }
    // sample 0: final equals first -> zero delta
    d.vectors.col(d.col(0, 3)) = d.vectors.col(d.col(0, 1));
    Mat<float> deltas = first_to_final_delta(d);
    CHECK(deltas.cols() == 3);
    CHECK(deltas.col(0).norm() == 0.0);

    // translation invariance: offsetting first and final leaves deltas alone
    RepresentationDump shifted = d;
    Vec<float> offset = Vec<float>::Constant(4, 2.5f);
    for (int s = 0; s < 3; ++s) {
        shifted.vectors.col(shifted.col(s, 1)) += offset;
        shifted.vectors.col(shifted.col(s, 3)) += offset;
    }
    Mat<float> deltas2 = first_to_final_delta(shifted);
    CHECK((deltas2 - deltas).cwiseAbs().maxCoeff() < 1e-6);

    CHECK(mean_delta_norm(d) ==
          doctest::Approx((deltas.col(0).norm() + deltas.col(1).norm() + deltas.col(2).norm()) /
                          3.0));

    RepresentationDump single = make_dump(4, 2, 1);
    CHECK_THROWS_AS(first_to_final_delta(single), Error);
}

TEST_CASE("extreme pair: farthest projected deltas, original-space cosine") {
    PcaBasis basis;
    basis.mean = Vec<double>::Zero(3);
    basis.components = Mat<double>::Zero(3, 2);
    basis.components(0, 0) = 1.0;
    basis.components(1, 1) = 1.0;

    Mat<float> deltas(3, 3);
    deltas.col(0) << 10.0f, 0.0f, 0.0f;
    deltas.col(1) << -10.0f, 0.0f, 0.0f;
    deltas.col(2) << 1.0f, 1.0f, 0.0f;
    ExtremePair ep = extreme_pair_cosine(basis, deltas);
    CHECK(ep.a == 0);
    CHECK(ep.b == 1);
    CHECK(ep.separation == doctest::Approx(20.0));
    CHECK(ep.cosine == doctest::Approx(-1.0));
}

TEST_CASE("probes separate a separable dump and stay at chance on noise") {
    const int dim = 4, n = 120, k = 2;
    RepresentationDump d = make_dump(dim, n, k);
    std::vector<uint8_t> labels(static_cast<size_t>(n * k), 0);
    Rng rng(11);
    for (int s = 0; s < n; ++s) {
        const bool pos = s % 2 == 0;
        // block 1: two well-separated gaussian blobs along dim 0
        Vec<float> x(dim);
        for (int j = 0; j < dim; ++j) x(j) = static_cast<float>(0.3 * rng.normal());
        x(0) += pos ? 2.0f : -2.0f;
        d.vectors.col(d.col(s, 1)) = x;
        labels[static_cast<size_t>(d.col(s, 1))] = pos;
        // block 2: same features, labels shuffled independently of them
        Vec<float> y(dim);
        for (int j = 0; j < dim; ++j) y(j) = static_cast<float>(rng.normal());
        d.vectors.col(d.col(s, 2)) = y;
        labels[static_cast<size_t>(d.col(s, 2))] = rng.uniform() < 0.5;
    }
    ProbeSplit split;
    for (int s = 0; s < 80; ++s) split.train.push_back(s);
    for (int s = 80; s < n; ++s) split.held_out.push_back(s);

    ProbeModel pm = fit_probes(d, labels, split);
    CHECK(pm.fitted[0] == 1);
    CHECK(pm.held_out_auroc[0] == 1.0);  // separable: perfect ranking
    CHECK(pm.held_out_auprc[0] == 1.0);
    CHECK(pm.held_out_auroc[1] > 0.2);  // chance band
    CHECK(pm.held_out_auroc[1] < 0.8);
    const bool in_grid = std::find(ProbeFitConfig{}.l2_grid.begin(),
                                   ProbeFitConfig{}.l2_grid.end(),
                                   pm.chosen_l2[0]) != ProbeFitConfig{}.l2_grid.end();
    CHECK(in_grid);

    // calibrated probabilities track the labels on the separable block
    const double p_pos = probe_predict(pm, 1, d.vector_at(80, 1));
    const double p_neg = probe_predict(pm, 1, d.vector_at(81, 1));
    CHECK(p_pos > 0.5);
    CHECK(p_neg < 0.5);

    // overlapping splits rejected
    ProbeSplit bad = split;
    bad.held_out.push_back(0);
    CHECK_THROWS_AS(fit_probes(d, labels, bad), Error);
}

TEST_CASE("single-class training split errors by name unless skipped") {
    const int dim = 2, n = 20;
    RepresentationDump d = make_dump(dim, n, 2);
    Rng rng(13);
    for (Eigen::Index i = 0; i < d.vectors.size(); ++i) {
        d.vectors.data()[i] = static_cast<float>(rng.normal());
    }
    std::vector<uint8_t> labels(static_cast<size_t>(n * 2), 0);
    for (int s = 0; s < n; ++s) labels[static_cast<size_t>(d.col(s, 2))] = s % 2;
    ProbeSplit split;
    for (int s = 0; s < 12; ++s) split.train.push_back(s);
    for (int s = 12; s < n; ++s) split.held_out.push_back(s);

    bool threw = false;
    try {
        fit_probes(d, labels, split);
    } catch (const Error& e) {
        threw = true;
        CHECK(std::string(e.what()).find("block 1") != std::string::npos);
    }
    CHECK(threw);

    ProbeFitConfig cfg;
    cfg.skip_single_class = true;
    ProbeModel pm = fit_probes(d, labels, split, cfg);
    CHECK(pm.fitted[0] == 0);
    CHECK(pm.fitted[1] == 1);
    // unfitted block falls back to its training prior
    CHECK(probe_predict(pm, 1, d.vector_at(0, 1)) == 0.0);
}

TEST_CASE("noisy-or answer selection") {
    ProbeModel pm = identity_probe(3);

    // one block at 0.9 beats two agreeing blocks at 0.5 each (0.9 vs 0.75)
    Mat<float> reps(1, 3);
    reps(0, 0) = static_cast<float>(logit(0.9));
    reps(0, 1) = static_cast<float>(logit(0.5));
    reps(0, 2) = static_cast<float>(logit(0.5));
    AnswerSelection sel = probe_select_answer(pm, reps, {"17", "4", "4"});
    CHECK(sel.answer == "17");
    CHECK(sel.confidence == doctest::Approx(0.9));
    CHECK(sel.block == 1);

    // all blocks agree: that answer wins regardless of probabilities
    sel = probe_select_answer(pm, reps, {"4.0", "4", " 4"});
    CHECK(sel.answer == "4");
    CHECK(sel.confidence == doctest::Approx(1.0 - 0.1 * 0.5 * 0.5));

    // equal singleton groups: earliest block wins
    ProbeModel pm2 = identity_probe(2);
    Mat<float> flat = Mat<float>::Zero(1, 2);  // p = 0.5 everywhere
    sel = probe_select_answer(pm2, flat, {"8", "9"});
    CHECK(sel.answer == "8");
    CHECK(sel.block == 1);

    // noisy-or monotonicity: support never hurts
    CHECK(noisy_or({0.3, 0.2}) >= noisy_or({0.3}));
    CHECK(noisy_or({0.9, 0.0}) == doctest::Approx(0.9));
    CHECK(noisy_or({}) == 0.0);
    CHECK_THROWS_AS(noisy_or({1.5}), Error);
}

TEST_CASE("auroc and auprc") {
    // brute-force oracle over the 4 positive-negative pairs: 3 ordered right
    auto [roc, prc] = auroc_auprc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
    CHECK(roc == doctest::Approx(0.75));
    CHECK(prc == doctest::Approx(1.0 * 0.5 + (2.0 / 3.0) * 0.5));

    // perfect separation
    auto [roc2, prc2] = auroc_auprc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(roc2 == 1.0);
    CHECK(prc2 == 1.0);

    // scores equal to the labels: ties only within class
    auto [roc3, prc3] = auroc_auprc({0, 0, 1, 1}, {0, 0, 1, 1});
    CHECK(roc3 == 1.0);
    CHECK(prc3 == 1.0);

    // all-tied scores: chance by midpoint convention
    auto [roc4, prc4] = auroc_auprc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1});
    CHECK(roc4 == doctest::Approx(0.5));
    CHECK(prc4 == doctest::Approx(0.5));  // precision at full recall = prevalence

    // invariance under a strictly increasing transform
    std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
    std::vector<double> t;
    for (double v : s) t.push_back(std::exp(3.0 * v) + 7.0);
    auto [roc5, prc5] = auroc_auprc(t, {0, 0, 1, 1});
    CHECK(roc5 == doctest::Approx(roc));
    CHECK(prc5 == doctest::Approx(prc));

    CHECK_THROWS_AS(auroc_auprc({0.5, 0.6}, {1, 1}), Error);
}

TEST_CASE("analysis csv emitters") {
    RepresentationDump d = make_dump(3, 1, 2, "ck");
    d.vectors.setOnes();
    PcaBasis basis = pca_shared_basis({d}, 2);  // degenerate: zero components
    CHECK(basis.n_components() == 0);

    RepresentationDump d2 = make_dump(3, 2, 2, "ck");
    Rng rng(21);
    for (Eigen::Index i = 0; i < d2.vectors.size(); ++i) {
        d2.vectors.data()[i] = static_cast<float>(rng.normal());
    }
    PcaBasis b2 = pca_shared_basis({d2}, 2);
    const std::string csv = projections_csv({d2}, {pca_project(b2, d2)});
    CHECK(csv.find("checkpoint,layer,sample_id,block,c1,c2\n") == 0);
    CHECK(csv.find("ck,1,0,1,") != std::string::npos);
    CHECK(csv.find("ck,1,1,2,") != std::string::npos);

    ProbeModel pm = identity_probe(2);
    const std::string pcsv = probe_csv(pm);
    CHECK(pcsv.find("block,fitted,l2,train_prior,cal_a,cal_b,auroc,auprc\n") == 0);
    CHECK(pcsv.find("1,1,0,0.5,1,0,,\n") != std::string::npos);
}
