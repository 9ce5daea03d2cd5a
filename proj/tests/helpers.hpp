#pragma once

// Shared fixtures for model-level tests: a small vocabulary over a generated
// corpus and tiny model configs that keep forward passes cheap.

#include <vector>

#include "rim/corpus.hpp"
#include "rim/layout.hpp"
#include "rim/mask.hpp"
#include "rim/model.hpp"

namespace rimtest {

struct World {
    rim::CorpusSpec spec;
    rim::Vocabulary vocab;
    std::vector<rim::Sample> samples;

    explicit World(int max_steps = 3, uint64_t seed = 2024) {
        spec.step_distribution.clear();
        for (int t = 1; t <= max_steps; ++t) {
            spec.step_distribution.push_back({t, 1.0 / max_steps});
        }
        samples = rim::generate_corpus(spec, seed, 300);
        vocab = rim::Vocabulary::build(samples);
    }

    rim::TokenizedSample tok(size_t i) const {
        return rim::tokenize_sample(vocab, samples.at(i));
    }

    rim::Sample sample_with_steps(int t) const {
        for (const auto& s : samples) {
            if (static_cast<int>(s.steps.size()) == t) return s;
        }
        rim::fail("no sample with requested step count");
    }

    rim::ModelConfig tiny_config(int dim = 16, int layers = 2, int heads = 2) const {
        rim::ModelConfig mc;
        mc.vocab_size = vocab.size();
        mc.dim = dim;
        mc.n_layers = layers;
        mc.n_heads = heads;
        mc.ff_dim = dim * 2;
        mc.max_positions = 192;
        mc.dropout = 0.0;
        return mc;
    }
};

inline rim::AllowFn mask_fn(const rim::AttentionMask& mask) {
    return [&mask](int q, int k) { return mask.at(q, k); };
}

inline rim::AllowFn causal_fn() {
    return [](int q, int k) { return k <= q; };
}

}  // namespace rimtest
