#pragma once

#include <string>
#include <vector>

#include "realm/scenario.hpp"
#include "realm/tensor.hpp"

namespace realm {

// Paired multimodal embeddings. Rows must arrive L2-normalized; the loss
// never renormalizes silently.
struct EmbeddingBatch {
    Tensor visual;  // batch x dim
    Tensor textual; // batch x dim
    std::vector<Scenario> labels;

    void validate() const;
};

struct MsclConfig {
    double tau_mod = 0.07;
    double tau_d = 0.1;
    double lambda_d = 0.3;
    bool weighting_enabled = true;
    bool scenario_term_enabled = true;
    bool modality_term_enabled = true;

    void validate() const;
};

// Divides each row by its Euclidean norm. Zero rows are a domain error.
Tensor l2_normalize_rows(const Tensor& x);

// Inverse-frequency weights over the batch; frequencies are label counts
// within this batch. Non-differentiable constants summing to 1.
Tensor instance_weights(const std::vector<Scenario>& labels);

// S_ij = v_i . h_j / tau_mod
Tensor modality_similarity(const Tensor& v, const Tensor& h, double tau_mod);

// Weighted InfoNCE with diagonal positives, image-to-text direction.
Tensor modality_loss(const Tensor& s, const Tensor& weights);

// R_ij = v_i . v_j / tau_d
Tensor scenario_similarity(const Tensor& v, double tau_d);

// Pairwise tanh regression onto the +1/-1 same-scenario indicator, weighted
// and averaged over off-diagonal pairs. Lies in [0, 4].
Tensor scenario_loss(const Tensor& r, const std::vector<Scenario>& labels,
                     const Tensor& weights);

struct MsclResult {
    Tensor total;
    Tensor l_mod;      // scalar; detached zero when the term is disabled
    Tensor l_scenario; // scalar; detached zero when the term is disabled
    Tensor weights;    // batch
    double lambda_d = 0.0;
};

MsclResult mscl_loss(const EmbeddingBatch& batch, const MsclConfig& cfg);

// Telemetry record, keys: l_mod, l_scenario, lambda_d, weights.
std::string mscl_breakdown_json(const MsclResult& r);

} // namespace realm
