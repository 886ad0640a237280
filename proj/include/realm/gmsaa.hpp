#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "realm/scenario.hpp"
#include "realm/tensor.hpp"

namespace realm {

// Hyperparameters of the gated multi-scenario adaptive attention block.
// Defaults are the released configuration.
struct GmsaaConfig {
    std::size_t num_scenarios = kScenarioCount;
    std::size_t feature_dim = 16;
    std::size_t hidden1 = 0; // 0 means feature_dim
    std::size_t hidden2 = 0; // 0 means feature_dim
    double temperature = 0.5;
    double blend_lambda = 0.85;
    std::vector<double> self_bias{2.0, 2.5, 2.5};
    std::vector<double> similarity_init{1.1, 0.1, 0.1,
                                        0.1, 1.1, 0.05,
                                        0.1, 0.05, 1.1};
    double embed_init_scale = 0.1;
    double fusion_enhanced = 0.7;
    double fusion_raw = 0.3;

    // Ablation switches. All on in the full model.
    bool enable_snow_fog_penalty = true;
    bool enable_similarity_guidance = true;
    bool enable_extractors = true;
    bool enable_gating = true;
    bool orthogonal_embed_init = true;

    std::size_t hidden1_dim() const { return hidden1 ? hidden1 : feature_dim; }
    std::size_t hidden2_dim() const { return hidden2 ? hidden2 : feature_dim; }

    void validate() const; // config error on any violated constraint
};

// Learnable state. Tensors are shared handles, so copies of this struct alias
// the same parameters.
struct GmsaaParams {
    Tensor W1, b1, W2, b2, W3, b3; // scenario logit MLP
    Tensor S;                      // scenario similarity, C x C
    Tensor E;                      // scenario embeddings, C x feature_dim
    Tensor snow_W1, snow_b1, snow_W2, snow_b2;
    Tensor fog_W1, fog_b1, fog_W2, fog_b2;
    Tensor gate_W1, gate_b1, gate_W2, gate_b2;
    Tensor cond_W, cond_b;         // shared conditioner

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

// Per-sample diagnostics of one forward pass.
struct AttentionTrace {
    Tensor logits;   // batch x C
    Tensor adjusted; // batch x C
    Tensor guided;   // batch x C
    Tensor blended;  // batch x C, rows sum to 1
    Tensor gate;     // batch x 1
};

GmsaaParams gmsaa_init(const GmsaaConfig& cfg, std::uint64_t seed);

// Mean over the token axis: batch x T x feature -> batch x feature.
Tensor pool_tokens(const Tensor& z);

// Two-hidden-layer ReLU MLP onto scenario logits: batch x feature -> batch x C.
Tensor scenario_logits(const Tensor& zbar, const GmsaaParams& p);

// Temperature scaling plus self bias on the labelled coordinate plus the
// snow/fog cross penalty (snow pushes down fog and vice versa).
Tensor adjust_logits(const Tensor& a, const std::vector<Scenario>& d,
                     const GmsaaConfig& cfg);

// Row d of the row-normalized similarity prior.
Tensor guided_attention(const Tensor& S, Scenario d);
Tensor guided_attention_batch(const Tensor& S, const std::vector<Scenario>& d);

// w = (1 - lambda) * softmax(adjusted) + lambda * guided.
Tensor blend_attention(const Tensor& adjusted, const Tensor& guided, double lambda);

// c = w . E
Tensor scenario_context(const Tensor& w, const Tensor& E);

// Routes each sample through its scenario's extractor: identity for normal,
// dedicated two-layer MLPs for snow and fog. Masked application keeps the
// whole batch on one differentiable tape.
Tensor extract_scenario_features(const Tensor& c, const std::vector<Scenario>& d,
                                 const GmsaaParams& p);

// g = sigmoid(psi(zbar)), batch x 1.
Tensor gate(const Tensor& zbar, const GmsaaParams& p);

struct GmsaaOutput {
    Tensor tokens; // batch x T x feature
    AttentionTrace trace;
};

GmsaaOutput gmsaa_forward(const Tensor& z, const std::vector<Scenario>& d,
                          const GmsaaParams& p, const GmsaaConfig& cfg);

// JSON record with per-sample arrays under keys logits, adjusted, guided,
// blended, gate.
std::string attention_trace_json(const AttentionTrace& trace);

} // namespace realm
