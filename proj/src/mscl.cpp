#include "realm/mscl.hpp"

#include <array>
#include <cmath>

#include <json.hpp>

namespace realm {

void EmbeddingBatch::validate() const {
    if (visual.rank() != 2 || textual.rank() != 2) {
        throw DimensionError("embedding batches must be 2-D matrices");
    }
    if (visual.shape() != textual.shape()) {
        throw DimensionError("visual and textual embeddings disagree: " +
                             shape_str(visual.shape()) + " vs " + shape_str(textual.shape()));
    }
    std::size_t b = visual.shape()[0], d = visual.shape()[1];
    if (labels.size() != b) {
        throw DimensionError("label count does not match embedding batch size");
    }
    for (const Tensor* m : {&visual, &textual}) {
        for (std::size_t i = 0; i < b; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < d; ++j) sq += m->at(i, j) * m->at(i, j);
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
                throw ContractError("embedding row " + std::to_string(i) +
                                    " is not L2-normalized (norm " + std::to_string(std::sqrt(sq)) +
                                    ")");
            }
        }
    }
}

void MsclConfig::validate() const {
    if (!(tau_mod > 0.0)) throw ConfigError("tau_mod must be positive");
    if (!(tau_d > 0.0)) throw ConfigError("tau_d must be positive");
    if (!(lambda_d >= 0.0 && lambda_d <= 1.0)) {
        throw ConfigError("lambda_d must lie in [0,1], got " + std::to_string(lambda_d));
    }
}

Tensor l2_normalize_rows(const Tensor& x) {
    if (x.rank() != 2) throw DimensionError("l2_normalize_rows expects a matrix");
    Tensor sq = sum(mul(x, x), 1, true);
    for (double v : sq.values()) {
        if (v < 1e-30) throw DomainError("cannot L2-normalize a zero row");
    }
    return div(x, sqrt(sq));
}

Tensor instance_weights(const std::vector<Scenario>& labels) {
    if (labels.empty()) throw ContractError("instance_weights needs a non-empty batch");
    std::array<double, kScenarioCount> freq{};
    for (Scenario s : labels) freq[static_cast<std::size_t>(s)] += 1.0;
    std::vector<double> inv(labels.size());
    double z = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        inv[i] = 1.0 / freq[static_cast<std::size_t>(labels[i])];
        z += inv[i];
    }
    for (double& w : inv) w /= z;
    return Tensor({labels.size()}, std::move(inv));
}

Tensor modality_similarity(const Tensor& v, const Tensor& h, double tau_mod) {
    if (!(tau_mod > 0.0)) throw ConfigError("tau_mod must be positive");
    if (v.shape() != h.shape()) {
        throw DimensionError("modality_similarity shapes disagree: " + shape_str(v.shape()) +
                             " vs " + shape_str(h.shape()));
    }
    return div_scalar(matmul(v, transpose(h)), tau_mod);
}

Tensor modality_loss(const Tensor& s, const Tensor& weights) {
    if (s.rank() != 2 || s.shape()[0] != s.shape()[1]) {
        throw DimensionError("similarity matrix must be square, got " + shape_str(s.shape()));
    }
    std::size_t b = s.shape()[0];
    if (weights.numel() != b) {
        throw DimensionError("weight count does not match similarity batch");
    }
    for (double w : weights.values()) {
        if (w < 0.0) throw ContractError("instance weights must be non-negative");
    }
    // -log softmax(S_i)[i] written as lse(S_i) - S_ii so saturated rows give
    // exact zeros instead of log(0) terms
    Tensor lse = reshape(logsumexp(s, 1), {b});
    std::vector<double> eye(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) eye[i * b + i] = 1.0;
    Tensor diag = reshape(sum(mul(s, Tensor({b, b}, std::move(eye))), 1), {b});
    Tensor w = weights.rank() == 1 ? weights : reshape(weights, {b});
    return sum(mul(w, sub(lse, diag)));
}

Tensor scenario_similarity(const Tensor& v, double tau_d) {
    if (!(tau_d > 0.0)) throw ConfigError("tau_d must be positive");
    return div_scalar(matmul(v, transpose(v)), tau_d);
}

Tensor scenario_loss(const Tensor& r, const std::vector<Scenario>& labels,
                     const Tensor& weights) {
    if (r.rank() != 2 || r.shape()[0] != r.shape()[1]) {
        throw DimensionError("similarity matrix must be square, got " + shape_str(r.shape()));
    }
    std::size_t b = r.shape()[0];
    if (b < 2) throw ContractError("scenario_loss needs at least two samples");
    if (labels.size() != b || weights.numel() != b) {
        throw DimensionError("labels/weights do not match similarity batch");
    }

    const std::vector<double>& w = weights.values();
    std::vector<double> pair_w(b * b, 0.0);
    std::vector<double> target(b * b, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
            if (i == j) continue;
            pair_w[i * b + j] = w[i] * w[j];
            z += pair_w[i * b + j];
            target[i * b + j] = labels[i] == labels[j] ? 1.0 : -1.0;
        }
    }
    if (z <= 0.0) throw ContractError("scenario_loss pair weights sum to zero");

    Tensor diff = sub(tanh(r), Tensor({b, b}, std::move(target)));
    Tensor terms = mul(Tensor({b, b}, std::move(pair_w)), mul(diff, diff));
    return div_scalar(sum(terms), z);
}

MsclResult mscl_loss(const EmbeddingBatch& batch, const MsclConfig& cfg) {
    cfg.validate();
    batch.validate();
    std::size_t b = batch.visual.shape()[0];

    MsclResult out;
    out.lambda_d = cfg.lambda_d;
    out.weights = cfg.weighting_enabled ? instance_weights(batch.labels)
                                        : Tensor::full({b}, 1.0 / static_cast<double>(b));

    Tensor zero = Tensor::scalar(0.0);
    out.l_mod = zero;
    out.l_scenario = zero;
    if (cfg.modality_term_enabled) {
        out.l_mod = modality_loss(modality_similarity(batch.visual, batch.textual, cfg.tau_mod),
                                  out.weights);
    }
    if (cfg.scenario_term_enabled) {
        out.l_scenario = scenario_loss(scenario_similarity(batch.visual, cfg.tau_d),
                                       batch.labels, out.weights);
    }

    if (cfg.modality_term_enabled && cfg.scenario_term_enabled) {
        out.total = add(out.l_mod, mul_scalar(out.l_scenario, cfg.lambda_d));
    } else if (cfg.modality_term_enabled) {
        out.total = out.l_mod;
    } else if (cfg.scenario_term_enabled) {
        out.total = mul_scalar(out.l_scenario, cfg.lambda_d);
    } else {
        out.total = zero;
    }
    return out;
}

std::string mscl_breakdown_json(const MsclResult& r) {
    nlohmann::json rec;
    rec["l_mod"] = r.l_mod.value();
    rec["l_scenario"] = r.l_scenario.value();
    rec["lambda_d"] = r.lambda_d;
    rec["weights"] = r.weights.values();
    return rec.dump();
}

} // namespace realm
