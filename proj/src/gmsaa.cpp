#include "realm/gmsaa.hpp"

#include <cmath>

#include <json.hpp>

#include "realm/rng.hpp"

namespace realm {

namespace {

void check_labels(const std::vector<Scenario>& d, std::size_t batch, std::size_t c) {
    if (d.size() != batch) {
        throw DimensionError("label count " + std::to_string(d.size()) +
                             " does not match batch size " + std::to_string(batch));
    }
    for (Scenario s : d) {
        if (static_cast<std::size_t>(s) >= c) {
            throw ConfigError("scenario label " + std::to_string(static_cast<std::size_t>(s)) +
                              " out of range for " + std::to_string(c) + " scenarios");
        }
    }
}

Tensor one_hot_rows(const std::vector<Scenario>& d, std::size_t c) {
    std::vector<double> v(d.size() * c, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        v[i * c + static_cast<std::size_t>(d[i])] = 1.0;
    }
    return Tensor({d.size(), c}, std::move(v));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    return add(matmul(x, w), b);
}

Tensor gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, Rng& rng,
                       bool requires_grad) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = rng.gaussian(0.0, sigma);
    return Tensor({rows, cols}, std::move(v), requires_grad);
}

} // namespace

void GmsaaConfig::validate() const {
    if (num_scenarios == 0) throw ConfigError("num_scenarios must be positive");
    if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
    if (!(blend_lambda >= 0.0 && blend_lambda <= 1.0)) {
        throw ConfigError("blend_lambda must lie in [0,1], got " + std::to_string(blend_lambda));
    }
    if (self_bias.size() != num_scenarios) {
        throw ConfigError("self_bias must have one entry per scenario");
    }
    if (similarity_init.size() != num_scenarios * num_scenarios) {
        throw ConfigError("similarity_init must be a square num_scenarios matrix");
    }
    if (!(embed_init_scale > 0.0)) throw ConfigError("embed_init_scale must be positive");
    if (std::abs(fusion_enhanced + fusion_raw - 1.0) > 1e-12) {
        throw ConfigError("fusion weights must sum to 1");
    }
    if (enable_snow_fog_penalty && num_scenarios != kScenarioCount) {
        throw ConfigError("the snow/fog penalty is defined for exactly 3 scenarios");
    }
    if (num_scenarios > feature_dim) {
        throw ConfigError("feature_dim must be at least num_scenarios for embedding init");
    }
}

std::vector<std::pair<std::string, Tensor>> GmsaaParams::named_parameters() const {
    return {
        {"gmsaa.W1", W1}, {"gmsaa.b1", b1},
        {"gmsaa.W2", W2}, {"gmsaa.b2", b2},
        {"gmsaa.W3", W3}, {"gmsaa.b3", b3},
        {"gmsaa.S", S},   {"gmsaa.E", E},
        {"gmsaa.snow_W1", snow_W1}, {"gmsaa.snow_b1", snow_b1},
        {"gmsaa.snow_W2", snow_W2}, {"gmsaa.snow_b2", snow_b2},
        {"gmsaa.fog_W1", fog_W1},   {"gmsaa.fog_b1", fog_b1},
        {"gmsaa.fog_W2", fog_W2},   {"gmsaa.fog_b2", fog_b2},
        {"gmsaa.gate_W1", gate_W1}, {"gmsaa.gate_b1", gate_b1},
        {"gmsaa.gate_W2", gate_W2}, {"gmsaa.gate_b2", gate_b2},
        {"gmsaa.cond_W", cond_W},   {"gmsaa.cond_b", cond_b},
    };
}

GmsaaParams gmsaa_init(const GmsaaConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::size_t c = cfg.num_scenarios;
    std::size_t f = cfg.feature_dim;
    std::size_t h1 = cfg.hidden1_dim();
    std::size_t h2 = cfg.hidden2_dim();
    Rng rng(splitmix64(seed ^ 0x676d736161ULL));

    auto lin_w = [&](std::size_t in, std::size_t out) {
        return gaussian_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng, true);
    };
    auto zero_b = [&](std::size_t out) { return Tensor::zeros({1, out}, true); };

    GmsaaParams p;
    p.W1 = lin_w(f, h1); p.b1 = zero_b(h1);
    p.W2 = lin_w(h1, h2); p.b2 = zero_b(h2);
    p.W3 = lin_w(h2, c); p.b3 = zero_b(c);
    p.S = Tensor({c, c}, cfg.similarity_init, true);

    if (cfg.orthogonal_embed_init) {
        // Gram-Schmidt on gaussian rows, then uniform scaling, so that
        // E . E^T == scale^2 . I at init.
        std::vector<std::vector<double>> rows(c, std::vector<double>(f));
        for (std::size_t i = 0; i < c; ++i) {
            for (;;) {
                for (double& x : rows[i]) x = rng.gaussian();
                for (std::size_t j = 0; j < i; ++j) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < f; ++k) dot += rows[i][k] * rows[j][k];
                    for (std::size_t k = 0; k < f; ++k) rows[i][k] -= dot * rows[j][k];
                }
                double norm = 0.0;
                for (double x : rows[i]) norm += x * x;
                norm = std::sqrt(norm);
                if (norm > 1e-6) {
                    for (double& x : rows[i]) x /= norm;
                    break;
                }
            }
        }
        std::vector<double> e(c * f);
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t k = 0; k < f; ++k) e[i * f + k] = cfg.embed_init_scale * rows[i][k];
        p.E = Tensor({c, f}, std::move(e), true);
    } else {
        p.E = gaussian_matrix(c, f, cfg.embed_init_scale, rng, true);
    }

    p.snow_W1 = lin_w(f, f); p.snow_b1 = zero_b(f);
    p.snow_W2 = lin_w(f, f); p.snow_b2 = zero_b(f);
    p.fog_W1 = lin_w(f, f); p.fog_b1 = zero_b(f);
    p.fog_W2 = lin_w(f, f); p.fog_b2 = zero_b(f);
    p.gate_W1 = lin_w(f, f); p.gate_b1 = zero_b(f);
    p.gate_W2 = lin_w(f, 1); p.gate_b2 = zero_b(1);
    p.cond_W = lin_w(f, f); p.cond_b = zero_b(f);
    return p;
}

Tensor pool_tokens(const Tensor& z) {
    if (z.rank() != 3) {
        throw DimensionError("pool_tokens expects batch x tokens x features, got " +
                             shape_str(z.shape()));
    }
    return mean(z, 1);
}

Tensor scenario_logits(const Tensor& zbar, const GmsaaParams& p) {
    if (zbar.rank() != 2 || zbar.shape()[1] != p.W1.shape()[0]) {
        throw DimensionError("scenario_logits input " + shape_str(zbar.shape()) +
                             " does not match projection " + shape_str(p.W1.shape()));
    }
    Tensor h1 = relu(linear(zbar, p.W1, p.b1));
    Tensor h2 = relu(linear(h1, p.W2, p.b2));
    return linear(h2, p.W3, p.b3);
}

Tensor adjust_logits(const Tensor& a, const std::vector<Scenario>& d,
                     const GmsaaConfig& cfg) {
    std::size_t c = a.shape().back();
    if (a.rank() != 2) throw DimensionError("adjust_logits expects batch x C logits");
    check_labels(d, a.shape()[0], c);
    if (cfg.enable_snow_fog_penalty && c != kScenarioCount) {
        throw ConfigError("the snow/fog penalty is defined for exactly 3 scenarios");
    }
    std::vector<double> bias(d.size() * c, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        std::size_t k = static_cast<std::size_t>(d[i]);
        bias[i * c + k] += cfg.self_bias[k];
        if (cfg.enable_snow_fog_penalty) {
            if (d[i] == Scenario::Snow) bias[i * c + 2] -= 1.0;
            if (d[i] == Scenario::Fog) bias[i * c + 1] -= 1.0;
        }
    }
    return add(div_scalar(a, cfg.temperature), Tensor({d.size(), c}, std::move(bias)));
}

Tensor guided_attention(const Tensor& S, Scenario d) {
    Tensor batch = guided_attention_batch(S, {d});
    return reshape(batch, {S.shape()[0]});
}

Tensor guided_attention_batch(const Tensor& S, const std::vector<Scenario>& d) {
    if (S.rank() != 2 || S.shape()[0] != S.shape()[1]) {
        throw DimensionError("similarity matrix must be square, got " + shape_str(S.shape()));
    }
    check_labels(d, d.size(), S.shape()[0]);
    // one_hot . softmax(S) picks row d_i of the prior for sample i
    return matmul(one_hot_rows(d, S.shape()[0]), softmax(S, 1));
}

Tensor blend_attention(const Tensor& adjusted, const Tensor& guided, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("blend lambda must lie in [0,1], got " + std::to_string(lambda));
    }
    if (adjusted.shape() != guided.shape()) {
        throw DimensionError("blend_attention shapes disagree: " + shape_str(adjusted.shape()) +
                             " vs " + shape_str(guided.shape()));
    }
    return add(mul_scalar(softmax(adjusted, 1), 1.0 - lambda), mul_scalar(guided, lambda));
}

Tensor scenario_context(const Tensor& w, const Tensor& E) {
    return matmul(w, E);
}

Tensor extract_scenario_features(const Tensor& c, const std::vector<Scenario>& d,
                                 const GmsaaParams& p) {
    std::size_t batch = c.shape()[0];
    check_labels(d, batch, kScenarioCount);

    auto mask_for = [&](Scenario s) {
        std::vector<double> m(batch, 0.0);
        for (std::size_t i = 0; i < batch; ++i) m[i] = (d[i] == s) ? 1.0 : 0.0;
        return Tensor({batch, 1}, std::move(m));
    };
    Tensor snow = linear(relu(linear(c, p.snow_W1, p.snow_b1)), p.snow_W2, p.snow_b2);
    Tensor fog = linear(relu(linear(c, p.fog_W1, p.fog_b1)), p.fog_W2, p.fog_b2);
    return add(add(mul(mask_for(Scenario::Normal), c), mul(mask_for(Scenario::Snow), snow)),
               mul(mask_for(Scenario::Fog), fog));
}

Tensor gate(const Tensor& zbar, const GmsaaParams& p) {
    Tensor h = relu(linear(zbar, p.gate_W1, p.gate_b1));
    return sigmoid(linear(h, p.gate_W2, p.gate_b2));
}

GmsaaOutput gmsaa_forward(const Tensor& z, const std::vector<Scenario>& d,
                          const GmsaaParams& p, const GmsaaConfig& cfg) {
    cfg.validate();
    if (z.rank() != 3) {
        throw DimensionError("gmsaa_forward expects batch x tokens x features, got " +
                             shape_str(z.shape()));
    }
    if (z.shape()[2] != cfg.feature_dim) {
        throw DimensionError("feature dimension " + std::to_string(z.shape()[2]) +
                             " does not match configured " + std::to_string(cfg.feature_dim));
    }
    std::size_t batch = z.shape()[0];
    check_labels(d, batch, cfg.num_scenarios);

    Tensor zbar = pool_tokens(z);
    Tensor a = scenario_logits(zbar, p);
    Tensor adjusted = adjust_logits(a, d, cfg);
    Tensor guided = guided_attention_batch(p.S, d);
    double lambda = cfg.enable_similarity_guidance ? cfg.blend_lambda : 0.0;
    Tensor w = blend_attention(adjusted, guided, lambda);
    Tensor c = scenario_context(w, p.E);
    Tensor cd = cfg.enable_extractors ? extract_scenario_features(c, d, p) : c;
    Tensor cmix = add(mul_scalar(cd, cfg.fusion_enhanced), mul_scalar(c, cfg.fusion_raw));
    Tensor g = cfg.enable_gating ? gate(zbar, p) : Tensor::ones({batch, 1});
    Tensor ctx = mul(g, linear(cmix, p.cond_W, p.cond_b));
    Tensor fused = add(z, reshape(ctx, {batch, 1, cfg.feature_dim}));

    GmsaaOutput out;
    out.tokens = layer_norm(fused);
    out.trace = AttentionTrace{a, adjusted, guided, w, g};
    return out;
}

std::string attention_trace_json(const AttentionTrace& trace) {
    nlohmann::json rec;
    auto rows = [](const Tensor& t) {
        nlohmann::json arr = nlohmann::json::array();
        std::size_t b = t.shape()[0], c = t.shape()[1];
        for (std::size_t i = 0; i < b; ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t j = 0; j < c; ++j) row.push_back(t.at(i, j));
            arr.push_back(row);
        }
        return arr;
    };
    rec["logits"] = rows(trace.logits);
    rec["adjusted"] = rows(trace.adjusted);
    rec["guided"] = rows(trace.guided);
    rec["blended"] = rows(trace.blended);
    nlohmann::json gates = nlohmann::json::array();
    for (std::size_t i = 0; i < trace.gate.shape()[0]; ++i) gates.push_back(trace.gate.at(i, 0));
    rec["gate"] = gates;
    return rec.dump(2);
}

} // namespace realm
