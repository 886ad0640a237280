#include <doctest.h>

#include <cmath>
#include <random>

#include "realm/gmsaa.hpp"
#include "realm/gradcheck.hpp"

using namespace realm;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng,
                                  double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (double& v : out) v = dist(rng);
    return out;
}

// Plain-double helpers for the straight-line oracle.
using Vec = std::vector<double>;

Vec o_linear(const Vec& x, const Vec& w, const Vec& b, std::size_t in, std::size_t out) {
    Vec y(out, 0.0);
    for (std::size_t j = 0; j < out; ++j) {
        double acc = b[j];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * w[i * out + j];
        y[j] = acc;
    }
    return y;
}

Vec o_relu(Vec x) {
    for (double& v : x) v = v > 0 ? v : 0;
    return x;
}

Vec o_softmax(const Vec& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    Vec y(x.size());
    double z = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        z += y[i];
    }
    for (double& v : y) v /= z;
    return y;
}

} // namespace

TEST_CASE("pool_tokens averages over the token axis") {
    Tensor one({1, 1, 3}, {4, 5, 6});
    Tensor p1 = pool_tokens(one);
    CHECK(p1.values() == std::vector<double>{4, 5, 6});

    Tensor two({1, 2, 2}, {1, 1, 3, 3});
    CHECK(pool_tokens(two).values() == std::vector<double>{2, 2});

    Tensor swapped({1, 2, 2}, {3, 3, 1, 1});
    CHECK(pool_tokens(swapped).values() == pool_tokens(two).values());

    CHECK_THROWS_AS(pool_tokens(Tensor({2, 2}, {1, 2, 3, 4})), DimensionError);
}

TEST_CASE("scenario_logits matches a hand-composed MLP chain") {
    GmsaaConfig cfg;
    cfg.feature_dim = 5;
    GmsaaParams p = gmsaa_init(cfg, 42);

    Tensor zero({2, 5}, std::vector<double>(10, 0.0));
    Tensor a0 = scenario_logits(zero, p);
    CHECK(a0.shape() == Shape{2, 3});
    for (double v : a0.values()) CHECK(v == 0.0); // zero biases at init

    std::mt19937_64 rng(77);
    Tensor x({1, 5}, random_values(5, rng));
    Tensor a = scenario_logits(x, p);

    Vec h1 = o_relu(o_linear(x.values(), p.W1.values(), p.b1.values(), 5, 5));
    Vec h2 = o_relu(o_linear(h1, p.W2.values(), p.b2.values(), 5, 5));
    Vec out = o_linear(h2, p.W3.values(), p.b3.values(), 5, 3);
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a.at(0, j) - out[j]) < 1e-12);

    CHECK_THROWS_AS(scenario_logits(Tensor({1, 4}, {1, 2, 3, 4}), p), DimensionError);
}

TEST_CASE("adjust_logits applies temperature, self bias, and cross penalty") {
    GmsaaConfig cfg;
    Tensor zero({1, 3}, {0, 0, 0});

    Tensor snow = adjust_logits(zero, {Scenario::Snow}, cfg);
    CHECK(snow.values() == std::vector<double>{0.0, 2.5, -1.0});

    Tensor normal = adjust_logits(zero, {Scenario::Normal}, cfg);
    CHECK(normal.values() == std::vector<double>{2.0, 0.0, 0.0});

    Tensor fog = adjust_logits(Tensor({1, 3}, {1, 1, 1}), {Scenario::Fog}, cfg);
    CHECK(fog.values() == std::vector<double>{2.0, 1.0, 4.5});

    GmsaaConfig off = cfg;
    off.enable_snow_fog_penalty = false;
    Tensor snow_off = adjust_logits(zero, {Scenario::Snow}, off);
    CHECK(snow_off.values() == std::vector<double>{0.0, 2.5, 0.0});
}

TEST_CASE("guided_attention selects the labelled row of the normalized prior") {
    Tensor flat({3, 3}, std::vector<double>(9, 0.0));
    for (Scenario s : kAllScenarios) {
        Tensor w = guided_attention(flat, s);
        for (double v : w.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    }

    GmsaaConfig cfg;
    Tensor s_init({3, 3}, cfg.similarity_init);
    Tensor w0 = guided_attention(s_init, Scenario::Normal);
    CHECK(std::abs(w0.at(0) - 0.57611688476582912) < 1e-12);
    CHECK(std::abs(w0.at(1) - 0.21194155761708547) < 1e-12);
    CHECK(std::abs(w0.at(2) - 0.21194155761708547) < 1e-12);
    // independent exp/sum oracle on the same row
    Vec direct = o_softmax({1.1, 0.1, 0.1});
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(w0.at(j) - direct[j]) < 1e-14);

    std::mt19937_64 rng(5);
    Tensor s_rand({3, 3}, random_values(9, rng, -2, 2));
    Tensor sm = softmax(s_rand, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        double row = sm.at(i, 0) + sm.at(i, 1) + sm.at(i, 2);
        CHECK(std::abs(row - 1.0) <= 1e-12);
    }
    Tensor batch = guided_attention_batch(s_rand, {Scenario::Fog, Scenario::Snow});
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(batch.at(0, j) == sm.at(2, j));
        CHECK(batch.at(1, j) == sm.at(1, j));
    }
}

TEST_CASE("blend_attention endpoints and convex mixing") {
    Tensor adjusted({1, 3}, {std::log(0.6), std::log(0.3), std::log(0.1)});
    Tensor guided({1, 3}, {0.5, 0.25, 0.25});

    Tensor w1 = blend_attention(adjusted, guided, 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(w1.at(0, j) == guided.at(0, j));

    Tensor sm = softmax(adjusted, 1);
    Tensor w0 = blend_attention(adjusted, guided, 0.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(w0.at(0, j) == sm.at(0, j));

    Tensor w = blend_attention(adjusted, guided, 0.85);
    CHECK(std::abs(w.at(0, 0) - 0.515) < 1e-12);
    CHECK(std::abs(w.at(0, 1) - 0.2575) < 1e-12);
    CHECK(std::abs(w.at(0, 2) - 0.2275) < 1e-12);

    CHECK_THROWS_AS(blend_attention(adjusted, guided, 1.5), ConfigError);
    CHECK_THROWS_AS(blend_attention(adjusted, guided, -0.1), ConfigError);
}

TEST_CASE("scenario_context is attention-weighted embedding lookup") {
    std::mt19937_64 rng(9);
    Tensor e({3, 4}, random_values(12, rng));

    Tensor onehot({1, 3}, {0, 1, 0});
    Tensor ck = scenario_context(onehot, e);
    for (std::size_t j = 0; j < 4; ++j) CHECK(ck.at(0, j) == e.at(1, j));

    Tensor uniform({1, 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    Tensor cu = scenario_context(uniform, e);
    for (std::size_t j = 0; j < 4; ++j) {
        double mean = (e.at(0, j) + e.at(1, j) + e.at(2, j)) / 3.0;
        CHECK(std::abs(cu.at(0, j) - mean) < 1e-15);
    }

    Tensor w({2, 3}, random_values(6, rng));
    Tensor c = scenario_context(w, e);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double acc = 0;
            for (std::size_t k = 0; k < 3; ++k) acc += w.at(i, k) * e.at(k, j);
            CHECK(std::abs(c.at(i, j) - acc) < 1e-12);
        }

    CHECK_THROWS_AS(scenario_context(Tensor({1, 4}, {1, 2, 3, 4}), e), DimensionError);
}

TEST_CASE("extractor routing per scenario label") {
    GmsaaConfig cfg;
    cfg.feature_dim = 4;
    GmsaaParams p = gmsaa_init(cfg, 3);
    std::mt19937_64 rng(13);
    Tensor c({3, 4}, random_values(12, rng));

    Tensor all_normal = extract_scenario_features(
        c, {Scenario::Normal, Scenario::Normal, Scenario::Normal}, p);
    for (std::size_t i = 0; i < 12; ++i) CHECK(all_normal.values()[i] == c.values()[i]);

    Tensor snow = extract_scenario_features(c, {Scenario::Snow, Scenario::Snow, Scenario::Snow}, p);
    Tensor fog = extract_scenario_features(c, {Scenario::Fog, Scenario::Fog, Scenario::Fog}, p);
    bool differ = false;
    for (std::size_t i = 0; i < 12; ++i) differ = differ || snow.values()[i] != fog.values()[i];
    CHECK(differ);

    // snow path equals its standalone two-layer composition
    Vec row(c.values().begin(), c.values().begin() + 4);
    Vec h = o_relu(o_linear(row, p.snow_W1.values(), p.snow_b1.values(), 4, 4));
    Vec out = o_linear(h, p.snow_W2.values(), p.snow_b2.values(), 4, 4);
    for (std::size_t j = 0; j < 4; ++j) CHECK(std::abs(snow.at(0, j) - out[j]) < 1e-12);

    // mixed batch routes each sample independently
    Tensor mixed = extract_scenario_features(
        c, {Scenario::Snow, Scenario::Normal, Scenario::Fog}, p);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(mixed.at(0, j) == snow.at(0, j));
        CHECK(mixed.at(1, j) == c.at(1, j));
        CHECK(mixed.at(2, j) == fog.at(2, j));
    }
}

TEST_CASE("gate stays in the open unit interval") {
    GmsaaConfig cfg;
    cfg.feature_dim = 4;
    GmsaaParams p = gmsaa_init(cfg, 11);

    Tensor zero({1, 4}, {0, 0, 0, 0});
    CHECK(gate(zero, p).at(0, 0) == 0.5); // zero biases give psi(0) = 0

    std::mt19937_64 rng(17);
    Tensor x({8, 4}, random_values(32, rng, -50, 50));
    Tensor g = gate(x, p);
    CHECK(g.shape() == Shape{8, 1});
    for (double v : g.values()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    // pushing the pre-activation down drives the gate toward 0
    GmsaaParams q = p;
    double prev = 1.0;
    for (double bias : {-1.0, -3.0, -9.0}) {
        q.gate_b2 = Tensor({1, 1}, {bias}, true);
        double cur = gate(zero, q).at(0, 0);
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("orthogonal embedding initialization") {
    GmsaaConfig cfg;
    cfg.feature_dim = 16;
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
        GmsaaParams p = gmsaa_init(cfg, seed);
        Tensor gram = matmul(p.E, transpose(p.E));
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                double want = i == j ? 0.01 : 0.0;
                CHECK(std::abs(gram.at(i, j) - want) < 1e-8);
            }
    }
}

TEST_CASE("forward with a slammed-shut gate is plain row normalization") {
    GmsaaConfig cfg;
    cfg.feature_dim = 6;
    GmsaaParams p = gmsaa_init(cfg, 7);
    p.gate_b2 = Tensor({1, 1}, {-1e9}, true);

    std::mt19937_64 rng(23);
    Tensor z({2, 3, 6}, random_values(36, rng));
    GmsaaOutput out = gmsaa_forward(z, {Scenario::Snow, Scenario::Fog}, p, cfg);
    CHECK(out.tokens.shape() == z.shape());

    Tensor ln = layer_norm(z);
    for (std::size_t i = 0; i < 36; ++i) CHECK(out.tokens.values()[i] == ln.values()[i]);
    CHECK(out.trace.gate.at(0, 0) == 0.0);
}

TEST_CASE("forward matches a straight-line reimplementation") {
    GmsaaConfig cfg;
    cfg.feature_dim = 5;
    std::size_t F = 5, T = 4, B = 3, C = 3;
    GmsaaParams p = gmsaa_init(cfg, 2024);
    std::mt19937_64 rng(31);
    Tensor z({B, T, F}, random_values(B * T * F, rng));
    std::vector<Scenario> labels{Scenario::Normal, Scenario::Snow, Scenario::Fog};

    GmsaaOutput out = gmsaa_forward(z, labels, p, cfg);

    for (std::size_t i = 0; i < B; ++i) {
        // pool
        Vec zbar(F, 0.0);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < F; ++k) zbar[k] += z.at(i, t, k) / double(T);
        // logits
        Vec h1 = o_relu(o_linear(zbar, p.W1.values(), p.b1.values(), F, F));
        Vec h2 = o_relu(o_linear(h1, p.W2.values(), p.b2.values(), F, F));
        Vec a = o_linear(h2, p.W3.values(), p.b3.values(), F, C);
        // adjust
        Vec adj(C);
        for (std::size_t j = 0; j < C; ++j) adj[j] = a[j] / cfg.temperature;
        std::size_t d = static_cast<std::size_t>(labels[i]);
        adj[d] += cfg.self_bias[d];
        if (labels[i] == Scenario::Snow) adj[2] -= 1.0;
        if (labels[i] == Scenario::Fog) adj[1] -= 1.0;
        // guided: row d of row-softmaxed S
        Vec srow(C);
        for (std::size_t j = 0; j < C; ++j) srow[j] = p.S.at(d, j);
        Vec guided = o_softmax(srow);
        // blend
        Vec sm = o_softmax(adj);
        Vec w(C);
        for (std::size_t j = 0; j < C; ++j)
            w[j] = (1 - cfg.blend_lambda) * sm[j] + cfg.blend_lambda * guided[j];
        // context
        Vec c(F, 0.0);
        for (std::size_t j = 0; j < C; ++j)
            for (std::size_t k = 0; k < F; ++k) c[k] += w[j] * p.E.at(j, k);
        // extractor
        Vec cd = c;
        if (labels[i] == Scenario::Snow) {
            cd = o_linear(o_relu(o_linear(c, p.snow_W1.values(), p.snow_b1.values(), F, F)),
                          p.snow_W2.values(), p.snow_b2.values(), F, F);
        } else if (labels[i] == Scenario::Fog) {
            cd = o_linear(o_relu(o_linear(c, p.fog_W1.values(), p.fog_b1.values(), F, F)),
                          p.fog_W2.values(), p.fog_b2.values(), F, F);
        }
        Vec cmix(F);
        for (std::size_t k = 0; k < F; ++k)
            cmix[k] = cfg.fusion_enhanced * cd[k] + cfg.fusion_raw * c[k];
        // gate
        Vec gh = o_relu(o_linear(zbar, p.gate_W1.values(), p.gate_b1.values(), F, F));
        Vec go = o_linear(gh, p.gate_W2.values(), p.gate_b2.values(), F, 1);
        double g = 1.0 / (1.0 + std::exp(-go[0]));
        CHECK(std::abs(out.trace.gate.at(i, 0) - g) < 1e-12);
        // conditioner and residual LN
        Vec ctx = o_linear(cmix, p.cond_W.values(), p.cond_b.values(), F, F);
        for (std::size_t t = 0; t < T; ++t) {
            Vec row(F);
            for (std::size_t k = 0; k < F; ++k) row[k] = z.at(i, t, k) + g * ctx[k];
            double mu = 0, var = 0;
            for (double v : row) mu += v;
            mu /= double(F);
            for (double v : row) var += (v - mu) * (v - mu);
            var /= double(F);
            double is = 1.0 / std::sqrt(var + 1e-5);
            for (std::size_t k = 0; k < F; ++k) {
                CHECK(std::abs(out.tokens.at(i, t, k) - (row[k] - mu) * is) < 1e-10);
            }
        }
        for (std::size_t j = 0; j < C; ++j) {
            CHECK(std::abs(out.trace.logits.at(i, j) - a[j]) < 1e-10);
            CHECK(std::abs(out.trace.adjusted.at(i, j) - adj[j]) < 1e-10);
            CHECK(std::abs(out.trace.guided.at(i, j) - guided[j]) < 1e-10);
            CHECK(std::abs(out.trace.blended.at(i, j) - w[j]) < 1e-10);
        }
    }
}

TEST_CASE("blended attention rows are convex weights") {
    GmsaaConfig cfg;
    cfg.feature_dim = 8;
    GmsaaParams p = gmsaa_init(cfg, 55);
    std::mt19937_64 rng(41);
    std::vector<Scenario> labels{Scenario::Fog, Scenario::Normal, Scenario::Snow,
                                 Scenario::Snow, Scenario::Fog, Scenario::Normal};
    for (int trial = 0; trial < 10; ++trial) {
        Tensor z({6, 3, 8}, random_values(6 * 3 * 8, rng, -3, 3));
        GmsaaOutput out = gmsaa_forward(z, labels, p, cfg);
        for (std::size_t i = 0; i < 6; ++i) {
            double row = 0;
            for (std::size_t j = 0; j < 3; ++j) {
                CHECK(out.trace.blended.at(i, j) >= 0.0);
                row += out.trace.blended.at(i, j);
            }
            CHECK(std::abs(row - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("full guidance makes attention independent of the input stream") {
    GmsaaConfig cfg;
    cfg.feature_dim = 6;
    cfg.blend_lambda = 1.0;
    GmsaaParams p = gmsaa_init(cfg, 77);
    std::mt19937_64 rng(43);
    std::vector<Scenario> labels{Scenario::Snow, Scenario::Fog};
    Tensor z1({2, 2, 6}, random_values(24, rng));
    Tensor z2({2, 2, 6}, random_values(24, rng));
    Tensor w1 = gmsaa_forward(z1, labels, p, cfg).trace.blended;
    Tensor w2 = gmsaa_forward(z2, labels, p, cfg).trace.blended;
    for (std::size_t i = 0; i < 6; ++i) CHECK(w1.values()[i] == w2.values()[i]);
}

TEST_CASE("ablation switches") {
    GmsaaConfig cfg;
    cfg.feature_dim = 6;
    GmsaaParams p = gmsaa_init(cfg, 99);
    std::mt19937_64 rng(47);
    Tensor z({3, 2, 6}, random_values(36, rng));
    std::vector<Scenario> labels{Scenario::Snow, Scenario::Fog, Scenario::Normal};

    // no similarity guidance: blended equals the softmax of adjusted logits
    GmsaaConfig no_guide = cfg;
    no_guide.enable_similarity_guidance = false;
    GmsaaOutput og = gmsaa_forward(z, labels, p, no_guide);
    Tensor sm = softmax(og.trace.adjusted.detach(), 1);
    for (std::size_t i = 0; i < 9; ++i) CHECK(og.trace.blended.values()[i] == sm.values()[i]);

    // no gating: gate pinned to one
    GmsaaConfig no_gate = cfg;
    no_gate.enable_gating = false;
    GmsaaOutput on = gmsaa_forward(z, labels, p, no_gate);
    for (double v : on.trace.gate.values()) CHECK(v == 1.0);

    // no extractors: output equals a parameter set whose MLPs never fire
    GmsaaConfig no_ext = cfg;
    no_ext.enable_extractors = false;
    GmsaaOutput oe = gmsaa_forward(z, labels, p, no_ext);
    GmsaaOutput oe_normal = gmsaa_forward(
        z, {Scenario::Normal, Scenario::Normal, Scenario::Normal}, p, no_ext);
    // with extraction off the only label effects left are logits bias and row choice
    CHECK(oe.tokens.shape() == z.shape());
    bool labels_still_matter = false;
    for (std::size_t i = 0; i < 36; ++i)
        labels_still_matter =
            labels_still_matter || oe.tokens.values()[i] != oe_normal.tokens.values()[i];
    CHECK(labels_still_matter);

    // no snow/fog penalty handled in the adjust_logits case above; end to end the
    // adjusted trace of a snow sample keeps its fog logit untouched
    GmsaaConfig no_pen = cfg;
    no_pen.enable_snow_fog_penalty = false;
    Tensor a = og.trace.logits.detach();
    Tensor with_pen = adjust_logits(a, labels, cfg);
    Tensor without = adjust_logits(a, labels, no_pen);
    CHECK(std::abs((with_pen.at(0, 2) - without.at(0, 2)) + 1.0) < 1e-15); // snow sample
    CHECK(std::abs((with_pen.at(1, 1) - without.at(1, 1)) + 1.0) < 1e-15); // fog sample
    CHECK(with_pen.at(2, 0) == without.at(2, 0));                          // normal sample
}

TEST_CASE("forward gradients pass finite differences for every parameter") {
    GmsaaConfig cfg;
    cfg.feature_dim = 5;
    GmsaaParams base = gmsaa_init(cfg, 123);
    std::mt19937_64 rng(53);
    std::size_t B = 2, T = 2, F = 5;
    Tensor z({B, T, F}, random_values(B * T * F, rng));
    std::vector<Scenario> labels{Scenario::Snow, Scenario::Fog};
    std::vector<double> mix = random_values(B * T * F, rng);

    auto loss_with = [&](const GmsaaParams& p, const Tensor& zin) {
        Tensor zt = gmsaa_forward(zin, labels, p, cfg).tokens;
        return sum(mul(zt, Tensor(zt.shape(), mix)));
    };

    // input gradient
    auto f_input = [&](const Tensor& t) { return loss_with(base, t); };
    CHECK(finite_difference_check(f_input, z, 1e-5) < 1e-4);

    using Member = Tensor GmsaaParams::*;
    std::vector<std::pair<const char*, Member>> members{
        {"W1", &GmsaaParams::W1}, {"b1", &GmsaaParams::b1},
        {"W2", &GmsaaParams::W2}, {"b2", &GmsaaParams::b2},
        {"W3", &GmsaaParams::W3}, {"b3", &GmsaaParams::b3},
        {"S", &GmsaaParams::S}, {"E", &GmsaaParams::E},
        {"snow_W1", &GmsaaParams::snow_W1}, {"snow_b1", &GmsaaParams::snow_b1},
        {"snow_W2", &GmsaaParams::snow_W2}, {"snow_b2", &GmsaaParams::snow_b2},
        {"fog_W1", &GmsaaParams::fog_W1}, {"fog_b1", &GmsaaParams::fog_b1},
        {"fog_W2", &GmsaaParams::fog_W2}, {"fog_b2", &GmsaaParams::fog_b2},
        {"gate_W1", &GmsaaParams::gate_W1}, {"gate_b1", &GmsaaParams::gate_b1},
        {"gate_W2", &GmsaaParams::gate_W2}, {"gate_b2", &GmsaaParams::gate_b2},
        {"cond_W", &GmsaaParams::cond_W}, {"cond_b", &GmsaaParams::cond_b},
    };
    for (auto& [name, m] : members) {
        auto f = [&](const Tensor& t) {
            GmsaaParams q = base;
            q.*m = t;
            return loss_with(q, z);
        };
        INFO(name);
        CHECK(finite_difference_check(f, base.*m, 1e-5) < 1e-4);
    }
}

TEST_CASE("attention trace serializes with one array per diagnostic") {
    GmsaaConfig cfg;
    cfg.feature_dim = 4;
    GmsaaParams p = gmsaa_init(cfg, 5);
    std::mt19937_64 rng(59);
    Tensor z({2, 2, 4}, random_values(16, rng));
    GmsaaOutput out = gmsaa_forward(z, {Scenario::Normal, Scenario::Snow}, p, cfg);
    std::string js = attention_trace_json(out.trace);
    for (const char* key : {"\"logits\"", "\"adjusted\"", "\"guided\"", "\"blended\"", "\"gate\""}) {
        CHECK(js.find(key) != std::string::npos);
    }
}

TEST_CASE("config validation rejects out-of-range settings") {
    GmsaaConfig bad;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = GmsaaConfig{};
    bad.blend_lambda = 1.2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = GmsaaConfig{};
    bad.fusion_enhanced = 0.6;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = GmsaaConfig{};
    bad.self_bias = {1.0};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = GmsaaConfig{};
    bad.feature_dim = 2; // fewer dims than scenarios
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    GmsaaConfig ok;
    CHECK_NOTHROW(ok.validate());
}
