#include <doctest.h>

#include <cmath>
#include <limits>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "realm/errors.hpp"
#include "realm/harness.hpp"
#include "realm/rng.hpp"

using namespace realm;
using nlohmann::json;

namespace {

// softmax of the default similarity prior rows, frozen from a separate
// high-precision evaluation
const double kGuidedRow0[3] = {0.57611688476582912, 0.21194155761708547, 0.21194155761708547};
const double kGuidedRow1[3] = {0.21415517509806883, 0.58213412093954553, 0.20371070396238566};
const double kGuidedRow2[3] = {0.21415517509806881, 0.20371070396238561, 0.58213412093954542};

SyntheticConfig small_synth() {
    SyntheticConfig cfg;
    cfg.total_samples = 20;
    return cfg;
}

RunConfig quick_run() {
    RunConfig cfg;
    cfg.epochs = 3;
    cfg.synthetic.total_samples = 20;
    return cfg;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("synthetic generation is bitwise deterministic") {
    SyntheticConfig cfg = small_synth();
    SyntheticDataset a = generate_synthetic(cfg);
    SyntheticDataset b = generate_synthetic(cfg);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        CHECK(a.samples[i].scene_id == b.samples[i].scene_id);
        CHECK(a.samples[i].label == b.samples[i].label);
        CHECK(a.samples[i].targets == b.samples[i].targets);
        CHECK(a.samples[i].tokens.values() == b.samples[i].tokens.values());
        CHECK(a.samples[i].desc.values() == b.samples[i].desc.values());
    }
}

TEST_CASE("zero noise collapses each scenario onto its center") {
    SyntheticConfig cfg = small_synth();
    cfg.noise_sigma = 0.0;
    SyntheticDataset data = generate_synthetic(cfg);
    for (const SyntheticSample& s : data.samples) {
        std::vector<double> center = cluster_center(s.label, cfg);
        std::vector<double> dc = description_center(s.label, cfg);
        const std::vector<double>& tok = s.tokens.values();
        for (std::size_t t = 0; t < cfg.tokens; ++t) {
            double view = t < cfg.tokens / 2 ? 0.0 : cfg.view_offset;
            for (std::size_t f = 0; f < cfg.feature_dim; ++f)
                CHECK(tok[t * cfg.feature_dim + f] == center[f] + view);
        }
        CHECK(s.desc.values() == dc);
    }
}

TEST_CASE("imbalance 0.8 with 100 samples yields 80/10/10") {
    SyntheticConfig cfg;
    cfg.total_samples = 100;
    cfg.imbalance_ratio = 0.8;
    CHECK(cfg.scenario_counts() == std::vector<std::size_t>{80, 10, 10});

    SyntheticDataset data = generate_synthetic(cfg);
    std::array<std::size_t, 3> counted{};
    for (const SyntheticSample& s : data.samples) ++counted[static_cast<std::size_t>(s.label)];
    CHECK(counted[0] == 80);
    CHECK(counted[1] == 10);
    CHECK(counted[2] == 10);

    std::set<std::string> ids;
    for (const SyntheticSample& s : data.samples) ids.insert(s.scene_id);
    CHECK(ids.size() == 100);
}

TEST_CASE("synthetic config validation") {
    SyntheticConfig cfg;
    cfg.tokens = 7;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.feature_dim = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.imbalance_ratio = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.imbalance_ratio = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.noise_sigma = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.total_samples = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SyntheticConfig{};
    cfg.vocab = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    // the normal-count clamp keeps both tail scenarios populated at tiny totals
    cfg = SyntheticConfig{};
    cfg.total_samples = 4;
    cfg.imbalance_ratio = 0.9;
    cfg.validate();
    CHECK(cfg.scenario_counts() == std::vector<std::size_t>{2, 1, 1});
}

TEST_CASE("cluster and description centers") {
    SyntheticConfig cfg;
    std::vector<double> n = cluster_center(Scenario::Normal, cfg);
    std::vector<double> s = cluster_center(Scenario::Snow, cfg);
    std::vector<double> f = cluster_center(Scenario::Fog, cfg);
    for (std::size_t k = 0; k < cfg.feature_dim; ++k) {
        double expected = cfg.base_level +
                          (k % 3 == 0 ? cfg.center_offset : -0.5 * cfg.center_offset);
        CHECK(n[k] == expected);
    }
    CHECK(description_center(Scenario::Normal, cfg) == n);
    std::vector<double> adverse = description_center(Scenario::Snow, cfg);
    CHECK(description_center(Scenario::Fog, cfg) == adverse);
    for (std::size_t k = 0; k < cfg.feature_dim; ++k)
        CHECK(adverse[k] == doctest::Approx(0.5 * (s[k] + f[k])).epsilon(1e-15));
}

TEST_CASE("scenario targets follow the stride rule") {
    CHECK(scenario_targets(Scenario::Normal, 6, 16) ==
          std::vector<std::size_t>{0, 2, 4, 6, 8, 10});
    CHECK(scenario_targets(Scenario::Snow, 6, 16) ==
          std::vector<std::size_t>{5, 7, 9, 11, 13, 15});
    CHECK(scenario_targets(Scenario::Fog, 6, 16) ==
          std::vector<std::size_t>{10, 12, 14, 0, 2, 4});
}

TEST_CASE("held-out split partitions and is id-stable") {
    SyntheticConfig cfg;
    SyntheticDataset data = generate_synthetic(cfg);
    auto [train, held] = split_indices(data);
    CHECK(train.size() + held.size() == data.samples.size());
    CHECK(!held.empty());
    CHECK(!train.empty());
    for (std::size_t i : held) CHECK(is_held_out(data.samples[i].scene_id));
    for (std::size_t i : train) CHECK(!is_held_out(data.samples[i].scene_id));
    CHECK(is_held_out("scene_0000") == is_held_out("scene_0000"));
}

TEST_CASE("run config JSON round trip") {
    RunConfig cfg;
    cfg.epochs = 17;
    cfg.learning_rate = 0.005;
    cfg.ablation = "wo_gating";
    cfg.synthetic.noise_sigma = 0.4;
    cfg.gmsaa.blend_lambda = 0.5;
    cfg.mscl.tau_mod = 0.09;
    cfg.objective.beta = 0.25;
    RunConfig back = run_config_from_json(run_config_json(cfg));
    CHECK(back.epochs == 17);
    CHECK(back.learning_rate == 0.005);
    CHECK(back.ablation == "wo_gating");
    CHECK(back.synthetic.noise_sigma == 0.4);
    CHECK(back.gmsaa.blend_lambda == 0.5);
    CHECK(back.mscl.tau_mod == 0.09);
    CHECK(back.objective.beta == 0.25);
    CHECK(back.seed == cfg.seed);
    CHECK(run_config_json(back) == run_config_json(cfg));
}

TEST_CASE("run config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(run_config_from_json("{\"epoch\": 5}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"synthetic\": {\"sigma\": 1}}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"objective\": {\"gamma\": 1}}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("not json"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"batch_size\": 1}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"learning_rate\": 0}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"momentum\": 1.0}"), ConfigError);
    CHECK_THROWS_AS(run_config_from_json("{\"epochs\": 0}"), ConfigError);
}

TEST_CASE("partial overrides keep remaining defaults") {
    RunConfig cfg = run_config_from_json("{\"epochs\": 9}");
    RunConfig defaults;
    CHECK(cfg.epochs == 9);
    CHECK(cfg.learning_rate == defaults.learning_rate);
    CHECK(cfg.seed == defaults.seed);
    CHECK(cfg.synthetic.total_samples == defaults.synthetic.total_samples);
}

TEST_CASE("REALM_SEED overrides both model and data seeds") {
    setenv("REALM_SEED", "99", 1);
    RunConfig cfg = load_run_config("");
    unsetenv("REALM_SEED");
    CHECK(cfg.seed == 99);
    CHECK(cfg.synthetic.seed == 99);

    setenv("REALM_SEED", "12abc", 1);
    CHECK_THROWS_AS(load_run_config(""), ConfigError);
    unsetenv("REALM_SEED");
}

TEST_CASE("every published ablation row resolves; unknown rows are refused") {
    CHECK(ablation_names().size() == 13);
    for (const std::string& name : ablation_names()) {
        RunConfig cfg;
        cfg.ablation = name;
        CHECK_NOTHROW(resolve_ablation(cfg));
    }
    RunConfig cfg;
    cfg.ablation = "wo_everything";
    CHECK_THROWS_AS(resolve_ablation(cfg), ConfigError);
}

TEST_CASE("ablation rows toggle the matching switches") {
    auto resolved = [](const std::string& name) {
        RunConfig cfg;
        cfg.ablation = name;
        AblationFlags flags = resolve_ablation(cfg);
        return std::make_pair(cfg, flags);
    };
    {
        auto [cfg, flags] = resolved("full");
        CHECK(flags.use_gmsaa);
        CHECK(flags.use_mscl);
        CHECK(!flags.drop_infrastructure);
        CHECK(!flags.zero_descriptions);
    }
    {
        auto [cfg, flags] = resolved("wo_mscl");
        CHECK(!flags.use_mscl);
        CHECK(cfg.objective.alpha == 0.0);
    }
    {
        auto [cfg, flags] = resolved("wo_gmsaa");
        CHECK(!flags.use_gmsaa);
    }
    {
        auto [cfg, flags] = resolved("wo_infrastructure_images");
        CHECK(flags.drop_infrastructure);
    }
    {
        auto [cfg, flags] = resolved("wo_scene_description");
        CHECK(flags.zero_descriptions);
    }
    {
        auto [cfg, flags] = resolved("wo_orthogonal_init");
        CHECK(!cfg.gmsaa.orthogonal_embed_init);
    }
    {
        auto [cfg, flags] = resolved("wo_snow_fog_separation");
        CHECK(!cfg.gmsaa.enable_snow_fog_penalty);
    }
    {
        auto [cfg, flags] = resolved("wo_similarity_guidance");
        CHECK(!cfg.gmsaa.enable_similarity_guidance);
    }
    {
        auto [cfg, flags] = resolved("wo_extractors");
        CHECK(!cfg.gmsaa.enable_extractors);
    }
    {
        auto [cfg, flags] = resolved("wo_gating");
        CHECK(!cfg.gmsaa.enable_gating);
    }
    {
        auto [cfg, flags] = resolved("wo_scenario_weighting");
        CHECK(!cfg.mscl.weighting_enabled);
    }
    {
        auto [cfg, flags] = resolved("wo_scenario_awareness");
        CHECK(!cfg.mscl.scenario_term_enabled);
    }
    {
        auto [cfg, flags] = resolved("wo_text_image_discrimination");
        CHECK(!cfg.mscl.modality_term_enabled);
    }
}

TEST_CASE("batch assembly applies input ablations") {
    SyntheticConfig scfg = small_synth();
    SyntheticDataset data = generate_synthetic(scfg);
    std::vector<std::size_t> idx{0, 1, 2};

    AblationFlags plain;
    BatchData base = assemble_batch(data, idx, plain);
    CHECK(base.tokens.shape() == Shape{3, scfg.tokens, scfg.feature_dim});
    CHECK(base.desc.shape() == Shape{3, scfg.feature_dim});
    CHECK(base.labels.size() == 3);
    CHECK(base.tokens.values() != std::vector<double>(base.tokens.numel(), 0.0));

    AblationFlags drop;
    drop.drop_infrastructure = true;
    BatchData dropped = assemble_batch(data, idx, drop);
    const std::vector<double>& tok = dropped.tokens.values();
    std::size_t half = scfg.tokens / 2;
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t t = 0; t < scfg.tokens; ++t)
            for (std::size_t f = 0; f < scfg.feature_dim; ++f) {
                double v = tok[(b * scfg.tokens + t) * scfg.feature_dim + f];
                if (t >= half)
                    CHECK(v == 0.0);
                else
                    CHECK(v == base.tokens.values()[(b * scfg.tokens + t) * scfg.feature_dim + f]);
            }

    AblationFlags mute;
    mute.zero_descriptions = true;
    BatchData muted = assemble_batch(data, idx, mute);
    for (double v : muted.desc.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(assemble_batch(data, {}, plain), ContractError);
}

TEST_CASE("teacher parameters never change during training") {
    RunConfig cfg = quick_run();
    TrainResult result = train(cfg);
    CHECK(result.teacher_hash_before == result.teacher_hash_after);
    for (const auto& [name, t] : result.model.teacher.named_parameters())
        CHECK(!t.has_grad());
}

TEST_CASE("telemetry satisfies the blend identity at every epoch") {
    RunConfig cfg = quick_run();
    cfg.epochs = 5;
    TrainResult result = train(cfg);
    REQUIRE(result.telemetry.size() == 5);
    for (const EpochTelemetry& row : result.telemetry) {
        double rebuilt = row.l_gen + cfg.objective.alpha * row.l_mscl +
                         cfg.objective.beta * row.l_kd;
        CHECK(std::abs(row.l_total - rebuilt) <= 1e-10);
    }
}

TEST_CASE("pure generation objective on separable data strictly descends") {
    RunConfig cfg;
    cfg.epochs = 5;
    cfg.objective.alpha = 0.0;
    cfg.objective.beta = 0.0;
    cfg.synthetic.total_samples = 20;
    cfg.synthetic.noise_sigma = 0.0;
    TrainResult result = train(cfg);
    for (std::size_t e = 1; e < result.telemetry.size(); ++e)
        CHECK(result.telemetry[e].l_gen < result.telemetry[e - 1].l_gen);
}

TEST_CASE("identical seeds reproduce the final loss to the last bit") {
    RunConfig cfg = quick_run();
    TrainResult a = train(cfg);
    TrainResult b = train(cfg);
    CHECK(a.telemetry.back().l_total == b.telemetry.back().l_total);
    CHECK(a.heldout_gen_loss == b.heldout_gen_loss);
    auto pa = a.model.student.trainable_parameters();
    auto pb = b.model.student.trainable_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].second.values() == pb[i].second.values());
}

TEST_CASE("non-finite loss aborts with a diagnostic dump") {
    RunConfig cfg = quick_run();
    // the first update poisons every trainable parameter, so the next batch
    // produces a non-finite total
    cfg.learning_rate = std::numeric_limits<double>::infinity();
    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "realm_abort_test";
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(train(cfg, dir.string()), DomainError);
    json dump = json::parse(slurp(dir / "abort_dump.json"));
    CHECK(dump.contains("epoch"));
    CHECK(dump.contains("scene_ids"));
    CHECK(dump.at("scene_ids").size() >= 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("guided-only attention matches the similarity prior rows") {
    RunConfig cfg;
    cfg.gmsaa.blend_lambda = 1.0;
    cfg.synthetic.total_samples = 20;
    AblationFlags flags = resolve_ablation(cfg);
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    AttentionAggregate agg = export_attention(model, data, flags);
    const double* expected[3] = {kGuidedRow0, kGuidedRow1, kGuidedRow2};
    for (std::size_t d = 0; d < 3; ++d) {
        REQUIRE(agg.counts[d] > 0);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(agg.rows[d][c] == doctest::Approx(expected[d][c]).epsilon(1e-12));
    }
}

TEST_CASE("attention aggregate rows stay convex") {
    RunConfig cfg = quick_run();
    TrainResult result = train(cfg);
    REQUIRE(result.has_attention);
    for (std::size_t d = 0; d < 3; ++d) {
        double sum = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(result.attention.rows[d][c] >= 0.0);
            sum += result.attention.rows[d][c];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("aggregate of one sample per scenario equals its own trace") {
    RunConfig cfg;
    cfg.synthetic.total_samples = 3;
    cfg.synthetic.imbalance_ratio = 0.34;
    REQUIRE(cfg.synthetic.scenario_counts() == std::vector<std::size_t>{1, 1, 1});
    AblationFlags flags;
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    AttentionAggregate agg = export_attention(model, data, flags, 1);
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        BatchData batch = assemble_batch(data, {i}, flags);
        ForwardResult fwd = model_forward(model, batch, flags);
        auto d = static_cast<std::size_t>(data.samples[i].label);
        CHECK(agg.counts[d] == 1);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(agg.rows[d][c] == fwd.trace.blended.values()[c]);
    }
}

TEST_CASE("attention export refuses a disabled attention block") {
    RunConfig cfg = quick_run();
    cfg.ablation = "wo_gmsaa";
    AblationFlags flags = resolve_ablation(cfg);
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    CHECK_THROWS_AS(export_attention(model, data, flags), ConfigError);
}

TEST_CASE("embedding export is deterministic with one row per sample") {
    RunConfig cfg = quick_run();
    AblationFlags flags;
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    EmbeddingExport a = export_embeddings(model, data, flags);
    EmbeddingExport b = export_embeddings(model, data, flags);
    REQUIRE(a.rows.size() == data.samples.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].scene_id == data.samples[i].scene_id);
        CHECK(a.rows[i].pre == b.rows[i].pre);
        CHECK(a.rows[i].post == b.rows[i].post);
        CHECK(a.rows[i].pre.size() == cfg.synthetic.feature_dim);
    }
}

TEST_CASE("separation statistics match a direct pairwise oracle") {
    RunConfig cfg = quick_run();
    AblationFlags flags;
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    EmbeddingExport ex = export_embeddings(model, data, flags);

    auto oracle = [&](bool post) {
        double intra = 0.0, inter = 0.0;
        std::size_t ni = 0, nx = 0;
        for (std::size_t i = 0; i < ex.rows.size(); ++i)
            for (std::size_t j = i + 1; j < ex.rows.size(); ++j) {
                const std::vector<double>& a = post ? ex.rows[i].post : ex.rows[i].pre;
                const std::vector<double>& b = post ? ex.rows[j].post : ex.rows[j].pre;
                double dot = 0.0, na = 0.0, nb = 0.0;
                for (std::size_t k = 0; k < a.size(); ++k) {
                    dot += a[k] * b[k];
                    na += a[k] * a[k];
                    nb += b[k] * b[k];
                }
                double c = dot / (std::sqrt(na) * std::sqrt(nb));
                if (ex.rows[i].label == ex.rows[j].label) {
                    intra += c;
                    ++ni;
                } else {
                    inter += c;
                    ++nx;
                }
            }
        return std::make_pair(intra / static_cast<double>(ni),
                              inter / static_cast<double>(nx));
    };
    auto [pre_intra, pre_inter] = oracle(false);
    auto [post_intra, post_inter] = oracle(true);
    CHECK(ex.pre.mean_intra == doctest::Approx(pre_intra).epsilon(1e-12));
    CHECK(ex.pre.mean_inter == doctest::Approx(pre_inter).epsilon(1e-12));
    CHECK(ex.post.mean_intra == doctest::Approx(post_intra).epsilon(1e-12));
    CHECK(ex.post.mean_inter == doctest::Approx(post_inter).epsilon(1e-12));
    CHECK(ex.pre.separation() == doctest::Approx(pre_intra - pre_inter).epsilon(1e-12));
}

TEST_CASE("closing the gate reduces the post stage to layer-normalized tokens") {
    RunConfig cfg = quick_run();
    AblationFlags flags;
    ToyModel model = build_model(cfg);
    // drive the gate MLP output bias to -inf so g is numerically zero
    for (double& v : model.student.gmsaa.gate_b2.values_mut()) v = -1e9;
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    BatchData batch = assemble_batch(data, {0, 1, 2, 3}, flags);
    ForwardResult fwd = model_forward(model, batch, flags);

    std::size_t B = 4, T = cfg.synthetic.tokens, F = cfg.synthetic.feature_dim;
    Tensor encoded = reshape(matmul(reshape(batch.tokens, {B * T, F}), model.student.img_W),
                             {B, T, F});
    Tensor expected = pool_tokens(layer_norm(encoded));
    for (std::size_t k = 0; k < expected.numel(); ++k)
        CHECK(fwd.post_pooled.values()[k] ==
              doctest::Approx(expected.values()[k]).epsilon(1e-12));
}

TEST_CASE("timing report proportions and FPS identities") {
    RunConfig cfg = quick_run();
    TimingReport report = timing_report(cfg);
    REQUIRE(report.stages.size() == 4);
    CHECK(report.stages[0].stage == "preprocessing");
    CHECK(report.stages[1].stage == "inference");
    CHECK(report.stages[2].stage == "postprocessing");
    CHECK(report.stages[3].stage == "residual");
    double sum = 0.0;
    for (const TimingStage& s : report.stages) sum += s.proportion_pct;
    CHECK(std::abs(sum - 100.0) <= 0.1);
    CHECK(report.frames == cfg.synthetic.total_samples);
    CHECK(report.fps == doctest::Approx(1000.0 / report.total_ms_per_frame).epsilon(1e-9));
}

TEST_CASE("train-toy artifacts are written and reproducible") {
    RunConfig cfg = quick_run();
    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "realm_artifacts_test";
    std::filesystem::remove_all(dir);
    cfg.out_dir = (dir / "a").string();
    train_toy_run(cfg);
    cfg.out_dir = (dir / "b").string();
    train_toy_run(cfg);

    const char* names[] = {"telemetry.jsonl",     "params.json",
                           "attention.json",       "embeddings.jsonl",
                           "embeddings_stats.json", "final_metrics.json",
                           "run_config.json"};
    for (const char* name : names) {
        CAPTURE(name);
        std::string a = slurp(dir / "a" / name);
        std::string b = slurp(dir / "b" / name);
        CHECK(a == b);
        CHECK(!a.empty());
    }

    json metrics = json::parse(slurp(dir / "a" / "final_metrics.json"));
    CHECK(metrics.at("teacher_hash_before") == metrics.at("teacher_hash_after"));
    CHECK(metrics.at("ablation") == "full");

    json params = json::parse(slurp(dir / "a" / "params.json"));
    CHECK(params.contains("student.txt_W"));
    CHECK(params.contains("student.gmsaa.E"));
    CHECK(params.contains("teacher.dec_W"));
    std::vector<std::size_t> shape = params.at("student.txt_W").at("shape");
    CHECK(shape == std::vector<std::size_t>{16, 16});

    std::istringstream rows(slurp(dir / "a" / "embeddings.jsonl"));
    std::string line;
    std::size_t count = 0;
    while (std::getline(rows, line)) {
        json row = json::parse(line);
        CHECK(row.contains("scene_id"));
        CHECK(row.at("pre").size() == 16);
        CHECK(row.at("post").size() == 16);
        ++count;
    }
    CHECK(count == cfg.synthetic.total_samples);
    std::filesystem::remove_all(dir);
}

TEST_CASE("wo_mscl keeps the contrastive term out of the objective") {
    RunConfig cfg = quick_run();
    cfg.ablation = "wo_mscl";
    TrainResult result = train(cfg);
    for (const EpochTelemetry& row : result.telemetry) {
        CHECK(row.l_mscl == 0.0);
        CHECK(std::abs(row.l_total - (row.l_gen + 0.5 * row.l_kd)) <= 1e-10);
    }
}

TEST_CASE("param hash reacts to any value change") {
    RunConfig cfg = quick_run();
    ToyModel model = build_model(cfg);
    std::uint64_t before = param_hash(model.student.trainable_parameters());
    model.student.txt_b.values_mut()[0] += 1e-12;
    std::uint64_t after = param_hash(model.student.trainable_parameters());
    CHECK(before != after);
}

TEST_CASE("mean generation loss needs samples") {
    RunConfig cfg = quick_run();
    AblationFlags flags;
    ToyModel model = build_model(cfg);
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    CHECK_THROWS_AS(mean_generation_loss(model, data, {}, flags), ContractError);
    double loss = mean_generation_loss(model, data, {0, 1, 2}, flags);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
}
