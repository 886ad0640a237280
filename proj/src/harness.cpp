#include "realm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "realm/errors.hpp"
#include "realm/rng.hpp"

namespace realm {

using nlohmann::json;

void RunConfig::validate() const {
    synthetic.validate();
    gmsaa.validate();
    mscl.validate();
    objective.validate();
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(momentum >= 0.0) || !(momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (gmsaa.feature_dim != synthetic.feature_dim)
        throw ConfigError("gmsaa feature_dim must match synthetic feature_dim");
}

const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names = {
        "full",
        "wo_infrastructure_images",
        "wo_scene_description",
        "wo_gmsaa",
        "wo_mscl",
        "wo_orthogonal_init",
        "wo_snow_fog_separation",
        "wo_similarity_guidance",
        "wo_extractors",
        "wo_gating",
        "wo_scenario_weighting",
        "wo_scenario_awareness",
        "wo_text_image_discrimination",
    };
    return names;
}

AblationFlags resolve_ablation(RunConfig& cfg) {
    AblationFlags flags;
    const std::string& name = cfg.ablation;
    if (name == "full") {
    } else if (name == "wo_infrastructure_images") {
        flags.drop_infrastructure = true;
    } else if (name == "wo_scene_description") {
        flags.zero_descriptions = true;
    } else if (name == "wo_gmsaa") {
        flags.use_gmsaa = false;
    } else if (name == "wo_mscl") {
        flags.use_mscl = false;
        cfg.objective.alpha = 0.0;
    } else if (name == "wo_orthogonal_init") {
        cfg.gmsaa.orthogonal_embed_init = false;
    } else if (name == "wo_snow_fog_separation") {
        cfg.gmsaa.enable_snow_fog_penalty = false;
    } else if (name == "wo_similarity_guidance") {
        cfg.gmsaa.enable_similarity_guidance = false;
    } else if (name == "wo_extractors") {
        cfg.gmsaa.enable_extractors = false;
    } else if (name == "wo_gating") {
        cfg.gmsaa.enable_gating = false;
    } else if (name == "wo_scenario_weighting") {
        cfg.mscl.weighting_enabled = false;
    } else if (name == "wo_scenario_awareness") {
        cfg.mscl.scenario_term_enabled = false;
    } else if (name == "wo_text_image_discrimination") {
        cfg.mscl.modality_term_enabled = false;
    } else {
        throw ConfigError("unknown ablation: " + name);
    }
    return flags;
}

namespace {

double get_double(const json& j, const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
    return j.contains(key) ? j.at(key).get<std::size_t>() : fallback;
}

bool get_bool(const json& j, const char* key, bool fallback) {
    return j.contains(key) ? j.at(key).get<bool>() : fallback;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown config key " + where + "." + it.key());
    }
}

} // namespace

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("unparseable run config: ") + e.what());
    }
    check_keys(j,
               {"seed", "epochs", "batch_size", "learning_rate", "momentum", "ablation",
                "out_dir", "synthetic", "gmsaa", "mscl", "objective"},
               "");

    RunConfig cfg;
    cfg.seed = j.contains("seed") ? j.at("seed").get<std::uint64_t>() : cfg.seed;
    cfg.epochs = get_size(j, "epochs", cfg.epochs);
    cfg.batch_size = get_size(j, "batch_size", cfg.batch_size);
    cfg.learning_rate = get_double(j, "learning_rate", cfg.learning_rate);
    cfg.momentum = get_double(j, "momentum", cfg.momentum);
    if (j.contains("ablation")) cfg.ablation = j.at("ablation").get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();

    cfg.synthetic.seed = cfg.seed;
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        check_keys(s,
                   {"feature_dim", "tokens", "total_samples", "imbalance_ratio", "noise_sigma",
                    "base_level", "center_offset", "view_offset", "seed", "vocab", "seq_len"},
                   "synthetic");
        cfg.synthetic.feature_dim = get_size(s, "feature_dim", cfg.synthetic.feature_dim);
        cfg.synthetic.tokens = get_size(s, "tokens", cfg.synthetic.tokens);
        cfg.synthetic.total_samples = get_size(s, "total_samples", cfg.synthetic.total_samples);
        cfg.synthetic.imbalance_ratio =
            get_double(s, "imbalance_ratio", cfg.synthetic.imbalance_ratio);
        cfg.synthetic.noise_sigma = get_double(s, "noise_sigma", cfg.synthetic.noise_sigma);
        cfg.synthetic.base_level = get_double(s, "base_level", cfg.synthetic.base_level);
        cfg.synthetic.center_offset = get_double(s, "center_offset", cfg.synthetic.center_offset);
        cfg.synthetic.view_offset = get_double(s, "view_offset", cfg.synthetic.view_offset);
        if (s.contains("seed")) cfg.synthetic.seed = s.at("seed").get<std::uint64_t>();
        cfg.synthetic.vocab = get_size(s, "vocab", cfg.synthetic.vocab);
        cfg.synthetic.seq_len = get_size(s, "seq_len", cfg.synthetic.seq_len);
    }
    if (j.contains("gmsaa")) {
        const json& g = j.at("gmsaa");
        check_keys(g,
                   {"feature_dim", "hidden1", "hidden2", "temperature", "blend_lambda",
                    "self_bias", "similarity_init", "embed_init_scale", "fusion_enhanced",
                    "fusion_raw", "enable_snow_fog_penalty", "enable_similarity_guidance",
                    "enable_extractors", "enable_gating", "orthogonal_embed_init"},
                   "gmsaa");
        cfg.gmsaa.feature_dim = get_size(g, "feature_dim", cfg.synthetic.feature_dim);
        cfg.gmsaa.hidden1 = get_size(g, "hidden1", cfg.gmsaa.hidden1);
        cfg.gmsaa.hidden2 = get_size(g, "hidden2", cfg.gmsaa.hidden2);
        cfg.gmsaa.temperature = get_double(g, "temperature", cfg.gmsaa.temperature);
        cfg.gmsaa.blend_lambda = get_double(g, "blend_lambda", cfg.gmsaa.blend_lambda);
        if (g.contains("self_bias")) cfg.gmsaa.self_bias = g.at("self_bias").get<std::vector<double>>();
        if (g.contains("similarity_init"))
            cfg.gmsaa.similarity_init = g.at("similarity_init").get<std::vector<double>>();
        cfg.gmsaa.embed_init_scale = get_double(g, "embed_init_scale", cfg.gmsaa.embed_init_scale);
        cfg.gmsaa.fusion_enhanced = get_double(g, "fusion_enhanced", cfg.gmsaa.fusion_enhanced);
        cfg.gmsaa.fusion_raw = get_double(g, "fusion_raw", cfg.gmsaa.fusion_raw);
        cfg.gmsaa.enable_snow_fog_penalty =
            get_bool(g, "enable_snow_fog_penalty", cfg.gmsaa.enable_snow_fog_penalty);
        cfg.gmsaa.enable_similarity_guidance =
            get_bool(g, "enable_similarity_guidance", cfg.gmsaa.enable_similarity_guidance);
        cfg.gmsaa.enable_extractors = get_bool(g, "enable_extractors", cfg.gmsaa.enable_extractors);
        cfg.gmsaa.enable_gating = get_bool(g, "enable_gating", cfg.gmsaa.enable_gating);
        cfg.gmsaa.orthogonal_embed_init =
            get_bool(g, "orthogonal_embed_init", cfg.gmsaa.orthogonal_embed_init);
    } else {
        cfg.gmsaa.feature_dim = cfg.synthetic.feature_dim;
    }
    if (j.contains("mscl")) {
        const json& m = j.at("mscl");
        check_keys(m,
                   {"tau_mod", "tau_d", "lambda_d", "weighting_enabled", "scenario_term_enabled",
                    "modality_term_enabled"},
                   "mscl");
        cfg.mscl.tau_mod = get_double(m, "tau_mod", cfg.mscl.tau_mod);
        cfg.mscl.tau_d = get_double(m, "tau_d", cfg.mscl.tau_d);
        cfg.mscl.lambda_d = get_double(m, "lambda_d", cfg.mscl.lambda_d);
        cfg.mscl.weighting_enabled = get_bool(m, "weighting_enabled", cfg.mscl.weighting_enabled);
        cfg.mscl.scenario_term_enabled =
            get_bool(m, "scenario_term_enabled", cfg.mscl.scenario_term_enabled);
        cfg.mscl.modality_term_enabled =
            get_bool(m, "modality_term_enabled", cfg.mscl.modality_term_enabled);
    }
    if (j.contains("objective")) {
        const json& o = j.at("objective");
        check_keys(o, {"alpha", "beta", "tau_kd", "kd_mean_reduction"}, "objective");
        cfg.objective.alpha = get_double(o, "alpha", cfg.objective.alpha);
        cfg.objective.beta = get_double(o, "beta", cfg.objective.beta);
        cfg.objective.tau_kd = get_double(o, "tau_kd", cfg.objective.tau_kd);
        cfg.objective.kd_mean_reduction =
            get_bool(o, "kd_mean_reduction", cfg.objective.kd_mean_reduction);
    }
    cfg.validate();
    return cfg;
}

// out_dir is deliberately not serialized: runs differing only in destination
// must write byte-identical artifacts.
std::string run_config_json(const RunConfig& cfg) {
    json j = {
        {"seed", cfg.seed},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"momentum", cfg.momentum},
        {"ablation", cfg.ablation},
        {"synthetic",
         {{"feature_dim", cfg.synthetic.feature_dim},
          {"tokens", cfg.synthetic.tokens},
          {"total_samples", cfg.synthetic.total_samples},
          {"imbalance_ratio", cfg.synthetic.imbalance_ratio},
          {"noise_sigma", cfg.synthetic.noise_sigma},
          {"base_level", cfg.synthetic.base_level},
          {"center_offset", cfg.synthetic.center_offset},
          {"view_offset", cfg.synthetic.view_offset},
          {"seed", cfg.synthetic.seed},
          {"vocab", cfg.synthetic.vocab},
          {"seq_len", cfg.synthetic.seq_len}}},
        {"gmsaa",
         {{"feature_dim", cfg.gmsaa.feature_dim},
          {"hidden1", cfg.gmsaa.hidden1},
          {"hidden2", cfg.gmsaa.hidden2},
          {"temperature", cfg.gmsaa.temperature},
          {"blend_lambda", cfg.gmsaa.blend_lambda},
          {"self_bias", cfg.gmsaa.self_bias},
          {"similarity_init", cfg.gmsaa.similarity_init},
          {"embed_init_scale", cfg.gmsaa.embed_init_scale},
          {"fusion_enhanced", cfg.gmsaa.fusion_enhanced},
          {"fusion_raw", cfg.gmsaa.fusion_raw},
          {"enable_snow_fog_penalty", cfg.gmsaa.enable_snow_fog_penalty},
          {"enable_similarity_guidance", cfg.gmsaa.enable_similarity_guidance},
          {"enable_extractors", cfg.gmsaa.enable_extractors},
          {"enable_gating", cfg.gmsaa.enable_gating},
          {"orthogonal_embed_init", cfg.gmsaa.orthogonal_embed_init}}},
        {"mscl",
         {{"tau_mod", cfg.mscl.tau_mod},
          {"tau_d", cfg.mscl.tau_d},
          {"lambda_d", cfg.mscl.lambda_d},
          {"weighting_enabled", cfg.mscl.weighting_enabled},
          {"scenario_term_enabled", cfg.mscl.scenario_term_enabled},
          {"modality_term_enabled", cfg.mscl.modality_term_enabled}}},
        {"objective",
         {{"alpha", cfg.objective.alpha},
          {"beta", cfg.objective.beta},
          {"tau_kd", cfg.objective.tau_kd},
          {"kd_mean_reduction", cfg.objective.kd_mean_reduction}}},
    };
    return j.dump(2);
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in.good()) throw ConfigError("cannot open config file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        cfg = run_config_from_json(ss.str());
    } else {
        cfg.gmsaa.feature_dim = cfg.synthetic.feature_dim;
        cfg.validate();
    }
    if (const char* env = std::getenv("REALM_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') throw ConfigError("REALM_SEED must be an integer");
        cfg.seed = static_cast<std::uint64_t>(v);
        cfg.synthetic.seed = cfg.seed;
    }
    return cfg;
}

namespace {

Tensor linear_weight(Rng& rng, std::size_t in, std::size_t out) {
    std::vector<double> w(in * out);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : w) x = rng.gaussian(0.0, scale);
    return Tensor({in, out}, std::move(w), true);
}

Tensor frozen_weight(Rng& rng, std::size_t in, std::size_t out) {
    std::vector<double> w(in * out);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& x : w) x = rng.gaussian(0.0, scale);
    return Tensor({in, out}, std::move(w), false);
}

Tensor bias_row(std::size_t out, double value, bool requires_grad) {
    return Tensor({1, out}, std::vector<double>(out, value), requires_grad);
}

} // namespace

std::vector<std::pair<std::string, Tensor>> TeacherParams::named_parameters() const {
    return {
        {"teacher.img_W", img_W},   {"teacher.txt_W", txt_W},   {"teacher.txt_b", txt_b},
        {"teacher.fuse_v", fuse_v}, {"teacher.fuse_t", fuse_t}, {"teacher.fuse_b", fuse_b},
        {"teacher.dec_W", dec_W},   {"teacher.dec_b", dec_b},
    };
}

std::vector<std::pair<std::string, Tensor>> StudentParams::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out = {{"student.img_W", img_W}};
    auto trainable = trainable_parameters();
    out.insert(out.end(), trainable.begin(), trainable.end());
    return out;
}

std::vector<std::pair<std::string, Tensor>> StudentParams::trainable_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out = {
        {"student.txt_W", txt_W}, {"student.txt_b", txt_b},
    };
    for (const auto& [name, t] : gmsaa.named_parameters()) out.emplace_back("student." + name, t);
    out.emplace_back("student.v_W", v_W);
    out.emplace_back("student.h_W", h_W);
    out.emplace_back("student.fuse_v", fuse_v);
    out.emplace_back("student.fuse_t", fuse_t);
    out.emplace_back("student.fuse_b", fuse_b);
    out.emplace_back("student.dec_W", dec_W);
    out.emplace_back("student.dec_b", dec_b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> ToyModel::named_parameters() const {
    auto out = student.named_parameters();
    auto t = teacher.named_parameters();
    out.insert(out.end(), t.begin(), t.end());
    return out;
}

ToyModel build_model(const RunConfig& run) {
    ToyModel model;
    model.gmsaa_cfg = run.gmsaa;
    model.feature_dim = run.synthetic.feature_dim;
    model.vocab = run.synthetic.vocab;
    model.seq_len = run.synthetic.seq_len;
    std::size_t F = model.feature_dim;
    std::size_t KV = model.seq_len * model.vocab;

    Rng rng(splitmix64(run.seed ^ 0x73747564656e74ULL));
    model.student.img_W = frozen_weight(rng, F, F);
    model.student.txt_W = linear_weight(rng, F, F);
    // non-zero bias keeps text embeddings off the zero row even when
    // descriptions are ablated away
    model.student.txt_b = bias_row(F, 0.05, true);
    model.student.gmsaa = gmsaa_init(run.gmsaa, run.seed ^ 0x676d73ULL);
    model.student.v_W = linear_weight(rng, F, F);
    model.student.h_W = linear_weight(rng, F, F);
    model.student.fuse_v = linear_weight(rng, F, F);
    model.student.fuse_t = linear_weight(rng, F, F);
    model.student.fuse_b = bias_row(F, 0.0, true);
    model.student.dec_W = linear_weight(rng, F, KV);
    model.student.dec_b = bias_row(KV, 0.0, true);

    std::size_t wide = 2 * F;
    Rng trng(splitmix64(run.seed ^ 0x7465616368657221ULL));
    model.teacher.img_W = frozen_weight(trng, F, F);
    model.teacher.txt_W = frozen_weight(trng, F, F);
    model.teacher.txt_b = bias_row(F, 0.05, false);
    model.teacher.fuse_v = frozen_weight(trng, F, wide);
    model.teacher.fuse_t = frozen_weight(trng, F, wide);
    model.teacher.fuse_b = bias_row(wide, 0.0, false);
    model.teacher.dec_W = frozen_weight(trng, wide, KV);
    model.teacher.dec_b = bias_row(KV, 0.0, false);
    return model;
}

std::uint64_t param_hash(const std::vector<std::pair<std::string, Tensor>>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* data, std::size_t len) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, t] : params) {
        mix(name.data(), name.size());
        for (double v : t.values()) mix(&v, sizeof(v));
    }
    return h;
}

std::string params_json(const ToyModel& model) {
    json j = json::object();
    for (const auto& [name, t] : model.named_parameters()) {
        json shape = json::array();
        for (std::size_t d : t.shape()) shape.push_back(d);
        j[name] = {{"shape", shape}, {"values", t.values()}};
    }
    return j.dump();
}

BatchData assemble_batch(const SyntheticDataset& data, const std::vector<std::size_t>& idx,
                         const AblationFlags& flags) {
    if (idx.empty()) throw ContractError("batch must be non-empty");
    std::size_t T = data.cfg.tokens, F = data.cfg.feature_dim;
    BatchData batch;
    batch.sample_indices = idx;
    std::vector<double> tok(idx.size() * T * F);
    std::vector<double> desc(idx.size() * F);
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const SyntheticSample& s = data.samples.at(idx[b]);
        const std::vector<double>& tv = s.tokens.values();
        for (std::size_t t = 0; t < T; ++t) {
            bool dropped = flags.drop_infrastructure && t >= T / 2;
            for (std::size_t f = 0; f < F; ++f)
                tok[(b * T + t) * F + f] = dropped ? 0.0 : tv[t * F + f];
        }
        const std::vector<double>& dv = s.desc.values();
        for (std::size_t f = 0; f < F; ++f)
            desc[b * F + f] = flags.zero_descriptions ? 0.0 : dv[f];
        batch.labels.push_back(s.label);
    }
    batch.tokens = Tensor({idx.size(), T, F}, std::move(tok));
    batch.desc = Tensor({idx.size(), F}, std::move(desc));
    return batch;
}

namespace {

// Row b of a matrix as a differentiable 1 x cols slice.
Tensor select_row(const Tensor& m, std::size_t row) {
    std::size_t rows = m.shape()[0];
    std::vector<double> onehot(rows, 0.0);
    onehot.at(row) = 1.0;
    return matmul(Tensor({1, rows}, std::move(onehot)), m);
}

// B x T x F tokens through a per-token linear map.
Tensor encode_tokens(const Tensor& z, const Tensor& W) {
    std::size_t B = z.shape()[0], T = z.shape()[1], F = z.shape()[2];
    Tensor flat = reshape(z, {B * T, F});
    return reshape(matmul(flat, W), {B, T, W.shape()[1]});
}

} // namespace

ForwardResult model_forward(const ToyModel& model, const BatchData& batch,
                            const AblationFlags& flags) {
    std::size_t B = batch.tokens.shape()[0];
    ForwardResult out;

    Tensor encoded = encode_tokens(batch.tokens, model.student.img_W);
    out.pre_pooled = pool_tokens(encoded);

    Tensor recalibrated = encoded;
    if (flags.use_gmsaa) {
        GmsaaOutput g = gmsaa_forward(encoded, batch.labels, model.student.gmsaa, model.gmsaa_cfg);
        recalibrated = g.tokens;
        out.trace = g.trace;
        out.has_trace = true;
    }
    out.post_pooled = pool_tokens(recalibrated);

    Tensor h_emb = add(matmul(batch.desc, model.student.txt_W), model.student.txt_b);
    out.v = l2_normalize_rows(matmul(out.post_pooled, model.student.v_W));
    out.h = l2_normalize_rows(matmul(h_emb, model.student.h_W));

    Tensor fused = realm::tanh(add(add(matmul(out.post_pooled, model.student.fuse_v),
                                   matmul(h_emb, model.student.fuse_t)),
                               model.student.fuse_b));
    Tensor logits_flat = add(matmul(fused, model.student.dec_W), model.student.dec_b);

    Tensor t_enc = encode_tokens(batch.tokens, model.teacher.img_W);
    Tensor t_pooled = pool_tokens(t_enc);
    Tensor t_h = add(matmul(batch.desc, model.teacher.txt_W), model.teacher.txt_b);
    Tensor t_fused = realm::tanh(add(add(matmul(t_pooled, model.teacher.fuse_v),
                                     matmul(t_h, model.teacher.fuse_t)),
                                 model.teacher.fuse_b));
    Tensor t_logits_flat = add(matmul(t_fused, model.teacher.dec_W), model.teacher.dec_b);

    for (std::size_t b = 0; b < B; ++b) {
        Tensor row = reshape(select_row(logits_flat, b), {model.seq_len, model.vocab});
        out.student_seq.push_back(LogitsSequence{row, {}});
        out.teacher_logits.push_back(
            reshape(select_row(t_logits_flat, b), {model.seq_len, model.vocab}));
    }
    return out;
}

LossBreakdown compute_losses(const ForwardResult& fwd, const BatchData& batch,
                             const RunConfig& run, const AblationFlags& flags) {
    std::size_t B = batch.labels.size();
    double inv_b = 1.0 / static_cast<double>(B);

    Tensor gen_sum, kd_sum;
    for (std::size_t b = 0; b < B; ++b) {
        LogitsSequence seq = fwd.student_seq[b];
        seq.targets = scenario_targets(batch.labels[b], seq.steps.shape()[0],
                                       seq.steps.shape()[1]);
        Tensor g = generation_loss(seq);
        Tensor k = distillation_loss(fwd.student_seq[b].steps, fwd.teacher_logits[b],
                                     run.objective.tau_kd, run.objective.kd_mean_reduction);
        gen_sum = b == 0 ? g : add(gen_sum, g);
        kd_sum = b == 0 ? k : add(kd_sum, k);
    }

    LossBreakdown loss;
    loss.gen = mul_scalar(gen_sum, inv_b);
    loss.kd = mul_scalar(kd_sum, inv_b);
    loss.mscl = flags.use_mscl
                    ? mscl_loss(EmbeddingBatch{fwd.v, fwd.h, batch.labels}, run.mscl).total
                    : Tensor::scalar(0.0);
    loss.total = total_loss(loss.gen, loss.mscl, loss.kd, run.objective);
    return loss;
}

std::string telemetry_json(const EpochTelemetry& row) {
    json j = {
        {"epoch", row.epoch}, {"l_total", row.l_total}, {"l_gen", row.l_gen},
        {"l_mscl", row.l_mscl}, {"l_kd", row.l_kd},
    };
    return j.dump();
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        std::size_t end = std::min(order.size(), start + batch_size);
        if (end - start < 2) break; // pairwise losses need at least two samples
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

class SgdMomentum {
public:
    SgdMomentum(std::vector<std::pair<std::string, Tensor>> params, double lr, double momentum)
        : params_(std::move(params)), lr_(lr), momentum_(momentum) {
        velocity_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i)
            velocity_[i].assign(params_[i].second.numel(), 0.0);
    }

    void step() {
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i].second;
            if (!p.has_grad()) continue;
            const std::vector<double>& g = p.grad();
            std::vector<double>& vel = velocity_[i];
            std::vector<double>& val = p.values_mut();
            for (std::size_t k = 0; k < val.size(); ++k) {
                vel[k] = momentum_ * vel[k] + g[k];
                val[k] -= lr_ * vel[k];
            }
            p.clear_grad();
        }
    }

private:
    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::vector<double>> velocity_;
    double lr_;
    double momentum_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out.good()) throw Error("cannot write " + path.string());
    out << text;
}

} // namespace

AttentionAggregate export_attention(const ToyModel& model, const SyntheticDataset& data,
                                    const AblationFlags& flags, std::size_t batch_size) {
    if (!flags.use_gmsaa)
        throw ConfigError("attention export requires the attention block to be enabled");
    AttentionAggregate agg;
    std::array<std::array<double, kScenarioCount>, kScenarioCount> sums{};

    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (std::size_t start = 0; start < all.size(); start += batch_size) {
        std::size_t end = std::min(all.size(), start + batch_size);
        std::vector<std::size_t> idx(all.begin() + start, all.begin() + end);
        BatchData batch = assemble_batch(data, idx, flags);
        ForwardResult fwd = model_forward(model, batch, flags);
        const std::vector<double>& w = fwd.trace.blended.values();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            auto d = static_cast<std::size_t>(batch.labels[b]);
            for (std::size_t c = 0; c < kScenarioCount; ++c)
                sums[d][c] += w[b * kScenarioCount + c];
            ++agg.counts[d];
        }
    }
    for (std::size_t d = 0; d < kScenarioCount; ++d)
        for (std::size_t c = 0; c < kScenarioCount; ++c)
            agg.rows[d][c] = agg.counts[d] ? sums[d][c] / static_cast<double>(agg.counts[d]) : 0.0;
    return agg;
}

std::string attention_aggregate_json(const AttentionAggregate& agg) {
    json rows = json::object();
    json counts = json::object();
    for (Scenario d : kAllScenarios) {
        auto di = static_cast<std::size_t>(d);
        rows[scenario_name(d)] = agg.rows[di];
        counts[scenario_name(d)] = agg.counts[di];
    }
    return json{{"rows", rows}, {"counts", counts}}.dump(2);
}

namespace {

EmbeddingStageStats pairwise_stats(const std::vector<EmbeddingRow>& rows, bool post) {
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        double denom = std::sqrt(na) * std::sqrt(nb);
        if (denom == 0.0) throw DomainError("zero embedding in cosine statistics");
        return dot / denom;
    };
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            double c = cosine(post ? rows[i].post : rows[i].pre,
                              post ? rows[j].post : rows[j].pre);
            if (rows[i].label == rows[j].label) {
                intra += c;
                ++n_intra;
            } else {
                inter += c;
                ++n_inter;
            }
        }
    }
    EmbeddingStageStats stats;
    stats.mean_intra = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
    stats.mean_inter = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
    return stats;
}

} // namespace

EmbeddingExport export_embeddings(const ToyModel& model, const SyntheticDataset& data,
                                  const AblationFlags& flags, std::size_t batch_size) {
    EmbeddingExport ex;
    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    std::size_t F = model.feature_dim;
    for (std::size_t start = 0; start < all.size(); start += batch_size) {
        std::size_t end = std::min(all.size(), start + batch_size);
        std::vector<std::size_t> idx(all.begin() + start, all.begin() + end);
        BatchData batch = assemble_batch(data, idx, flags);
        ForwardResult fwd = model_forward(model, batch, flags);
        const std::vector<double>& pre = fwd.pre_pooled.values();
        const std::vector<double>& post = fwd.post_pooled.values();
        for (std::size_t b = 0; b < idx.size(); ++b) {
            EmbeddingRow row;
            row.scene_id = data.samples[idx[b]].scene_id;
            row.label = batch.labels[b];
            row.pre.assign(pre.begin() + b * F, pre.begin() + (b + 1) * F);
            row.post.assign(post.begin() + b * F, post.begin() + (b + 1) * F);
            ex.rows.push_back(std::move(row));
        }
    }
    ex.pre = pairwise_stats(ex.rows, false);
    ex.post = pairwise_stats(ex.rows, true);
    return ex;
}

std::string embedding_row_json(const EmbeddingRow& row) {
    json j = {
        {"scene_id", row.scene_id},
        {"label", static_cast<std::size_t>(row.label)},
        {"pre", row.pre},
        {"post", row.post},
    };
    return j.dump();
}

std::string embedding_stats_json(const EmbeddingExport& ex) {
    json j = {
        {"pre",
         {{"mean_intra", ex.pre.mean_intra},
          {"mean_inter", ex.pre.mean_inter},
          {"separation", ex.pre.separation()}}},
        {"post",
         {{"mean_intra", ex.post.mean_intra},
          {"mean_inter", ex.post.mean_inter},
          {"separation", ex.post.separation()}}},
    };
    return j.dump(2);
}

double mean_generation_loss(const ToyModel& model, const SyntheticDataset& data,
                            const std::vector<std::size_t>& idx, const AblationFlags& flags,
                            std::size_t batch_size) {
    if (idx.empty()) throw ContractError("generation loss needs at least one sample");
    double sum = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += batch_size) {
        std::size_t end = std::min(idx.size(), start + batch_size);
        std::vector<std::size_t> chunk(idx.begin() + start, idx.begin() + end);
        BatchData batch = assemble_batch(data, chunk, flags);
        ForwardResult fwd = model_forward(model, batch, flags);
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            LogitsSequence seq = fwd.student_seq[b];
            seq.targets = scenario_targets(batch.labels[b], model.seq_len, model.vocab);
            sum += generation_loss(seq).value();
        }
    }
    return sum / static_cast<double>(idx.size());
}

TrainResult train(const RunConfig& cfg_in, const std::string& dump_dir) {
    RunConfig cfg = cfg_in;
    AblationFlags flags = resolve_ablation(cfg);
    cfg.validate();

    TrainResult result;
    result.flags = flags;
    result.data = generate_synthetic(cfg.synthetic);
    auto [train_idx, held_idx] = split_indices(result.data);
    if (train_idx.size() < 2) throw ContractError("training split too small");

    result.model = build_model(cfg);
    result.teacher_hash_before = param_hash(result.model.teacher.named_parameters());

    SgdMomentum opt(result.model.student.trainable_parameters(), cfg.learning_rate,
                    cfg.momentum);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order = train_idx;
        Rng shuffle(splitmix64(cfg.seed ^ (0x65706f6368ULL + epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.index(i)]);

        EpochTelemetry row;
        row.epoch = epoch;
        std::size_t batches = 0;
        for (const std::vector<std::size_t>& idx : make_batches(order, cfg.batch_size)) {
            BatchData batch = assemble_batch(result.data, idx, flags);
            // Divergence surfaces either as a non-finite total or as a domain
            // failure deeper in the forward pass (log or normalization of
            // poisoned values); both get the same diagnostic dump.
            try {
                ForwardResult fwd = model_forward(result.model, batch, flags);
                LossBreakdown loss = compute_losses(fwd, batch, cfg, flags);
                double total = loss.total.value();
                if (!std::isfinite(total))
                    throw DomainError("loss is " + std::to_string(total));

                row.l_total += total;
                row.l_gen += loss.gen.value();
                row.l_mscl += loss.mscl.value();
                row.l_kd += loss.kd.value();

                loss.total.backward();
                opt.step();
            } catch (const DomainError& e) {
                json dump = {
                    {"epoch", epoch},
                    {"batch", batches},
                    {"error", e.what()},
                };
                json scenes = json::array();
                for (std::size_t i : idx) scenes.push_back(result.data.samples[i].scene_id);
                dump["scene_ids"] = scenes;
                if (!dump_dir.empty()) {
                    std::filesystem::create_directories(dump_dir);
                    write_text(std::filesystem::path(dump_dir) / "abort_dump.json",
                               dump.dump(2));
                }
                throw DomainError("training aborted at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batches) + ": " + e.what());
            }
            ++batches;
        }
        double inv = 1.0 / static_cast<double>(batches);
        row.l_total *= inv;
        row.l_gen *= inv;
        row.l_mscl *= inv;
        row.l_kd *= inv;
        result.telemetry.push_back(row);
    }

    result.teacher_hash_after = param_hash(result.model.teacher.named_parameters());
    result.heldout_count = held_idx.size();
    result.heldout_gen_loss = held_idx.empty()
                                  ? 0.0
                                  : mean_generation_loss(result.model, result.data, held_idx,
                                                         flags, cfg.batch_size);
    if (flags.use_gmsaa) {
        result.attention = export_attention(result.model, result.data, flags, cfg.batch_size);
        result.has_attention = true;
    }
    result.embeddings = export_embeddings(result.model, result.data, flags, cfg.batch_size);
    return result;
}

TrainResult train_toy_run(const RunConfig& cfg) {
    std::filesystem::create_directories(cfg.out_dir);
    TrainResult result = train(cfg, cfg.out_dir);
    std::filesystem::path out(cfg.out_dir);

    std::ostringstream telemetry;
    for (const EpochTelemetry& row : result.telemetry) telemetry << telemetry_json(row) << "\n";
    write_text(out / "telemetry.jsonl", telemetry.str());

    write_text(out / "params.json", params_json(result.model));
    if (result.has_attention)
        write_text(out / "attention.json", attention_aggregate_json(result.attention));

    std::ostringstream rows;
    for (const EmbeddingRow& row : result.embeddings.rows)
        rows << embedding_row_json(row) << "\n";
    write_text(out / "embeddings.jsonl", rows.str());
    write_text(out / "embeddings_stats.json", embedding_stats_json(result.embeddings));

    char hash_before[24], hash_after[24];
    std::snprintf(hash_before, sizeof(hash_before), "%016llx",
                  static_cast<unsigned long long>(result.teacher_hash_before));
    std::snprintf(hash_after, sizeof(hash_after), "%016llx",
                  static_cast<unsigned long long>(result.teacher_hash_after));
    json metrics = {
        {"ablation", cfg.ablation},
        {"epochs", cfg.epochs},
        {"heldout_gen_loss", result.heldout_gen_loss},
        {"heldout_count", result.heldout_count},
        {"final_train_total", result.telemetry.back().l_total},
        {"final_train_gen", result.telemetry.back().l_gen},
        {"teacher_hash_before", hash_before},
        {"teacher_hash_after", hash_after},
        {"pre_separation", result.embeddings.pre.separation()},
        {"post_separation", result.embeddings.post.separation()},
    };
    write_text(out / "final_metrics.json", metrics.dump(2));
    write_text(out / "run_config.json", run_config_json(cfg));
    return result;
}

TimingReport timing_report(const RunConfig& cfg_in) {
    RunConfig cfg = cfg_in;
    AblationFlags flags = resolve_ablation(cfg);
    cfg.validate();

    using clock = std::chrono::steady_clock;
    using ms = std::chrono::duration<double, std::milli>;
    auto t_begin = clock::now();

    ToyModel model = build_model(cfg);

    auto t0 = clock::now();
    SyntheticDataset data = generate_synthetic(cfg.synthetic);
    auto t1 = clock::now();

    std::vector<std::size_t> all(data.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    for (std::size_t start = 0; start < all.size(); start += cfg.batch_size) {
        std::size_t end = std::min(all.size(), start + cfg.batch_size);
        std::vector<std::size_t> idx(all.begin() + start, all.begin() + end);
        BatchData batch = assemble_batch(data, idx, flags);
        model_forward(model, batch, flags);
    }
    auto t2 = clock::now();

    if (flags.use_gmsaa) attention_aggregate_json(export_attention(model, data, flags));
    embedding_stats_json(export_embeddings(model, data, flags));
    auto t3 = clock::now();

    double pre_ms = ms(t1 - t0).count();
    double inf_ms = ms(t2 - t1).count();
    double post_ms = ms(t3 - t2).count();
    double total_ms = ms(t3 - t_begin).count();
    double residual = total_ms - pre_ms - inf_ms - post_ms;
    if (residual < 0.0) residual = 0.0;
    total_ms = pre_ms + inf_ms + post_ms + residual;

    TimingReport report;
    report.frames = data.samples.size();
    report.stages = {
        {"preprocessing", pre_ms, 0.0},
        {"inference", inf_ms, 0.0},
        {"postprocessing", post_ms, 0.0},
        {"residual", residual, 0.0},
    };
    for (TimingStage& s : report.stages)
        s.proportion_pct = total_ms > 0.0 ? s.milliseconds / total_ms * 100.0 : 25.0;
    report.total_ms_per_frame = total_ms / static_cast<double>(report.frames);
    report.fps = 1000.0 / report.total_ms_per_frame;
    return report;
}

std::string timing_report_json(const TimingReport& report) {
    json stages = json::array();
    for (const TimingStage& s : report.stages)
        stages.push_back({{"stage", s.stage},
                          {"milliseconds", s.milliseconds},
                          {"proportion_pct", s.proportion_pct}});
    json j = {
        {"stages", stages},
        {"frames", report.frames},
        {"total_ms_per_frame", report.total_ms_per_frame},
        {"fps", report.fps},
    };
    return j.dump(2);
}

} // namespace realm
