#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "realm/gmsaa.hpp"
#include "realm/mscl.hpp"
#include "realm/objectives.hpp"
#include "realm/synthetic.hpp"
#include "realm/trajeval.hpp"

namespace realm {

// One flag set per published ablation row.
struct AblationFlags {
    bool use_gmsaa = true;
    bool use_mscl = true;
    bool drop_infrastructure = false;
    bool zero_descriptions = false;
};

struct RunConfig {
    SyntheticConfig synthetic;
    GmsaaConfig gmsaa;
    MsclConfig mscl;
    ObjectiveConfig objective;
    std::size_t epochs = 100;
    std::size_t batch_size = 4;
    double learning_rate = 0.02; // toy-scale; the production setting is 1e-6
    double momentum = 0.9;
    std::uint64_t seed = 13;
    std::string ablation = "full";
    std::string out_dir = "out";

    void validate() const;
};

const std::vector<std::string>& ablation_names();

// Applies cfg.ablation to the nested configs and returns the runtime flags.
// Unknown names are refused.
AblationFlags resolve_ablation(RunConfig& cfg);

// Partial overrides on top of defaults; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_json(const RunConfig& cfg);
// Loads the config file (defaults when path is empty) and applies the
// REALM_SEED environment override to both model and data seeds.
RunConfig load_run_config(const std::string& path);

// Frozen wide stack distilled from during training.
struct TeacherParams {
    Tensor img_W;
    Tensor txt_W, txt_b;
    Tensor fuse_v, fuse_t, fuse_b;
    Tensor dec_W, dec_b;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

struct StudentParams {
    Tensor img_W; // frozen image encoder
    Tensor txt_W, txt_b;
    GmsaaParams gmsaa;
    Tensor v_W, h_W; // contrastive projections
    Tensor fuse_v, fuse_t, fuse_b;
    Tensor dec_W, dec_b;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<std::pair<std::string, Tensor>> trainable_parameters() const;
};

struct ToyModel {
    StudentParams student;
    TeacherParams teacher;
    GmsaaConfig gmsaa_cfg;
    std::size_t feature_dim = 16;
    std::size_t vocab = 16;
    std::size_t seq_len = 6;

    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
};

ToyModel build_model(const RunConfig& run);

// FNV-1a over the raw bytes of every parameter value in declaration order.
std::uint64_t param_hash(const std::vector<std::pair<std::string, Tensor>>& params);

std::string params_json(const ToyModel& model);

struct BatchData {
    Tensor tokens; // B x T x F
    Tensor desc;   // B x F
    std::vector<Scenario> labels;
    std::vector<std::size_t> sample_indices;
};

BatchData assemble_batch(const SyntheticDataset& data, const std::vector<std::size_t>& idx,
                         const AblationFlags& flags);

struct ForwardResult {
    Tensor pre_pooled;  // B x F, before scenario recalibration
    Tensor post_pooled; // B x F, after
    Tensor v, h;        // normalized contrastive embeddings
    std::vector<LogitsSequence> student_seq; // per sample, seq_len x vocab
    std::vector<Tensor> teacher_logits;      // per sample, seq_len x vocab
    AttentionTrace trace; // defined only when the attention block ran
    bool has_trace = false;
};

ForwardResult model_forward(const ToyModel& model, const BatchData& batch,
                            const AblationFlags& flags);

struct LossBreakdown {
    Tensor total, gen, mscl, kd;
};

LossBreakdown compute_losses(const ForwardResult& fwd, const BatchData& batch,
                             const RunConfig& run, const AblationFlags& flags);

struct EpochTelemetry {
    std::size_t epoch = 0;
    double l_total = 0.0, l_gen = 0.0, l_mscl = 0.0, l_kd = 0.0;
};

std::string telemetry_json(const EpochTelemetry& row);

struct AttentionAggregate {
    // rows[d] = mean blended attention over samples labeled d
    std::array<std::array<double, kScenarioCount>, kScenarioCount> rows{};
    std::array<std::size_t, kScenarioCount> counts{};
};

AttentionAggregate export_attention(const ToyModel& model, const SyntheticDataset& data,
                                    const AblationFlags& flags, std::size_t batch_size = 4);
std::string attention_aggregate_json(const AttentionAggregate& agg);

struct EmbeddingStageStats {
    double mean_intra = 0.0;
    double mean_inter = 0.0;
    double separation() const { return mean_intra - mean_inter; }
};

struct EmbeddingRow {
    std::string scene_id;
    Scenario label = Scenario::Normal;
    std::vector<double> pre;
    std::vector<double> post;
};

struct EmbeddingExport {
    std::vector<EmbeddingRow> rows;
    EmbeddingStageStats pre;
    EmbeddingStageStats post;
};

EmbeddingExport export_embeddings(const ToyModel& model, const SyntheticDataset& data,
                                  const AblationFlags& flags, std::size_t batch_size = 4);
std::string embedding_row_json(const EmbeddingRow& row);
std::string embedding_stats_json(const EmbeddingExport& ex);

struct TrainResult {
    std::vector<EpochTelemetry> telemetry;
    double heldout_gen_loss = 0.0;
    std::size_t heldout_count = 0;
    std::uint64_t teacher_hash_before = 0;
    std::uint64_t teacher_hash_after = 0;
    AttentionAggregate attention;
    bool has_attention = false;
    EmbeddingExport embeddings;
    ToyModel model;
    SyntheticDataset data;
    AblationFlags flags;
};

// Trains the toy model; cfg.ablation must already name a valid row. Aborts
// with a diagnostic dump (written under out_dir when provided) on a
// non-finite loss.
TrainResult train(const RunConfig& cfg, const std::string& dump_dir = "");

// Full train-toy artifact set under out_dir: telemetry.jsonl, params.json,
// attention.json, embeddings.jsonl, embeddings_stats.json,
// final_metrics.json, run_config.json. Content is byte-deterministic for a
// fixed (seed, config).
TrainResult train_toy_run(const RunConfig& cfg);

// Mean per-sample generation loss of the model over the given samples.
double mean_generation_loss(const ToyModel& model, const SyntheticDataset& data,
                            const std::vector<std::size_t>& idx, const AblationFlags& flags,
                            std::size_t batch_size = 4);

struct TimingReport {
    std::vector<TimingStage> stages; // preprocessing, inference, postprocessing, residual
    double total_ms_per_frame = 0.0;
    double fps = 0.0;
    std::size_t frames = 0;
};

TimingReport timing_report(const RunConfig& cfg);
std::string timing_report_json(const TimingReport& report);

} // namespace realm
