#include "realm/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "realm/errors.hpp"
#include "realm/rng.hpp"

namespace realm {

void SyntheticConfig::validate() const {
    if (feature_dim == 0) throw ConfigError("feature_dim must be positive");
    if (tokens == 0 || tokens % 2 != 0) throw ConfigError("tokens must be positive and even");
    if (total_samples < kScenarioCount)
        throw ConfigError("total_samples must cover every scenario");
    if (!(imbalance_ratio > 0.0) || !(imbalance_ratio < 1.0))
        throw ConfigError("imbalance_ratio must lie in (0, 1)");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
    if (vocab == 0 || seq_len == 0) throw ConfigError("vocab and seq_len must be positive");
    std::vector<std::size_t> counts = scenario_counts();
    for (std::size_t c : counts)
        if (c == 0) throw ConfigError("scenario counts must all be positive");
}

std::vector<std::size_t> SyntheticConfig::scenario_counts() const {
    auto normal = static_cast<std::size_t>(
        std::llround(imbalance_ratio * static_cast<double>(total_samples)));
    if (normal >= total_samples) normal = total_samples - 2;
    std::size_t tail = total_samples - normal;
    std::size_t fog = tail / 2;
    std::size_t snow = tail - fog;
    return {normal, snow, fog};
}

std::vector<double> cluster_center(Scenario d, const SyntheticConfig& cfg) {
    std::vector<double> center(cfg.feature_dim);
    auto di = static_cast<std::size_t>(d);
    for (std::size_t f = 0; f < cfg.feature_dim; ++f) {
        double dev = (f % kScenarioCount == di) ? cfg.center_offset : -0.5 * cfg.center_offset;
        center[f] = cfg.base_level + dev;
    }
    return center;
}

std::vector<double> description_center(Scenario d, const SyntheticConfig& cfg) {
    if (d == Scenario::Normal) return cluster_center(Scenario::Normal, cfg);
    std::vector<double> snow = cluster_center(Scenario::Snow, cfg);
    std::vector<double> fog = cluster_center(Scenario::Fog, cfg);
    for (std::size_t f = 0; f < snow.size(); ++f) snow[f] = 0.5 * (snow[f] + fog[f]);
    return snow;
}

std::vector<std::size_t> scenario_targets(Scenario d, std::size_t seq_len, std::size_t vocab) {
    std::vector<std::size_t> targets(seq_len);
    auto di = static_cast<std::size_t>(d);
    for (std::size_t k = 0; k < seq_len; ++k) targets[k] = (di * 5 + 2 * k) % vocab;
    return targets;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    SyntheticDataset data;
    data.cfg = cfg;

    Rng rng(splitmix64(cfg.seed ^ 0x73796e7468ULL));
    std::vector<std::size_t> counts = cfg.scenario_counts();
    std::size_t next_id = 0;

    for (Scenario d : kAllScenarios) {
        std::vector<double> center = cluster_center(d, cfg);
        std::vector<double> desc_center = description_center(d, cfg);
        for (std::size_t n = 0; n < counts[static_cast<std::size_t>(d)]; ++n) {
            SyntheticSample sample;
            char buf[32];
            std::snprintf(buf, sizeof(buf), "scene_%04zu", next_id++);
            sample.scene_id = buf;
            sample.label = d;

            std::vector<double> tok(cfg.tokens * cfg.feature_dim);
            for (std::size_t t = 0; t < cfg.tokens; ++t) {
                double view = t < cfg.tokens / 2 ? 0.0 : cfg.view_offset;
                for (std::size_t f = 0; f < cfg.feature_dim; ++f)
                    tok[t * cfg.feature_dim + f] =
                        center[f] + view + rng.gaussian(0.0, cfg.noise_sigma);
            }
            sample.tokens = Tensor({cfg.tokens, cfg.feature_dim}, std::move(tok));

            std::vector<double> desc(cfg.feature_dim);
            for (std::size_t f = 0; f < cfg.feature_dim; ++f)
                desc[f] = desc_center[f] + rng.gaussian(0.0, cfg.noise_sigma);
            sample.desc = Tensor({1, cfg.feature_dim}, std::move(desc));

            sample.targets = scenario_targets(d, cfg.seq_len, cfg.vocab);
            data.samples.push_back(std::move(sample));
        }
    }

    // deterministic interleave so batches mix scenarios
    Rng shuffle(splitmix64(cfg.seed ^ 0x73687566ULL));
    for (std::size_t i = data.samples.size(); i > 1; --i) {
        std::size_t j = shuffle.index(i);
        std::swap(data.samples[i - 1], data.samples[j]);
    }
    return data;
}

bool is_held_out(const std::string& scene_id) { return fnv1a64(scene_id) % 5 == 0; }

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const SyntheticDataset& data) {
    std::vector<std::size_t> train, held;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        if (is_held_out(data.samples[i].scene_id))
            held.push_back(i);
        else
            train.push_back(i);
    }
    return {train, held};
}

} // namespace realm
