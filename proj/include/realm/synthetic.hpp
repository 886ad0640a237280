#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "realm/scenario.hpp"
#include "realm/tensor.hpp"

namespace realm {

// Toy multimodal dataset: per-scenario Gaussian clusters of token matrices
// with paired description features and deterministic target sequences.
struct SyntheticConfig {
    std::size_t feature_dim = 16;
    std::size_t tokens = 8; // even; first half vehicle view, second half infrastructure
    std::size_t total_samples = 100;
    double imbalance_ratio = 0.8; // fraction of normal-scenario samples
    double noise_sigma = 0.25;
    double base_level = 1.0;    // shared component of every cluster center
    double center_offset = 0.15; // scenario-specific deviation around the base
    double view_offset = 0.05;   // constant shift of the infrastructure half
    std::uint64_t seed = 13;
    std::size_t vocab = 16;   // V
    std::size_t seq_len = 6;  // K

    void validate() const;
    // Normal, Snow, Fog counts; the tail splits evenly, snow takes a remainder.
    std::vector<std::size_t> scenario_counts() const;
};

struct SyntheticSample {
    std::string scene_id;
    Scenario label = Scenario::Normal;
    Tensor tokens; // T x F, constant
    Tensor desc;   // 1 x F, constant
    std::vector<std::size_t> targets; // length K, entries < V
};

struct SyntheticDataset {
    SyntheticConfig cfg;
    std::vector<SyntheticSample> samples;
};

// Scenario cluster center in feature space.
std::vector<double> cluster_center(Scenario d, const SyntheticConfig& cfg);

// Center of the paired description features. Snow and fog share one adverse
// signature (texts of both stress low visibility), so descriptions separate
// normal from long-tail scenes but the visual clusters carry the rest.
std::vector<double> description_center(Scenario d, const SyntheticConfig& cfg);

// Deterministic token sequence assigned to a scenario's samples.
std::vector<std::size_t> scenario_targets(Scenario d, std::size_t seq_len, std::size_t vocab);

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// Seed-stable split: a scene is held out iff its id hashes into the 20% bucket.
bool is_held_out(const std::string& scene_id);

// (train indices, held-out indices)
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const SyntheticDataset& data);

} // namespace realm
