#pragma once

#include <cstddef>
#include <vector>

#include "realm/tensor.hpp"

namespace realm {

// Per-sample decoder output: one row of logits per generated token.
struct LogitsSequence {
    Tensor steps;                     // T x V
    std::vector<std::size_t> targets; // length T, each < V
};

struct ObjectiveConfig {
    double alpha = 0.2;  // contrastive weight
    double beta = 0.5;   // distillation weight
    double tau_kd = 2.0; // distillation temperature
    bool kd_mean_reduction = false;

    void validate() const;
};

// Autoregressive token cross-entropy summed over steps.
Tensor generation_loss(const LogitsSequence& pred);

// tau^2-scaled KL(teacher || student) on temperature-softened distributions,
// summed over steps (averaged when mean_reduction). The teacher is a
// constant: no gradient flows into it.
Tensor distillation_loss(const Tensor& student, const Tensor& teacher, double tau_kd,
                         bool mean_reduction = false);

// l_gen + alpha * l_mscl + beta * l_kd
Tensor total_loss(const Tensor& l_gen, const Tensor& l_mscl, const Tensor& l_kd,
                  const ObjectiveConfig& cfg);

} // namespace realm
