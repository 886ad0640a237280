#include "realm/objectives.hpp"

#include <cmath>

namespace realm {

void ObjectiveConfig::validate() const {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) {
        throw ConfigError("objective weights must be finite");
    }
    if (!(tau_kd > 0.0)) throw ConfigError("tau_kd must be positive");
}

Tensor generation_loss(const LogitsSequence& pred) {
    if (pred.steps.rank() != 2) {
        throw DimensionError("generation_loss expects steps x vocabulary logits, got " +
                             shape_str(pred.steps.shape()));
    }
    std::size_t t = pred.steps.shape()[0], v = pred.steps.shape()[1];
    if (pred.targets.size() != t) {
        throw DimensionError("target count " + std::to_string(pred.targets.size()) +
                             " does not match " + std::to_string(t) + " steps");
    }
    std::vector<double> pick(t * v, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        if (pred.targets[i] >= v) {
            throw IndexError("target token " + std::to_string(pred.targets[i]) +
                             " outside vocabulary of size " + std::to_string(v));
        }
        pick[i * v + pred.targets[i]] = 1.0;
    }
    // -log softmax(row)[target] = lse(row) - row[target]; the lse form keeps
    // saturated rows at exact zero loss
    Tensor lse = sum(logsumexp(pred.steps, 1));
    Tensor picked = sum(mul(pred.steps, Tensor({t, v}, std::move(pick))));
    return sub(lse, picked);
}

Tensor distillation_loss(const Tensor& student, const Tensor& teacher, double tau_kd,
                         bool mean_reduction) {
    if (!(tau_kd > 0.0)) throw ConfigError("tau_kd must be positive");
    if (student.shape() != teacher.shape() || student.rank() != 2) {
        throw DimensionError("distillation_loss expects matching steps x vocabulary logits, got " +
                             shape_str(student.shape()) + " vs " + shape_str(teacher.shape()));
    }
    Tensor t_const = teacher.detach();
    // Identical op routes for both log-distributions, so equal logits cancel
    // to exact zeros before the product with p.
    Tensor ts = div_scalar(t_const, tau_kd);
    Tensor ss = div_scalar(student, tau_kd);
    Tensor logp = sub(ts, logsumexp(ts, 1));
    Tensor logq = sub(ss, logsumexp(ss, 1));
    Tensor kl = sum(mul(softmax(ts, 1), sub(logp, logq)));
    if (mean_reduction) kl = div_scalar(kl, static_cast<double>(student.shape()[0]));
    return mul_scalar(kl, tau_kd * tau_kd);
}

Tensor total_loss(const Tensor& l_gen, const Tensor& l_mscl, const Tensor& l_kd,
                  const ObjectiveConfig& cfg) {
    cfg.validate();
    for (const Tensor* l : {&l_gen, &l_mscl, &l_kd}) {
        if (l->numel() != 1) throw ContractError("loss components must be scalars");
        if (!std::isfinite(l->value())) throw DomainError("loss component is not finite");
    }
    return add(add(l_gen, mul_scalar(l_mscl, cfg.alpha)), mul_scalar(l_kd, cfg.beta));
}

} // namespace realm
