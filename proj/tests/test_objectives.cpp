#include <doctest.h>

#include <cmath>
#include <random>

#include "realm/gradcheck.hpp"
#include "realm/objectives.hpp"

using namespace realm;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng,
                                  double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> out(n);
    for (double& v : out) v = dist(rng);
    return out;
}

} // namespace

TEST_CASE("generation loss on saturated and uniform logits") {
    Tensor sure({2, 3}, {60, -60, -60, -60, -60, 60});
    CHECK(generation_loss({sure, {0, 2}}).value() == 0.0);

    Tensor uniform({3, 4}, std::vector<double>(12, 0.7));
    double loss = generation_loss({uniform, {1, 0, 3}}).value();
    CHECK(std::abs(loss - 3.0 * std::log(4.0)) < 1e-12);
}

TEST_CASE("generation loss matches a per-step oracle") {
    std::mt19937_64 rng(7);
    Tensor logits({4, 5}, random_values(20, rng));
    std::vector<std::size_t> targets{3, 0, 4, 2};
    double expect = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < 5; ++j) z += std::exp(logits.at(i, j));
        expect += std::log(z) - logits.at(i, targets[i]);
    }
    double got = generation_loss({logits, targets}).value();
    CHECK(std::abs(got - expect) < 1e-10);
    CHECK(got >= 0.0);
}

TEST_CASE("generation loss input validation") {
    Tensor logits({2, 3}, std::vector<double>(6, 0.0));
    CHECK_THROWS_AS(generation_loss({logits, {0, 3}}), IndexError);
    CHECK_THROWS_AS(generation_loss({logits, {0}}), DimensionError);
}

TEST_CASE("generation loss falls as the target margin grows") {
    double prev = 1e300;
    for (double m = -3.0; m <= 3.0; m += 0.25) {
        Tensor logits({1, 4}, {m, 0.0, 0.0, 0.0});
        double cur = generation_loss({logits, {0}}).value();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("distillation of an identical student is exactly zero") {
    std::mt19937_64 rng(11);
    Tensor logits({3, 6}, random_values(18, rng, -5, 5));
    Tensor copy(logits.shape(), logits.values(), true);
    CHECK(distillation_loss(copy, logits, 2.0).value() == 0.0);
}

TEST_CASE("distillation matches a direct softened-KL oracle") {
    Tensor teacher({1, 3}, {10, 0, 0});
    Tensor student({1, 3}, {0, 0, 0}, true);
    double tau = 2.0;
    double got = distillation_loss(student, teacher, tau).value();

    double z = 0.0;
    std::vector<double> p(3);
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(teacher.at(0, j) / tau);
    double expect = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        p[j] = std::exp(teacher.at(0, j) / tau) / z;
        expect += p[j] * (std::log(p[j]) - std::log(1.0 / 3.0));
    }
    expect *= tau * tau;
    CHECK(std::abs(got - expect) < 1e-10);
}

TEST_CASE("distillation is non-negative and teacher stays unconnected") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 1000; ++trial) {
        Tensor s({2, 4}, random_values(8, rng, -4, 4));
        Tensor t({2, 4}, random_values(8, rng, -4, 4));
        CHECK(distillation_loss(s, t, 2.0).value() >= 0.0);
    }

    Tensor s({1, 3}, {1, 2, 3}, true);
    Tensor t({1, 3}, {3, 2, 1}, true);
    distillation_loss(s, t, 2.0).backward();
    CHECK(s.has_grad());
    CHECK_FALSE(t.has_grad());

    CHECK_THROWS_AS(distillation_loss(s, Tensor({1, 2}, {1, 2}), 2.0), DimensionError);
    CHECK_THROWS_AS(distillation_loss(s, t, 0.0), ConfigError);
}

TEST_CASE("temperature prefactor identity") {
    std::mt19937_64 rng(17);
    double tau = 2.0;
    Tensor s({3, 5}, random_values(15, rng, -3, 3));
    Tensor t({3, 5}, random_values(15, rng, -3, 3));
    double scaled = distillation_loss(s, t, tau).value();
    Tensor s_soft = div_scalar(s, tau).detach();
    Tensor t_soft = div_scalar(t, tau).detach();
    double unit = distillation_loss(s_soft, t_soft, 1.0).value();
    CHECK(std::abs(scaled - tau * tau * unit) < 1e-10);
}

TEST_CASE("mean reduction divides by the step count") {
    std::mt19937_64 rng(19);
    Tensor s({4, 3}, random_values(12, rng));
    Tensor t({4, 3}, random_values(12, rng));
    double summed = distillation_loss(s, t, 2.0, false).value();
    double meaned = distillation_loss(s, t, 2.0, true).value();
    CHECK(std::abs(summed / 4.0 - meaned) < 1e-12);
}

TEST_CASE("total loss is the documented affine combination") {
    ObjectiveConfig cfg;
    CHECK(cfg.alpha == 0.2);
    CHECK(cfg.beta == 0.5);
    CHECK(cfg.tau_kd == 2.0);

    Tensor g = Tensor::scalar(1.0), m = Tensor::scalar(0.5), k = Tensor::scalar(0.2);
    CHECK(std::abs(total_loss(g, m, k, cfg).value() - 1.2) < 1e-15);

    ObjectiveConfig bare;
    bare.alpha = 0.0;
    bare.beta = 0.0;
    CHECK(total_loss(g, m, k, bare).value() == 1.0);

    // linear in each slot
    Tensor m2 = Tensor::scalar(1.0);
    double base = total_loss(g, m, k, cfg).value();
    double bumped = total_loss(g, m2, k, cfg).value();
    CHECK(std::abs((bumped - base) - cfg.alpha * 0.5) < 1e-15);

    CHECK_THROWS_AS(total_loss(Tensor({2}, {1, 2}), m, k, cfg), ContractError);
    CHECK_THROWS_AS(
        total_loss(Tensor::scalar(std::numeric_limits<double>::infinity()), m, k, cfg),
        DomainError);
    ObjectiveConfig bad;
    bad.tau_kd = -1.0;
    CHECK_THROWS_AS(total_loss(g, m, k, bad), ConfigError);
}

TEST_CASE("objective gradients pass finite differences") {
    std::mt19937_64 rng(23);
    std::vector<std::size_t> targets{1, 3, 0};
    auto f_gen = [&](const Tensor& t) { return generation_loss({t, targets}); };
    CHECK(finite_difference_check(f_gen, Tensor({3, 4}, random_values(12, rng)), 1e-5) < 1e-4);

    Tensor teacher({3, 4}, random_values(12, rng));
    auto f_kd = [&](const Tensor& t) { return distillation_loss(t, teacher, 2.0); };
    CHECK(finite_difference_check(f_kd, Tensor({3, 4}, random_values(12, rng)), 1e-5) < 1e-4);

    ObjectiveConfig cfg;
    Tensor m = Tensor::scalar(0.4), k = Tensor::scalar(0.7);
    auto f_total = [&](const Tensor& t) { return total_loss(sum(t), m, k, cfg); };
    CHECK(finite_difference_check(f_total, Tensor({3}, random_values(3, rng)), 1e-5) < 1e-6);
}
