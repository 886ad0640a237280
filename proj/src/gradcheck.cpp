#include "realm/gradcheck.hpp"

#include <cmath>

namespace realm {

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f,
                               const Tensor& x, double h) {
    Tensor leaf(x.shape(), x.values(), true);
    Tensor loss = f(leaf);
    if (loss.numel() != 1) {
        throw ContractError("finite_difference_check needs a scalar-valued function");
    }
    loss.backward();
    const std::vector<double>& ad = leaf.grad();

    double worst = 0.0;
    std::vector<double> probe = x.values();
    for (std::size_t i = 0; i < probe.size(); ++i) {
        double orig = probe[i];
        probe[i] = orig + h;
        double up = f(Tensor(x.shape(), probe)).value();
        probe[i] = orig - h;
        double dn = f(Tensor(x.shape(), probe)).value();
        probe[i] = orig;
        double fd = (up - dn) / (2.0 * h);
        double rel = std::abs(fd - ad[i]) / (std::abs(fd) + std::abs(ad[i]) + 1e-8);
        worst = std::max(worst, rel);
    }
    return worst;
}

} // namespace realm
