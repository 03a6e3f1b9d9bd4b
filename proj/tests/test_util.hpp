#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ccnet/autograd.hpp"
#include "ccnet/rng.hpp"
#include "ccnet/tensor.hpp"

namespace ccnet_test {

inline ccnet::TensorPtr random_tensor(std::vector<std::int64_t> shape, ccnet::Rng& rng,
                                      bool requires_grad = false, double lo = -1.0,
                                      double hi = 1.0) {
    auto t = ccnet::Tensor::zeros(std::move(shape), requires_grad);
    for (double& v : t->value) v = rng.uniform(lo, hi);
    return t;
}

// Central finite differences of a scalar-producing builder against the
// analytic gradients from one taped backward pass. The builder must be a
// pure function of the captured tensors' current values.
inline double max_grad_rel_error(const std::function<ccnet::TensorPtr()>& build,
                                 const std::vector<ccnet::TensorPtr>& wrt, double h = 1e-6) {
    for (const auto& t : wrt) t->zero_grad();
    {
        ccnet::Tape tape;
        auto loss = build();
        tape.backward(loss);
    }
    double worst = 0.0;
    for (const auto& t : wrt) {
        for (std::size_t i = 0; i < t->value.size(); ++i) {
            const double saved = t->value[i];
            t->value[i] = saved + h;
            const double f_plus = build()->item();
            t->value[i] = saved - h;
            const double f_minus = build()->item();
            t->value[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double analytic = t->grad.empty() ? 0.0 : t->grad[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-4});
            worst = std::max(worst, std::fabs(analytic - fd) / denom);
        }
    }
    return worst;
}

}  // namespace ccnet_test
