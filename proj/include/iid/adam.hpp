#pragma once

#include <cmath>
#include <vector>

#include "iid/tensor.hpp"

namespace iid {

template <typename T>
struct AdamState {
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    long step_count = 0;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-8);
};

// One Adam update with bias correction over a fixed parameter list. Moment
// buffers are allocated on the first call and must keep matching the
// parameter shapes afterwards. Gradients are consumed: cleared after the step.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state, T lr) {
    if (state.first_moment.empty()) {
        state.first_moment.resize(params.size());
        state.second_moment.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.first_moment[i].assign(params[i].data().size(), T(0));
            state.second_moment[i].assign(params[i].data().size(), T(0));
        }
    }
    if (state.first_moment.size() != params.size())
        throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                                    " parameters, got " + std::to_string(params.size()));

    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step_count);
    const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step_count);

    for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& p = params[i];
        if (!p.has_grad())
            throw std::invalid_argument("adam_step: parameter " + std::to_string(i) + " has no gradient");
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != p.data().size())
            throw std::invalid_argument("adam_step: moment size " + std::to_string(m.size()) +
                                        " != parameter size " + std::to_string(p.data().size()));
        const auto& g = p.grad();
        for (size_t j = 0; j < m.size(); ++j) {
            m[j] = state.beta1 * m[j] + (T(1) - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (T(1) - state.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data()[j] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.epsilon));
        }
        p.zero_grad();
    }
}

}  // namespace iid
