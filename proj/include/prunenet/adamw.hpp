#pragma once

#include <cmath>
#include <cstddef>

#include "prunenet/errors.hpp"
#include "prunenet/matrix.hpp"

namespace prunenet {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamWState {
    Matrix<double> m;  // first moment
    Matrix<double> v;  // second moment
    std::size_t step = 0;

    explicit AdamWState(std::size_t rows = 0, std::size_t cols = 0) : m(rows, cols), v(rows, cols) {}
};

// Decoupled weight decay: params shrink by lr*wd directly, the Adam step uses
// the raw gradient with bias-corrected moments.
inline void adamw_update(Matrix<double>& param, const Matrix<double>& grad, AdamWState& state,
                         const AdamWConfig& hp, double lr) {
    require(param.rows() == grad.rows() && param.cols() == grad.cols(),
            "adamw_update: shape mismatch");
    require(state.m.rows() == param.rows() && state.m.cols() == param.cols(),
            "adamw_update: state shape mismatch");
    require(all_finite(grad), "adamw_update: non-finite gradient");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, double(state.step));
    const double decay = 1.0 - lr * hp.weight_decay;
    for (std::size_t i = 0; i < param.data().size(); ++i) {
        const double g = grad.data()[i];
        double& m = state.m.data()[i];
        double& v = state.v.data()[i];
        m = hp.beta1 * m + (1.0 - hp.beta1) * g;
        v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        double& p = param.data()[i];
        p *= decay;
        p -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
    }
}

}  // namespace prunenet
