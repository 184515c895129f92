#pragma once

#include <cmath>
#include <vector>

#include "madgnn/autodiff.hpp"

namespace madgnn {

// Scales all gradients so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping.
inline double clip_grad_norm(const ParameterList& params, double max_norm) {
    double sq = 0.0;
    for (const Parameter* p : params)
        for (double g : p->grad().data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NonFiniteError("clip_grad_norm: non-finite gradient norm");
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (Parameter* p : params)
            for (double& g : p->grad().data()) g *= s;
    }
    return norm;
}

// Gradient descent with Adam moments. Call step() after gradients have been
// accumulated; it does not zero them.
class Adam {
public:
    struct Options {
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    Adam(ParameterList params, Options opt) : params_(std::move(params)), opt_(opt) {
        for (const Parameter* p : params_) {
            m_.emplace_back(p->value().rows(), p->value().cols());
            v_.emplace_back(p->value().rows(), p->value().cols());
        }
    }

    void set_lr(double lr) { opt_.lr = lr; }
    [[nodiscard]] double lr() const { return opt_.lr; }
    [[nodiscard]] long steps() const { return t_; }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Matrix& m = m_[i];
            Matrix& v = v_[i];
            params_[i]->update([&](Matrix& x, const Matrix& g) {
                for (std::size_t k = 0; k < x.size(); ++k) {
                    m[k] = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * g[k];
                    v[k] = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * g[k] * g[k];
                    x[k] -= opt_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + opt_.eps);
                }
            });
        }
    }

    void zero_grad() {
        for (Parameter* p : params_) p->zero_grad();
    }

private:
    ParameterList params_;
    Options opt_;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
    long t_ = 0;
};

}  // namespace madgnn
