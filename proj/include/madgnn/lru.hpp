#pragma once

// Linear recurrent unit with a stable-by-construction diagonal complex state
// matrix. Complex quantities are stored as real/imaginary channels.
//
//   lambda_i = exp(-exp(nu_i) + i theta_i),  Gamma_i = sqrt(1 - |lambda_i|^2)
//   xi_{t+1} = Lambda xi_t + Gamma B z_t
//   y_t      = NN(Re(C xi_t) + D z_t) + F z_t
//
// Signals are row vectors; a batch of rows runs independent copies that
// share parameters (one per agent).

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "madgnn/gnn.hpp"
#include "madgnn/ops.hpp"
#include "madgnn/random.hpp"

namespace madgnn {

struct LruConfig {
    std::size_t in_dim = 8;
    std::size_t state_dim = 16;
    std::size_t head_in = 16;
    std::size_t head_hidden = 16;
    std::size_t out_dim = 2;
    double r_min = 0.8;
    double r_max = 0.97;
    double max_phase = std::numbers::pi / 4.0;
    double head_init_gain = 1.0;  // scales the initial readout W2
    Activation activation{};
};

// 1 - |lambda| = -expm1(-exp(nu)), which stays positive in double precision
// for every nu where exp(nu) > 0.
inline double lru_one_minus_modulus(double nu) { return -std::expm1(-std::exp(nu)); }

inline double lru_gamma(double nu) { return std::sqrt(-std::expm1(-2.0 * std::exp(nu))); }

// Elementwise Gamma(nu) as a tape op.
inline Var lru_gamma(Var nu) {
    return map(
        nu, [](double x) { return lru_gamma(x); },
        [](double x, double y) {
            if (y == 0.0) return 0.0;
            const double e = std::exp(x);
            return e * std::exp(-2.0 * e) / y;
        },
        "lru_gamma");
}

struct LruCarry {
    Var re;
    Var im;
};

class Lru {
public:
    Lru() = default;

    Lru(std::string name, LruConfig cfg, Rng& rng) : name_(std::move(name)), cfg_(std::move(cfg)) {
        const std::size_t n = cfg_.state_dim;
        Matrix nu(1, n), theta(1, n);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = uniform(rng, cfg_.r_min, cfg_.r_max);
            nu[i] = std::log(-std::log(r));
            theta[i] = uniform(rng, 0.0, cfg_.max_phase);
        }
        const double sb = 1.0 / std::sqrt(2.0 * double(cfg_.in_dim));
        const double sc = 1.0 / std::sqrt(double(n));
        const double sd = 1.0 / std::sqrt(double(cfg_.in_dim));
        nu_ = Parameter(name_ + ".nu", nu);
        theta_ = Parameter(name_ + ".theta", theta);
        b_re_ = Parameter(name_ + ".B_re", randn_matrix(cfg_.in_dim, n, sb, rng));
        b_im_ = Parameter(name_ + ".B_im", randn_matrix(cfg_.in_dim, n, sb, rng));
        c_re_ = Parameter(name_ + ".C_re", randn_matrix(n, cfg_.head_in, sc, rng));
        c_im_ = Parameter(name_ + ".C_im", randn_matrix(n, cfg_.head_in, sc, rng));
        d_ = Parameter(name_ + ".D", randn_matrix(cfg_.in_dim, cfg_.head_in, sd, rng));
        f_ = Parameter(name_ + ".F", randn_matrix(cfg_.in_dim, cfg_.out_dim, 0.1 * sd, rng));
        w1_ = Parameter(name_ + ".head.W1",
                        randn_matrix(cfg_.head_in, cfg_.head_hidden, 1.0 / std::sqrt(double(cfg_.head_in)), rng));
        w2_ = Parameter(name_ + ".head.W2",
                        randn_matrix(cfg_.head_hidden, cfg_.out_dim,
                                     cfg_.head_init_gain / std::sqrt(double(cfg_.head_hidden)), rng));
    }

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] const LruConfig& config() const noexcept { return cfg_; }

    ParameterList parameters() { return {&nu_, &theta_, &b_re_, &b_im_, &c_re_, &c_im_, &d_, &f_, &w1_, &w2_}; }

    Parameter& nu() { return nu_; }
    Parameter& theta() { return theta_; }
    Parameter& b_re() { return b_re_; }
    Parameter& b_im() { return b_im_; }
    Parameter& c_re() { return c_re_; }
    Parameter& c_im() { return c_im_; }
    Parameter& d() { return d_; }
    Parameter& f() { return f_; }
    Parameter& head_w1() { return w1_; }
    Parameter& head_w2() { return w2_; }

    // Parameter nodes and derived per-mode rows, bound once per tape.
    struct Bound {
        Var a, b, gamma;  // 1 x n: Re lambda, Im lambda, Gamma
        Var b_re, b_im, c_re, c_im, d, f, w1, w2;
    };

    Bound bind(Tape& t) {
        Bound out;
        Var nu = t.param(nu_);
        Var th = t.param(theta_);
        Var mod = madgnn::exp(neg(madgnn::exp(nu)));
        out.a = mul(mod, madgnn::cos(th));
        out.b = mul(mod, madgnn::sin(th));
        out.gamma = lru_gamma(nu);
        out.b_re = t.param(b_re_);
        out.b_im = t.param(b_im_);
        out.c_re = t.param(c_re_);
        out.c_im = t.param(c_im_);
        out.d = t.param(d_);
        out.f = t.param(f_);
        out.w1 = t.param(w1_);
        out.w2 = t.param(w2_);
        return out;
    }

    LruCarry zero_carry(Tape& t, std::size_t rows) const {
        return {t.constant(Matrix(rows, cfg_.state_dim)), t.constant(Matrix(rows, cfg_.state_dim))};
    }

    // One step on a batch of rows z (rows x in_dim). Returns y and updates carry.
    Var step(const Bound& p, LruCarry& carry, Var z) const {
        Var head_in = add(sub(matmul(carry.re, p.c_re), matmul(carry.im, p.c_im)), matmul(z, p.d));
        Var y = add(head(p, head_in), matmul(z, p.f));
        Var in_re = mul_row(matmul(z, p.b_re), p.gamma);
        Var in_im = mul_row(matmul(z, p.b_im), p.gamma);
        Var re = add(sub(mul_row(carry.re, p.a), mul_row(carry.im, p.b)), in_re);
        Var im = add(add(mul_row(carry.im, p.a), mul_row(carry.re, p.b)), in_im);
        carry = {re, im};
        return y;
    }

    // Output sequence for a sequence of input rows, from the zero state.
    std::vector<Matrix> rollout(const std::vector<Matrix>& zs) {
        Tape t(false);
        Bound p = bind(t);
        std::vector<Matrix> ys;
        if (zs.empty()) return ys;
        LruCarry c = zero_carry(t, zs.front().rows());
        for (const auto& z : zs) ys.push_back(step(p, c, t.constant(z)).value());
        return ys;
    }

    [[nodiscard]] double max_modulus() const {
        double m = 0.0;
        for (double nu : nu_.value().data()) m = std::max(m, std::exp(-std::exp(nu)));
        return m;
    }

    // 1 - max|lambda|, evaluated without cancellation.
    [[nodiscard]] double stability_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (double nu : nu_.value().data()) m = std::min(m, lru_one_minus_modulus(nu));
        return m;
    }

    [[nodiscard]] double head_lipschitz() const {
        return entry_norm(w1_.value()) * entry_norm(w2_.value()) * cfg_.activation.lipschitz();
    }

    // L_NN (||D|| + ||C|| ||Gamma B|| / (1 - max|lambda|)) + ||F||, Frobenius norms.
    [[nodiscard]] double gain_bound() const {
        const double c = std::hypot(entry_norm(c_re_.value()), entry_norm(c_im_.value()));
        double gb_sq = 0.0;
        for (std::size_t j = 0; j < cfg_.state_dim; ++j) {
            const double g = lru_gamma(nu_.value()[j]);
            for (std::size_t i = 0; i < cfg_.in_dim; ++i) {
                gb_sq += g * g * (b_re_.value()(i, j) * b_re_.value()(i, j) + b_im_.value()(i, j) * b_im_.value()(i, j));
            }
        }
        return head_lipschitz() * (entry_norm(d_.value()) + c * std::sqrt(gb_sq) / stability_margin()) +
               entry_norm(f_.value());
    }

private:
    Var head(const Bound& p, Var x) const { return matmul(cfg_.activation(matmul(x, p.w1)), p.w2); }

    std::string name_;
    LruConfig cfg_;
    Parameter nu_, theta_, b_re_, b_im_, c_re_, c_im_, d_, f_, w1_, w2_;
};

}  // namespace madgnn
