#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "madgnn/ops.hpp"

namespace madgnn {

using NamedMatrices = std::map<std::string, Matrix>;
using NamedVars = std::map<std::string, Var>;

// A computation over named inputs. It may bind parameters on the tape it is
// given; the returned map names the outputs of interest.
using Program = std::function<NamedVars(Tape&, const NamedVars&)>;

// Runs `program` on a gradient-free tape.
inline NamedMatrices forward_eval(const Program& program, const NamedMatrices& inputs) {
    Tape tape(false);
    NamedVars bound;
    for (const auto& [name, m] : inputs) bound.emplace(name, tape.constant(m));
    NamedMatrices out;
    for (const auto& [name, v] : program(tape, bound)) out.emplace(name, v.value());
    return out;
}

using LossFn = std::function<Var(Tape&)>;

// Compares reverse-mode gradients against central differences.
//
// Errors are measured per parameter matrix as
//   max_k |g_k - fd_k| / max(max_k |g_k|, 1e-8)
// and the maximum over parameters is returned.
inline double finite_diff_check(const LossFn& loss, std::span<Parameter* const> params, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be > 0");
    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var l = loss(tape);
        if (!std::isfinite(l.value().item())) throw NonFiniteError("finite_diff_check: non-finite loss");
        tape.backward(l);
    }
    auto eval = [&] {
        Tape tape(false);
        const double v = loss(tape).value().item();
        if (!std::isfinite(v)) throw NonFiniteError("finite_diff_check: non-finite loss at probe point");
        return v;
    };
    double worst = 0.0;
    for (Parameter* p : params) {
        const Matrix g = p->grad();
        double diff = 0.0;
        double scale = 0.0;
        for (std::size_t k = 0; k < p->size(); ++k) {
            const double x0 = p->value()[k];
            p->set_entry(k, x0 + eps);
            const double fp = eval();
            p->set_entry(k, x0 - eps);
            const double fm = eval();
            p->set_entry(k, x0);
            const double fd = (fp - fm) / (2.0 * eps);
            diff = std::max(diff, std::abs(g[k] - fd));
            scale = std::max(scale, std::abs(g[k]));
        }
        worst = std::max(worst, diff / std::max(scale, 1e-8));
    }
    return worst;
}

}  // namespace madgnn
