#pragma once

// Perturbation bounds for fixed-support GNN cascades and for the closed loop
// they drive through an LRU magnitude operator, with fuzz harnesses that
// compare them to measured deviations.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "madgnn/gnn.hpp"
#include "madgnn/graph.hpp"
#include "madgnn/lru.hpp"
#include "madgnn/random.hpp"

namespace madgnn {

// One support matrix shared by every layer.
struct GnnStack {
    Matrix s;
    std::vector<Matrix> w;
    std::vector<Matrix> b;

    [[nodiscard]] std::size_t layers() const { return w.size(); }
};

struct PerturbationSpec {
    Matrix ds;
    std::vector<Matrix> dw;
    std::vector<Matrix> db;
};

inline void check_compatible(const GnnStack& g, const PerturbationSpec& d) {
    if (g.w.size() != g.b.size()) throw ShapeError("GnnStack: W and B layer counts differ");
    if (d.dw.size() != g.w.size() || d.db.size() != g.b.size()) {
        throw ShapeError("perturbation has " + std::to_string(d.dw.size()) + " layers, network has " +
                         std::to_string(g.w.size()));
    }
    require_same_shape(g.s, d.ds, "perturbation dS");
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        require_same_shape(g.w[l], d.dw[l], "perturbation dW");
        require_same_shape(g.b[l], d.db[l], "perturbation dB");
    }
}

inline GnnStack apply_perturbation(const GnnStack& g, const PerturbationSpec& d) {
    check_compatible(g, d);
    GnnStack out{g.s + d.ds, {}, {}};
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        out.w.push_back(g.w[l] + d.dw[l]);
        out.b.push_back(g.b[l] + d.db[l]);
    }
    return out;
}

inline PerturbationSpec zero_perturbation(const GnnStack& g) {
    PerturbationSpec d{Matrix(g.s.rows(), g.s.cols()), {}, {}};
    for (std::size_t l = 0; l < g.w.size(); ++l) {
        d.dw.emplace_back(g.w[l].rows(), g.w[l].cols());
        d.db.emplace_back(g.b[l].rows(), g.b[l].cols());
    }
    return d;
}

struct Lemma1Terms {
    std::vector<double> delta;  // ||dS|| ||dW^i|| + ||dS|| ||W^i|| + ||dB^i|| + ||S|| ||dW^i||
    std::vector<double> rho;    // ||S|| ||W^j|| + ||B^j||
    std::vector<double> zeta;   // ||S^|| ||W^v|| + ||B^v||   (perturbed)
    double sum = 0.0;           // sum_i delta_i prod_{j>i} rho_j prod_{v<i} zeta_v
};

inline Lemma1Terms lemma1_terms(const GnnStack& g, const PerturbationSpec& d, double p = 2.0) {
    check_compatible(g, d);
    const std::size_t L = g.layers();
    const double ns = entry_norm(g.s, p), nds = entry_norm(d.ds, p), nsh = entry_norm(g.s + d.ds, p);
    Lemma1Terms t;
    for (std::size_t l = 0; l < L; ++l) {
        const double nw = entry_norm(g.w[l], p), ndw = entry_norm(d.dw[l], p), ndb = entry_norm(d.db[l], p);
        t.delta.push_back(nds * ndw + nds * nw + ndb + ns * ndw);
        t.rho.push_back(ns * nw + entry_norm(g.b[l], p));
        t.zeta.push_back(nsh * entry_norm(g.w[l] + d.dw[l], p) + entry_norm(g.b[l] + d.db[l], p));
    }
    for (std::size_t i = 0; i < L; ++i) {
        double term = t.delta[i];
        for (std::size_t j = i + 1; j < L; ++j) term *= t.rho[j];
        for (std::size_t v = 0; v < i; ++v) term *= t.zeta[v];
        t.sum += term;
    }
    return t;
}

// L_sigma^L ||X|| sum_i delta_i prod rho prod zeta
inline double lemma1_bound(const GnnStack& g, const PerturbationSpec& d, double lipschitz, double x_norm,
                           double p = 2.0) {
    return std::pow(lipschitz, double(g.layers())) * x_norm * lemma1_terms(g, d, p).sum;
}

// ||Phi(X) - Phi^(X)||_p with both cascades in fixed-support mode.
inline double empirical_gnn_deviation(const GnnStack& g, const PerturbationSpec& d, const Matrix& x,
                                      const Activation& act, double p = 2.0) {
    const GnnStack h = apply_perturbation(g, d);
    return entry_norm(gnn_fixed_forward(x, g.s, g.w, g.b, act) - gnn_fixed_forward(x, h.s, h.w, h.b, act), p);
}

// gamma_F gamma_LRU L_sigma^L ||w|| (sum_i delta_i prod rho prod zeta + 2 prod zeta)
inline double theorem2_bound(const GnnStack& g, const PerturbationSpec& d, double lipschitz, double gamma_f,
                             double gamma_lru, double w_norm, double p = 2.0) {
    const Lemma1Terms t = lemma1_terms(g, d, p);
    double prod_zeta = 1.0;
    for (double z : t.zeta) prod_zeta *= z;
    return gamma_f * gamma_lru * std::pow(lipschitz, double(g.layers())) * w_norm * (t.sum + 2.0 * prod_zeta);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct BoundTrial {
    std::size_t trial = 0;
    double bound = 0.0;
    double measured = 0.0;
    double margin = 0.0;
    std::map<std::string, double> params;
};

struct BoundReport {
    std::string kind;
    double tolerance = 1e-9;
    std::vector<BoundTrial> trials;

    [[nodiscard]] double min_margin() const {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& t : trials) m = std::min(m, t.margin);
        return m;
    }

    [[nodiscard]] bool passed() const { return trials.empty() || min_margin() >= -tolerance; }

    [[nodiscard]] std::size_t violations() const {
        std::size_t n = 0;
        for (const auto& t : trials) n += t.margin < -tolerance;
        return n;
    }
};

// ---------------------------------------------------------------------------
// Lemma fuzzing
// ---------------------------------------------------------------------------

struct FuzzOptions {
    std::size_t trials = 500;
    std::uint64_t seed = 1;
    double bound_factor = 1.0;  // < 1 deliberately weakens the bound (negative control)
    std::vector<double> norms_p{1.0, 2.0};
    bool perturb = true;  // false: every random trial uses a zero perturbation
};

inline double log_uniform(Rng& rng, double lo, double hi) {
    return std::exp(uniform(rng, std::log(lo), std::log(hi)));
}

// Scalar case with a known tight bound: S=1, W=2, B=0, dS=dW=0.1, dB=0.
inline BoundTrial lemma1_tightness_witness() {
    GnnStack g{Matrix{{1.0}}, {Matrix{{2.0}}}, {Matrix{{0.0}}}};
    PerturbationSpec d{Matrix{{0.1}}, {Matrix{{0.1}}}, {Matrix{{0.0}}}};
    const Activation id{ActivationKind::identity, 0.0};
    BoundTrial t;
    t.bound = lemma1_bound(g, d, 1.0, 1.0);
    t.measured = empirical_gnn_deviation(g, d, Matrix{{1.0}}, id);
    t.margin = t.bound - t.measured;
    t.params = {{"L", 1}, {"N", 1}, {"p", 2}, {"x_norm", 1}};
    return t;
}

inline GnnStack random_gnn_stack(Rng& rng, std::size_t n, std::size_t layers, std::size_t f_in) {
    std::vector<Vec2> pos(n);
    const double half = 0.5 * std::sqrt(double(n));
    for (auto& p : pos) p = {uniform(rng, -half, half), uniform(rng, -half, half)};
    const CommGraph g = build_comm_graph(pos, std::vector<EntityKind>(n, EntityKind::agent), 1.0);
    GnnStack out;
    out.s = support_matrix(g, rng() % 2 ? SupportKind::adjacency : SupportKind::degree_normalized);
    std::size_t f = f_in;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t fn = 1 + rng() % 4;
        out.w.push_back(randn_matrix(f, fn, 1.0 / std::sqrt(double(f)), rng));
        out.b.push_back(randn_matrix(f, fn, 1.0 / std::sqrt(double(f)), rng));
        f = fn;
    }
    return out;
}

inline PerturbationSpec random_perturbation(Rng& rng, const GnnStack& g, double scale) {
    PerturbationSpec d = zero_perturbation(g);
    // Topology edits may create or delete edges.
    for (auto& v : d.ds.data())
        if (uniform(rng, 0.0, 1.0) < 0.3) v = scale * randn(rng);
    for (auto& m : d.dw)
        for (auto& v : m.data()) v = scale * randn(rng);
    for (auto& m : d.db)
        for (auto& v : m.data()) v = scale * randn(rng);
    return d;
}

inline Activation random_activation(Rng& rng) {
    switch (rng() % 4) {
        case 0: return {ActivationKind::leaky_relu, 0.1};
        case 1: return {ActivationKind::relu, 0.0};
        case 2: return {ActivationKind::tanh, 0.0};
        default: return {ActivationKind::identity, 0.0};
    }
}

// Trial 0 is the scalar tightness witness; the rest are random.
inline BoundReport fuzz_lemma1(const FuzzOptions& opt) {
    BoundReport rep;
    rep.kind = "lemma1";
    Rng rng(opt.seed);
    if (opt.trials == 0) return rep;
    BoundTrial w = lemma1_tightness_witness();
    w.bound *= opt.bound_factor;
    w.margin = w.bound - w.measured;
    rep.trials.push_back(w);
    for (std::size_t k = 1; k < opt.trials; ++k) {
        const std::size_t L = 1 + rng() % 3;
        const std::size_t n = 2 + rng() % 5;
        const std::size_t f_in = 1 + rng() % 4;
        const double scale = log_uniform(rng, 1e-3, 1.0);
        const double p = opt.norms_p[rng() % opt.norms_p.size()];
        const Activation act = random_activation(rng);
        const GnnStack g = random_gnn_stack(rng, n, L, f_in);
        PerturbationSpec d = random_perturbation(rng, g, scale);
        if (!opt.perturb) d = zero_perturbation(g);
        const Matrix x = randn_matrix(n, f_in, 1.0, rng);
        BoundTrial t;
        t.trial = k;
        const double x_norm = entry_norm(x, p);
        t.bound = opt.bound_factor * lemma1_bound(g, d, act.lipschitz(), x_norm, p);
        t.measured = empirical_gnn_deviation(g, d, x, act, p);
        t.margin = t.bound - t.measured;
        t.params = {{"L", double(L)}, {"N", double(n)}, {"p", p}, {"scale", scale}, {"x_norm", x_norm},
                    {"S_norm", entry_norm(g.s, p)}, {"L_sigma", act.lipschitz()}};
        rep.trials.push_back(std::move(t));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Closed-loop verification
// ---------------------------------------------------------------------------

// x_t = a . x_{t-1} + u_{t-1} + w_t,  x_0 = w_0, one row per node.
struct DiagonalPlant {
    Matrix a;  // nodes x dims, entries |a| < 1

    [[nodiscard]] double gain() const {
        double m = 0.0;
        for (double v : a.data()) m = std::max(m, std::abs(v));
        if (!(m < 1.0)) throw ConfigError("test plant is not stable: max |a| = " + std::to_string(m));
        return 1.0 / (1.0 - m);
    }
};

struct ClosedLoopTrialSpec {
    GnnStack nominal;
    PerturbationSpec perturbation;
    Activation activation{};
    DiagonalPlant plant;
    Matrix direction_gain;  // dims x dims
    double direction_noise = 0.5;
    bool shared_samples = true;
    std::vector<Matrix> w;  // horizon x (nodes x dims)
    std::uint64_t seed = 0;
};

struct ClosedLoopResult {
    double bound = 0.0;
    double measured = 0.0;
    double w_norm = 0.0;
    double gamma_f = 0.0;
    double gamma_lru = 0.0;
    bool tail_ok = true;
};

inline double sequence_norm(const std::vector<Matrix>& xs) {
    double s = 0.0;
    for (const auto& x : xs) {
        const double n = entry_norm(x);
        s += n * n;
    }
    return std::sqrt(s);
}

// Share of the squared sequence norm carried by the last `frac` of steps.
inline double tail_share(const std::vector<Matrix>& xs, double frac = 0.1) {
    double total = 0.0, tail = 0.0;
    const std::size_t start = xs.size() - static_cast<std::size_t>(frac * double(xs.size()));
    for (std::size_t t = 0; t < xs.size(); ++t) {
        const double n = entry_norm(xs[t]);
        total += n * n;
        if (t >= start) tail += n * n;
    }
    return total > 0.0 ? tail / total : 0.0;
}

// Closed-loop state trajectory under u_t = min(|LRU(Phi(w))_t|, inf) . D_t,
// D_t = tanh(x_t G + noise eps_t).
inline std::vector<Matrix> simulate_closed_loop(const GnnStack& gnn, const Activation& act, Lru& lru,
                                                const ClosedLoopTrialSpec& spec, Rng& rng) {
    Tape t(false);
    const Lru::Bound lb = lru.bind(t);
    const std::size_t n = spec.w.front().rows(), dims = spec.w.front().cols();
    LruCarry carry = lru.zero_carry(t, n);
    std::vector<Matrix> xs;
    Matrix x = spec.w.front();
    for (std::size_t k = 0; k < spec.w.size(); ++k) {
        if (k > 0) x = x + spec.w[k];
        xs.push_back(x);
        const Matrix z = gnn_fixed_forward(spec.w[k], gnn.s, gnn.w, gnn.b, act);
        Matrix m = lru.step(lb, carry, t.constant(z)).value();
        Matrix pre = matmul(x, spec.direction_gain);
        for (auto& v : pre.data()) v += spec.direction_noise * randn(rng);
        Matrix u(n, dims);
        for (std::size_t q = 0; q < u.size(); ++q) u[q] = std::abs(m[q]) * std::tanh(pre[q]);
        x = hadamard(spec.plant.a, x) + u;
    }
    return xs;
}

inline ClosedLoopResult run_closed_loop_trial(const ClosedLoopTrialSpec& spec, Lru& lru) {
    if (spec.w.empty()) throw ShapeError("closed loop: empty disturbance sequence");
    ClosedLoopResult r;
    r.gamma_f = spec.plant.gain();
    r.gamma_lru = lru.gain_bound();
    r.w_norm = sequence_norm(spec.w);
    const GnnStack hat = apply_perturbation(spec.nominal, spec.perturbation);
    Rng r1(spec.seed);
    Rng r2(spec.shared_samples ? spec.seed : mix_seed(spec.seed, 1));
    const auto xs = simulate_closed_loop(spec.nominal, spec.activation, lru, spec, r1);
    const auto xh = simulate_closed_loop(hat, spec.activation, lru, spec, r2);
    std::vector<Matrix> diff;
    for (std::size_t k = 0; k < xs.size(); ++k) diff.push_back(xs[k] - xh[k]);
    r.measured = sequence_norm(diff);
    r.tail_ok = tail_share(xs) < 1e-3 && tail_share(xh) < 1e-3 && tail_share(spec.w) < 1e-3;
    r.bound = theorem2_bound(spec.nominal, spec.perturbation, spec.activation.lipschitz(), r.gamma_f, r.gamma_lru,
                             r.w_norm);
    return r;
}

struct ClosedLoopFuzzOptions {
    std::size_t trials = 200;
    std::uint64_t seed = 2;
    std::size_t horizon = 400;
    double bound_factor = 1.0;
    bool perturb = true;
};

// Every fourth trial has zero perturbation; half of those use independent
// direction samples.
inline BoundReport fuzz_closed_loop(const ClosedLoopFuzzOptions& opt) {
    BoundReport rep;
    rep.kind = "theorem2";
    Rng rng(opt.seed);
    for (std::size_t k = 0; k < opt.trials; ++k) {
        const std::size_t n = 2 + rng() % 4, dims = 2, L = 1 + rng() % 3;
        ClosedLoopTrialSpec spec;
        spec.activation = random_activation(rng);
        spec.nominal = random_gnn_stack(rng, n, L, dims);
        const bool zero = k % 4 == 0 || !opt.perturb;
        const double scale = log_uniform(rng, 1e-3, 1.0);
        spec.perturbation = zero ? zero_perturbation(spec.nominal) : random_perturbation(rng, spec.nominal, scale);
        spec.shared_samples = !(k % 8 == 0);
        spec.plant.a = uniform_matrix(n, dims, -0.9, 0.9, rng);
        spec.direction_gain = randn_matrix(dims, dims, 1.0, rng);
        spec.direction_noise = uniform(rng, 0.1, 1.0);
        spec.seed = rng();
        const double decay = uniform(rng, 0.8, 0.95);
        const double burst = uniform(rng, 0.1, 2.0);
        Matrix w0 = randn_matrix(n, dims, burst, rng);
        for (std::size_t t = 0; t < opt.horizon; ++t) {
            Matrix wt = randn_matrix(n, dims, 0.2 * burst, rng);
            const double f = std::pow(decay, double(t));
            for (std::size_t q = 0; q < wt.size(); ++q) wt[q] = f * (w0[q] + wt[q]);
            spec.w.push_back(std::move(wt));
        }
        LruConfig lc;
        lc.in_dim = spec.nominal.w.back().cols();
        lc.state_dim = 2 + rng() % 6;
        lc.head_in = 2 + rng() % 4;
        lc.head_hidden = 2 + rng() % 4;
        lc.out_dim = dims;
        lc.r_min = 0.3;
        lc.r_max = 0.95;
        lc.activation = spec.activation;
        Lru lru("t2.lru", lc, rng);
        const ClosedLoopResult r = run_closed_loop_trial(spec, lru);
        BoundTrial t;
        t.trial = k;
        t.bound = opt.bound_factor * r.bound;
        t.measured = r.measured;
        t.margin = t.bound - t.measured;
        t.params = {{"L", double(L)},         {"N", double(n)},          {"scale", zero ? 0.0 : scale},
                    {"gamma_F", r.gamma_f},    {"gamma_LRU", r.gamma_lru}, {"w_norm", r.w_norm},
                    {"L_sigma", spec.activation.lipschitz()}, {"shared_samples", spec.shared_samples ? 1.0 : 0.0},
                    {"tail_ok", r.tail_ok ? 1.0 : 0.0}};
        rep.trials.push_back(std::move(t));
    }
    return rep;
}

}  // namespace madgnn
