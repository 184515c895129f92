#pragma once

// Magnitude/direction stochastic policy.
//
//   u = u_base + m * tanh(a),   a ~ N(mu, diag(sigma^2))       (elementwise)
//   m = min(|LRU(Phi_1(W_t))|, m_max)                         (disturbance feedback)
//   (mu, log sigma) = heads(RNN(Phi_2(X_t)))                   (state feedback)
//
// Density of u given the history, per dimension with m > 0:
//   log pi = log N(a; mu, sigma) - log m - log(1 - tanh^2 a)

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "madgnn/env.hpp"
#include "madgnn/gnn.hpp"
#include "madgnn/lru.hpp"
#include "madgnn/ops.hpp"
#include "madgnn/random.hpp"

namespace madgnn {

class ReconstructionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kNodeFeatures = 7;
inline constexpr std::size_t kDisturbanceFeatures = 4;
inline constexpr std::size_t kActionDim = 2;

// Everything an actor sees at one step. Node rows follow `graph`; agent k
// lives in row agent_nodes[k]. Per-agent outputs are in agent order.
struct Observation {
    Matrix features;     // nodes x 7: [vx, vy, px-gx, py-gy, gx, gy, is_obstacle]
    Matrix positions;    // nodes x 2
    Matrix disturbance;  // nodes x 4: w_t for agents, zero for obstacles
    CommGraph graph;
    std::vector<std::size_t> agent_nodes;
    Matrix u_base;       // agents x 2
    double time_fraction = 0.0;
};

// Builds the observation; node i is natural node perm[i] when a permutation
// is given (natural order: agents, then obstacles).
inline Observation make_observation(const WorldState& s, const std::vector<Vec4>& w, const EnvConfig& cfg,
                                    const Permutation* perm = nullptr) {
    const std::size_t na = s.n_agents(), n = na + s.obstacles.size();
    if (w.size() != na) throw ShapeError("make_observation: disturbance rows do not match agents");
    Matrix feat(n, kNodeFeatures), pos(n, 2), dist(n, kDisturbanceFeatures);
    for (std::size_t i = 0; i < na; ++i) {
        const Vec4 x = s.relative_state(i);
        for (std::size_t k = 0; k < 4; ++k) {
            feat(i, k) = x[k];
            dist(i, k) = w[i][k];
        }
        feat(i, 4) = s.goals[i][0];
        feat(i, 5) = s.goals[i][1];
        pos(i, 0) = s.pos[i][0];
        pos(i, 1) = s.pos[i][1];
    }
    for (std::size_t j = 0; j < s.obstacles.size(); ++j) {
        feat(na + j, 4) = s.obstacles[j][0];
        feat(na + j, 5) = s.obstacles[j][1];
        feat(na + j, 6) = 1.0;
        pos(na + j, 0) = s.obstacles[j][0];
        pos(na + j, 1) = s.obstacles[j][1];
    }
    Observation obs;
    const auto ub = base_controller(s.pos, s.goals, cfg.base_gain);
    obs.u_base = Matrix(na, kActionDim);
    for (std::size_t i = 0; i < na; ++i) {
        obs.u_base(i, 0) = ub[i][0];
        obs.u_base(i, 1) = ub[i][1];
    }
    obs.time_fraction = static_cast<double>(s.t) / static_cast<double>(std::max<std::size_t>(cfg.episode_length, 1));
    CommGraph g = world_graph(s, cfg);
    obs.agent_nodes.resize(na);
    if (perm) {
        obs.features = perm->apply_rows(feat);
        obs.positions = perm->apply_rows(pos);
        obs.disturbance = perm->apply_rows(dist);
        obs.graph = perm->apply(g);
        const Permutation inv = perm->inverse();
        for (std::size_t k = 0; k < na; ++k) obs.agent_nodes[k] = inv[k];
    } else {
        obs.features = std::move(feat);
        obs.positions = std::move(pos);
        obs.disturbance = std::move(dist);
        obs.graph = std::move(g);
        for (std::size_t k = 0; k < na; ++k) obs.agent_nodes[k] = k;
    }
    return obs;
}

// Distribution pieces for one step, one row per agent.
struct ActorStep {
    Var mu;
    Var log_std;
    Var magnitude;
    Matrix u_base;
};

class Actor {
public:
    virtual ~Actor() = default;
    [[nodiscard]] virtual std::string kind() const = 0;
    virtual ParameterList parameters() = 0;
    [[nodiscard]] virtual std::vector<Matrix> initial_carry(std::size_t n_agents) const = 0;
    // Advances the recurrent carry by one step.
    virtual ActorStep step(Tape& t, std::vector<Var>& carry, const Observation& obs) = 0;
};

// ---------------------------------------------------------------------------
// Squashed Gaussian density
// ---------------------------------------------------------------------------

// log(1 - tanh^2 a), evaluated as 2 (log 2 - a - softplus(-2a)).
inline double log1m_tanh2(double a) { return 2.0 * (std::numbers::ln2 - a - softplus_value(-2.0 * a)); }

inline Var log1m_tanh2(Var a) {
    return map(a, [](double x) { return log1m_tanh2(x); }, [](double x, double) { return -2.0 * std::tanh(x); },
               "log1m_tanh2");
}

// log(m) where mask != 0, zero elsewhere.
inline Var masked_log(Var m, const Matrix& mask) {
    const Matrix& v = m.value();
    require_same_shape(v, mask, "masked_log");
    Matrix out(v.rows(), v.cols());
    for (std::size_t k = 0; k < v.size(); ++k) out[k] = mask[k] != 0.0 ? std::log(v[k]) : 0.0;
    const auto im = m.id;
    return m.tape->record(std::move(out), detail::needs(m),
                          [im, mask](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& x = t.value(im);
                              Matrix& d = t.grad_buffer(im);
                              for (std::size_t k = 0; k < g.size(); ++k)
                                  if (mask[k] != 0.0) d[k] += g[k] / x[k];
                          },
                          "masked_log");
}

// Recorded magnitudes at or below this are treated as "no learned action" in
// the density: the dimension contributes log N(a) only.
inline constexpr double kMagnitudeFloor = 1e-3;

// Pre-squash sample that reproduces the stored action under a new magnitude:
//   a' = a + atanh(tanh(a) r) - atanh(tanh(a)),   r = m_old / m_new.
// Equal to a bit-for-bit when r == 1. Entries with m_old <= floor keep a.
// Sets *out_of_support when some |tanh(a) r| >= 1.
inline Var anchored_presquash(Var m_new, const Matrix& a, const Matrix& m_old, bool* out_of_support,
                              double floor = kMagnitudeFloor) {
    const Matrix& mn = m_new.value();
    require_same_shape(mn, a, "anchored_presquash");
    require_same_shape(a, m_old, "anchored_presquash");
    Matrix out = a;
    Matrix slope(a.rows(), a.cols());  // d a' / d m_new
    bool bad = false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (!(m_old[k] > floor)) continue;
        if (mn[k] == 0.0) {
            bad = true;
            continue;
        }
        const double r = m_old[k] / mn[k];
        if (r == 1.0) {
            slope[k] = -std::tanh(a[k]) / (1.0 - std::tanh(a[k]) * std::tanh(a[k])) / mn[k];
            if (!std::isfinite(slope[k])) slope[k] = 0.0;
            continue;
        }
        const double d = std::tanh(a[k]);
        const double x = d * r;
        if (std::abs(x) >= 1.0) {
            bad = true;
            continue;
        }
        out[k] = std::abs(d) < 1.0 ? a[k] + (std::atanh(x) - std::atanh(d)) : std::atanh(x);
        slope[k] = -x / ((1.0 - x * x) * mn[k]);
    }
    if (out_of_support) *out_of_support = bad;
    if (bad) {
        // The stored action is impossible under the new magnitude; return the
        // anchor itself with no gradient.
        return m_new.tape->constant(a);
    }
    const auto im = m_new.id;
    return m_new.tape->record(std::move(out), detail::needs(m_new),
                              [im, slope = std::move(slope)](Tape& t, std::uint32_t self) {
                                  const Matrix& g = t.grad(self);
                                  Matrix& dm = t.grad_buffer(im);
                                  for (std::size_t k = 0; k < g.size(); ++k) dm[k] += g[k] * slope[k];
                              },
                              "anchored_presquash");
}

struct LogProb {
    Var value;                  // 1x1, summed over agents and dimensions
    bool in_support = true;
};

// Joint log-density of the action stored as (a, m_old) under the
// distribution in `d`. Dimensions with m_old <= floor contribute log N(a) only.
inline LogProb log_prob(const ActorStep& d, const Matrix& a, const Matrix& m_old,
                        double floor = kMagnitudeFloor) {
    Tape& t = *d.mu.tape;
    bool out = false;
    Var ap = anchored_presquash(d.magnitude, a, m_old, &out, floor);
    Matrix mask(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) mask[k] = m_old[k] > floor ? 1.0 : 0.0;
    Var gauss = gaussian_log_density(ap, d.mu, d.log_std);
    Var jac = add(masked_log(d.magnitude, mask), mul(log1m_tanh2(ap), t.constant(mask)));
    return {sum(sub(gauss, jac)), !out};
}

// Differential entropy of the pre-squash Gaussian, summed.
inline Var gaussian_entropy(Var log_std) {
    const double c = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
    return add_scalar(sum(log_std), c * static_cast<double>(log_std.value().size()));
}

struct ActionRecord {
    Matrix a;       // pre-squash sample
    Matrix m;       // magnitude used
    Matrix u_base;
    Matrix u;       // u_base + m * tanh(a)
    double log_prob = 0.0;
};

inline Matrix compose_action(const Matrix& u_base, const Matrix& m, const Matrix& a) {
    Matrix u = u_base;
    for (std::size_t k = 0; k < u.size(); ++k) u[k] += m[k] * std::tanh(a[k]);
    return u;
}

// Draws a ~ N(mu, sigma) (or a = mu when deterministic) and records the
// log-probability through the same code path used during training.
inline ActionRecord sample_action(const ActorStep& d, Rng& rng, bool deterministic = false) {
    ActionRecord r;
    const Matrix& mu = d.mu.value();
    const Matrix& ls = d.log_std.value();
    r.a = mu;
    if (!deterministic)
        for (std::size_t k = 0; k < r.a.size(); ++k) r.a[k] += std::exp(ls[k]) * randn(rng);
    r.m = d.magnitude.value();
    r.u_base = d.u_base;
    r.u = compose_action(r.u_base, r.m, r.a);
    r.log_prob = log_prob(d, r.a, r.m).value.value().item();
    return r;
}

// Inverts u = u_base + m tanh(a). Requires |u - u_base| < m where m > 0;
// zero-magnitude entries need the stored sample and are returned as 0.
inline Matrix reconstruct_presquash(const Matrix& u, const Matrix& u_base, const Matrix& m) {
    require_same_shape(u, u_base, "reconstruct_presquash");
    require_same_shape(u, m, "reconstruct_presquash");
    Matrix a(u.rows(), u.cols());
    for (std::size_t k = 0; k < u.size(); ++k) {
        if (m[k] == 0.0) continue;
        const double x = (u[k] - u_base[k]) / m[k];
        if (!(std::abs(x) < 1.0)) {
            throw ReconstructionError("reconstruct_presquash: |u - u_base| >= m at entry " + std::to_string(k));
        }
        a[k] = std::atanh(x);
    }
    return a;
}

// ---------------------------------------------------------------------------
// MAD policy
// ---------------------------------------------------------------------------

struct MadConfig {
    std::vector<std::size_t> mag_widths{16, 16};
    std::size_t embed_dim = 8;  // magnitude GNN output / LRU input
    std::size_t lru_state = 16;
    std::size_t lru_head_in = 16;
    std::size_t lru_head_hidden = 16;
    double lru_r_min = 0.8;
    double lru_r_max = 0.97;
    double lru_max_phase = std::numbers::pi / 4.0;
    double lru_head_gain = 1.0;
    std::vector<std::size_t> dir_widths{32, 32};
    std::size_t rnn_hidden = 32;
    double magnitude_cap = 1.0;
    double log_std_min = -3.0;
    double log_std_max = 0.5;
    Activation activation{};
};

class MadPolicy final : public Actor {
public:
    MadPolicy(MadConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        if (!(cfg_.magnitude_cap > 0.0)) throw ConfigError("policy: magnitude_cap must be > 0");
        Rng rng(seed);
        GnnConfig mg;
        mg.in_dim = kDisturbanceFeatures;
        mg.widths = cfg_.mag_widths;
        mg.out_dim = cfg_.embed_dim;
        mg.out_offset = false;
        mg.activation = cfg_.activation;
        mag_gnn_ = Gnn("mad.mag_gnn", mg, rng);
        LruConfig lc;
        lc.in_dim = cfg_.embed_dim;
        lc.state_dim = cfg_.lru_state;
        lc.head_in = cfg_.lru_head_in;
        lc.head_hidden = cfg_.lru_head_hidden;
        lc.out_dim = kActionDim;
        lc.r_min = cfg_.lru_r_min;
        lc.r_max = cfg_.lru_r_max;
        lc.max_phase = cfg_.lru_max_phase;
        lc.head_init_gain = cfg_.lru_head_gain;
        lc.activation = cfg_.activation;
        lru_ = Lru("mad.lru", lc, rng);
        GnnConfig dg;
        dg.in_dim = kNodeFeatures;
        dg.widths = cfg_.dir_widths;
        dg.activation = cfg_.activation;
        dir_gnn_ = Gnn("mad.dir_gnn", dg, rng);
        const std::size_t fv = cfg_.dir_widths.back(), h = cfg_.rnn_hidden;
        w_ih_ = Parameter("mad.rnn.W_ih", randn_matrix(fv, h, 1.0 / std::sqrt(double(fv)), rng));
        w_hh_ = Parameter("mad.rnn.W_hh", randn_matrix(h, h, 0.5 / std::sqrt(double(h)), rng));
        b_h_ = Parameter("mad.rnn.b", Matrix(1, h));
        w_mu_ = Parameter("mad.mu.W", randn_matrix(h, kActionDim, 0.1 / std::sqrt(double(h)), rng));
        b_mu_ = Parameter("mad.mu.b", Matrix(1, kActionDim));
        w_ls_ = Parameter("mad.log_std.W", randn_matrix(h, kActionDim, 0.1 / std::sqrt(double(h)), rng));
        b_ls_ = Parameter("mad.log_std.b", Matrix(1, kActionDim));
    }

    [[nodiscard]] std::string kind() const override { return "mad"; }
    [[nodiscard]] const MadConfig& config() const noexcept { return cfg_; }

    ParameterList parameters() override {
        ParameterList out = mag_gnn_.parameters();
        for (auto* p : lru_.parameters()) out.push_back(p);
        for (auto* p : dir_gnn_.parameters()) out.push_back(p);
        for (auto* p : {&w_ih_, &w_hh_, &b_h_, &w_mu_, &b_mu_, &w_ls_, &b_ls_}) out.push_back(p);
        return out;
    }

    Gnn& magnitude_gnn() { return mag_gnn_; }
    Gnn& direction_gnn() { return dir_gnn_; }
    Lru& lru() { return lru_; }

    // carry = {lru re, lru im, rnn h}
    [[nodiscard]] std::vector<Matrix> initial_carry(std::size_t n_agents) const override {
        return {Matrix(n_agents, cfg_.lru_state), Matrix(n_agents, cfg_.lru_state), Matrix(n_agents, cfg_.rnn_hidden)};
    }

    ActorStep step(Tape& t, std::vector<Var>& carry, const Observation& obs) override {
        if (carry.size() != 3) throw ShapeError("MadPolicy: carry must hold 3 matrices");
        const GraphContext ctx{&obs.graph, &obs.positions, nullptr};
        ActorStep out;
        out.magnitude = magnitude(t, carry, obs, ctx);
        Var v = gather_rows(dir_gnn_.forward(t, t.constant(obs.features), ctx), obs.agent_nodes);
        Var h = madgnn::tanh(add_row(add(matmul(v, t.param(w_ih_)), matmul(carry[2], t.param(w_hh_))), t.param(b_h_)));
        carry[2] = h;
        out.mu = affine(h, t.param(w_mu_), t.param(b_mu_));
        Var s = sigmoid(affine(h, t.param(w_ls_), t.param(b_ls_)));
        out.log_std = add_scalar(scale(s, cfg_.log_std_max - cfg_.log_std_min), cfg_.log_std_min);
        out.u_base = obs.u_base;
        return out;
    }

    // Unclamped LRU output y for the agent rows; advances carry[0..1].
    Var lru_output(Tape& t, std::vector<Var>& carry, const Observation& obs, const GraphContext& ctx) {
        Var z = gather_rows(mag_gnn_.forward(t, t.constant(obs.disturbance), ctx), obs.agent_nodes);
        LruCarry c{carry[0], carry[1]};
        Var y = lru_.step(lru_.bind(t), c, z);
        carry[0] = c.re;
        carry[1] = c.im;
        return y;
    }

    // Certified gain of w -> m for graphs with at most n_nodes nodes.
    [[nodiscard]] double magnitude_gain_bound(std::size_t n_nodes) const {
        return lru_.gain_bound() * mag_gnn_.gain_bound(Gnn::attention_support_norm(n_nodes));
    }

private:
    Var magnitude(Tape& t, std::vector<Var>& carry, const Observation& obs, const GraphContext& ctx) {
        return min_scalar(madgnn::abs(lru_output(t, carry, obs, ctx)), cfg_.magnitude_cap);
    }

    MadConfig cfg_;
    Gnn mag_gnn_;
    Lru lru_;
    Gnn dir_gnn_;
    Parameter w_ih_, w_hh_, b_h_, w_mu_, b_mu_, w_ls_, b_ls_;
};

// Runs one actor step on a gradient-free tape and returns plain matrices.
struct StepResult {
    ActionRecord action;
    Matrix mu, log_std;
    std::vector<Matrix> carry;
};

inline StepResult act(Actor& actor, const std::vector<Matrix>& carry, const Observation& obs, Rng& rng,
                      bool deterministic = false) {
    Tape t(false);
    std::vector<Var> c;
    for (const auto& m : carry) c.push_back(t.constant(m));
    ActorStep d = actor.step(t, c, obs);
    StepResult r;
    r.action = sample_action(d, rng, deterministic);
    r.mu = d.mu.value();
    r.log_std = d.log_std.value();
    for (const auto& v : c) r.carry.push_back(v.value());
    return r;
}

inline std::vector<Vec2> to_forces(const Matrix& u) {
    std::vector<Vec2> out(u.rows());
    for (std::size_t i = 0; i < u.rows(); ++i) out[i] = {u(i, 0), u(i, 1)};
    return out;
}

}  // namespace madgnn
