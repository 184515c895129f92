#pragma once

// Point-mass navigation world with soft contacts.
//
// Agent state x = [vx, vy, px, py]. Per step:
//   v' = (1 - damping) v + (u + f_contact) dt / mass,  |v'| clamped to vmax
//   p' = p + v' dt
//   x' += noise
// Contact between overlapping entities (d < r_i + r_j) pushes them apart
// with magnitude k_c * k_m * log(1 + exp((r_i + r_j - d) / k_m)).
// Obstacles are static.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "madgnn/graph.hpp"
#include "madgnn/random.hpp"

namespace madgnn {

using Vec4 = std::array<double, 4>;

struct EnvConfig {
    std::size_t n_agents = 5;
    std::size_t n_obstacles = 2;
    double world_scale = 1.0;  // half-width = world_scale * sqrt(n_agents)
    double dt = 0.1;
    double damping = 0.25;
    double mass = 1.0;
    double max_speed = 1.0;
    double comm_radius = 1.0;
    double agent_radius = 0.05;
    double obstacle_radius = 0.1;
    double goal_radius = 0.1;
    double contact_force = 100.0;
    double contact_margin = 0.01;
    double noise_std = 0.0;
    std::size_t episode_length = 200;
    double base_gain = -0.6;
    std::size_t max_spawn_tries = 10000;

    [[nodiscard]] double half_width() const { return world_scale * std::sqrt(static_cast<double>(n_agents)); }

    void validate() const {
        if (n_agents == 0) throw ConfigError("env: n_agents must be >= 1");
        if (!(dt > 0.0)) throw ConfigError("env: dt must be > 0");
        if (!(comm_radius > 0.0)) throw ConfigError("env: comm_radius must be > 0");
        if (!(agent_radius > 0.0) || !(obstacle_radius > 0.0) || !(goal_radius > 0.0)) {
            throw ConfigError("env: radii must be > 0");
        }
        if (!(mass > 0.0)) throw ConfigError("env: mass must be > 0");
        if (!(max_speed > 0.0)) throw ConfigError("env: max_speed must be > 0");
        if (damping < 0.0 || damping > 1.0) throw ConfigError("env: damping must lie in [0, 1]");
        if (!(contact_margin > 0.0)) throw ConfigError("env: contact_margin must be > 0");
        if (noise_std < 0.0) throw ConfigError("env: noise_std must be >= 0");
        if (!(world_scale > 0.0)) throw ConfigError("env: world_scale must be > 0");
    }
};

struct WorldState {
    std::vector<Vec2> vel;
    std::vector<Vec2> pos;
    std::vector<Vec2> goals;
    std::vector<Vec2> obstacles;
    std::size_t t = 0;

    [[nodiscard]] std::size_t n_agents() const { return pos.size(); }

    // Per-agent state relative to the goal, [v, p - g].
    [[nodiscard]] Vec4 relative_state(std::size_t i) const {
        return {vel[i][0], vel[i][1], pos[i][0] - goals[i][0], pos[i][1] - goals[i][1]};
    }

    // sqrt(sum_i |v_i|^2 + |p_i - g_i|^2)
    [[nodiscard]] double state_norm() const {
        double s = 0.0;
        for (std::size_t i = 0; i < n_agents(); ++i)
            for (double v : relative_state(i)) s += v * v;
        return std::sqrt(s);
    }
};

struct RewardBreakdown {
    double global = 0.0;
    std::vector<double> per_agent;
    std::vector<double> distance;  // -|p - g| per agent
    std::vector<bool> colliding;
    std::vector<bool> at_goal;
};

struct StepOutput {
    WorldState state;
    RewardBreakdown reward;
    std::vector<Vec4> disturbance;
    CommGraph graph;
    bool done = false;
};

struct ResetOutput {
    WorldState state;
    CommGraph graph;
    std::vector<Vec4> disturbance;
};

inline constexpr double kCollisionReward = -5.0;
inline constexpr double kGoalReward = 5.0;

// u_base = K (p - g)
inline std::vector<Vec2> base_controller(std::span<const Vec2> pos, std::span<const Vec2> goals, double k) {
    std::vector<Vec2> out(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) out[i] = {k * (pos[i][0] - goals[i][0]), k * (pos[i][1] - goals[i][1])};
    return out;
}

// Entity positions and kinds in graph order: agents, then obstacles.
inline std::vector<Vec2> entity_positions(const WorldState& s) {
    std::vector<Vec2> out = s.pos;
    out.insert(out.end(), s.obstacles.begin(), s.obstacles.end());
    return out;
}

inline std::vector<EntityKind> entity_kinds(const WorldState& s) {
    std::vector<EntityKind> out(s.pos.size(), EntityKind::agent);
    out.insert(out.end(), s.obstacles.size(), EntityKind::obstacle);
    return out;
}

inline CommGraph world_graph(const WorldState& s, const EnvConfig& cfg) {
    return build_comm_graph(entity_positions(s), entity_kinds(s), cfg.comm_radius);
}

// Contact force on each agent.
inline std::vector<Vec2> contact_forces(const WorldState& s, const EnvConfig& cfg) {
    const std::size_t n = s.n_agents();
    std::vector<Vec2> f(n, Vec2{0.0, 0.0});
    auto push = [&](const Vec2& a, const Vec2& b, double dmin) -> Vec2 {
        const double dx = a[0] - b[0], dy = a[1] - b[1];
        const double d = std::hypot(dx, dy);
        if (d >= dmin) return {0.0, 0.0};
        const double mag = cfg.contact_force * cfg.contact_margin *
                           std::log1p(std::exp((dmin - d) / cfg.contact_margin));
        if (d == 0.0) return {mag, 0.0};
        return {mag * dx / d, mag * dy / d};
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 fij = push(s.pos[i], s.pos[j], 2.0 * cfg.agent_radius);
            f[i][0] += fij[0];
            f[i][1] += fij[1];
            f[j][0] -= fij[0];
            f[j][1] -= fij[1];
        }
        for (const auto& o : s.obstacles) {
            const Vec2 fo = push(s.pos[i], o, cfg.agent_radius + cfg.obstacle_radius);
            f[i][0] += fo[0];
            f[i][1] += fo[1];
        }
    }
    return f;
}

// The noise-free transition.
inline WorldState nominal_step(const WorldState& s, std::span<const Vec2> u, const EnvConfig& cfg) {
    if (u.size() != s.n_agents()) {
        throw ShapeError("step: " + std::to_string(u.size()) + " actions for " + std::to_string(s.n_agents()) + " agents");
    }
    for (const auto& ui : u)
        if (!std::isfinite(ui[0]) || !std::isfinite(ui[1])) throw NonFiniteError("step: non-finite action");
    const auto f = contact_forces(s, cfg);
    WorldState out = s;
    for (std::size_t i = 0; i < s.n_agents(); ++i) {
        Vec2 v;
        for (int k = 0; k < 2; ++k)
            v[k] = (1.0 - cfg.damping) * s.vel[i][k] + (u[i][k] + f[i][k]) * cfg.dt / cfg.mass;
        const double speed = std::hypot(v[0], v[1]);
        if (speed > cfg.max_speed) {
            v[0] *= cfg.max_speed / speed;
            v[1] *= cfg.max_speed / speed;
        }
        out.vel[i] = v;
        out.pos[i] = {s.pos[i][0] + v[0] * cfg.dt, s.pos[i][1] + v[1] * cfg.dt};
    }
    out.t = s.t + 1;
    return out;
}

// w_t = x_t - f(x_{t-1}, u_{t-1})
inline std::vector<Vec4> reconstruct_disturbance(const WorldState& x, const WorldState& x_prev,
                                                 std::span<const Vec2> u_prev, const EnvConfig& cfg) {
    const WorldState pred = nominal_step(x_prev, u_prev, cfg);
    std::vector<Vec4> w(x.n_agents());
    for (std::size_t i = 0; i < x.n_agents(); ++i) {
        w[i] = {x.vel[i][0] - pred.vel[i][0], x.vel[i][1] - pred.vel[i][1], x.pos[i][0] - pred.pos[i][0],
                x.pos[i][1] - pred.pos[i][1]};
    }
    return w;
}

// The initial disturbance is the initial (goal-relative) state.
inline std::vector<Vec4> initial_disturbance(const WorldState& s) {
    std::vector<Vec4> w(s.n_agents());
    for (std::size_t i = 0; i < s.n_agents(); ++i) w[i] = s.relative_state(i);
    return w;
}

inline RewardBreakdown reward(const WorldState& s, const EnvConfig& cfg) {
    const std::size_t n = s.n_agents();
    RewardBreakdown r;
    r.per_agent.assign(n, 0.0);
    r.distance.assign(n, 0.0);
    r.colliding.assign(n, false);
    r.at_goal.assign(n, false);
    auto dist = [](const Vec2& a, const Vec2& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && dist(s.pos[i], s.pos[j]) < 2.0 * cfg.agent_radius) r.colliding[i] = true;
        for (const auto& o : s.obstacles)
            if (dist(s.pos[i], o) < cfg.agent_radius + cfg.obstacle_radius) r.colliding[i] = true;
        const double d = dist(s.pos[i], s.goals[i]);
        r.distance[i] = -d;
        r.at_goal[i] = d <= cfg.goal_radius;
        r.per_agent[i] = -d + (r.colliding[i] ? kCollisionReward : 0.0) + (r.at_goal[i] ? kGoalReward : 0.0);
        r.global += r.per_agent[i];
    }
    return r;
}

class ParticleEnv {
public:
    ParticleEnv(EnvConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) { cfg_.validate(); }

    [[nodiscard]] const EnvConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const WorldState& state() const noexcept { return state_; }

    ResetOutput reset() {
        state_ = spawn();
        return {state_, world_graph(state_, cfg_), initial_disturbance(state_)};
    }

    // Replaces the world with a given layout, e.g. a permuted copy.
    ResetOutput reset_to(WorldState s) {
        state_ = std::move(s);
        state_.t = 0;
        return {state_, world_graph(state_, cfg_), initial_disturbance(state_)};
    }

    StepOutput step(std::span<const Vec2> u) {
        WorldState next = nominal_step(state_, u, cfg_);
        if (cfg_.noise_std > 0.0) {
            std::normal_distribution<double> nd(0.0, cfg_.noise_std);
            for (std::size_t i = 0; i < next.n_agents(); ++i) {
                next.vel[i][0] += nd(rng_);
                next.vel[i][1] += nd(rng_);
                next.pos[i][0] += nd(rng_);
                next.pos[i][1] += nd(rng_);
            }
        }
        StepOutput out;
        out.disturbance = reconstruct_disturbance(next, state_, u, cfg_);
        out.reward = reward(next, cfg_);
        out.graph = world_graph(next, cfg_);
        out.done = next.t >= cfg_.episode_length;
        state_ = std::move(next);
        out.state = state_;
        return out;
    }

private:
    WorldState spawn() {
        const double hw = cfg_.half_width();
        WorldState s;
        auto far_enough = [](const std::vector<Vec2>& pts, const Vec2& p, double dmin) {
            for (const auto& q : pts)
                if (std::hypot(p[0] - q[0], p[1] - q[1]) <= dmin) return false;
            return true;
        };
        auto sample = [&](auto&& accept) {
            for (std::size_t k = 0; k < cfg_.max_spawn_tries; ++k) {
                Vec2 p{uniform(rng_, -hw, hw), uniform(rng_, -hw, hw)};
                if (accept(p)) return p;
            }
            throw ConfigError("env: could not place all entities without overlap in a box of half-width " +
                              std::to_string(hw) + "; reduce entity counts or radii");
        };
        const double ra = cfg_.agent_radius, ro = cfg_.obstacle_radius, rg = cfg_.goal_radius;
        for (std::size_t k = 0; k < cfg_.n_obstacles; ++k)
            s.obstacles.push_back(sample([&](const Vec2& p) { return far_enough(s.obstacles, p, 2.0 * ro); }));
        for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
            s.pos.push_back(sample([&](const Vec2& p) {
                return far_enough(s.pos, p, 2.0 * ra) && far_enough(s.obstacles, p, ra + ro);
            }));
        }
        for (std::size_t i = 0; i < cfg_.n_agents; ++i) {
            s.goals.push_back(sample([&](const Vec2& p) {
                return far_enough(s.goals, p, std::max(2.0 * ra, 2.0 * rg)) &&
                       far_enough(s.obstacles, p, ra + ro + rg);
            }));
        }
        s.vel.assign(cfg_.n_agents, Vec2{0.0, 0.0});
        return s;
    }

    EnvConfig cfg_;
    Rng rng_;
    WorldState state_;
};

}  // namespace madgnn
