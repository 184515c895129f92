#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <thread>
#include <vector>

#include "madgnn/baseline.hpp"
#include "madgnn/optim.hpp"
#include "madgnn/policy.hpp"

namespace madgnn {

class PpoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PpoConfig {
    double gamma = 0.99;
    double lambda = 0.95;
    double clip = 0.2;
    std::size_t epochs = 4;
    std::size_t minibatch_segments = 8;  // segments per Adam step; 8 = one full batch at n_envs 8
    double learning_rate = 3e-4;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    double max_grad_norm = 0.5;
    double reward_scale = 0.01;
    std::size_t horizon = 200;
    std::size_t n_envs = 8;
    std::size_t iterations = 50;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const {
        if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in (0, 1]");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("ppo: lambda must lie in [0, 1]");
        if (!(clip > 0.0)) throw ConfigError("ppo: clip must be > 0");
        if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be > 0");
        if (horizon == 0 || n_envs == 0) throw ConfigError("ppo: horizon and n_envs must be >= 1");
        if (minibatch_segments == 0) throw ConfigError("ppo: minibatch_segments must be >= 1");
        if (!(reward_scale > 0.0)) throw ConfigError("ppo: reward_scale must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Buffer
// ---------------------------------------------------------------------------

struct Transition {
    Observation obs;
    ActionRecord action;
    double reward = 0.0;  // global, unscaled
    double value = 0.0;   // critic estimate, scaled units
    bool done = false;
};

// Consecutive steps of one environment inside one episode.
struct Segment {
    std::size_t env = 0;
    std::vector<Matrix> initial_carry;
    std::vector<Transition> steps;
    double bootstrap = 0.0;  // V(next state) when the segment was cut mid-episode
    std::vector<double> advantages;
    std::vector<double> returns;
};

struct RolloutBuffer {
    std::vector<Segment> segments;
    std::vector<double> episode_returns;  // completed episodes only

    [[nodiscard]] std::size_t steps() const {
        std::size_t n = 0;
        for (const auto& s : segments) n += s.steps.size();
        return n;
    }
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

// A_t = sum_k (gamma lambda)^k delta_{t+k}, delta_t = r_t + gamma V_{t+1} - V_t,
// with V_{t+1} taken as 0 after a terminal step and as `bootstrap` past the end.
inline GaeResult gae(std::span<const double> rewards, std::span<const double> values, const std::vector<bool>& dones,
                     double bootstrap, double gamma, double lambda) {
    const std::size_t n = rewards.size();
    if (values.size() != n || dones.size() != n) {
        throw ShapeError("gae: " + std::to_string(n) + " rewards, " + std::to_string(values.size()) + " values, " +
                         std::to_string(dones.size()) + " done flags");
    }
    GaeResult out{std::vector<double>(n), std::vector<double>(n)};
    double next_adv = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const double next_v = k + 1 < n ? values[k + 1] : bootstrap;
        const double live = dones[k] ? 0.0 : 1.0;
        const double delta = rewards[k] + gamma * next_v * live - values[k];
        next_adv = delta + gamma * lambda * live * next_adv;
        out.advantages[k] = next_adv;
        out.returns[k] = next_adv + values[k];
    }
    return out;
}

inline void compute_advantages(RolloutBuffer& buf, const PpoConfig& cfg) {
    for (auto& seg : buf.segments) {
        std::vector<double> r, v;
        std::vector<bool> d;
        for (const auto& tr : seg.steps) {
            r.push_back(tr.reward * cfg.reward_scale);
            v.push_back(tr.value);
            d.push_back(tr.done);
        }
        auto g = gae(r, v, d, seg.bootstrap, cfg.gamma, cfg.lambda);
        seg.advantages = std::move(g.advantages);
        seg.returns = std::move(g.returns);
    }
}

// Shifts and scales all advantages in the buffer to mean 0, std 1.
inline void normalize_advantages(RolloutBuffer& buf) {
    double n = 0.0, mean = 0.0;
    for (const auto& s : buf.segments)
        for (double a : s.advantages) {
            n += 1.0;
            mean += a;
        }
    if (n == 0.0) return;
    mean /= n;
    double var = 0.0;
    for (const auto& s : buf.segments)
        for (double a : s.advantages) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / n);
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (auto& s : buf.segments)
        for (double& a : s.advantages) a = (a - mean) * inv;
}

// ---------------------------------------------------------------------------
// Collection
// ---------------------------------------------------------------------------

class RolloutCollector {
public:
    RolloutCollector(const EnvConfig& env_cfg, std::size_t n_envs, std::uint64_t seed) {
        for (std::size_t e = 0; e < n_envs; ++e) {
            slots_.emplace_back(ParticleEnv(env_cfg, mix_seed(seed, 2 * e)), Rng(mix_seed(seed, 2 * e + 1)));
        }
    }

    [[nodiscard]] std::size_t n_envs() const { return slots_.size(); }

    RolloutBuffer collect(Actor& actor, Critic& critic, std::size_t horizon, std::size_t threads = 1) {
        std::vector<RolloutBuffer> parts(slots_.size());
        auto run = [&](std::size_t e) { parts[e] = collect_one(e, actor, critic, horizon); };
        if (threads <= 1 || slots_.size() == 1) {
            for (std::size_t e = 0; e < slots_.size(); ++e) run(e);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(threads);
            for (std::size_t w = 0; w < threads; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t e = w; e < slots_.size(); e += threads) run(e);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& err : errors)
                if (err) std::rethrow_exception(err);
        }
        RolloutBuffer out;
        for (auto& p : parts) {
            for (auto& s : p.segments) out.segments.push_back(std::move(s));
            out.episode_returns.insert(out.episode_returns.end(), p.episode_returns.begin(), p.episode_returns.end());
        }
        return out;
    }

private:
    struct Slot {
        Slot(ParticleEnv e, Rng r) : env(std::move(e)), rng(r) {}

        ParticleEnv env;
        Rng rng;
        bool live = false;
        WorldState state;
        std::vector<Vec4> w;
        std::vector<Matrix> carry;
        double episode_return = 0.0;
        std::size_t episode = 0;
    };

    RolloutBuffer collect_one(std::size_t e, Actor& actor, Critic& critic, std::size_t horizon) {
        Slot& s = slots_[e];
        const EnvConfig& cfg = s.env.config();
        RolloutBuffer out;
        Segment seg;
        auto start_episode = [&] {
            ResetOutput r = s.env.reset();
            s.state = std::move(r.state);
            s.w = std::move(r.disturbance);
            s.carry = actor.initial_carry(cfg.n_agents);
            s.episode_return = 0.0;
            s.live = true;
        };
        if (!s.live) start_episode();
        seg.env = e;
        seg.initial_carry = s.carry;
        for (std::size_t k = 0; k < horizon; ++k) {
            Transition tr;
            tr.obs = make_observation(s.state, s.w, cfg);
            tr.value = critic.value(tr.obs);
            StepResult sr;
            StepOutput so;
            try {
                sr = act(actor, s.carry, tr.obs, s.rng);
                so = s.env.step(to_forces(sr.action.u));
            } catch (const std::exception& ex) {
                throw PpoError("env " + std::to_string(e) + " episode " + std::to_string(s.episode) + " step " +
                               std::to_string(s.state.t) + ": " + ex.what());
            }
            tr.action = std::move(sr.action);
            tr.reward = so.reward.global;
            tr.done = so.done;
            s.carry = std::move(sr.carry);
            s.state = std::move(so.state);
            s.w = std::move(so.disturbance);
            s.episode_return += tr.reward;
            seg.steps.push_back(std::move(tr));
            if (seg.steps.back().done) {
                out.episode_returns.push_back(s.episode_return);
                ++s.episode;
                out.segments.push_back(std::move(seg));
                seg = Segment{};
                seg.env = e;
                start_episode();
                seg.initial_carry = s.carry;
            }
        }
        if (!seg.steps.empty()) {
            seg.bootstrap = critic.value(make_observation(s.state, s.w, cfg));
            out.segments.push_back(std::move(seg));
        }
        return out;
    }

    std::vector<Slot> slots_;
};

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// min(rho A, clip(rho, 1 - eps, 1 + eps) A) for a 1x1 ratio.
inline double ppo_clip_objective(double rho, double adv, double eps) {
    return std::min(rho * adv, std::clamp(rho, 1.0 - eps, 1.0 + eps) * adv);
}

inline Var ppo_clip_objective(Var rho, double adv, double eps) {
    const double r = rho.value().item();
    const double unclipped = r * adv;
    const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps) * adv;
    const bool pass = unclipped <= clipped;
    const auto ir = rho.id;
    return rho.tape->record(Matrix::scalar(std::min(unclipped, clipped)), detail::needs(rho),
                            [ir, adv, pass](Tape& t, std::uint32_t self) {
                                if (pass) t.grad_buffer(ir)[0] += t.grad(self)[0] * adv;
                            },
                            "ppo_clip_objective");
}

struct LossParts {
    Var total;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double max_ratio_dev = 0.0;  // max |rho - 1|
    std::size_t steps = 0;
    std::size_t out_of_support = 0;
};

// Recomputes log-probabilities for whole segments from their stored initial
// carries and assembles the clipped PPO loss.
inline LossParts ppo_loss(Tape& t, Actor& actor, Critic& critic, std::span<const Segment* const> segs,
                          const PpoConfig& cfg) {
    std::vector<Var> obj, vl, ent;
    LossParts out;
    for (std::size_t si = 0; si < segs.size(); ++si) {
        const Segment& seg = *segs[si];
        if (seg.advantages.size() != seg.steps.size()) throw PpoError("ppo_loss: advantages not computed");
        std::vector<Var> carry;
        for (const auto& m : seg.initial_carry) carry.push_back(t.constant(m));
        for (std::size_t k = 0; k < seg.steps.size(); ++k) {
            const Transition& tr = seg.steps[k];
            ActorStep d = actor.step(t, carry, tr.obs);
            LogProb lp = log_prob(d, tr.action.a, tr.action.m);
            Var rho;
            if (lp.in_support) {
                const double diff = lp.value.value().item() - tr.action.log_prob;
                if (!std::isfinite(std::exp(diff))) {
                    std::ostringstream msg;
                    msg << "non-finite ratio at segment " << si << " (env " << seg.env << ") step " << k
                        << ": log_prob_new=" << lp.value.value().item() << " log_prob_old=" << tr.action.log_prob
                        << " mean_log_std=" << std::accumulate(d.log_std.value().data().begin(), d.log_std.value().data().end(), 0.0) / double(d.log_std.value().size())
                        << " min_magnitude=" << *std::min_element(d.magnitude.value().data().begin(), d.magnitude.value().data().end());
                    throw PpoError(msg.str());
                }
                rho = madgnn::exp(add_scalar(lp.value, -tr.action.log_prob));
                out.approx_kl += -diff;
            } else {
                rho = t.constant(Matrix::scalar(0.0));
                ++out.out_of_support;
            }
            const double r = rho.value().item();
            out.max_ratio_dev = std::max(out.max_ratio_dev, std::abs(r - 1.0));
            if (std::abs(r - 1.0) > cfg.clip) out.clip_fraction += 1.0;
            obj.push_back(ppo_clip_objective(rho, seg.advantages[k], cfg.clip));
            ent.push_back(gaussian_entropy(d.log_std));
            Var v = critic.value(t, tr.obs);
            vl.push_back(square(add_scalar(v, -seg.returns[k])));
            ++out.steps;
        }
    }
    if (out.steps == 0) throw PpoError("ppo_loss: empty minibatch");
    const double inv = 1.0 / static_cast<double>(out.steps);
    Var pol = scale(add_n(obj), -inv);
    Var val = scale(add_n(vl), inv);
    Var en = scale(add_n(ent), inv);
    out.total = sub(add(pol, scale(val, cfg.value_coef)), scale(en, cfg.entropy_coef));
    out.policy_loss = pol.value().item();
    out.value_loss = val.value().item();
    out.entropy = en.value().item();
    out.approx_kl *= inv;
    out.clip_fraction *= inv;
    return out;
}

struct UpdateStats {
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double first_pass_ratio_dev = 0.0;  // max |rho - 1| on the first minibatch
    std::size_t out_of_support = 0;
};

inline ParameterList joint_parameters(Actor& actor, Critic& critic) {
    ParameterList p = actor.parameters();
    for (auto* q : critic.parameters()) p.push_back(q);
    return p;
}

inline UpdateStats ppo_update(Actor& actor, Critic& critic, Adam& opt, RolloutBuffer& buf, const PpoConfig& cfg,
                              Rng& rng) {
    compute_advantages(buf, cfg);
    normalize_advantages(buf);
    const ParameterList params = joint_parameters(actor, critic);
    std::vector<const Segment*> order;
    for (const auto& s : buf.segments) order.push_back(&s);
    UpdateStats st;
    std::size_t batches = 0;
    for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += cfg.minibatch_segments) {
            const std::size_t e = std::min(order.size(), b + cfg.minibatch_segments);
            opt.zero_grad();
            LossParts lp;
            {
                Tape t;
                lp = ppo_loss(t, actor, critic, std::span<const Segment* const>(order.data() + b, e - b), cfg);
                t.backward(lp.total);
            }
            clip_grad_norm(params, cfg.max_grad_norm);
            opt.step();
            if (batches == 0) st.first_pass_ratio_dev = lp.max_ratio_dev;
            ++batches;
            st.policy_loss += lp.policy_loss;
            st.value_loss += lp.value_loss;
            st.entropy += lp.entropy;
            st.approx_kl += lp.approx_kl;
            st.clip_fraction += lp.clip_fraction;
            st.out_of_support += lp.out_of_support;
        }
    }
    if (batches > 0) {
        const double inv = 1.0 / static_cast<double>(batches);
        st.policy_loss *= inv;
        st.value_loss *= inv;
        st.entropy *= inv;
        st.approx_kl *= inv;
        st.clip_fraction *= inv;
    }
    return st;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct CurveRow {
    std::size_t iteration = 0;
    std::uint64_t seed = 0;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double wall_s = 0.0;
};

inline std::pair<double, double> mean_std(std::span<const double> xs) {
    if (xs.empty()) return {0.0, 0.0};
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return {m, std::sqrt(v / double(xs.size()))};
}

struct TrainHooks {
    std::function<void(const CurveRow&, const UpdateStats&)> on_iteration;
    // Called with the number of completed updates.
    std::function<void(std::size_t)> on_checkpoint;
    std::size_t checkpoint_every = 0;
    std::size_t max_nonfinite_streak = 3;
};

// Alternates collection and update. Curve row i reports the episodes
// collected with the parameters in force before update i.
inline std::vector<CurveRow> train(Actor& actor, Critic& critic, const EnvConfig& env_cfg, const PpoConfig& cfg,
                                   const TrainHooks& hooks = {}) {
    cfg.validate();
    EnvConfig ec = env_cfg;
    ec.validate();
    RolloutCollector collector(ec, cfg.n_envs, cfg.seed);
    Adam opt(joint_parameters(actor, critic), {.lr = cfg.learning_rate});
    Rng rng(mix_seed(cfg.seed, 0xbeef));
    std::vector<CurveRow> curve;
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t streak = 0;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        RolloutBuffer buf = collector.collect(actor, critic, cfg.horizon, cfg.threads);
        UpdateStats st;
        try {
            st = ppo_update(actor, critic, opt, buf, cfg, rng);
            streak = 0;
        } catch (const NonFiniteError& e) {
            if (++streak >= hooks.max_nonfinite_streak) {
                throw PpoError("aborting after " + std::to_string(streak) + " non-finite updates: " + e.what());
            }
        }
        CurveRow row;
        row.iteration = it;
        row.seed = cfg.seed;
        std::tie(row.mean_reward, row.std_reward) = mean_std(buf.episode_returns);
        row.policy_loss = st.policy_loss;
        row.value_loss = st.value_loss;
        row.entropy = st.entropy;
        row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        curve.push_back(row);
        if (hooks.on_iteration) hooks.on_iteration(row, st);
        if (hooks.on_checkpoint && hooks.checkpoint_every > 0 && (it + 1) % hooks.checkpoint_every == 0) {
            hooks.on_checkpoint(it + 1);
        }
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EpisodeStats {
    double reward = 0.0;
    double goal_fraction = 0.0;  // agents inside the goal region at the last step
    std::size_t collisions = 0;  // agent-steps spent overlapping
    std::vector<double> norms;   // state norm at t = 0..T
    bool finite = true;
};

struct EvalStats {
    std::vector<EpisodeStats> episodes;
    double mean_reward = 0.0;
    double std_reward = 0.0;
    double goal_rate = 0.0;
    double mean_collisions = 0.0;
};

// Episode k uses layout seed mix_seed(seed, k), so two policies evaluated
// with the same seed face identical layouts.
inline EpisodeStats run_episode(Actor& actor, const EnvConfig& cfg, std::uint64_t layout_seed,
                                std::uint64_t action_seed, bool deterministic) {
    ParticleEnv env(cfg, layout_seed);
    Rng rng(action_seed);
    ResetOutput r = env.reset();
    WorldState s = r.state;
    std::vector<Vec4> w = r.disturbance;
    std::vector<Matrix> carry = actor.initial_carry(cfg.n_agents);
    EpisodeStats ep;
    ep.norms.push_back(s.state_norm());
    RewardBreakdown last;
    for (std::size_t k = 0; k < cfg.episode_length; ++k) {
        StepResult sr = act(actor, carry, make_observation(s, w, cfg), rng, deterministic);
        StepOutput so = env.step(to_forces(sr.action.u));
        carry = std::move(sr.carry);
        s = std::move(so.state);
        w = std::move(so.disturbance);
        ep.reward += so.reward.global;
        for (bool c : so.reward.colliding) ep.collisions += c;
        ep.norms.push_back(s.state_norm());
        last = std::move(so.reward);
    }
    if (!last.at_goal.empty()) {
        ep.goal_fraction = double(std::count(last.at_goal.begin(), last.at_goal.end(), true)) / double(last.at_goal.size());
    }
    for (double n : ep.norms) ep.finite = ep.finite && std::isfinite(n);
    return ep;
}

inline EvalStats evaluate(Actor& actor, const EnvConfig& cfg, std::size_t episodes, std::uint64_t seed,
                          bool deterministic = false) {
    EvalStats out;
    std::vector<double> rewards;
    double goals = 0.0, coll = 0.0;
    for (std::size_t k = 0; k < episodes; ++k) {
        out.episodes.push_back(run_episode(actor, cfg, mix_seed(seed, 2 * k), mix_seed(seed, 2 * k + 1), deterministic));
        rewards.push_back(out.episodes.back().reward);
        goals += out.episodes.back().goal_fraction;
        coll += double(out.episodes.back().collisions);
    }
    std::tie(out.mean_reward, out.std_reward) = mean_std(rewards);
    if (episodes > 0) {
        out.goal_rate = goals / double(episodes);
        out.mean_collisions = coll / double(episodes);
    }
    return out;
}

}  // namespace madgnn
