#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "madgnn/baseline.hpp"
#include "madgnn/gradcheck.hpp"
#include "madgnn/policy.hpp"

using namespace madgnn;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;

// Scalar distribution pieces on a tape.
ActorStep scalar_step(Tape& t, double mu, double sigma, double m, double u_base = 0.0) {
    return {t.constant(Matrix::scalar(mu)), t.constant(Matrix::scalar(std::log(sigma))),
            t.constant(Matrix::scalar(m)), Matrix::scalar(u_base)};
}

double scalar_log_prob(double a, double mu, double sigma, double m) {
    Tape t(false);
    return log_prob(scalar_step(t, mu, sigma, m), Matrix::scalar(a), Matrix::scalar(m)).value.value().item();
}

// Per-dimension density oracle written out directly.
double density_oracle(double a, double mu, double sigma, double m) {
    const double z = (a - mu) / sigma;
    const double th = std::tanh(a);
    return -0.5 * z * z - std::log(sigma) - kHalfLog2Pi - std::log(m) - std::log(1.0 - th * th);
}

std::vector<Vec4> zeros(std::size_t n) { return std::vector<Vec4>(n, Vec4{0, 0, 0, 0}); }

WorldState permute_agents(const WorldState& s, const std::vector<std::size_t>& p) {
    WorldState out = s;
    for (std::size_t k = 0; k < p.size(); ++k) {
        out.pos[k] = s.pos[p[k]];
        out.vel[k] = s.vel[p[k]];
        out.goals[k] = s.goals[p[k]];
    }
    return out;
}

}  // namespace

TEST(LogProb, ScalarStandardCase) {
    const double v = scalar_log_prob(0.0, 0.0, 1.0, 1.0);
    EXPECT_NEAR(v, -0.91894, 5e-6);
    EXPECT_NEAR(v, -kHalfLog2Pi, 1e-15);
}

TEST(LogProb, MatchesOracleOnRandomInputs) {
    Rng rng(1);
    for (int k = 0; k < 200; ++k) {
        const double a = uniform(rng, -4, 4), mu = uniform(rng, -1, 1), s = uniform(rng, 0.1, 2), m = uniform(rng, 0.01, 1);
        EXPECT_NEAR(scalar_log_prob(a, mu, s, m), density_oracle(a, mu, s, m), 1e-10);
    }
}

TEST(LogProb, DoublingMagnitudeShiftsByLogTwo) {
    for (double a : {-1.3, 0.0, 0.4, 2.0}) {
        EXPECT_NEAR(scalar_log_prob(a, 0.2, 0.7, 0.8) - scalar_log_prob(a, 0.2, 0.7, 0.4), -std::log(2.0), 1e-12);
    }
}

TEST(LogProb, StableForLargePresquash) {
    const double v = scalar_log_prob(30.0, 30.0, 1.0, 1.0);
    EXPECT_TRUE(std::isfinite(v));
    // log(1 - tanh^2 a) -> log 4 - 2a for large a.
    EXPECT_NEAR(v, -kHalfLog2Pi - (std::log(4.0) - 60.0), 1e-9);
}

TEST(LogProb, DensityIntegratesToOneOverActionBox) {
    const double mu = 0.3, sigma = 0.8, m = 0.7, ub = -0.2;
    const int n = 40000;
    double integral = 0.0, prev = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double u = ub - m + 2.0 * m * k / n;
        double f = 0.0;
        if (k > 0 && k < n) {
            Tape t(false);
            const double a = std::atanh((u - ub) / m);
            f = std::exp(log_prob(scalar_step(t, mu, sigma, m, ub), Matrix::scalar(a), Matrix::scalar(m)).value.value().item());
        }
        if (k > 0) integral += 0.5 * (f + prev) * (2.0 * m / n);
        prev = f;
    }
    EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(LogProb, ZeroMagnitudeFallsBackToGaussian) {
    Tape t(false);
    const double a = 0.7;
    const double v = log_prob(scalar_step(t, 0.1, 0.5, 0.0), Matrix::scalar(a), Matrix::scalar(0.0)).value.value().item();
    const double z = (a - 0.1) / 0.5;
    EXPECT_NEAR(v, -0.5 * z * z - std::log(0.5) - kHalfLog2Pi, 1e-14);
}

TEST(LogProb, ChangedMagnitudeReevaluatesTheSameAction) {
    // Stored (a, m_old); under m_new the same u needs a' = atanh(tanh(a) m_old / m_new).
    const double a = 0.6, m_old = 0.5, m_new = 0.8, mu = 0.1, sigma = 0.9;
    Tape t(false);
    const auto lp = log_prob(scalar_step(t, mu, sigma, m_new), Matrix::scalar(a), Matrix::scalar(m_old));
    ASSERT_TRUE(lp.in_support);
    const double ap = std::atanh(std::tanh(a) * m_old / m_new);
    EXPECT_NEAR(lp.value.value().item(), density_oracle(ap, mu, sigma, m_new), 1e-12);

    Tape t2(false);
    const auto out = log_prob(scalar_step(t2, mu, sigma, 0.1), Matrix::scalar(a), Matrix::scalar(m_old));
    EXPECT_FALSE(out.in_support);
}

TEST(SampleAction, ZeroMagnitudeReturnsBaseAction) {
    Rng rng(2);
    Tape t(false);
    const ActorStep d{t.constant(Matrix{{0.3, -2.0}}), t.constant(Matrix{{0.0, 0.5}}), t.constant(Matrix(1, 2)),
                      Matrix{{1.5, -0.25}}};
    for (int k = 0; k < 20; ++k) EXPECT_TRUE(sample_action(d, rng).u == d.u_base);
}

TEST(SampleAction, ZeroPresquashReturnsBaseAction) {
    EXPECT_TRUE(compose_action(Matrix{{0.4, -1}}, Matrix{{0.9, 0.3}}, Matrix(1, 2)) == (Matrix{{0.4, -1}}));
}

TEST(SampleAction, StaysInsideMagnitudeBox) {
    Rng rng(3);
    for (int k = 0; k < 500; ++k) {
        Tape t(false);
        const Matrix m{{uniform(rng, 0, 1), uniform(rng, 0, 1)}};
        const ActorStep d{t.constant(randn_matrix(1, 2, 2.0, rng)), t.constant(randn_matrix(1, 2, 1.0, rng)),
                          t.constant(m), randn_matrix(1, 2, 1.0, rng)};
        const auto r = sample_action(d, rng);
        for (std::size_t j = 0; j < 2; ++j) EXPECT_LE(std::abs(r.u[j] - r.u_base[j]), m[j]);
        EXPECT_TRUE(r.u == compose_action(r.u_base, r.m, r.a));
    }
}

TEST(SampleAction, ReconstructionReproducesStoredLogProb) {
    Rng rng(4);
    for (int k = 0; k < 200; ++k) {
        Tape t(false);
        const ActorStep d{t.constant(randn_matrix(3, 2, 0.5, rng)), t.constant(randn_matrix(3, 2, 0.3, rng)),
                          t.constant(Matrix(3, 2, uniform(rng, 0.05, 1.0))), randn_matrix(3, 2, 1.0, rng)};
        const auto r = sample_action(d, rng);
        const Matrix a = reconstruct_presquash(r.u, r.u_base, r.m);
        const double lp = log_prob(d, a, r.m).value.value().item();
        EXPECT_NEAR(lp, r.log_prob, 1e-9);
    }
}

TEST(SampleAction, ReconstructionRejectsOutOfBoxActions) {
    EXPECT_THROW((void)reconstruct_presquash(Matrix{{1.0}}, Matrix{{0.0}}, Matrix{{0.5}}), ReconstructionError);
    EXPECT_THROW((void)reconstruct_presquash(Matrix{{0.5}}, Matrix{{0.0}}, Matrix{{0.5}}), ReconstructionError);
}

class MadFixture : public ::testing::Test {
protected:
    EnvConfig cfg = [] {
        EnvConfig c;
        c.n_agents = 4;
        c.n_obstacles = 2;
        return c;
    }();
    MadPolicy policy{MadConfig{}, 17};
};

TEST_F(MadFixture, ZeroDisturbanceGivesZeroMagnitude) {
    ParticleEnv env(cfg, 1);
    WorldState s = env.reset().state;
    auto carry = policy.initial_carry(cfg.n_agents);
    Rng rng(1);
    for (int t = 0; t < 10; ++t) {
        const auto r = act(policy, carry, make_observation(s, zeros(cfg.n_agents), cfg), rng);
        EXPECT_TRUE(r.action.m == Matrix(cfg.n_agents, 2));
        EXPECT_TRUE(r.action.u == r.action.u_base);
        carry = r.carry;
        s = env.step(to_forces(r.action.u)).state;
    }
}

TEST_F(MadFixture, MagnitudeIsWithinCap) {
    ParticleEnv env(cfg, 2);
    WorldState s = env.reset().state;
    auto carry = policy.initial_carry(cfg.n_agents);
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        std::vector<Vec4> w(cfg.n_agents);
        for (auto& x : w)
            for (double& v : x) v = 20.0 * randn(rng);
        const auto r = act(policy, carry, make_observation(s, w, cfg), rng);
        for (double m : r.action.m.data()) {
            EXPECT_GE(m, 0.0);
            EXPECT_LE(m, policy.config().magnitude_cap);
        }
        carry = r.carry;
    }
}

TEST_F(MadFixture, RepeatedEvaluationIsPure) {
    ParticleEnv env(cfg, 3);
    const auto r0 = env.reset();
    const Observation obs = make_observation(r0.state, r0.disturbance, cfg);
    Rng a(5), b(5);
    const auto x = act(policy, policy.initial_carry(cfg.n_agents), obs, a);
    const auto y = act(policy, policy.initial_carry(cfg.n_agents), obs, b);
    EXPECT_TRUE(x.mu == y.mu);
    EXPECT_TRUE(x.log_std == y.log_std);
    EXPECT_TRUE(x.action.u == y.action.u);
    for (double v : x.log_std.data()) EXPECT_GT(std::exp(v), 0.0);
}

TEST_F(MadFixture, NodeRelabelingLeavesAgentOutputsUnchanged) {
    ParticleEnv env(cfg, 4);
    const auto r0 = env.reset();
    const Permutation perm({3, 5, 0, 4, 1, 2});
    auto c1 = policy.initial_carry(cfg.n_agents), c2 = c1;
    WorldState s = r0.state;
    std::vector<Vec4> w = r0.disturbance;
    Rng rng(0);
    for (int t = 0; t < 5; ++t) {
        const auto x = act(policy, c1, make_observation(s, w, cfg), rng, true);
        const auto y = act(policy, c2, make_observation(s, w, cfg, &perm), rng, true);
        EXPECT_LT(max_abs_diff(x.mu, y.mu), 1e-9);
        EXPECT_LT(max_abs_diff(x.log_std, y.log_std), 1e-9);
        EXPECT_LT(max_abs_diff(x.action.m, y.action.m), 1e-9);
        c1 = x.carry;
        c2 = y.carry;
        const auto out = env.step(to_forces(x.action.u));
        s = out.state;
        w = out.disturbance;
    }
}

TEST_F(MadFixture, PermutedAgentsPermuteOutputRows) {
    ParticleEnv env(cfg, 6);
    const auto r0 = env.reset();
    const std::vector<std::size_t> p{2, 0, 3, 1};
    const Permutation rows(p);
    std::vector<Vec4> pw(cfg.n_agents);
    for (std::size_t k = 0; k < p.size(); ++k) pw[k] = r0.disturbance[p[k]];
    Rng rng(0);
    const auto x = act(policy, policy.initial_carry(4), make_observation(r0.state, r0.disturbance, cfg), rng, true);
    const auto y = act(policy, policy.initial_carry(4), make_observation(permute_agents(r0.state, p), pw, cfg), rng, true);
    EXPECT_LT(max_abs_diff(rows.apply_rows(x.mu), y.mu), 1e-9);
    EXPECT_LT(max_abs_diff(rows.apply_rows(x.log_std), y.log_std), 1e-9);
    EXPECT_LT(max_abs_diff(rows.apply_rows(x.action.m), y.action.m), 1e-9);
}

TEST_F(MadFixture, MagnitudeRespectsCertifiedGain) {
    ParticleEnv env(cfg, 7);
    const WorldState s = env.reset().state;
    const std::size_t nodes = cfg.n_agents + cfg.n_obstacles;
    const double bound = policy.magnitude_gain_bound(nodes);
    ASSERT_TRUE(std::isfinite(bound));
    Rng rng(7);
    auto carry = policy.initial_carry(cfg.n_agents);
    double sw = 0.0, sm = 0.0;
    for (int t = 0; t < 300; ++t) {
        std::vector<Vec4> w(cfg.n_agents);
        for (auto& x : w)
            for (double& v : x) v = 0.5 * std::pow(0.97, t) * randn(rng);
        for (const auto& x : w)
            for (double v : x) sw += v * v;
        const auto r = act(policy, carry, make_observation(s, w, cfg), rng);
        for (double m : r.action.m.data()) sm += m * m;
        carry = r.carry;
        ASSERT_LE(std::sqrt(sm), bound * std::sqrt(sw)) << t;
    }
}

TEST(MadGradient, LogProbLossOnTwoAgentRolloutMatchesFiniteDifferences) {
    EnvConfig cfg;
    cfg.n_agents = 2;
    cfg.n_obstacles = 1;
    cfg.noise_std = 0.05;
    MadConfig mc;
    mc.mag_widths = {6};
    mc.embed_dim = 4;
    mc.lru_state = 4;
    mc.lru_head_in = 4;
    mc.lru_head_hidden = 4;
    mc.dir_widths = {6};
    mc.rnn_hidden = 6;
    MadPolicy policy(mc, 3);
    ParticleEnv env(cfg, 3);
    auto r0 = env.reset();
    std::vector<Observation> obs{make_observation(r0.state, r0.disturbance, cfg)};
    std::vector<ActionRecord> acts;
    auto carry = policy.initial_carry(2);
    Rng rng(3);
    for (int t = 0; t < 4; ++t) {
        const auto r = act(policy, carry, obs.back(), rng);
        acts.push_back(r.action);
        carry = r.carry;
        const auto out = env.step(to_forces(r.action.u));
        obs.push_back(make_observation(out.state, out.disturbance, cfg));
    }
    const LossFn loss = [&](Tape& t) {
        std::vector<Var> c;
        for (const auto& m : policy.initial_carry(2)) c.push_back(t.constant(m));
        Var total = t.constant(Matrix::scalar(0.0));
        for (std::size_t k = 0; k < acts.size(); ++k) {
            const ActorStep d = policy.step(t, c, obs[k]);
            total = add(total, log_prob(d, acts[k].a, acts[k].m).value);
        }
        return total;
    };
    const ParameterList params = policy.parameters();
    EXPECT_LT(finite_diff_check(loss, params, 1e-5), 1e-4);
}

TEST(Baseline, FixedScaleAndNoBaseAction) {
    EnvConfig cfg;
    ParticleEnv env(cfg, 8);
    const auto r0 = env.reset();
    BaselinePolicy pol(BaselineConfig{}, 8);
    Rng rng(8);
    const auto r = act(pol, pol.initial_carry(cfg.n_agents), make_observation(r0.state, r0.disturbance, cfg), rng);
    EXPECT_TRUE(r.action.u_base == Matrix(cfg.n_agents, 2));
    EXPECT_TRUE(r.action.m == Matrix(cfg.n_agents, 2, 1.0));
    for (double u : r.action.u.data()) EXPECT_LT(std::abs(u), 1.0);
}

TEST(Baseline, ZeroWeightsGiveCenteredMean) {
    EnvConfig cfg;
    ParticleEnv env(cfg, 9);
    const auto r0 = env.reset();
    BaselinePolicy pol(BaselineConfig{}, 9);
    pol.mu_weight().assign(Matrix(32, 2));
    pol.mu_bias().assign(Matrix(1, 2));
    Rng rng(9);
    const auto r = act(pol, {}, make_observation(r0.state, r0.disturbance, cfg), rng, true);
    EXPECT_TRUE(r.mu == Matrix(cfg.n_agents, 2));
    EXPECT_TRUE(r.action.u == Matrix(cfg.n_agents, 2));
}
