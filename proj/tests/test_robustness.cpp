#include <gtest/gtest.h>

#include <cmath>

#include "madgnn/robustness.hpp"

using namespace madgnn;

namespace {

const Activation kIdentity{ActivationKind::identity, 0.0};

GnnStack scalar_stack() { return {Matrix{{1.0}}, {Matrix{{2.0}}}, {Matrix{{0.0}}}}; }
PerturbationSpec scalar_perturbation() { return {Matrix{{0.1}}, {Matrix{{0.1}}}, {Matrix{{0.0}}}}; }

double fro(const Matrix& m) { return entry_norm(m, 2.0); }

}  // namespace

TEST(GnnDeviationBound, ZeroPerturbationGivesZero) {
    Rng rng(1);
    const GnnStack g = random_gnn_stack(rng, 4, 3, 2);
    EXPECT_EQ(lemma1_bound(g, zero_perturbation(g), 1.0, 3.0), 0.0);
    EXPECT_EQ(empirical_gnn_deviation(g, zero_perturbation(g), randn_matrix(4, 2, 1.0, rng), Activation{}), 0.0);
}

TEST(GnnDeviationBound, ScalarWitnessIsTight) {
    const double delta0 = 0.1 * 0.1 + 0.1 * 2.0 + 0.0 + 1.0 * 0.1;
    EXPECT_NEAR(delta0, 0.31, 1e-15);
    EXPECT_NEAR(lemma1_bound(scalar_stack(), scalar_perturbation(), 1.0, 1.0), 0.31, 1e-15);
    const double measured = empirical_gnn_deviation(scalar_stack(), scalar_perturbation(), Matrix{{1.0}}, kIdentity);
    EXPECT_NEAR(measured, std::abs(1.0 * 1.0 * 2.0 - 1.1 * 1.0 * 2.1), 1e-15);
    EXPECT_NEAR(measured, 0.31, 1e-15);
    const BoundTrial w = lemma1_tightness_witness();
    EXPECT_NEAR(w.margin, 0.0, 1e-15);
}

TEST(GnnDeviationBound, TwoLayerBoundFollowsUnrolledPattern) {
    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const GnnStack g = random_gnn_stack(rng, 3, 2, 2);
        const PerturbationSpec d = random_perturbation(rng, g, 0.3);
        const double ns = fro(g.s), nds = fro(d.ds), nsh = fro(g.s + d.ds);
        auto delta = [&](std::size_t i) {
            return nds * fro(d.dw[i]) + nds * fro(g.w[i]) + fro(d.db[i]) + ns * fro(d.dw[i]);
        };
        const double rho1 = ns * fro(g.w[1]) + fro(g.b[1]);
        const double zeta0 = nsh * fro(g.w[0] + d.dw[0]) + fro(g.b[0] + d.db[0]);
        const double lsig = 1.1, xn = 2.5;
        const double oracle = lsig * lsig * xn * (delta(0) * rho1 + zeta0 * delta(1));
        EXPECT_NEAR(lemma1_bound(g, d, lsig, xn), oracle, 1e-12 * oracle);
    }
}

TEST(GnnDeviationBound, MonotoneInEachPerturbationNorm) {
    Rng rng(3);
    const GnnStack g = random_gnn_stack(rng, 4, 3, 2);
    const PerturbationSpec base = random_perturbation(rng, g, 0.2);
    auto scaled = [&](int which, std::size_t layer, double f) {
        PerturbationSpec d = base;
        if (which == 0) d.ds = f * d.ds;
        if (which == 1) d.dw[layer] = f * d.dw[layer];
        if (which == 2) d.db[layer] = f * d.db[layer];
        return lemma1_bound(g, d, 1.0, 1.0);
    };
    for (int which = 0; which < 3; ++which)
        for (std::size_t layer = 0; layer < 3; ++layer) {
            double prev = scaled(which, layer, 0.0);
            for (double f : {0.5, 1.0, 2.0, 4.0}) {
                const double cur = scaled(which, layer, f);
                EXPECT_GE(cur, prev) << which << " " << layer << " " << f;
                prev = cur;
            }
        }
}

TEST(GnnDeviationBound, ShapeMismatchThrows) {
    GnnStack g = scalar_stack();
    PerturbationSpec d = scalar_perturbation();
    d.dw.clear();
    EXPECT_THROW((void)lemma1_bound(g, d, 1.0, 1.0), ShapeError);
    d = scalar_perturbation();
    d.ds = Matrix(2, 2);
    EXPECT_THROW((void)lemma1_bound(g, d, 1.0, 1.0), ShapeError);
}

TEST(GnnDeviationBound, FuzzFiveHundredTrials) {
    const BoundReport rep = fuzz_lemma1(FuzzOptions{});
    EXPECT_EQ(rep.trials.size(), 500u);
    EXPECT_EQ(rep.violations(), 0u);
    EXPECT_GE(rep.min_margin(), -1e-9);
}

TEST(GnnDeviationBound, HalvedBoundIsCaught) {
    FuzzOptions opt;
    opt.bound_factor = 0.5;
    opt.trials = 50;
    EXPECT_GT(fuzz_lemma1(opt).violations(), 0u);
}

TEST(ClosedLoopBound, ZeroPerturbationIsTwiceTheGainProduct) {
    Rng rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const GnnStack g = random_gnn_stack(rng, 3, 1 + trial % 3, 2);
        const double gf = 1.7, gl = 2.3, wn = 0.8, ls = 1.0;
        const double bound = theorem2_bound(g, zero_perturbation(g), ls, gf, gl, wn);
        const double gain = gnn_gain_bound(g.w, g.b, fro(g.s), ls);
        EXPECT_GT(bound, 0.0);
        EXPECT_NEAR(bound, 2.0 * gf * gl * wn * gain, 1e-12 * bound);
    }
}

TEST(ClosedLoopBound, ZeroWeightsGiveZero) {
    GnnStack g{Matrix{{1, 1}, {1, 1}}, {Matrix(2, 2), Matrix(2, 2)}, {Matrix(2, 2), Matrix(2, 2)}};
    EXPECT_EQ(theorem2_bound(g, zero_perturbation(g), 1.0, 1.0, 1.0, 1.0), 0.0);
}

TEST(ClosedLoopBound, ScalarHandEvaluation) {
    const double gamma_f = DiagonalPlant{Matrix{{0.0}}}.gain();
    EXPECT_EQ(gamma_f, 1.0);
    const double gamma_lru = std::sqrt(0.75) / 0.5;
    const double zeta0 = 1.1 * 2.1;
    const double oracle = gamma_f * gamma_lru * 1.0 * 1.0 * (0.31 + 2.0 * zeta0);
    EXPECT_NEAR(theorem2_bound(scalar_stack(), scalar_perturbation(), 1.0, gamma_f, gamma_lru, 1.0), oracle, 1e-13);
}

TEST(ClosedLoopBound, UnstablePlantIsRejected) {
    const DiagonalPlant unstable{Matrix{{0.5, 1.0}}};
    EXPECT_THROW((void)unstable.gain(), ConfigError);
}

namespace {

ClosedLoopTrialSpec zero_perturbation_trial(bool shared, Lru& lru_out, Rng& rng) {
    ClosedLoopTrialSpec spec;
    spec.nominal = random_gnn_stack(rng, 3, 2, 2);
    spec.perturbation = zero_perturbation(spec.nominal);
    spec.plant.a = uniform_matrix(3, 2, -0.8, 0.8, rng);
    spec.direction_gain = randn_matrix(2, 2, 1.0, rng);
    spec.shared_samples = shared;
    spec.seed = 77;
    for (int t = 0; t < 300; ++t) spec.w.push_back(randn_matrix(3, 2, std::pow(0.9, t), rng));
    LruConfig lc;
    lc.in_dim = spec.nominal.w.back().cols();
    lc.state_dim = 4;
    lc.head_in = 3;
    lc.head_hidden = 3;
    lc.r_min = 0.3;
    lc.r_max = 0.9;
    lru_out = Lru("lru", lc, rng);
    return spec;
}

}  // namespace

TEST(ClosedLoop, SharedSamplesGiveZeroDeviation) {
    Rng rng(5);
    Lru lru;
    const auto spec = zero_perturbation_trial(true, lru, rng);
    const auto r = run_closed_loop_trial(spec, lru);
    EXPECT_EQ(r.measured, 0.0);
    EXPECT_GT(r.bound, 0.0);
}

TEST(ClosedLoop, IndependentSamplesStayWithinBound) {
    Rng rng(6);
    Lru lru;
    const auto spec = zero_perturbation_trial(false, lru, rng);
    const auto r = run_closed_loop_trial(spec, lru);
    EXPECT_GT(r.measured, 0.0);
    EXPECT_LE(r.measured, r.bound);
}

TEST(ClosedLoop, FuzzTwoHundredTrials) {
    const BoundReport rep = fuzz_closed_loop(ClosedLoopFuzzOptions{});
    EXPECT_EQ(rep.trials.size(), 200u);
    EXPECT_EQ(rep.violations(), 0u);
    for (const auto& t : rep.trials) EXPECT_EQ(t.params.at("tail_ok"), 1.0) << t.trial;
}

TEST(ClosedLoop, EmptyDisturbanceIsRejected) {
    Rng rng(7);
    Lru lru;
    auto spec = zero_perturbation_trial(true, lru, rng);
    spec.w.clear();
    EXPECT_THROW((void)run_closed_loop_trial(spec, lru), ShapeError);
}
