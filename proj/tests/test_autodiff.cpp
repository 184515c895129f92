#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "madgnn/gradcheck.hpp"
#include "madgnn/ops.hpp"
#include "madgnn/random.hpp"

using namespace madgnn;

namespace {

// Central differences computed here, independently of finite_diff_check.
// Returns max |g - fd| / max(max |g|, 1e-8) over all parameters.
double oracle_error(const std::function<Var(Tape&, std::vector<Var>&)>& f, std::vector<Parameter>& ps,
                    double eps = 1e-5) {
    for (auto& p : ps) p.zero_grad();
    {
        Tape t;
        std::vector<Var> vs;
        for (auto& p : ps) vs.push_back(t.param(p));
        t.backward(f(t, vs));
    }
    auto eval = [&] {
        Tape t(false);
        std::vector<Var> vs;
        for (auto& p : ps) vs.push_back(t.param(p));
        return f(t, vs).value().item();
    };
    double num = 0.0, den = 1e-8;
    for (auto& p : ps) {
        const Matrix g = p.grad();
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double x0 = p.value()[k];
            p.set_entry(k, x0 + eps);
            const double fp = eval();
            p.set_entry(k, x0 - eps);
            const double fm = eval();
            p.set_entry(k, x0);
            const double fd = (fp - fm) / (2.0 * eps);
            num = std::max(num, std::abs(g[k] - fd));
            den = std::max(den, std::abs(g[k]));
        }
    }
    return num / den;
}

struct OpCase {
    std::string name;
    // Shapes of the parameter inputs; `positive` draws entries in [0.5, 2].
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    bool positive;
    std::function<Var(Tape&, std::vector<Var>&)> body;
};

// Contracts the op output with a fixed random weight so every entry matters.
Var contract(Tape& t, Var y, std::uint64_t seed) {
    Rng rng(seed);
    return sum(mul(y, t.constant(randn_matrix(y.rows(), y.cols(), 1.0, rng))));
}

}  // namespace

TEST(Backward, SquareAtThree) {
    Parameter w("w", Matrix::scalar(3.0));
    Tape t;
    Var x = t.param(w);
    t.backward(mul(x, x));
    EXPECT_DOUBLE_EQ(w.grad().item(), 6.0);
}

TEST(Backward, TanhSlopeAtZero) {
    Parameter w("w", Matrix::scalar(0.0));
    Tape t;
    t.backward(madgnn::tanh(t.param(w)));
    EXPECT_DOUBLE_EQ(w.grad().item(), 1.0);
}

TEST(Backward, SeedMustBeScalar) {
    Parameter w("w", Matrix(2, 2, 1.0));
    Tape t;
    Var x = t.param(w);
    EXPECT_THROW(t.backward(x), TapeError);
}

TEST(Backward, StaleTapeIsRejected) {
    Parameter w("w", Matrix::scalar(2.0));
    Tape t;
    Var y = square(t.param(w));
    w.set_entry(0, 5.0);
    EXPECT_THROW(t.backward(y), TapeError);
}

TEST(Backward, GradientShapesMatchParameters) {
    Rng rng(1);
    Parameter a("a", randn_matrix(3, 4, 1.0, rng)), b("b", randn_matrix(4, 2, 1.0, rng));
    Tape t;
    t.backward(sum(matmul(t.param(a), t.param(b))));
    EXPECT_EQ(a.grad().rows(), 3u);
    EXPECT_EQ(a.grad().cols(), 4u);
    EXPECT_EQ(b.grad().rows(), 4u);
    EXPECT_EQ(b.grad().cols(), 2u);
}

TEST(Backward, ParameterRejectsNonFinite) {
    EXPECT_THROW(Parameter("bad", Matrix::scalar(std::nan(""))), NonFiniteError);
}

TEST(Backward, RandomThreeLayerNetMatchesCentralDifferences) {
    // 12 parameters: 2x2, 2x2 and 2x1 weights plus a 1x2 bias.
    Rng rng(21);
    std::vector<Parameter> ps{{"W1", randn_matrix(2, 2, 1.0, rng)}, {"b1", randn_matrix(1, 2, 1.0, rng)},
                              {"W2", randn_matrix(2, 2, 1.0, rng)}, {"W3", randn_matrix(2, 1, 1.0, rng)}};
    std::size_t count = 0;
    for (auto& p : ps) count += p.size();
    ASSERT_EQ(count, 12u);
    const Matrix x = randn_matrix(5, 2, 1.0, rng);
    auto f = [&](Tape& t, std::vector<Var>& v) {
        Var h = madgnn::tanh(affine(t.constant(x), v[0], v[1]));
        h = leaky_relu(matmul(h, v[2]), 0.1);
        return mean(square(matmul(h, v[3])));
    };
    EXPECT_LT(oracle_error(f, ps), 1e-4);
}

class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesCentralDifferencesOnRandomShapes) {
    const int seed = GetParam();
    Rng shape_rng(100 + seed);
    const std::size_t r = 1 + static_cast<std::size_t>(uniform(shape_rng, 0, 8));
    const std::size_t c = 1 + static_cast<std::size_t>(uniform(shape_rng, 0, 8));
    const std::size_t k = 1 + static_cast<std::size_t>(uniform(shape_rng, 0, 8));
    std::vector<std::size_t> rows_idx;
    for (std::size_t i = 0; i < r + 2; ++i) rows_idx.push_back(static_cast<std::size_t>(uniform(shape_rng, 0, double(r))));
    std::vector<std::uint8_t> mask(r * r, 0);
    for (std::size_t i = 0; i < r; ++i) {
        mask[i * r + i] = 1;
        for (std::size_t j = 0; j < r; ++j)
            if (uniform(shape_rng, 0, 1) < 0.5) mask[i * r + j] = 1;
    }
    const std::size_t cs = c > 1 ? c / 2 : 0, cn = c - cs;

    using V = std::vector<Var>&;
    const std::vector<OpCase> cases{
        {"add", {{r, c}, {r, c}}, false, [](Tape&, V v) { return add(v[0], v[1]); }},
        {"sub", {{r, c}, {r, c}}, false, [](Tape&, V v) { return sub(v[0], v[1]); }},
        {"mul", {{r, c}, {r, c}}, false, [](Tape&, V v) { return mul(v[0], v[1]); }},
        {"div", {{r, c}, {r, c}}, true, [](Tape&, V v) { return div(v[0], v[1]); }},
        {"add_n", {{r, c}, {r, c}, {r, c}}, false, [](Tape&, V v) { return add_n(std::vector<Var>{v[0], v[1], v[2]}); }},
        {"scale", {{r, c}}, false, [](Tape&, V v) { return scale(v[0], -1.7); }},
        {"add_scalar", {{r, c}}, false, [](Tape&, V v) { return add_scalar(v[0], 0.3); }},
        {"min_scalar", {{r, c}}, false, [](Tape&, V v) { return min_scalar(v[0], 0.05); }},
        {"leaky_relu", {{r, c}}, false, [](Tape&, V v) { return leaky_relu(v[0], 0.1); }},
        {"tanh", {{r, c}}, false, [](Tape&, V v) { return madgnn::tanh(v[0]); }},
        {"exp", {{r, c}}, false, [](Tape&, V v) { return madgnn::exp(v[0]); }},
        {"log", {{r, c}}, true, [](Tape&, V v) { return madgnn::log(v[0]); }},
        {"sqrt", {{r, c}}, true, [](Tape&, V v) { return madgnn::sqrt(v[0]); }},
        {"abs", {{r, c}}, false, [](Tape&, V v) { return madgnn::abs(v[0]); }},
        {"square", {{r, c}}, false, [](Tape&, V v) { return square(v[0]); }},
        {"sin", {{r, c}}, false, [](Tape&, V v) { return madgnn::sin(v[0]); }},
        {"cos", {{r, c}}, false, [](Tape&, V v) { return madgnn::cos(v[0]); }},
        {"softplus", {{r, c}}, false, [](Tape&, V v) { return softplus(v[0]); }},
        {"sigmoid", {{r, c}}, false, [](Tape&, V v) { return sigmoid(v[0]); }},
        {"matmul", {{r, k}, {k, c}}, false, [](Tape&, V v) { return matmul(v[0], v[1]); }},
        {"matmul_nt", {{r, k}, {c, k}}, false, [](Tape&, V v) { return matmul_nt(v[0], v[1]); }},
        {"transpose", {{r, c}}, false, [](Tape&, V v) { return transpose(v[0]); }},
        {"add_row", {{r, c}, {1, c}}, false, [](Tape&, V v) { return add_row(v[0], v[1]); }},
        {"mul_row", {{r, c}, {1, c}}, false, [](Tape&, V v) { return mul_row(v[0], v[1]); }},
        {"sum", {{r, c}}, false, [](Tape&, V v) { return sum(v[0]); }},
        {"mean", {{r, c}}, false, [](Tape&, V v) { return mean(v[0]); }},
        {"mean_rows", {{r, c}}, false, [](Tape&, V v) { return mean_rows(v[0]); }},
        {"masked_softmax_rows", {{r, r}}, false, [&mask](Tape&, V v) { return masked_softmax_rows(v[0], mask); }},
        {"gather_rows", {{r, c}}, false, [&rows_idx](Tape&, V v) { return gather_rows(v[0], rows_idx); }},
        {"slice_cols", {{r, c}}, false, [cs, cn](Tape&, V v) { return slice_cols(v[0], cs, cn); }},
        {"concat_cols", {{r, c}, {r, k}}, false, [](Tape&, V v) { return concat_cols(v[0], v[1]); }},
        {"gaussian_log_density", {{r, c}, {r, c}, {r, c}}, false,
         [](Tape&, V v) { return gaussian_log_density(v[0], v[1], v[2]); }},
    };

    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const OpCase& oc = cases[ci];
        Rng rng(1000 * seed + ci);
        std::vector<Parameter> ps;
        for (std::size_t i = 0; i < oc.shapes.size(); ++i) {
            auto [pr, pc] = oc.shapes[i];
            ps.emplace_back(oc.name + std::to_string(i),
                            oc.positive ? uniform_matrix(pr, pc, 0.5, 2.0, rng) : randn_matrix(pr, pc, 1.0, rng));
        }
        auto f = [&](Tape& t, std::vector<Var>& v) { return contract(t, oc.body(t, v), 7 + ci); };
        EXPECT_LT(oracle_error(f, ps), 1e-4) << oc.name << " at " << r << "x" << c << " (k=" << k << ")";
    }
}

INSTANTIATE_TEST_SUITE_P(Shapes, OpGradient, ::testing::Range(0, 6));

TEST(FiniteDiffCheck, LinearLossIsExact) {
    Parameter w("w", Matrix::scalar(0.7));
    Parameter* ps[] = {&w};
    const double err = finite_diff_check([&](Tape& t) { return scale(t.param(w), 3.0); }, ps, 1e-4);
    EXPECT_LE(err, 1e-10);
}

TEST(FiniteDiffCheck, CubicAtOneWithinSecondOrderError) {
    // Central difference of w^3 at 1 is 3 + eps^2, so the relative error is eps^2 / 3.
    Parameter w("w", Matrix::scalar(1.0));
    Parameter* ps[] = {&w};
    const double eps = 1e-4;
    const double err = finite_diff_check(
        [&](Tape& t) {
            Var x = t.param(w);
            return mul(mul(x, x), x);
        },
        ps, eps);
    EXPECT_LE(err, 1e-6);
    EXPECT_NEAR(err, eps * eps / 3.0, 1e-10);
}

TEST(FiniteDiffCheck, RejectsBadEpsilonAndNonFiniteLoss) {
    Parameter w("w", Matrix::scalar(1.0));
    Parameter* ps[] = {&w};
    EXPECT_THROW((void)finite_diff_check([&](Tape& t) { return t.param(w); }, ps, 0.0), std::invalid_argument);
    Parameter z("z", Matrix::scalar(0.0));
    Parameter* pz[] = {&z};
    EXPECT_THROW((void)finite_diff_check([&](Tape& t) { return madgnn::log(madgnn::abs(t.param(z))); }, pz, 1e-3),
                 NonFiniteError);
}
