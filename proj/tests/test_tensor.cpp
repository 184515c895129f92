#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "madgnn/gradcheck.hpp"
#include "madgnn/ops.hpp"
#include "madgnn/random.hpp"
#include "madgnn/tensor.hpp"

using namespace madgnn;

TEST(Matrix, ConstructionAndIndexing) {
    Matrix m{{1, 2, 3}, {4, 5, 6}};
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    EXPECT_EQ(m(1, 2), 6.0);
    EXPECT_EQ(m[4], 5.0);
    EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
    EXPECT_THROW((Matrix{{1, 2}, {3}}), ShapeError);
}

TEST(Matrix, ItemRequiresScalar) {
    EXPECT_EQ(Matrix::scalar(4.5).item(), 4.5);
    EXPECT_THROW((void)Matrix(1, 2).item(), ShapeError);
}

TEST(Matrix, MatmulSmallExample) {
    const Matrix c = matmul(Matrix{{1, 2}}, Matrix{{3}, {4}});
    ASSERT_EQ(c.rows(), 1u);
    ASSERT_EQ(c.cols(), 1u);
    EXPECT_EQ(c(0, 0), 11.0);
}

TEST(Matrix, MatmulVariantsAgreeWithTriplet) {
    Rng rng(3);
    const Matrix a = randn_matrix(4, 5, 1.0, rng), b = randn_matrix(5, 3, 1.0, rng);
    Matrix ref(4, 3);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 5; ++k) ref(i, j) += a(i, k) * b(k, j);
    EXPECT_LT(max_abs_diff(matmul(a, b), ref), 1e-13);
    EXPECT_LT(max_abs_diff(matmul_tn(transpose(a), b), ref), 1e-13);
    EXPECT_LT(max_abs_diff(matmul_nt(a, transpose(b)), ref), 1e-13);
}

TEST(Matrix, ShapeErrorNamesBothOperands) {
    try {
        (void)matmul(Matrix(2, 3), Matrix(2, 3));
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    }
    EXPECT_THROW((void)(Matrix(2, 2) + Matrix(2, 3)), ShapeError);
}

TEST(Matrix, EntryNorms) {
    const Matrix m{{3, -4}, {0, 0}};
    EXPECT_DOUBLE_EQ(entry_norm(m, 2.0), 5.0);
    EXPECT_DOUBLE_EQ(entry_norm(m, 1.0), 7.0);
}

TEST(Ops, TanhAtZero) {
    Tape t(false);
    EXPECT_EQ(madgnn::tanh(t.constant(Matrix::scalar(0.0))).value().item(), 0.0);
}

TEST(Ops, MaskedSoftmaxRowWithInfinity) {
    Tape t(false);
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<std::uint8_t> mask{1, 1, 1};
    const Matrix y = masked_softmax_rows(t.constant(Matrix{{1.0, 1.0, -inf}}), mask).value();
    EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(y(0, 1), 0.5);
    EXPECT_EQ(y(0, 2), 0.0);
}

TEST(Ops, MaskedSoftmaxRowsSumToOneAndZeroOffMask) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + trial % 6;
        std::vector<std::uint8_t> mask(n * n, 0);
        for (std::size_t i = 0; i < n; ++i) {
            mask[i * n + i] = 1;
            for (std::size_t j = 0; j < n; ++j)
                if (uniform(rng, 0, 1) < 0.4) mask[i * n + j] = 1;
        }
        Tape t(false);
        const Matrix y = masked_softmax_rows(t.constant(randn_matrix(n, n, 3.0, rng)), mask).value();
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!mask[i * n + j]) {
                    EXPECT_EQ(y(i, j), 0.0);
                }
                s += y(i, j);
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(Ops, FullyMaskedRowIsAnError) {
    Tape t(false);
    const std::vector<std::uint8_t> mask{0, 0, 1, 1};
    EXPECT_THROW((void)masked_softmax_rows(t.constant(Matrix(2, 2)), mask), std::exception);
}

TEST(Ops, NonFiniteIntermediateNamesTheNode) {
    Tape t(false);
    try {
        (void)madgnn::log(t.constant(Matrix::scalar(-1.0)));
        FAIL() << "expected NonFiniteError";
    } catch (const NonFiniteError& e) {
        EXPECT_NE(std::string(e.what()).find("log"), std::string::npos) << e.what();
    }
}

TEST(Ops, GaussianLogDensityStandardAtZero) {
    Tape t(false);
    const double v = gaussian_log_density(t.constant(Matrix::scalar(0.0)), t.constant(Matrix::scalar(0.0)),
                                          t.constant(Matrix::scalar(0.0)))
                         .value()
                         .item();
    EXPECT_NEAR(v, -0.5 * std::log(2.0 * M_PI), 1e-15);
}

TEST(ForwardEval, PureAndBitIdentical) {
    Rng rng(5);
    const NamedMatrices in{{"x", randn_matrix(3, 4, 1.0, rng)}, {"w", randn_matrix(4, 2, 1.0, rng)}};
    const Program prog = [](Tape&, const NamedVars& v) {
        Var h = madgnn::tanh(matmul(v.at("x"), v.at("w")));
        return NamedVars{{"h", h}, {"s", sum(square(h))}};
    };
    const NamedMatrices a = forward_eval(prog, in), b = forward_eval(prog, in);
    EXPECT_TRUE(a.at("h") == b.at("h"));
    EXPECT_TRUE(a.at("s") == b.at("s"));
    Matrix ref = matmul(in.at("x"), in.at("w"));
    for (auto& x : ref.data()) x = std::tanh(x);
    EXPECT_LT(max_abs_diff(a.at("h"), ref), 1e-15);
}
