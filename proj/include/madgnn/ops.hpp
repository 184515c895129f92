#pragma once

// Differentiable primitives recorded on a Tape.
//
// Shapes are never broadcast implicitly. The only exceptions are the explicit
// row-vector ops `add_row` / `mul_row`, which take a 1xC operand.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "madgnn/autodiff.hpp"

namespace madgnn {

// ---------------------------------------------------------------------------
// Binary elementwise
// ---------------------------------------------------------------------------

inline Var add(Var a, Var b) {
    detail::same_tape(a, b, "add");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(a.value() + b.value(), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              detail::accumulate(t, ia, g);
                              detail::accumulate(t, ib, g);
                          },
                          "add");
}

inline Var sub(Var a, Var b) {
    detail::same_tape(a, b, "sub");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(a.value() - b.value(), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              detail::accumulate(t, ia, g);
                              if (t.requires_grad(ib)) {
                                  Matrix& d = t.grad_buffer(ib);
                                  for (std::size_t k = 0; k < g.size(); ++k) d[k] -= g[k];
                              }
                          },
                          "sub");
}

inline Var mul(Var a, Var b) {
    detail::same_tape(a, b, "mul");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(hadamard(a.value(), b.value()), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& va = t.value(ia);
                              const Matrix& vb = t.value(ib);
                              if (t.requires_grad(ia)) {
                                  Matrix& d = t.grad_buffer(ia);
                                  for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * vb[k];
                              }
                              if (t.requires_grad(ib)) {
                                  Matrix& d = t.grad_buffer(ib);
                                  for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * va[k];
                              }
                          },
                          "mul");
}

inline Var div(Var a, Var b) {
    detail::same_tape(a, b, "div");
    require_same_shape(a.value(), b.value(), "div");
    Matrix out = a.value();
    for (std::size_t k = 0; k < out.size(); ++k) out[k] /= b.value()[k];
    const auto ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& va = t.value(ia);
                              const Matrix& vb = t.value(ib);
                              if (t.requires_grad(ia)) {
                                  Matrix& d = t.grad_buffer(ia);
                                  for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] / vb[k];
                              }
                              if (t.requires_grad(ib)) {
                                  Matrix& d = t.grad_buffer(ib);
                                  for (std::size_t k = 0; k < g.size(); ++k)
                                      d[k] -= g[k] * va[k] / (vb[k] * vb[k]);
                              }
                          },
                          "div");
}

// Sum of same-shaped operands as one node.
inline Var add_n(std::span<const Var> xs) {
    if (xs.empty()) throw ShapeError("add_n: no operands");
    Matrix out = xs[0].value();
    bool rg = detail::needs(xs[0]);
    std::vector<std::uint32_t> ids{xs[0].id};
    for (std::size_t i = 1; i < xs.size(); ++i) {
        detail::same_tape(xs[0], xs[i], "add_n");
        out += xs[i].value();
        rg = rg || detail::needs(xs[i]);
        ids.push_back(xs[i].id);
    }
    return xs[0].tape->record(std::move(out), rg,
                              [ids = std::move(ids)](Tape& t, std::uint32_t self) {
                                  const Matrix& g = t.grad(self);
                                  for (auto id : ids) detail::accumulate(t, id, g);
                              },
                              "add_n");
}

// ---------------------------------------------------------------------------
// Scalar-parameterized elementwise
// ---------------------------------------------------------------------------

inline Var scale(Var a, double s) {
    const auto ia = a.id;
    return a.tape->record(s * a.value(), detail::needs(a),
                          [ia, s](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t k = 0; k < g.size(); ++k) d[k] += s * g[k];
                          },
                          "scale");
}

inline Var neg(Var a) { return scale(a, -1.0); }

inline Var add_scalar(Var a, double s) {
    Matrix out = a.value();
    for (auto& v : out.data()) v += s;
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia](Tape& t, std::uint32_t self) { detail::accumulate(t, ia, t.grad(self)); },
                          "add_scalar");
}

// min(a, c) elementwise; the gradient flows only where a < c.
inline Var min_scalar(Var a, double c) {
    Matrix out = a.value();
    for (auto& v : out.data()) v = std::min(v, c);
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia, c](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& x = t.value(ia);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t k = 0; k < g.size(); ++k)
                                  if (x[k] < c) d[k] += g[k];
                          },
                          "min_scalar");
}

inline Var leaky_relu(Var a, double slope) {
    Matrix out = a.value();
    for (auto& v : out.data()) v = v > 0.0 ? v : slope * v;
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia, slope](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& x = t.value(ia);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t k = 0; k < g.size(); ++k)
                                  d[k] += x[k] > 0.0 ? g[k] : slope * g[k];
                          },
                          "leaky_relu");
}

inline Var relu(Var a) { return leaky_relu(a, 0.0); }

// ---------------------------------------------------------------------------
// Unary maps. `df(x, y)` is the derivative given input x and output y.
// ---------------------------------------------------------------------------

using UnaryFn = double (*)(double);
using UnaryGrad = double (*)(double x, double y);

inline Var map(Var a, UnaryFn f, UnaryGrad df, const char* op) {
    Matrix out = a.value();
    for (auto& v : out.data()) v = f(v);
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia, df](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& x = t.value(ia);
                              const Matrix& y = t.value(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * df(x[k], y[k]);
                          },
                          op);
}

inline double softplus_value(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var tanh(Var a) {
    return map(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; }, "tanh");
}

inline Var exp(Var a) {
    return map(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

inline Var log(Var a) {
    return map(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; },
               "log");
}

inline Var sqrt(Var a) {
    return map(a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; }, "sqrt");
}

// |a|; the subgradient at 0 is taken as 0.
inline Var abs(Var a) {
    return map(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

inline Var square(Var a) {
    return map(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; },
               "square");
}

inline Var sin(Var a) {
    return map(a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); }, "sin");
}

inline Var cos(Var a) {
    return map(a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); }, "cos");
}

inline Var softplus(Var a) {
    return map(a, softplus_value, [](double x, double) { return sigmoid_value(x); }, "softplus");
}

inline Var sigmoid(Var a) {
    return map(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    detail::same_tape(a, b, "matmul");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(matmul(a.value(), b.value()), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              if (t.requires_grad(ia))
                                  t.grad_buffer(ia) += matmul_nt(g, t.value(ib));
                              if (t.requires_grad(ib))
                                  t.grad_buffer(ib) += matmul_tn(t.value(ia), g);
                          },
                          "matmul");
}

// a * b^T
inline Var matmul_nt(Var a, Var b) {
    detail::same_tape(a, b, "matmul_nt");
    const auto ia = a.id, ib = b.id;
    return a.tape->record(matmul_nt(a.value(), b.value()), detail::needs(a, b),
                          [ia, ib](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              if (t.requires_grad(ia)) t.grad_buffer(ia) += matmul(g, t.value(ib));
                              if (t.requires_grad(ib)) t.grad_buffer(ib) += matmul_tn(g, t.value(ia));
                          },
                          "matmul_nt");
}

inline Var transpose(Var a) {
    const auto ia = a.id;
    return a.tape->record(transpose(a.value()), detail::needs(a),
                          [ia](Tape& t, std::uint32_t self) {
                              t.grad_buffer(ia) += transpose(t.grad(self));
                          },
                          "transpose");
}

// a + 1 * row, row is 1 x a.cols()
inline Var add_row(Var a, Var row) {
    detail::same_tape(a, row, "add_row");
    const Matrix& va = a.value();
    const Matrix& vr = row.value();
    if (vr.rows() != 1 || vr.cols() != va.cols()) {
        throw ShapeError("add_row: lhs " + va.shape_string() + " vs rhs " + vr.shape_string());
    }
    Matrix out = va;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += vr[j];
    const auto ia = a.id, ir = row.id;
    return a.tape->record(std::move(out), detail::needs(a, row),
                          [ia, ir](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              detail::accumulate(t, ia, g);
                              if (t.requires_grad(ir)) {
                                  Matrix& d = t.grad_buffer(ir);
                                  for (std::size_t i = 0; i < g.rows(); ++i)
                                      for (std::size_t j = 0; j < g.cols(); ++j) d[j] += g(i, j);
                              }
                          },
                          "add_row");
}

// a with column j scaled by row[j]; row is 1 x a.cols()
inline Var mul_row(Var a, Var row) {
    detail::same_tape(a, row, "mul_row");
    const Matrix& va = a.value();
    const Matrix& vr = row.value();
    if (vr.rows() != 1 || vr.cols() != va.cols()) {
        throw ShapeError("mul_row: lhs " + va.shape_string() + " vs rhs " + vr.shape_string());
    }
    Matrix out = va;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= vr[j];
    const auto ia = a.id, ir = row.id;
    return a.tape->record(std::move(out), detail::needs(a, row),
                          [ia, ir](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& x = t.value(ia);
                              const Matrix& r = t.value(ir);
                              if (t.requires_grad(ia)) {
                                  Matrix& d = t.grad_buffer(ia);
                                  for (std::size_t i = 0; i < g.rows(); ++i)
                                      for (std::size_t j = 0; j < g.cols(); ++j)
                                          d(i, j) += g(i, j) * r[j];
                              }
                              if (t.requires_grad(ir)) {
                                  Matrix& d = t.grad_buffer(ir);
                                  for (std::size_t i = 0; i < g.rows(); ++i)
                                      for (std::size_t j = 0; j < g.cols(); ++j)
                                          d[j] += g(i, j) * x(i, j);
                              }
                          },
                          "mul_row");
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const auto ia = a.id;
    return a.tape->record(Matrix::scalar(s), detail::needs(a),
                          [ia](Tape& t, std::uint32_t self) {
                              const double g = t.grad(self)[0];
                              Matrix& d = t.grad_buffer(ia);
                              for (auto& v : d.data()) v += g;
                          },
                          "sum");
}

inline Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Column means: R x C -> 1 x C
inline Var mean_rows(Var a) {
    const Matrix& va = a.value();
    Matrix out(1, va.cols());
    const double inv = 1.0 / static_cast<double>(va.rows());
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < va.cols(); ++j) out[j] += va(i, j) * inv;
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia, inv](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < d.rows(); ++i)
                                  for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g[j] * inv;
                          },
                          "mean_rows");
}

// Row-wise softmax restricted to mask[i*C + j] != 0. Masked entries, and any
// input equal to -inf, come out exactly zero. Every row needs at least one
// unmasked entry.
inline Var masked_softmax_rows(Var a, std::span<const std::uint8_t> mask) {
    const Matrix& x = a.value();
    if (mask.size() != x.size()) {
        throw ShapeError("masked_softmax_rows: mask has " + std::to_string(mask.size()) +
                         " entries for " + x.shape_string());
    }
    Matrix out(x.rows(), x.cols());
    std::vector<std::uint8_t> live(mask.begin(), mask.end());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < x.cols(); ++j) {
            auto& l = live[i * x.cols() + j];
            if (l && x(i, j) == -std::numeric_limits<double>::infinity()) l = 0;
            if (l) mx = std::max(mx, x(i, j));
        }
        if (mx == -std::numeric_limits<double>::infinity()) {
            throw ShapeError("masked_softmax_rows: row " + std::to_string(i) + " fully masked");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            if (!live[i * x.cols() + j]) continue;
            out(i, j) = std::exp(x(i, j) - mx);
            z += out(i, j);
        }
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) /= z;
    }
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              const Matrix& y = t.value(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < y.rows(); ++i) {
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
                                  for (std::size_t j = 0; j < y.cols(); ++j)
                                      d(i, j) += y(i, j) * (g(i, j) - dot);
                              }
                          },
                          "masked_softmax_rows");
}

// ---------------------------------------------------------------------------
// Slicing and assembly
// ---------------------------------------------------------------------------

inline Var gather_rows(Var a, std::span<const std::size_t> idx) {
    std::vector<std::size_t> rows(idx.begin(), idx.end());
    const auto ia = a.id;
    return a.tape->record(gather_rows(a.value(), idx), detail::needs(a),
                          [ia, rows = std::move(rows)](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t r = 0; r < rows.size(); ++r)
                                  for (std::size_t j = 0; j < g.cols(); ++j) d(rows[r], j) += g(r, j);
                          },
                          "gather_rows");
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
    const Matrix& va = a.value();
    if (begin + count > va.cols()) {
        throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") of " + va.shape_string());
    }
    Matrix out(va.rows(), count);
    for (std::size_t i = 0; i < va.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = va(i, begin + j);
    const auto ia = a.id;
    return a.tape->record(std::move(out), detail::needs(a),
                          [ia, begin](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              Matrix& d = t.grad_buffer(ia);
                              for (std::size_t i = 0; i < g.rows(); ++i)
                                  for (std::size_t j = 0; j < g.cols(); ++j) d(i, begin + j) += g(i, j);
                          },
                          "slice_cols");
}

inline Var concat_cols(Var a, Var b) {
    detail::same_tape(a, b, "concat_cols");
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    if (va.rows() != vb.rows()) {
        throw ShapeError("concat_cols: lhs " + va.shape_string() + " vs rhs " + vb.shape_string());
    }
    Matrix out(va.rows(), va.cols() + vb.cols());
    for (std::size_t i = 0; i < va.rows(); ++i) {
        for (std::size_t j = 0; j < va.cols(); ++j) out(i, j) = va(i, j);
        for (std::size_t j = 0; j < vb.cols(); ++j) out(i, va.cols() + j) = vb(i, j);
    }
    const auto ia = a.id, ib = b.id;
    const std::size_t ca = va.cols();
    return a.tape->record(std::move(out), detail::needs(a, b),
                          [ia, ib, ca](Tape& t, std::uint32_t self) {
                              const Matrix& g = t.grad(self);
                              if (t.requires_grad(ia)) {
                                  Matrix& d = t.grad_buffer(ia);
                                  for (std::size_t i = 0; i < d.rows(); ++i)
                                      for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g(i, j);
                              }
                              if (t.requires_grad(ib)) {
                                  Matrix& d = t.grad_buffer(ib);
                                  for (std::size_t i = 0; i < d.rows(); ++i)
                                      for (std::size_t j = 0; j < d.cols(); ++j) d(i, j) += g(i, ca + j);
                              }
                          },
                          "concat_cols");
}

// ---------------------------------------------------------------------------
// Composite helpers
// ---------------------------------------------------------------------------

// x W + 1 b
inline Var affine(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

// log N(x; mu, exp(log_std)^2) elementwise
inline Var gaussian_log_density(Var x, Var mu, Var log_std) {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Var z = div(sub(x, mu), exp(log_std));
    return add_scalar(neg(add(scale(square(z), 0.5), log_std)), -half_log_2pi);
}

}  // namespace madgnn
