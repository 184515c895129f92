#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Tape records every primitive as a node holding its forward value and a
// closure that pushes the node's adjoint into its parents. Nodes are appended
// in evaluation order, so the vector is already topologically sorted and the
// backward pass is a single reverse sweep. Complex quantities are carried as
// two real channels by the callers (see lru.hpp); the tape itself only ever
// sees real matrices.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "madgnn/tensor.hpp"

namespace madgnn {

class TapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A named, learnable matrix. Every mutation bumps the version so a tape can
// detect that its recorded forward pass went stale.
class Parameter {
public:
    Parameter() = default;

    Parameter(std::string name, Matrix value) : name_(std::move(name)) { assign(std::move(value)); }

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] const Matrix& value() const noexcept { return value_; }
    [[nodiscard]] Matrix& grad() noexcept { return grad_; }
    [[nodiscard]] const Matrix& grad() const noexcept { return grad_; }
    [[nodiscard]] std::uint64_t version() const noexcept { return version_; }
    [[nodiscard]] std::size_t size() const noexcept { return value_.size(); }

    void assign(Matrix v) {
        if (!v.all_finite()) throw NonFiniteError("parameter '" + name_ + "' has non-finite entries");
        if (!value_.empty() && (v.rows() != value_.rows() || v.cols() != value_.cols())) {
            throw ShapeError("parameter '" + name_ + "': assigned " + v.shape_string() +
                             " over " + value_.shape_string());
        }
        value_ = std::move(v);
        grad_ = Matrix(value_.rows(), value_.cols());
        ++version_;
    }

    void set_entry(std::size_t k, double v) {
        if (!std::isfinite(v)) throw NonFiniteError("parameter '" + name_ + "': non-finite entry");
        value_[k] = v;
        ++version_;
    }

    // In-place update used by optimizers; f receives (value, grad).
    template <typename F>
    void update(F&& f) {
        f(value_, std::as_const(grad_));
        if (!value_.all_finite()) {
            throw NonFiniteError("parameter '" + name_ + "' became non-finite after update");
        }
        ++version_;
    }

    void zero_grad() { grad_.fill(0.0); }

private:
    std::string name_;
    Matrix value_;
    Matrix grad_;
    std::uint64_t version_ = 0;
};

using ParameterList = std::vector<Parameter*>;

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    [[nodiscard]] const Matrix& value() const;
    [[nodiscard]] std::size_t rows() const { return value().rows(); }
    [[nodiscard]] std::size_t cols() const { return value().cols(); }
};

class Tape {
public:
    // Receives the tape and the id of the node being differentiated.
    using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    [[nodiscard]] bool grad_enabled() const noexcept { return grad_enabled_; }
    [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Matrix value) { return push(std::move(value), false, nullptr, "constant", false); }

    // Leaf bound to a parameter. Binding the same parameter twice returns the
    // same node.
    Var param(Parameter& p) {
        if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{this, it->second};
        Var v = push(p.value(), grad_enabled_, nullptr, "parameter", false);
        param_ids_.emplace(&p, v.id);
        leaves_.push_back({&p, v.id, p.version()});
        return v;
    }

    // Appends an op node. The value must already be computed; `parents_need_grad`
    // is the OR over the op's inputs.
    Var record(Matrix value, bool parents_need_grad, BackwardFn fn, const char* op) {
        const bool rg = grad_enabled_ && parents_need_grad;
        return push(std::move(value), rg, rg ? std::move(fn) : BackwardFn{}, op, true);
    }

    [[nodiscard]] const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    [[nodiscard]] const Matrix& value(std::uint32_t id) const { return nodes_[id].value; }
    [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    [[nodiscard]] bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }

    // Adjoint of a node after backward(); empty if no gradient reached it.
    [[nodiscard]] const Matrix& grad(Var v) const { return nodes_.at(v.id).grad; }
    [[nodiscard]] const Matrix& grad(std::uint32_t id) const { return nodes_[id].grad; }

    // Adjoint buffer of node `id`, allocated on first use.
    Matrix& grad_buffer(std::uint32_t id) {
        Node& n = nodes_[id];
        if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
        return n.grad;
    }

    // Seeds d(seed)/d(seed) = 1 and sweeps in reverse, then accumulates leaf
    // adjoints into Parameter::grad().
    void backward(Var seed) {
        if (seed.tape != this) throw TapeError("backward: seed belongs to another tape");
        if (!grad_enabled_) throw TapeError("backward: tape was recorded without gradients");
        if (backward_done_) throw TapeError("backward: already run on this tape");
        const Node& s = nodes_.at(seed.id);
        if (s.value.rows() != 1 || s.value.cols() != 1) {
            throw TapeError("backward: seed must be scalar, got " + s.value.shape_string());
        }
        for (const auto& leaf : leaves_) {
            if (leaf.param->version() != leaf.version) {
                throw TapeError("backward: tape mutated since forward pass (parameter '" +
                                leaf.param->name() + "' changed)");
            }
        }
        backward_done_ = true;
        grad_buffer(seed.id)(0, 0) = 1.0;
        for (std::size_t i = seed.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, static_cast<std::uint32_t>(i));
        }
        for (const auto& leaf : leaves_) {
            const Matrix& g = nodes_[leaf.id].grad;
            if (!g.empty()) leaf.param->grad() += g;
        }
    }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        const char* op;
        bool requires_grad;
    };

    struct Leaf {
        Parameter* param;
        std::uint32_t id;
        std::uint64_t version;
    };

    Var push(Matrix value, bool rg, BackwardFn fn, const char* op, bool check) {
        const auto id = static_cast<std::uint32_t>(nodes_.size());
        if (check && !value.all_finite()) {
            throw NonFiniteError("non-finite value produced by node #" + std::to_string(id) + " (" +
                                 op + ")");
        }
        nodes_.push_back(Node{std::move(value), Matrix{}, std::move(fn), op, rg});
        return Var{this, id};
    }

    std::vector<Node> nodes_;
    std::vector<Leaf> leaves_;
    std::unordered_map<const Parameter*, std::uint32_t> param_ids_;
    bool grad_enabled_;
    bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape->value(*this); }

namespace detail {

inline void same_tape(Var a, Var b, const char* op) {
    if (a.tape != b.tape) throw TapeError(std::string(op) + ": operands on different tapes");
}

inline bool needs(Var a) { return a.tape->requires_grad(a); }
inline bool needs(Var a, Var b) { return needs(a) || needs(b); }

// g_parent += g_out (same shape)
inline void accumulate(Tape& t, std::uint32_t parent, const Matrix& g) {
    if (!t.requires_grad(parent)) return;
    Matrix& dst = t.grad_buffer(parent);
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
}

}  // namespace detail

}  // namespace madgnn
