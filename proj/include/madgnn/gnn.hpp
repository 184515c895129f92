#pragma once

// Graph transformer layers  H' = sigma(S H W + H B).
//
// In attention mode S is recomputed per layer from that layer's input:
//   Q = H W1,  K = H W2,  R = P W3        (P: N x 2 node positions)
//   S_ij = softmax_j over N(i) of  q_i . (k_j + r_j - r_i) / sqrt(F)
// The -q_i.r_i part is constant along a row and cancels in the softmax, so it
// is never formed. In fixed mode the caller supplies S.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "madgnn/graph.hpp"
#include "madgnn/ops.hpp"
#include "madgnn/random.hpp"

namespace madgnn {

enum class ActivationKind { leaky_relu, relu, tanh, identity };

struct Activation {
    ActivationKind kind = ActivationKind::leaky_relu;
    double slope = 0.1;

    // Smallest L with |sigma(x)| <= L |x|.
    [[nodiscard]] double lipschitz() const {
        if (kind == ActivationKind::leaky_relu) return std::max(1.0, std::abs(slope));
        return 1.0;
    }

    Var operator()(Var x) const {
        switch (kind) {
            case ActivationKind::leaky_relu: return leaky_relu(x, slope);
            case ActivationKind::relu: return relu(x);
            case ActivationKind::tanh: return madgnn::tanh(x);
            case ActivationKind::identity: return x;
        }
        return x;
    }

    [[nodiscard]] double apply(double x) const {
        switch (kind) {
            case ActivationKind::leaky_relu: return x > 0.0 ? x : slope * x;
            case ActivationKind::relu: return x > 0.0 ? x : 0.0;
            case ActivationKind::tanh: return std::tanh(x);
            case ActivationKind::identity: return x;
        }
        return x;
    }

    [[nodiscard]] Matrix apply(Matrix x) const {
        for (auto& v : x.data()) v = apply(v);
        return x;
    }
};

inline Activation parse_activation(const std::string& s, double slope = 0.1) {
    if (s == "leaky_relu") return {ActivationKind::leaky_relu, slope};
    if (s == "relu") return {ActivationKind::relu, 0.0};
    if (s == "tanh") return {ActivationKind::tanh, 0.0};
    if (s == "identity") return {ActivationKind::identity, 0.0};
    throw std::invalid_argument("unknown activation '" + s + "'");
}

// sigma(S H W + H B)
inline Var gnn_layer(Var h, Var s, Var w, Var b, const Activation& act) {
    return act(add(matmul(s, matmul(h, w)), matmul(h, b)));
}

inline Matrix gnn_layer(const Matrix& h, const Matrix& s, const Matrix& w, const Matrix& b,
                        const Activation& act) {
    return act.apply(matmul(s, matmul(h, w)) + matmul(h, b));
}

// Fixed-support cascade on plain matrices, no output map.
inline Matrix gnn_fixed_forward(const Matrix& x, const Matrix& s, const std::vector<Matrix>& w,
                                const std::vector<Matrix>& b, const Activation& act) {
    if (w.size() != b.size()) throw ShapeError("gnn_fixed_forward: W and B layer counts differ");
    Matrix h = x;
    for (std::size_t l = 0; l < w.size(); ++l) h = gnn_layer(h, s, w[l], b[l], act);
    return h;
}

// Attention support matrix for one layer; rows are probability vectors on
// the graph neighborhoods and exactly zero elsewhere.
inline Var unimp_attention(Var h, Var positions, const CommGraph& g, Var w1, Var w2, Var w3) {
    if (h.rows() != g.size()) {
        throw ShapeError("unimp_attention: " + std::to_string(h.rows()) + " feature rows for " +
                         std::to_string(g.size()) + " nodes");
    }
    const double inv_sqrt_f = 1.0 / std::sqrt(static_cast<double>(w1.cols()));
    Var q = matmul(h, w1);
    Var kr = add(matmul(h, w2), matmul(positions, w3));
    return masked_softmax_rows(scale(matmul_nt(q, kr), inv_sqrt_f), g.mask());
}

struct GnnConfig {
    std::size_t in_dim = 7;
    std::vector<std::size_t> widths{32, 32};  // F^1 .. F^L
    std::size_t out_dim = 0;                  // 0: no output map
    bool out_offset = true;
    bool attention = true;
    Activation activation{};
    double init_gain = 1.0;
};

// What a forward pass needs besides node features. Attention mode reads
// `graph` and `positions`; fixed mode reads `support`.
struct GraphContext {
    const CommGraph* graph = nullptr;
    const Matrix* positions = nullptr;  // N x 2
    const Matrix* support = nullptr;    // N x N
};

class Gnn {
public:
    Gnn() = default;

    Gnn(std::string name, GnnConfig cfg, Rng& rng) : name_(std::move(name)), cfg_(std::move(cfg)) {
        if (cfg_.widths.empty()) throw std::invalid_argument("Gnn '" + name_ + "': needs at least one layer");
        std::size_t f = cfg_.in_dim;
        for (std::size_t l = 0; l < cfg_.widths.size(); ++l) {
            const std::size_t fn = cfg_.widths[l];
            const double sd = cfg_.init_gain / std::sqrt(static_cast<double>(f));
            const std::string p = name_ + ".layer" + std::to_string(l) + ".";
            Layer layer;
            layer.w = Parameter(p + "W", randn_matrix(f, fn, sd, rng));
            layer.b = Parameter(p + "B", randn_matrix(f, fn, sd, rng));
            if (cfg_.attention) {
                layer.w1 = Parameter(p + "W1", randn_matrix(f, f, sd, rng));
                layer.w2 = Parameter(p + "W2", randn_matrix(f, f, sd, rng));
                layer.w3 = Parameter(p + "W3", randn_matrix(2, f, 1.0 / std::sqrt(2.0), rng));
            }
            layers_.push_back(std::move(layer));
            f = fn;
        }
        if (cfg_.out_dim > 0) {
            w_out_ = Parameter(name_ + ".out.W", randn_matrix(f, cfg_.out_dim, cfg_.init_gain / std::sqrt(double(f)), rng));
            if (cfg_.out_offset) b_out_ = Parameter(name_ + ".out.b", Matrix(1, cfg_.out_dim));
        }
    }

    [[nodiscard]] const std::string& name() const noexcept { return name_; }
    [[nodiscard]] const GnnConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] std::size_t num_layers() const noexcept { return layers_.size(); }
    [[nodiscard]] std::size_t out_dim() const noexcept {
        return cfg_.out_dim > 0 ? cfg_.out_dim : cfg_.widths.back();
    }

    [[nodiscard]] const Matrix& w(std::size_t l) const { return layers_.at(l).w.value(); }
    [[nodiscard]] const Matrix& b(std::size_t l) const { return layers_.at(l).b.value(); }
    [[nodiscard]] bool has_output_map() const noexcept { return cfg_.out_dim > 0; }
    [[nodiscard]] const Matrix& w_out() const { return w_out_.value(); }

    ParameterList parameters() {
        ParameterList out;
        for (auto& l : layers_) {
            out.push_back(&l.w);
            out.push_back(&l.b);
            if (cfg_.attention) {
                out.push_back(&l.w1);
                out.push_back(&l.w2);
                out.push_back(&l.w3);
            }
        }
        if (cfg_.out_dim > 0) {
            out.push_back(&w_out_);
            if (cfg_.out_offset) out.push_back(&b_out_);
        }
        return out;
    }

    Var forward(Tape& t, Var x, const GraphContext& ctx) {
        if (x.cols() != cfg_.in_dim) {
            throw ShapeError("Gnn '" + name_ + "': input has " + std::to_string(x.cols()) +
                             " features, expected " + std::to_string(cfg_.in_dim));
        }
        std::optional<Var> fixed_s;
        std::optional<Var> pos;
        if (cfg_.attention) {
            if (!ctx.graph || !ctx.positions) throw std::invalid_argument("Gnn '" + name_ + "': attention needs graph and positions");
            pos = t.constant(*ctx.positions);
        } else {
            if (!ctx.support) throw std::invalid_argument("Gnn '" + name_ + "': fixed mode needs a support matrix");
            fixed_s = t.constant(*ctx.support);
        }
        Var h = x;
        for (auto& l : layers_) {
            Var s = cfg_.attention
                        ? unimp_attention(h, *pos, *ctx.graph, t.param(l.w1), t.param(l.w2), t.param(l.w3))
                        : *fixed_s;
            h = gnn_layer(h, s, t.param(l.w), t.param(l.b), cfg_.activation);
        }
        if (cfg_.out_dim > 0) {
            h = matmul(h, t.param(w_out_));
            if (cfg_.out_offset) h = add_row(h, t.param(b_out_));
        }
        return h;
    }

    Matrix forward(const Matrix& x, const GraphContext& ctx) {
        Tape t(false);
        return forward(t, t.constant(x), ctx).value();
    }

    // Certified bound on ||Phi(X)|| / ||X|| given a bound on ||S|| valid for
    // every layer. Infinite when the output map carries an offset.
    [[nodiscard]] double gain_bound(double support_norm, double p = 2.0) const {
        double g = std::pow(cfg_.activation.lipschitz(), static_cast<double>(layers_.size()));
        for (const auto& l : layers_) g *= support_norm * entry_norm(l.w.value(), p) + entry_norm(l.b.value(), p);
        if (cfg_.out_dim > 0) {
            if (cfg_.out_offset) return std::numeric_limits<double>::infinity();
            g *= entry_norm(w_out_.value(), p);
        }
        return g;
    }

    // Bound on ||S|| for attention supports over n nodes: every row is a
    // probability vector, so ||S||_p <= n^(1/p).
    [[nodiscard]] static double attention_support_norm(std::size_t n, double p = 2.0) {
        return std::pow(static_cast<double>(n), 1.0 / p);
    }

private:
    struct Layer {
        Parameter w, b, w1, w2, w3;
    };

    std::string name_;
    GnnConfig cfg_;
    std::vector<Layer> layers_;
    Parameter w_out_;
    Parameter b_out_;
};

// L_sigma^L * prod_k (||S|| ||W^k|| + ||B^k||)
inline double gnn_gain_bound(const std::vector<Matrix>& w, const std::vector<Matrix>& b, double support_norm,
                             double lipschitz, double p = 2.0) {
    double g = std::pow(lipschitz, static_cast<double>(w.size()));
    for (std::size_t k = 0; k < w.size(); ++k) g *= support_norm * entry_norm(w[k], p) + entry_norm(b[k], p);
    return g;
}

}  // namespace madgnn
