#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "madgnn/tensor.hpp"

namespace madgnn {

class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vec2 = std::array<double, 2>;

enum class EntityKind : std::uint8_t { agent, obstacle };

inline char kind_code(EntityKind k) { return k == EntityKind::agent ? 'a' : 'o'; }

// Undirected communication graph over dense node ids 0..N-1. Neighborhoods
// always contain the node itself.
class CommGraph {
public:
    CommGraph() = default;

    CommGraph(std::vector<EntityKind> kinds, const std::vector<std::pair<std::size_t, std::size_t>>& edges)
        : kinds_(std::move(kinds)), mask_(kinds_.size() * kinds_.size(), 0) {
        const std::size_t n = kinds_.size();
        for (std::size_t i = 0; i < n; ++i) mask_[i * n + i] = 1;
        for (auto [i, j] : edges) {
            if (i >= n || j >= n) {
                throw GraphError("edge (" + std::to_string(i) + "," + std::to_string(j) + ") outside " +
                                 std::to_string(n) + " nodes");
            }
            if (i == j) continue;
            mask_[i * n + j] = 1;
            mask_[j * n + i] = 1;
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return kinds_.size(); }
    [[nodiscard]] const std::vector<EntityKind>& kinds() const noexcept { return kinds_; }
    [[nodiscard]] EntityKind kind(std::size_t i) const { return kinds_.at(i); }

    // True iff j is in the neighborhood of i (self included).
    [[nodiscard]] bool linked(std::size_t i, std::size_t j) const { return mask_[i * size() + j] != 0; }

    // Row-major NxN 0/1 neighborhood mask including the diagonal.
    [[nodiscard]] std::span<const std::uint8_t> mask() const noexcept { return mask_; }

    [[nodiscard]] std::vector<std::size_t> neighbors(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < size(); ++j)
            if (linked(i, j)) out.push_back(j);
        return out;
    }

    // Undirected edges (i < j), lexicographic.
    [[nodiscard]] std::vector<std::pair<std::size_t, std::size_t>> edges() const {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                if (linked(i, j)) out.emplace_back(i, j);
        return out;
    }

    [[nodiscard]] std::vector<std::size_t> agent_nodes() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < size(); ++i)
            if (kinds_[i] == EntityKind::agent) out.push_back(i);
        return out;
    }

    friend bool operator==(const CommGraph&, const CommGraph&) = default;

private:
    std::vector<EntityKind> kinds_;
    std::vector<std::uint8_t> mask_;
};

// Edge (i, j) iff i != j and |p_i - p_j| <= radius.
inline CommGraph build_comm_graph(std::span<const Vec2> positions, std::span<const EntityKind> kinds,
                                  double radius) {
    if (!(radius > 0.0)) throw GraphError("build_comm_graph: radius must be > 0");
    if (positions.size() != kinds.size()) {
        throw GraphError("build_comm_graph: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(kinds.size()) + " kinds");
    }
    for (const auto& p : positions)
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw GraphError("build_comm_graph: non-finite position");
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t i = 0; i < positions.size(); ++i) {
        for (std::size_t j = i + 1; j < positions.size(); ++j) {
            const double dx = positions[i][0] - positions[j][0];
            const double dy = positions[i][1] - positions[j][1];
            if (std::hypot(dx, dy) <= radius) edges.emplace_back(i, j);
        }
    }
    return CommGraph({kinds.begin(), kinds.end()}, edges);
}

struct NodeSpec {
    std::size_t id;
    EntityKind kind;
    Vec2 position;
};

// Variant taking explicit ids; ids must be exactly 0..N-1 with no repeats.
// Node i of the result is the spec whose id is i.
inline CommGraph build_comm_graph(std::span<const NodeSpec> nodes, double radius) {
    const std::size_t n = nodes.size();
    std::vector<const NodeSpec*> by_id(n, nullptr);
    for (const auto& s : nodes) {
        if (s.id >= n) throw GraphError("node id " + std::to_string(s.id) + " is not dense in 0.." + std::to_string(n - 1));
        if (by_id[s.id]) throw GraphError("duplicate node id " + std::to_string(s.id));
        by_id[s.id] = &s;
    }
    std::vector<Vec2> pos;
    std::vector<EntityKind> kinds;
    for (const auto* s : by_id) {
        pos.push_back(s->position);
        kinds.push_back(s->kind);
    }
    return build_comm_graph(pos, kinds, radius);
}

enum class SupportKind { adjacency, degree_normalized };

inline Matrix support_matrix(const CommGraph& g, SupportKind kind) {
    const std::size_t n = g.size();
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t deg = 0;
        for (std::size_t j = 0; j < n; ++j) deg += g.linked(i, j);
        const double v = kind == SupportKind::adjacency ? 1.0 : 1.0 / static_cast<double>(deg);
        for (std::size_t j = 0; j < n; ++j)
            if (g.linked(i, j)) s(i, j) = v;
    }
    return s;
}

// Node relabeling. (P X)_i = X_{perm[i]} and (P S P^T)_{ij} = S_{perm[i], perm[j]}.
class Permutation {
public:
    explicit Permutation(std::vector<std::size_t> perm) : perm_(std::move(perm)) {
        std::vector<char> seen(perm_.size(), 0);
        for (auto p : perm_) {
            if (p >= perm_.size() || seen[p]) throw GraphError("permutation is not a bijection");
            seen[p] = 1;
        }
    }

    static Permutation identity(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        return Permutation(std::move(p));
    }

    [[nodiscard]] std::size_t size() const noexcept { return perm_.size(); }
    [[nodiscard]] std::size_t operator[](std::size_t i) const { return perm_[i]; }
    [[nodiscard]] const std::vector<std::size_t>& indices() const noexcept { return perm_; }

    [[nodiscard]] Permutation inverse() const {
        std::vector<std::size_t> inv(perm_.size());
        for (std::size_t i = 0; i < perm_.size(); ++i) inv[perm_[i]] = i;
        return Permutation(std::move(inv));
    }

    [[nodiscard]] Matrix apply_rows(const Matrix& x) const {
        check(x.rows(), "rows");
        return gather_rows(x, perm_);
    }

    [[nodiscard]] Matrix conjugate(const Matrix& s) const {
        check(s.rows(), "rows");
        check(s.cols(), "cols");
        Matrix out(s.rows(), s.cols());
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < size(); ++j) out(i, j) = s(perm_[i], perm_[j]);
        return out;
    }

    [[nodiscard]] CommGraph apply(const CommGraph& g) const {
        check(g.size(), "nodes");
        std::vector<EntityKind> kinds(size());
        std::vector<std::pair<std::size_t, std::size_t>> edges;
        for (std::size_t i = 0; i < size(); ++i) {
            kinds[i] = g.kind(perm_[i]);
            for (std::size_t j = i + 1; j < size(); ++j)
                if (g.linked(perm_[i], perm_[j])) edges.emplace_back(i, j);
        }
        return CommGraph(std::move(kinds), edges);
    }

    template <typename T>
    [[nodiscard]] std::vector<T> apply(std::span<const T> xs) const {
        check(xs.size(), "entries");
        std::vector<T> out;
        out.reserve(xs.size());
        for (auto p : perm_) out.push_back(xs[p]);
        return out;
    }

private:
    void check(std::size_t n, const char* what) const {
        if (n != perm_.size()) {
            throw ShapeError("permutation of size " + std::to_string(perm_.size()) + " applied to " +
                             std::to_string(n) + " " + what);
        }
    }

    std::vector<std::size_t> perm_;
};

inline std::pair<Matrix, Matrix> apply_permutation(const Permutation& p, const Matrix& x, const Matrix& s) {
    return {p.apply_rows(x), p.conjugate(s)};
}

struct PerturbedSupport {
    Matrix s_hat;
    double delta_norm;
};

// S_hat = S + dS, together with the entrywise p-norm of dS.
inline PerturbedSupport perturb_support(const Matrix& s, const Matrix& ds, double p = 2.0) {
    return {s + ds, entry_norm(ds, p)};
}

// dS that deletes the undirected edge (i, j) from S.
inline Matrix edge_removal_delta(const Matrix& s, std::size_t i, std::size_t j) {
    Matrix d(s.rows(), s.cols());
    d(i, j) = -s(i, j);
    d(j, i) = -s(j, i);
    return d;
}

// Text snapshot:
//   madgnn-graph 1
//   kinds <a|o per node, no separators>
//   i j          (one undirected edge per line, i < j)
inline void write_edge_list(std::ostream& os, const CommGraph& g) {
    os << "madgnn-graph 1\nkinds ";
    for (auto k : g.kinds()) os << kind_code(k);
    os << '\n';
    for (auto [i, j] : g.edges()) os << i << ' ' << j << '\n';
}

inline CommGraph read_edge_list(std::istream& is) {
    std::string tag, kinds_str;
    int version = 0;
    if (!(is >> tag >> version) || tag != "madgnn-graph" || version != 1) throw GraphError("bad graph header");
    if (!(is >> tag) || tag != "kinds") throw GraphError("missing kinds line");
    std::getline(is, kinds_str);
    std::vector<EntityKind> kinds;
    for (char c : kinds_str) {
        if (c == 'a') kinds.push_back(EntityKind::agent);
        else if (c == 'o') kinds.push_back(EntityKind::obstacle);
        else if (c != ' ' && c != '\r') throw GraphError(std::string("unknown node kind '") + c + "'");
    }
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::size_t i = 0, j = 0;
    while (is >> i >> j) edges.emplace_back(i, j);
    if (!is.eof()) throw GraphError("malformed edge line");
    return CommGraph(std::move(kinds), edges);
}

}  // namespace madgnn
