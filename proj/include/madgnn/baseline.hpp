#pragma once

#include <string>
#include <vector>

#include "madgnn/policy.hpp"

namespace madgnn {

// Unconstrained GNN-Gaussian actor: u = scale * tanh(a), a ~ N(mu, sigma),
// with (mu, log sigma) read off a graph transformer over the node features.
// No base controller and no magnitude gating.
struct BaselineConfig {
    std::vector<std::size_t> widths{32, 32};
    double action_scale = 1.0;
    double log_std_min = -3.0;
    double log_std_max = 0.5;
    Activation activation{};
};

class BaselinePolicy final : public Actor {
public:
    BaselinePolicy(BaselineConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        Rng rng(seed);
        GnnConfig g;
        g.in_dim = kNodeFeatures;
        g.widths = cfg_.widths;
        g.activation = cfg_.activation;
        gnn_ = Gnn("baseline.gnn", g, rng);
        const std::size_t f = cfg_.widths.back();
        w_mu_ = Parameter("baseline.mu.W", randn_matrix(f, kActionDim, 0.1 / std::sqrt(double(f)), rng));
        b_mu_ = Parameter("baseline.mu.b", Matrix(1, kActionDim));
        w_ls_ = Parameter("baseline.log_std.W", randn_matrix(f, kActionDim, 0.1 / std::sqrt(double(f)), rng));
        b_ls_ = Parameter("baseline.log_std.b", Matrix(1, kActionDim));
    }

    [[nodiscard]] std::string kind() const override { return "baseline"; }

    ParameterList parameters() override {
        ParameterList out = gnn_.parameters();
        for (auto* p : {&w_mu_, &b_mu_, &w_ls_, &b_ls_}) out.push_back(p);
        return out;
    }

    Gnn& gnn() { return gnn_; }
    Parameter& mu_weight() { return w_mu_; }
    Parameter& mu_bias() { return b_mu_; }

    [[nodiscard]] std::vector<Matrix> initial_carry(std::size_t) const override { return {}; }

    ActorStep step(Tape& t, std::vector<Var>&, const Observation& obs) override {
        const GraphContext ctx{&obs.graph, &obs.positions, nullptr};
        Var h = gather_rows(gnn_.forward(t, t.constant(obs.features), ctx), obs.agent_nodes);
        ActorStep out;
        out.mu = affine(h, t.param(w_mu_), t.param(b_mu_));
        Var s = sigmoid(affine(h, t.param(w_ls_), t.param(b_ls_)));
        out.log_std = add_scalar(scale(s, cfg_.log_std_max - cfg_.log_std_min), cfg_.log_std_min);
        const std::size_t na = obs.agent_nodes.size();
        out.magnitude = t.constant(Matrix(na, kActionDim, cfg_.action_scale));
        out.u_base = Matrix(na, kActionDim);
        return out;
    }

private:
    BaselineConfig cfg_;
    Gnn gnn_;
    Parameter w_mu_, b_mu_, w_ls_, b_ls_;
};

// Centralized value function: graph transformer over all nodes, mean over
// agent rows, then an MLP on [pooled, time fraction].
struct CriticConfig {
    std::vector<std::size_t> widths{32, 32};
    std::size_t hidden = 32;
    Activation activation{};
};

class Critic {
public:
    Critic(CriticConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        Rng rng(seed);
        GnnConfig g;
        g.in_dim = kNodeFeatures;
        g.widths = cfg_.widths;
        g.activation = cfg_.activation;
        gnn_ = Gnn("critic.gnn", g, rng);
        const std::size_t f = cfg_.widths.back() + 1;
        w1_ = Parameter("critic.W1", randn_matrix(f, cfg_.hidden, 1.0 / std::sqrt(double(f)), rng));
        b1_ = Parameter("critic.b1", Matrix(1, cfg_.hidden));
        w2_ = Parameter("critic.W2", randn_matrix(cfg_.hidden, 1, 1.0 / std::sqrt(double(cfg_.hidden)), rng));
        b2_ = Parameter("critic.b2", Matrix(1, 1));
    }

    ParameterList parameters() {
        ParameterList out = gnn_.parameters();
        for (auto* p : {&w1_, &b1_, &w2_, &b2_}) out.push_back(p);
        return out;
    }

    Var value(Tape& t, const Observation& obs) {
        const GraphContext ctx{&obs.graph, &obs.positions, nullptr};
        Var h = mean_rows(gather_rows(gnn_.forward(t, t.constant(obs.features), ctx), obs.agent_nodes));
        h = concat_cols(h, t.constant(Matrix::scalar(obs.time_fraction)));
        return affine(madgnn::tanh(affine(h, t.param(w1_), t.param(b1_))), t.param(w2_), t.param(b2_));
    }

    double value(const Observation& obs) {
        Tape t(false);
        return value(t, obs).value().item();
    }

private:
    CriticConfig cfg_;
    Gnn gnn_;
    Parameter w1_, b1_, w2_, b2_;
};

}  // namespace madgnn
