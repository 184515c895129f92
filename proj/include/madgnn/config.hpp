#pragma once

// Run configuration files: a JSON tree with a schema version, mirroring
// EnvConfig, PpoConfig and the three network configs. Unknown keys are errors.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "madgnn/baseline.hpp"
#include "madgnn/env.hpp"
#include "madgnn/policy.hpp"
#include "madgnn/ppo.hpp"

namespace madgnn {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
    std::string policy = "both";  // mad | baseline | both
    EnvConfig env;
    PpoConfig ppo;
    MadConfig mad;
    BaselineConfig baseline;
    CriticConfig critic;
};

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << v;
    return os.str();
}

namespace detail {

class Section {
public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + path_ + "' must be an object");
    }

    template <class T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string where = path_.empty() ? key : path_ + "." + key;
        try {
            if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
                if (!it->is_number_unsigned()) throw ConfigError("expected a non-negative integer");
            } else if constexpr (std::is_same_v<T, double>) {
                if (!it->is_number()) throw ConfigError("expected a number");
            }
            out = it->template get<T>();
        } catch (const std::exception& e) {
            throw ConfigError("config: field '" + where + "': " + e.what());
        }
    }

    void read_activation(const char* key, Activation& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        const std::string where = path_.empty() ? key : path_ + "." + key;
        try {
            out = parse_activation(it->get<std::string>(), out.slope);
        } catch (const std::exception& e) {
            throw ConfigError("config: field '" + where + "': " + e.what());
        }
    }

    [[nodiscard]] const nlohmann::json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw ConfigError("config: unknown field '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
            }
        }
    }

private:
    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_col(std::string_view text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace detail

inline RunConfig parse_run_config(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigError("config: syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": " + e.what());
    }
    RunConfig rc;
    detail::Section top(j, "");
    int version = 0;
    top.read("schema_version", version);
    if (version != kConfigSchemaVersion) {
        throw ConfigError("config: field 'schema_version': expected " + std::to_string(kConfigSchemaVersion) + ", got " +
                          std::to_string(version));
    }
    top.read("policy", rc.policy);
    if (rc.policy != "mad" && rc.policy != "baseline" && rc.policy != "both") {
        throw ConfigError("config: field 'policy': expected mad, baseline or both");
    }
    if (const auto* e = top.child("env")) {
        detail::Section s(*e, "env");
        EnvConfig& c = rc.env;
        s.read("n_agents", c.n_agents);
        s.read("n_obstacles", c.n_obstacles);
        s.read("world_scale", c.world_scale);
        s.read("dt", c.dt);
        s.read("damping", c.damping);
        s.read("mass", c.mass);
        s.read("max_speed", c.max_speed);
        s.read("comm_radius", c.comm_radius);
        s.read("agent_radius", c.agent_radius);
        s.read("obstacle_radius", c.obstacle_radius);
        s.read("goal_radius", c.goal_radius);
        s.read("contact_force", c.contact_force);
        s.read("contact_margin", c.contact_margin);
        s.read("noise_std", c.noise_std);
        s.read("episode_length", c.episode_length);
        s.read("base_gain", c.base_gain);
        s.read("max_spawn_tries", c.max_spawn_tries);
        s.finish();
    }
    if (const auto* p = top.child("ppo")) {
        detail::Section s(*p, "ppo");
        PpoConfig& c = rc.ppo;
        s.read("gamma", c.gamma);
        s.read("lambda", c.lambda);
        s.read("clip", c.clip);
        s.read("epochs", c.epochs);
        s.read("minibatch_segments", c.minibatch_segments);
        s.read("learning_rate", c.learning_rate);
        s.read("entropy_coef", c.entropy_coef);
        s.read("value_coef", c.value_coef);
        s.read("max_grad_norm", c.max_grad_norm);
        s.read("reward_scale", c.reward_scale);
        s.read("horizon", c.horizon);
        s.read("n_envs", c.n_envs);
        s.read("iterations", c.iterations);
        s.read("seed", c.seed);
        s.read("threads", c.threads);
        s.finish();
    }
    if (const auto* m = top.child("mad")) {
        detail::Section s(*m, "mad");
        MadConfig& c = rc.mad;
        s.read("mag_widths", c.mag_widths);
        s.read("embed_dim", c.embed_dim);
        s.read("lru_state", c.lru_state);
        s.read("lru_head_in", c.lru_head_in);
        s.read("lru_head_hidden", c.lru_head_hidden);
        s.read("lru_r_min", c.lru_r_min);
        s.read("lru_r_max", c.lru_r_max);
        s.read("lru_max_phase", c.lru_max_phase);
        s.read("lru_head_gain", c.lru_head_gain);
        s.read("dir_widths", c.dir_widths);
        s.read("rnn_hidden", c.rnn_hidden);
        s.read("magnitude_cap", c.magnitude_cap);
        s.read("log_std_min", c.log_std_min);
        s.read("log_std_max", c.log_std_max);
        s.read_activation("activation", c.activation);
        s.finish();
    }
    if (const auto* b = top.child("baseline")) {
        detail::Section s(*b, "baseline");
        BaselineConfig& c = rc.baseline;
        s.read("widths", c.widths);
        s.read("action_scale", c.action_scale);
        s.read("log_std_min", c.log_std_min);
        s.read("log_std_max", c.log_std_max);
        s.read_activation("activation", c.activation);
        s.finish();
    }
    if (const auto* cr = top.child("critic")) {
        detail::Section s(*cr, "critic");
        s.read("widths", rc.critic.widths);
        s.read("hidden", rc.critic.hidden);
        s.read_activation("activation", rc.critic.activation);
        s.finish();
    }
    top.finish();
    rc.env.validate();
    rc.ppo.validate();
    return rc;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace madgnn
