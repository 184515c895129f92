#include <gtest/gtest.h>

#include "madgnn/config.hpp"

using namespace madgnn;

namespace {

std::string error_of(const std::string& text) {
    try {
        (void)parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Fnv1a, PublishedVectors) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(RunConfigParse, MinimalUsesDefaults) {
    const RunConfig rc = parse_run_config(R"({"schema_version": 1})");
    EXPECT_EQ(rc.policy, "both");
    EXPECT_EQ(rc.env.n_agents, EnvConfig{}.n_agents);
    EXPECT_EQ(rc.ppo.iterations, PpoConfig{}.iterations);
    EXPECT_EQ(rc.mad.lru_state, MadConfig{}.lru_state);
}

TEST(RunConfigParse, ShippedConfigMatchesLibraryDefaults) {
    const RunConfig rc = parse_run_config(read_text_file(std::string(MADGNN_SOURCE_DIR) + "/configs/five_agents.json"));
    const EnvConfig e;
    const PpoConfig p;
    EXPECT_EQ(rc.env.n_agents, 5u);
    EXPECT_EQ(rc.env.noise_std, e.noise_std);
    EXPECT_EQ(rc.env.damping, e.damping);
    EXPECT_EQ(rc.env.contact_force, e.contact_force);
    EXPECT_EQ(rc.ppo.learning_rate, p.learning_rate);
    EXPECT_EQ(rc.ppo.n_envs, p.n_envs);
    EXPECT_EQ(rc.ppo.iterations, 50u);
    EXPECT_EQ(rc.mad.mag_widths, MadConfig{}.mag_widths);
    EXPECT_EQ(rc.mad.activation.kind, ActivationKind::leaky_relu);
}

TEST(RunConfigParse, OverridesAreApplied) {
    const RunConfig rc = parse_run_config(
        R"({"schema_version": 1, "policy": "mad", "env": {"n_agents": 7, "noise_std": 0.05},
            "ppo": {"iterations": 3}, "mad": {"activation": "tanh", "dir_widths": [8]}})");
    EXPECT_EQ(rc.policy, "mad");
    EXPECT_EQ(rc.env.n_agents, 7u);
    EXPECT_EQ(rc.env.noise_std, 0.05);
    EXPECT_EQ(rc.ppo.iterations, 3u);
    EXPECT_EQ(rc.mad.activation.kind, ActivationKind::tanh);
    EXPECT_EQ(rc.mad.dir_widths, std::vector<std::size_t>{8});
}

TEST(RunConfigParse, ErrorsNameTheField) {
    EXPECT_NE(error_of(R"({"schema_version": 1, "env": {"n_agentz": 3}})").find("env.n_agentz"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "ppo": {"gamma": "high"}})").find("ppo.gamma"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "env": {"n_agents": -2}})").find("env.n_agents"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "mad": {"activation": "swish"}})").find("mad.activation"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "policy": "other"})").find("policy"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "extra": 1})").find("'extra'"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "env": 3})").find("'env'"), std::string::npos);
}

TEST(RunConfigParse, VersionIsRequired) {
    EXPECT_NE(error_of("{}").find("schema_version"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 2})").find("schema_version"), std::string::npos);
}

TEST(RunConfigParse, SyntaxErrorReportsLine) {
    const std::string msg = error_of("{\n  \"schema_version\": 1,\n  \"env\": {,}\n}");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(RunConfigParse, SemanticValidationRuns) {
    EXPECT_NE(error_of(R"({"schema_version": 1, "ppo": {"gamma": 1.5}})").find("gamma"), std::string::npos);
    EXPECT_NE(error_of(R"({"schema_version": 1, "env": {"dt": 0}})").find("dt"), std::string::npos);
}

TEST(RunConfigParse, MissingFileThrows) {
    EXPECT_THROW((void)read_text_file("/nonexistent/madgnn.json"), ConfigError);
}
