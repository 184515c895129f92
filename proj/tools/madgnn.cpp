// madgnn command-line driver. Exit codes: 0 success, 1 verification or run
// failure, 2 usage or configuration error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>

#include "madgnn/baseline.hpp"
#include "madgnn/checkpoint.hpp"
#include "madgnn/config.hpp"
#include "madgnn/policy.hpp"
#include "madgnn/ppo.hpp"
#include "madgnn/robustness.hpp"

#ifndef MADGNN_REVISION
#define MADGNN_REVISION "unknown"
#endif
#ifndef MADGNN_CONFIG_DIR
#define MADGNN_CONFIG_DIR "configs"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace madgnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string now_iso() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

// A bare name such as "five_agents" resolves to <config dir>/five_agents.json.
std::string resolve_config(const std::string& arg) {
    if (fs::exists(arg)) return arg;
    for (const char* dir : {"configs", MADGNN_CONFIG_DIR}) {
        const fs::path p = fs::path(dir) / (arg + ".json");
        if (fs::exists(p)) return p.string();
    }
    throw ConfigError("config file '" + arg + "' not found");
}

struct LoadedConfig {
    RunConfig run;
    std::string path;
    std::string hash;
};

LoadedConfig load_config(const std::string& arg) {
    LoadedConfig c;
    if (arg.empty()) {
        c.hash = hex64(fnv1a64(""));
        return c;
    }
    c.path = resolve_config(arg);
    const std::string text = read_text_file(c.path);
    try {
        c.run = parse_run_config(text);
    } catch (const ConfigError& e) {
        throw ConfigError(c.path + ": " + e.what());
    }
    c.hash = hex64(fnv1a64(text));
    return c;
}

std::size_t resolve_threads(std::size_t cli, std::size_t cfg) {
    if (cli > 0) return cli;
    const std::string v = env_or("MADGNN_THREADS", "");
    if (v.empty()) return cfg;
    try {
        const long n = std::stol(v);
        if (n < 1) throw std::out_of_range("");
        return std::size_t(n);
    } catch (const std::exception&) {
        throw UsageError("MADGNN_THREADS must be a positive integer, got '" + v + "'");
    }
}

class Manifest {
public:
    Manifest(std::string command, fs::path dir, const LoadedConfig& cfg) : dir_(std::move(dir)) {
        j_["command"] = std::move(command);
        j_["config_path"] = cfg.path;
        j_["config_hash"] = cfg.hash;
        j_["revision"] = MADGNN_REVISION;
        j_["out_dir"] = dir_.string();
        j_["started_at"] = now_iso();
        j_["seeds"] = json::array();
        j_["outputs"] = json::array();
        j_["partial"] = false;
    }

    void add_seed(std::uint64_t s) { j_["seeds"].push_back(s); }
    void add_output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }
    void set(const std::string& k, json v) { j_[k] = std::move(v); }

    void write(bool partial, const std::string& error = {}) {
        j_["partial"] = partial;
        j_["finished_at"] = now_iso();
        if (!error.empty()) j_["error"] = error;
        std::ofstream os(dir_ / "manifest.json");
        os << j_.dump(2) << '\n';
    }

private:
    fs::path dir_;
    json j_;
};

struct CommonOpts {
    std::string config;
    std::string out;
    std::size_t threads = 0;
};

fs::path prepare_out_dir(const CommonOpts& o) {
    fs::path dir = o.out.empty() ? fs::path(env_or("MADGNN_OUT_DIR", "out")) : fs::path(o.out);
    fs::create_directories(dir);
    return dir;
}

std::unique_ptr<Actor> make_actor(const std::string& kind, const RunConfig& rc, std::uint64_t seed) {
    if (kind == "mad") return std::make_unique<MadPolicy>(rc.mad, seed);
    if (kind == "baseline") return std::make_unique<BaselinePolicy>(rc.baseline, seed);
    throw UsageError("unknown policy kind '" + kind + "'");
}

std::vector<std::string> policy_kinds(const std::string& p) {
    if (p == "both") return {"mad", "baseline"};
    if (p == "mad" || p == "baseline") return {p};
    throw UsageError("--policy must be mad, baseline or both");
}

std::string checkpoint_meta(const std::string& kind, const LoadedConfig& cfg, std::size_t n_agents, std::size_t it) {
    return "kind=" + kind + " config_hash=" + cfg.hash + " n_agents=" + std::to_string(n_agents) +
           " iteration=" + std::to_string(it);
}

std::string meta_field(const std::string& meta, const std::string& key) {
    std::istringstream is(meta);
    std::string tok;
    while (is >> tok) {
        if (tok.rfind(key + "=", 0) == 0) return tok.substr(key.size() + 1);
    }
    return {};
}

std::string checkpoint_kind(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot open '" + path + "'");
    const std::string kind = meta_field(read_checkpoint(is).meta, "kind");
    if (kind.empty()) throw CheckpointError("'" + path + "' has no kind= entry in its meta line");
    return kind;
}

// Builds the actor for a checkpoint, or an untrained one when path is empty.
std::unique_ptr<Actor> load_actor(const std::string& path, std::string& kind, const RunConfig& rc,
                                  std::uint64_t seed) {
    if (!path.empty()) {
        const std::string stored = checkpoint_kind(path);
        if (!kind.empty() && kind != stored) {
            throw CheckpointError("checkpoint holds a '" + stored + "' policy, requested '" + kind + "'");
        }
        kind = stored;
    }
    if (kind.empty()) kind = "mad";
    auto actor = make_actor(kind, rc, seed);
    if (!path.empty()) (void)load_checkpoint(path, actor->parameters());
    return actor;
}

std::ofstream open_csv(const fs::path& p, const char* header) {
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    os << std::setprecision(17) << header << '\n';
    return os;
}

// ---------------------------------------------------------------------------

struct TrainOpts {
    CommonOpts common;
    std::size_t seeds = 1;
    std::optional<std::uint64_t> seed_base;
    std::string policy;
    std::optional<std::size_t> iterations;
    std::size_t checkpoint_every = 0;
};

int cmd_train(const TrainOpts& o) {
    LoadedConfig cfg = load_config(o.common.config);
    RunConfig& rc = cfg.run;
    if (o.iterations) rc.ppo.iterations = *o.iterations;
    rc.ppo.threads = resolve_threads(o.common.threads, rc.ppo.threads);
    const auto kinds = policy_kinds(o.policy.empty() ? rc.policy : o.policy);
    if (o.seeds == 0) throw UsageError("--seeds must be >= 1");
    const std::uint64_t base = o.seed_base.value_or(rc.ppo.seed);

    const fs::path dir = prepare_out_dir(o.common);
    Manifest man("train", dir, cfg);
    man.set("policies", kinds);
    man.set("iterations", rc.ppo.iterations);
    try {
        for (const auto& kind : kinds) {
            std::ofstream agg;
            if (rc.ppo.iterations > 0) {
                agg = open_csv(dir / ("curves_" + kind + ".csv"),
                               "iteration,seed,mean_reward,std_reward,policy_loss,value_loss,entropy,wall_s");
                man.add_output(dir / ("curves_" + kind + ".csv"));
            }
            for (std::size_t k = 0; k < o.seeds; ++k) {
                const std::uint64_t seed = base + k;
                if (kind == kinds.front()) man.add_seed(seed);
                auto actor = make_actor(kind, rc, mix_seed(seed, 1));
                Critic critic(rc.critic, mix_seed(seed, 2));
                const std::string stem = kind + "_seed" + std::to_string(seed);
                auto save = [&](std::size_t it) {
                    const fs::path p = dir / (stem + "_it" + std::to_string(it) + ".ckpt");
                    save_checkpoint(p.string(), actor->parameters(), checkpoint_meta(kind, cfg, rc.env.n_agents, it));
                    man.add_output(p);
                };
                save(0);
                if (rc.ppo.iterations == 0) continue;
                PpoConfig pc = rc.ppo;
                pc.seed = seed;
                const fs::path curve_path = dir / ("curves_" + stem + ".csv");
                auto curve = open_csv(curve_path,
                                      "iteration,seed,mean_reward,std_reward,policy_loss,value_loss,entropy,wall_s");
                man.add_output(curve_path);
                TrainHooks hooks;
                hooks.on_iteration = [&](const CurveRow& r, const UpdateStats&) {
                    std::ostringstream line;
                    line << std::setprecision(17) << r.iteration << ',' << r.seed << ',' << r.mean_reward << ','
                         << r.std_reward << ',' << r.policy_loss << ',' << r.value_loss << ',' << r.entropy << ','
                         << r.wall_s << '\n';
                    curve << line.str() << std::flush;
                    agg << line.str() << std::flush;
                    std::cerr << kind << " seed " << seed << " iter " << r.iteration << " reward " << r.mean_reward
                              << '\n';
                };
                hooks.checkpoint_every = o.checkpoint_every;
                hooks.on_checkpoint = [&](std::size_t it) {
                    if (it != pc.iterations) save(it);
                };
                (void)train(*actor, critic, rc.env, pc, hooks);
                save(pc.iterations);
            }
        }
    } catch (const std::exception& e) {
        man.write(true, e.what());
        throw;
    }
    man.write(false);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalOpts {
    CommonOpts common;
    std::string checkpoint;
    std::string policy;
    std::size_t episodes = 10;
    std::uint64_t seed = 12345;
    std::size_t n_agents = 0;
    bool deterministic = false;
};

int cmd_evaluate(const EvalOpts& o) {
    LoadedConfig cfg = load_config(o.common.config);
    if (o.n_agents > 0) cfg.run.env.n_agents = o.n_agents;
    std::string kind = o.policy;
    auto actor = load_actor(o.checkpoint, kind, cfg.run, mix_seed(o.seed, 1));
    const fs::path dir = prepare_out_dir(o.common);
    Manifest man("evaluate", dir, cfg);
    man.add_seed(o.seed);
    const EvalStats st = evaluate(*actor, cfg.run.env, o.episodes, o.seed, o.deterministic);
    json j;
    j["policy"] = kind;
    j["checkpoint"] = o.checkpoint;
    j["n_agents"] = cfg.run.env.n_agents;
    j["episodes"] = o.episodes;
    j["mean_reward"] = st.mean_reward;
    j["std_reward"] = st.std_reward;
    j["goal_rate"] = st.goal_rate;
    j["mean_collisions"] = st.mean_collisions;
    j["rewards"] = json::array();
    for (const auto& ep : st.episodes) j["rewards"].push_back(ep.reward);
    std::ofstream(dir / "eval.json") << j.dump(2) << '\n';
    man.add_output(dir / "eval.json");
    man.write(false);
    std::cout << kind << " N=" << cfg.run.env.n_agents << " mean_reward " << st.mean_reward << " std "
              << st.std_reward << " goal_rate " << st.goal_rate << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct StabilityOpts {
    CommonOpts common;
    std::string checkpoint;
    std::string policy;
    std::size_t n_min = 1;
    std::size_t n_max = 10;
    std::size_t runs = 10;
    std::uint64_t seed = 7;
};

int cmd_stability(const StabilityOpts& o) {
    if (o.n_min == 0 || o.n_min > o.n_max) {
        throw UsageError("empty agent range [" + std::to_string(o.n_min) + ", " + std::to_string(o.n_max) + "]");
    }
    if (o.runs == 0) throw UsageError("--runs must be >= 1");
    LoadedConfig cfg = load_config(o.common.config);
    std::vector<std::string> kinds;
    if (!o.checkpoint.empty()) {
        kinds = {checkpoint_kind(o.checkpoint)};
        if (!o.policy.empty() && o.policy != kinds[0]) {
            throw CheckpointError("checkpoint holds a '" + kinds[0] + "' policy, requested '" + o.policy + "'");
        }
    } else {
        kinds = policy_kinds(o.policy.empty() ? "both" : o.policy);
    }
    const fs::path dir = prepare_out_dir(o.common);
    Manifest man("stability-demo", dir, cfg);
    man.add_seed(o.seed);
    man.set("checkpoint", o.checkpoint);
    for (const auto& kind : kinds) {
        const fs::path p = dir / ("norms_" + kind + ".csv");
        auto csv = open_csv(p, "n_agents,run,t,state_norm");
        for (std::size_t n = o.n_min; n <= o.n_max; ++n) {
            EnvConfig ec = cfg.run.env;
            ec.n_agents = n;
            for (std::size_t r = 0; r < o.runs; ++r) {
                const std::uint64_t s = mix_seed(o.seed, n * 1000 + r);
                std::string k = kind;
                auto actor = load_actor(o.checkpoint, k, cfg.run, mix_seed(s, 1));
                const EpisodeStats ep = run_episode(*actor, ec, mix_seed(s, 2), mix_seed(s, 3), false);
                for (std::size_t t = 0; t < ep.norms.size(); ++t) csv << n << ',' << r << ',' << t << ',' << ep.norms[t] << '\n';
            }
        }
        man.add_output(p);
    }
    man.write(false);
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct BoundsOpts {
    CommonOpts common;
    std::string spec;
    std::optional<std::size_t> trials;
    std::string kind = "both";
    bool self_test = false;
};

json trial_json(const BoundTrial& t) {
    json j{{"trial", t.trial}, {"bound", t.bound}, {"measured", t.measured}, {"margin", t.margin}};
    for (const auto& [k, v] : t.params) j["params"][k] = v;
    return j;
}

int cmd_verify_bounds(const BoundsOpts& o) {
    if (o.kind != "lemma1" && o.kind != "theorem2" && o.kind != "both") {
        throw UsageError("--kind must be lemma1, theorem2 or both");
    }
    FuzzOptions lo;
    ClosedLoopFuzzOptions co;
    std::string spec_hash = hex64(fnv1a64(""));
    if (!o.spec.empty()) {
        const std::string text = read_text_file(o.spec);
        spec_hash = hex64(fnv1a64(text));
        json j;
        try {
            j = json::parse(text);
            const json l = j.value("lemma1", json::object());
            lo.trials = l.value("trials", lo.trials);
            lo.seed = l.value("seed", lo.seed);
            lo.norms_p = l.value("norms_p", lo.norms_p);
            lo.perturb = l.value("perturb", lo.perturb);
            const json c = j.value("theorem2", json::object());
            co.trials = c.value("trials", co.trials);
            co.seed = c.value("seed", co.seed);
            co.horizon = c.value("horizon", co.horizon);
            co.perturb = c.value("perturb", co.perturb);
        } catch (const json::exception& e) {
            throw ConfigError(o.spec + ": " + e.what());
        }
        if (lo.norms_p.empty()) throw ConfigError(o.spec + ": lemma1.norms_p must be nonempty");
    }
    if (o.trials) lo.trials = co.trials = *o.trials;
    if (o.self_test) lo.bound_factor = co.bound_factor = 0.5;

    LoadedConfig none = load_config("");
    none.path = o.spec;
    none.hash = spec_hash;
    const fs::path dir = prepare_out_dir(o.common);
    Manifest man("verify-bounds", dir, none);
    man.set("self_test", o.self_test);
    std::vector<BoundReport> reports;
    if (o.kind != "theorem2") {
        man.add_seed(lo.seed);
        reports.push_back(fuzz_lemma1(lo));
    }
    if (o.kind != "lemma1") {
        man.add_seed(co.seed);
        reports.push_back(fuzz_closed_loop(co));
    }
    bool ok = true;
    json summary = json::array();
    for (const auto& rep : reports) {
        const fs::path p = dir / ("bounds_" + rep.kind + ".csv");
        auto csv = open_csv(p, "trial,bound,measured,margin");
        json violations = json::array();
        for (const auto& t : rep.trials) {
            csv << t.trial << ',' << t.bound << ',' << t.measured << ',' << t.margin << '\n';
            if (t.margin < -rep.tolerance) violations.push_back(trial_json(t));
        }
        man.add_output(p);
        const bool pass = rep.passed();
        ok = ok && pass;
        summary.push_back({{"kind", rep.kind},
                           {"trials", rep.trials.size()},
                           {"tolerance", rep.tolerance},
                           {"min_margin", rep.trials.empty() ? 0.0 : rep.min_margin()},
                           {"passed", pass},
                           {"violations", violations}});
        std::cout << rep.kind << ": " << (pass ? "PASS" : "FAIL") << " (" << rep.trials.size() << " trials, "
                  << violations.size() << " violations)\n";
    }
    std::ofstream(dir / "bounds_report.json") << summary.dump(2) << '\n';
    man.add_output(dir / "bounds_report.json");
    man.write(false);
    return ok ? kExitOk : kExitFail;
}

// ---------------------------------------------------------------------------

struct TransferOpts {
    CommonOpts common;
    std::string checkpoint;
    std::vector<std::size_t> n_list;
    std::size_t episodes = 10;
    std::uint64_t seed = 54321;
    bool compare_untrained = false;
};

int cmd_transfer(const TransferOpts& o) {
    if (o.n_list.empty()) throw UsageError("--n-list must name at least one agent count");
    for (std::size_t n : o.n_list)
        if (n == 0) throw UsageError("--n-list entries must be >= 1");
    LoadedConfig cfg = load_config(o.common.config);
    std::string kind;
    auto trained = load_actor(o.checkpoint, kind, cfg.run, 0);
    std::unique_ptr<Actor> untrained;
    if (o.compare_untrained) untrained = make_actor(kind, cfg.run, mix_seed(o.seed, 1));

    const fs::path dir = prepare_out_dir(o.common);
    Manifest man("transfer", dir, cfg);
    man.add_seed(o.seed);
    man.set("checkpoint", o.checkpoint);
    auto rows = open_csv(dir / "transfer.csv", "n_agents,episode,reward");
    std::ofstream rows_u;
    if (untrained) rows_u = open_csv(dir / "transfer_untrained.csv", "n_agents,episode,reward");
    auto summary = open_csv(dir / "transfer_summary.csv", "n_agents,policy,mean_reward,std_reward,mean_reward_per_agent");
    bool finite = true;
    for (std::size_t n : o.n_list) {
        EnvConfig ec = cfg.run.env;
        ec.n_agents = n;
        auto run = [&](Actor& a, std::ofstream& out, const std::string& label) {
            const EvalStats st = evaluate(a, ec, o.episodes, o.seed);
            for (std::size_t k = 0; k < st.episodes.size(); ++k) {
                out << n << ',' << k << ',' << st.episodes[k].reward << '\n';
                finite = finite && st.episodes[k].finite;
            }
            summary << n << ',' << label << ',' << st.mean_reward << ',' << st.std_reward << ','
                    << st.mean_reward / double(n) << '\n';
            std::cout << label << " N=" << n << " mean_reward " << st.mean_reward << " std " << st.std_reward << '\n';
        };
        run(*trained, rows, "trained");
        if (untrained) run(*untrained, rows_u, "untrained");
    }
    man.add_output(dir / "transfer.csv");
    if (untrained) man.add_output(dir / "transfer_untrained.csv");
    man.add_output(dir / "transfer_summary.csv");
    man.set("finite_norms", finite);
    man.write(false);
    return finite ? kExitOk : kExitFail;
}

void add_common(CLI::App* sub, CommonOpts& c, bool config_required) {
    auto* opt = sub->add_option("--config", c.config, "Run config file or name under configs/");
    if (config_required) opt->required();
    sub->add_option("--out", c.out, "Output directory (default $MADGNN_OUT_DIR or ./out)");
    sub->add_option("--threads", c.threads, "Worker threads (default $MADGNN_THREADS or config)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Magnitude-and-direction GNN policies for multi-agent navigation"};
    app.require_subcommand(1);

    TrainOpts train_o;
    auto* train_c = app.add_subcommand("train", "Train MAD and/or baseline policies with PPO");
    add_common(train_c, train_o.common, true);
    train_c->add_option("--seeds", train_o.seeds, "Number of seeds (consecutive from the base seed)");
    train_c->add_option("--seed-base", train_o.seed_base, "First seed (default: config ppo.seed)");
    train_c->add_option("--policy", train_o.policy, "mad | baseline | both (default: config)");
    train_c->add_option("--iterations", train_o.iterations, "Override ppo.iterations");
    train_c->add_option("--checkpoint-every", train_o.checkpoint_every, "Save every k iterations (0: initial and final only)");

    EvalOpts eval_o;
    auto* eval_c = app.add_subcommand("evaluate", "Evaluate a checkpoint or an untrained policy");
    add_common(eval_c, eval_o.common, false);
    eval_c->add_option("--checkpoint", eval_o.checkpoint, "Checkpoint file");
    eval_c->add_option("--policy", eval_o.policy, "mad | baseline (must match the checkpoint)");
    eval_c->add_option("--episodes", eval_o.episodes, "Episodes");
    eval_c->add_option("--seed", eval_o.seed, "Evaluation seed");
    eval_c->add_option("--n-agents", eval_o.n_agents, "Override env.n_agents");
    eval_c->add_flag("--deterministic", eval_o.deterministic, "Use the mean action");

    StabilityOpts stab_o;
    auto* stab_c = app.add_subcommand("stability-demo", "Log state norms for a range of agent counts");
    add_common(stab_c, stab_o.common, false);
    stab_c->add_option("--checkpoint", stab_o.checkpoint, "Checkpoint (default: freshly initialised policies)");
    stab_c->add_option("--policy", stab_o.policy, "mad | baseline | both");
    stab_c->add_option("--n-min", stab_o.n_min, "Smallest agent count");
    stab_c->add_option("--n-max", stab_o.n_max, "Largest agent count");
    stab_c->add_option("--runs", stab_o.runs, "Runs per agent count");
    stab_c->add_option("--seed", stab_o.seed, "Seed");

    BoundsOpts bounds_o;
    auto* bounds_c = app.add_subcommand("verify-bounds", "Fuzz the GNN and closed-loop deviation bounds");
    add_common(bounds_c, bounds_o.common, false);
    bounds_c->add_option("--spec", bounds_o.spec, "JSON fuzz spec");
    bounds_c->add_option("--trials", bounds_o.trials, "Override trial counts");
    bounds_c->add_option("--kind", bounds_o.kind, "lemma1 | theorem2 | both");
    bounds_c->add_flag("--self-test", bounds_o.self_test, "Halve every bound; the run must then fail");

    TransferOpts tr_o;
    auto* tr_c = app.add_subcommand("transfer", "Evaluate a checkpoint on other agent counts");
    add_common(tr_c, tr_o.common, false);
    tr_c->add_option("--checkpoint", tr_o.checkpoint, "Checkpoint file")->required();
    tr_c->add_option("--n-list", tr_o.n_list, "Agent counts, e.g. 3,7,10")->delimiter(',')->required();
    tr_c->add_option("--episodes", tr_o.episodes, "Episodes per agent count");
    tr_c->add_option("--seed", tr_o.seed, "Layout seed");
    tr_c->add_flag("--compare-untrained", tr_o.compare_untrained, "Also evaluate a freshly initialised policy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*train_c) return cmd_train(train_o);
        if (*eval_c) return cmd_evaluate(eval_o);
        if (*stab_c) return cmd_stability(stab_o);
        if (*bounds_c) return cmd_verify_bounds(bounds_o);
        if (*tr_c) return cmd_transfer(tr_o);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFail;
    }
    return kExitUsage;
}
