#include "rbfdqn/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "rbfdqn/errors.hpp"

namespace rbfdqn::bench {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ConfigError(fmt::format("{}: expected a nonnegative integer, got '{}'", key, v));
    }
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError(fmt::format("{}: expected a finite real number, got '{}'", key, v));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::uint64_t> parse_uint_list(std::string_view key, std::string_view v) {
    std::vector<std::uint64_t> out;
    while (!v.empty()) {
        const auto comma = v.find(',');
        out.push_back(parse_uint(key, trim(v.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        v.remove_prefix(comma + 1);
    }
    if (out.empty()) throw ConfigError(fmt::format("{}: expected a comma-separated list, got nothing", key));
    return out;
}

} // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"task", "point_reach_2d", "environment id"},
        {"variant", "vanilla", "vanilla | her | per | her_per"},
        {"seed", "0", "master seed for a single run"},
        {"seeds", "0,1,2", "seed list used by ablate"},
        {"episodes", "3000", "training episodes (eval: evaluation episodes)"},
        {"output_dir", "runs", "directory for run artifacts"},
        {"gamma", "0.99", "discount factor"},
        {"lr", "0.001", "Adam learning rate"},
        {"epsilon_start", "1.0", "initial exploration rate"},
        {"epsilon_end", "0.05", "final exploration rate"},
        {"epsilon_decay_fraction", "0.4", "fraction of episodes over which epsilon decays linearly"},
        {"batch_size", "128", "transitions per gradient step"},
        {"updates_per_episode", "50", "gradient steps after each episode"},
        {"target_update", "hard", "hard | polyak"},
        {"target_period", "500", "gradient steps between hard target syncs"},
        {"target_tau", "0.005", "polyak averaging rate"},
        {"buffer_capacity", "1000000", "replay capacity"},
        {"num_centroids", "32", "RBF centroids N"},
        {"beta", "5.0", "RBF temperature"},
        {"norm", "l2", "l2 | l1 action distance"},
        {"hidden_dims", "128,128", "hidden layer widths of both heads"},
        {"activation", "relu", "relu | tanh"},
        {"per_alpha", "0.6", "prioritization exponent"},
        {"per_epsilon", "0.01", "priority offset added to |td error|"},
        {"per_beta_start", "0.4", "initial importance-sampling exponent"},
        {"per_beta_end", "1.0", "final importance-sampling exponent"},
        {"per_anneal_steps", "150000", "gradient steps to anneal the IS exponent"},
        {"per_max_priority_init", "1.0", "priority of the first transitions"},
        {"per_is_weights", "true", "apply importance-sampling weights"},
        {"her_strategy", "final_future", "final | future | final_future"},
        {"her_k", "4", "future goals per step"},
        {"her_replacement", "true", "draw future goals with replacement"},
        {"goal_tolerance", "0.01", "success radius"},
        {"horizon", "200", "max steps per episode"},
        {"dt", "0.05", "integration step"},
        {"lid_tip_angle_deg", "60", "lid_attractor tipping angle"},
        {"lid_gravity", "4.0", "lid_attractor gravity acceleration"},
        {"drawer_release_threshold", "0.5", "grip_drawer release threshold"},
        {"eval_episodes", "20", "greedy episodes in the final evaluation"},
        {"checkpoint_every", "500", "episodes between checkpoints (0: final only)"},
        {"log_wall_ms", "false", "write wall-clock time into run.csv (breaks byte-identical reruns)"},
        {"success_threshold", "0.9", "rolling success used for the ablation ranking"},
        {"jobs", "1", "parallel runs in ablate"},
    };
    return keys;
}

RawConfig RawConfig::defaults() {
    RawConfig raw;
    for (const auto& k : config_keys()) raw.entries_.emplace_back(k.name, k.default_value);
    return raw;
}

void RawConfig::set(std::string_view key, std::string value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = std::string(trim(value));
            return;
        }
    }
    throw ConfigError(fmt::format("unknown config key '{}'", key));
}

const std::string& RawConfig::get(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    throw ConfigError(fmt::format("unknown config key '{}'", key));
}

void RawConfig::merge_text(std::string_view text, std::string_view origin) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = trim(text.substr(0, nl));
        text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(fmt::format("{}:{}: expected 'key = value'", origin, line_no));
        }
        set(trim(line.substr(0, eq)), std::string(trim(line.substr(eq + 1))));
    }
}

void RawConfig::merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot read config file '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    merge_text(ss.str(), path.string());
}

void RawConfig::apply_environment() {
    if (const char* s = std::getenv("RBFQ_SEED"); s && *s) set("seed", s);
}

std::string RawConfig::resolved_text() const {
    std::string out;
    for (const auto& [k, v] : entries_) out += fmt::format("{} = {}\n", k, v);
    return out;
}

RunConfig RunConfig::from_raw(const RawConfig& raw) {
    RunConfig c;
    c.raw = raw;
    auto u = [&](std::string_view k) { return parse_uint(k, raw.get(k)); };
    auto r = [&](std::string_view k) { return parse_real(k, raw.get(k)); };
    auto b = [&](std::string_view k) { return parse_bool(k, raw.get(k)); };

    c.task = raw.get("task");
    (void)envs::make_env(c.task); // unknown task ids fail here
    c.variant = agent::parse_variant(raw.get("variant"));
    c.seed = u("seed");
    c.seeds = parse_uint_list("seeds", raw.get("seeds"));
    c.episodes = u("episodes");
    if (c.episodes == 0) throw ConfigError("episodes must be positive");
    c.output_dir = raw.get("output_dir");

    auto& a = c.agent;
    a.variant = c.variant;
    a.gamma = r("gamma");
    a.lr = r("lr");
    a.epsilon_start = r("epsilon_start");
    a.epsilon_end = r("epsilon_end");
    c.epsilon_decay_fraction = r("epsilon_decay_fraction");
    if (!(c.epsilon_decay_fraction >= 0.0 && c.epsilon_decay_fraction <= 1.0)) {
        throw ConfigError(fmt::format("epsilon_decay_fraction must be in [0, 1], got {}", c.epsilon_decay_fraction));
    }
    a.epsilon_decay_episodes =
        static_cast<std::size_t>(std::llround(c.epsilon_decay_fraction * static_cast<double>(c.episodes)));
    a.batch_size = u("batch_size");
    a.updates_per_episode = u("updates_per_episode");
    const auto& tu = raw.get("target_update");
    if (tu == "hard") {
        a.target_update.kind = agent::TargetUpdate::Kind::Hard;
    } else if (tu == "polyak") {
        a.target_update.kind = agent::TargetUpdate::Kind::Polyak;
    } else {
        throw ConfigError(fmt::format("target_update: expected hard or polyak, got '{}'", tu));
    }
    a.target_update.period = u("target_period");
    a.target_update.tau = r("target_tau");
    a.buffer_capacity = u("buffer_capacity");
    a.validate();

    c.net.num_centroids = u("num_centroids");
    if (c.net.num_centroids == 0) throw ConfigError("num_centroids must be positive");
    c.net.beta = r("beta");
    if (!(c.net.beta > 0.0)) throw ConfigError(fmt::format("beta must be positive, got {}", c.net.beta));
    c.net.norm = rbf::parse_norm(raw.get("norm"));
    c.net.hidden_dims.clear();
    for (auto w : parse_uint_list("hidden_dims", raw.get("hidden_dims"))) {
        if (w == 0) throw ConfigError("hidden_dims: widths must be positive");
        c.net.hidden_dims.push_back(w);
    }
    c.net.activation = nn::parse_activation(raw.get("activation"));

    c.per.alpha = r("per_alpha");
    c.per.epsilon_priority = r("per_epsilon");
    c.per.is_beta_start = r("per_beta_start");
    c.per.is_beta_end = r("per_beta_end");
    c.per.anneal_steps = u("per_anneal_steps");
    c.per.max_priority_init = r("per_max_priority_init");
    c.per.use_is_weights = b("per_is_weights");
    c.per.validate();

    c.her.kind = her::parse_strategy(raw.get("her_strategy"));
    c.her.k = u("her_k");
    c.her.with_replacement = b("her_replacement");
    c.her.validate();

    c.env.goal_tolerance = r("goal_tolerance");
    c.env.horizon = u("horizon");
    c.env.dt = r("dt");
    c.env.lid_tip_angle_deg = r("lid_tip_angle_deg");
    c.env.lid_gravity = r("lid_gravity");
    c.env.drawer_release_threshold = r("drawer_release_threshold");
    (void)envs::make_env(c.task, c.env); // validates the physical constants

    c.eval_episodes = u("eval_episodes");
    if (c.eval_episodes == 0) throw ConfigError("eval_episodes must be positive");
    c.checkpoint_every = u("checkpoint_every");
    c.log_wall_ms = b("log_wall_ms");
    c.success_threshold = r("success_threshold");
    c.jobs = std::max<std::uint64_t>(1, u("jobs"));
    return c;
}

RunConfig RunConfig::with(std::string_view key, std::string value) const {
    RawConfig copy = raw;
    copy.set(key, std::move(value));
    return from_raw(copy);
}

} // namespace rbfdqn::bench
