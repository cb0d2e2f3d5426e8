#pragma once

// Flat `key = value` run configuration. Every key has a default; unknown keys
// are rejected. Resolution order: defaults, config file, command-line flags,
// then the RBFQ_SEED environment variable.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rbfdqn/agent.hpp"
#include "rbfdqn/envs.hpp"
#include "rbfdqn/her.hpp"
#include "rbfdqn/rbf_q.hpp"
#include "rbfdqn/replay.hpp"

namespace rbfdqn::bench {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

// The full key table in its canonical (resolved-file) order.
const std::vector<ConfigKey>& config_keys();

class RawConfig {
public:
    static RawConfig defaults();

    // ConfigError naming the key when it is not in the table.
    void set(std::string_view key, std::string value);
    const std::string& get(std::string_view key) const;

    // Lines of `key = value`; blank lines and `#` comments are skipped.
    void merge_text(std::string_view text, std::string_view origin = "<text>");
    void merge_file(const std::filesystem::path& path);
    // RBFQ_SEED, when set, replaces `seed`.
    void apply_environment();

    // Every key in table order, one `key = value` per line.
    std::string resolved_text() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunConfig {
    std::string task;
    agent::Variant variant = agent::Variant::Vanilla;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    std::size_t episodes = 3000;
    std::filesystem::path output_dir;

    agent::AgentConfig agent;
    double epsilon_decay_fraction = 0.4;
    rbf::RbfQConfig net;
    replay::PerConfig per;
    her::HerStrategy her;
    envs::EnvParams env;

    std::size_t eval_episodes = 20;
    std::size_t checkpoint_every = 500;
    bool log_wall_ms = false;
    double success_threshold = 0.9;
    std::size_t jobs = 1;

    RawConfig raw;

    // Parses and validates every key; ConfigError on a bad value.
    static RunConfig from_raw(const RawConfig& raw);
    static RunConfig defaults() { return from_raw(RawConfig::defaults()); }

    // Copy with one key changed, re-validated.
    RunConfig with(std::string_view key, std::string value) const;
};

} // namespace rbfdqn::bench
